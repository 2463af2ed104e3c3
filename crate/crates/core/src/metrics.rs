//! Picture quality indices computed per frontal slice and averaged.
//!
//! A frontal slice is the `I_1 × I_2` matrix at a fixed setting of all
//! trailing indices; for order > 3 the trailing modes are flattened, so an
//! `I_1 × I_2 × I_3 × I_4` tensor has `I_3·I_4` slices. The CSV report has
//! one row per slice plus a MEAN row whose entries are the arithmetic means
//! of the columns. Two headline values follow their standard aggregate
//! definitions instead: ERGAS combines slices under a root-mean-square and
//! SAM averages the angle between mode-3 fibers; both appear alongside the
//! per-slice table in the JSON summary.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Cap reported when a slice reproduces the reference exactly (MSE = 0).
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_pair(reference: &DenseTensor, estimate: &DenseTensor) -> Result<()> {
    if reference.dims() != estimate.dims() {
        return Err(Error::shape(format!(
            "metric dims {:?} vs {:?}",
            reference.dims(),
            estimate.dims()
        )));
    }
    if reference.dims().len() < 3 {
        return Err(Error::argument("metrics expect an order-3+ tensor"));
    }
    Ok(())
}

fn slice_count(dims: &[usize]) -> usize {
    dims.iter().skip(2).product()
}

fn slice_len(dims: &[usize]) -> usize {
    dims[0] * dims[1]
}

/// Per-slice PSNR in dB with `peak = max |reference|` over the whole tensor,
/// and the arithmetic mean. A slice with zero MSE reports [`PSNR_CAP`].
pub fn psnr(reference: &DenseTensor, estimate: &DenseTensor) -> Result<(Vec<f64>, f64)> {
    let peak = reference.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    psnr_with_peak(reference, estimate, peak)
}

/// PSNR against an explicit peak value (e.g. 255 for 8-bit imagery).
pub fn psnr_with_peak(
    reference: &DenseTensor,
    estimate: &DenseTensor,
    peak: f64,
) -> Result<(Vec<f64>, f64)> {
    check_pair(reference, estimate)?;
    if !(peak >= 0.0) {
        return Err(Error::argument("peak must be non-negative"));
    }
    let n = slice_len(reference.dims());
    let slices = slice_count(reference.dims());
    let peak = peak.max(1e-300);
    let mut per_slice = Vec::with_capacity(slices);
    for b in 0..slices {
        let r = &reference.data()[b * n..(b + 1) * n];
        let e = &estimate.data()[b * n..(b + 1) * n];
        let mse = r
            .iter()
            .zip(e.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64;
        let value = if mse == 0.0 {
            PSNR_CAP
        } else {
            10.0 * (peak * peak / mse).log10()
        };
        per_slice.push(value);
    }
    let mean = per_slice.iter().sum::<f64>() / slices as f64;
    Ok((per_slice, mean))
}

/// Per-slice SSIM with an 11×11 Gaussian window (σ = 1.5), `K_1 = 0.01`,
/// `K_2 = 0.03`, and dynamic range `L = max(ref) − min(ref)` over the whole
/// reference, plus the arithmetic mean. Slices smaller than the window fall
/// back to a single global-statistics window.
pub fn ssim(reference: &DenseTensor, estimate: &DenseTensor) -> Result<(Vec<f64>, f64)> {
    check_pair(reference, estimate)?;
    let (i1, i2) = (reference.dims()[0], reference.dims()[1]);
    let n = i1 * i2;
    let slices = slice_count(reference.dims());
    let lo = reference.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reference
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let range = (hi - lo).max(f64::EPSILON);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let weights = gaussian_window();
    let mut per_slice = Vec::with_capacity(slices);
    for b in 0..slices {
        let r = &reference.data()[b * n..(b + 1) * n];
        let e = &estimate.data()[b * n..(b + 1) * n];
        let value = if i1 < SSIM_WINDOW || i2 < SSIM_WINDOW {
            ssim_global(r, e, c1, c2)
        } else {
            ssim_windowed(r, e, i1, i2, &weights, c1, c2)
        };
        per_slice.push(value);
    }
    let mean = per_slice.iter().sum::<f64>() / slices as f64;
    Ok((per_slice, mean))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for q in -half..=half {
        for p in -half..=half {
            let d2 = (p * p + q * q) as f64;
            w.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

fn ssim_term(mx: f64, my: f64, ex2: f64, ey2: f64, exy: f64, c1: f64, c2: f64) -> f64 {
    let vx = ex2 - mx * mx;
    let vy = ey2 - my * my;
    let cov = exy - mx * my;
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

fn ssim_windowed(
    r: &[f64],
    e: &[f64],
    i1: usize,
    i2: usize,
    weights: &[f64],
    c1: f64,
    c2: f64,
) -> f64 {
    let mut acc = 0.0;
    let mut windows = 0usize;
    for q0 in 0..=(i2 - SSIM_WINDOW) {
        for p0 in 0..=(i1 - SSIM_WINDOW) {
            let (mut mx, mut my, mut ex2, mut ey2, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let mut w_idx = 0;
            for dq in 0..SSIM_WINDOW {
                for dp in 0..SSIM_WINDOW {
                    let w = weights[w_idx];
                    w_idx += 1;
                    let x = r[(p0 + dp) + i1 * (q0 + dq)];
                    let y = e[(p0 + dp) + i1 * (q0 + dq)];
                    mx += w * x;
                    my += w * y;
                    ex2 += w * x * x;
                    ey2 += w * y * y;
                    exy += w * x * y;
                }
            }
            acc += ssim_term(mx, my, ex2, ey2, exy, c1, c2);
            windows += 1;
        }
    }
    acc / windows as f64
}

fn ssim_global(r: &[f64], e: &[f64], c1: f64, c2: f64) -> f64 {
    let n = r.len() as f64;
    let (mut mx, mut my, mut ex2, mut ey2, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in r.iter().zip(e.iter()) {
        mx += x;
        my += y;
        ex2 += x * x;
        ey2 += y * y;
        exy += x * y;
    }
    ssim_term(mx / n, my / n, ex2 / n, ey2 / n, exy / n, c1, c2)
}

/// ERGAS aggregate `100 · sr_scale · sqrt((1/B) Σ_b MSE_b / mean(ref_b)²)`
/// over frontal slices. A slice whose reference mean is below machine
/// epsilon is guarded by epsilon (the report records a warning for it).
pub fn ergas(reference: &DenseTensor, estimate: &DenseTensor, sr_scale: f64) -> Result<f64> {
    let (per_slice, _, _) = ergas_per_slice(reference, estimate, sr_scale)?;
    let b = per_slice.len() as f64;
    Ok((per_slice.iter().map(|v| v * v).sum::<f64>() / b).sqrt())
}

fn ergas_per_slice(
    reference: &DenseTensor,
    estimate: &DenseTensor,
    sr_scale: f64,
) -> Result<(Vec<f64>, f64, Vec<usize>)> {
    check_pair(reference, estimate)?;
    let n = slice_len(reference.dims());
    let slices = slice_count(reference.dims());
    let mut per_slice = Vec::with_capacity(slices);
    let mut guarded = Vec::new();
    for b in 0..slices {
        let r = &reference.data()[b * n..(b + 1) * n];
        let e = &estimate.data()[b * n..(b + 1) * n];
        let mean = r.iter().sum::<f64>() / n as f64;
        let mse = r
            .iter()
            .zip(e.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64;
        let denom = if mean.abs() < f64::EPSILON {
            guarded.push(b);
            f64::EPSILON
        } else {
            mean.abs()
        };
        per_slice.push(100.0 * sr_scale * mse.sqrt() / denom);
    }
    let mean = per_slice.iter().sum::<f64>() / slices as f64;
    Ok((per_slice, mean, guarded))
}

/// Mean spectral angle in degrees between mode-3 fibers of the reference and
/// the estimate over all spatial positions. Fibers with zero norm on either
/// side contribute 0 (the report records a warning).
pub fn sam(reference: &DenseTensor, estimate: &DenseTensor) -> Result<f64> {
    let (value, _) = sam_with_count(reference, estimate)?;
    Ok(value)
}

fn sam_with_count(reference: &DenseTensor, estimate: &DenseTensor) -> Result<(f64, usize)> {
    check_pair(reference, estimate)?;
    let dims = reference.dims();
    let (plane, depth) = (dims[0] * dims[1], dims[2]);
    let trailing: usize = dims.iter().skip(3).product();
    let mut total = 0.0;
    let mut degenerate = 0usize;
    for t in 0..trailing {
        let base = t * plane * depth;
        for s in 0..plane {
            let (mut dot, mut nr, mut ne) = (0.0, 0.0, 0.0);
            for k in 0..depth {
                let a = reference.data()[base + s + k * plane];
                let b = estimate.data()[base + s + k * plane];
                dot += a * b;
                nr += a * a;
                ne += b * b;
            }
            if nr == 0.0 || ne == 0.0 {
                degenerate += 1;
                continue;
            }
            // parallel fibers give exactly 0 (sqrt rounding would otherwise
            // leave acos a few ulps away from it)
            if dot > 0.0 && dot * dot >= nr * ne {
                continue;
            }
            let cosine = (dot / (nr.sqrt() * ne.sqrt())).clamp(-1.0, 1.0);
            total += cosine.acos().to_degrees();
        }
    }
    Ok((total / (plane * trailing) as f64, degenerate))
}

/// Per-slice spectral-angle analogue used in the per-slice table: the angle
/// in degrees between each frontal slice of the reference and the estimate,
/// both read as vectors.
fn sam_per_slice(reference: &DenseTensor, estimate: &DenseTensor) -> Result<(Vec<f64>, f64)> {
    check_pair(reference, estimate)?;
    let n = slice_len(reference.dims());
    let slices = slice_count(reference.dims());
    let mut per_slice = Vec::with_capacity(slices);
    for b in 0..slices {
        let r = &reference.data()[b * n..(b + 1) * n];
        let e = &estimate.data()[b * n..(b + 1) * n];
        let (mut dot, mut nr, mut ne) = (0.0, 0.0, 0.0);
        for (a, bb) in r.iter().zip(e.iter()) {
            dot += a * bb;
            nr += a * a;
            ne += bb * bb;
        }
        if nr == 0.0 || ne == 0.0 || (dot > 0.0 && dot * dot >= nr * ne) {
            per_slice.push(0.0);
            continue;
        }
        let cosine = (dot / (nr.sqrt() * ne.sqrt())).clamp(-1.0, 1.0);
        per_slice.push(cosine.acos().to_degrees());
    }
    let mean = per_slice.iter().sum::<f64>() / slices as f64;
    Ok((per_slice, mean))
}

/// Options for [`MetricsReport::compute`].
#[derive(Clone, Debug, Default)]
pub struct MetricsOptions {
    /// Override for the PSNR peak (defaults to `max |reference|`).
    pub peak: Option<f64>,
    /// ERGAS resolution-ratio factor (1 for completion).
    pub sr_scale: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dims: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceTable {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub ergas: Vec<f64>,
    pub sam: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanRow {
    pub psnr: f64,
    pub ssim: f64,
    pub ergas: f64,
    pub sam: f64,
}

/// Full evaluation report: per-slice PQIs, their arithmetic means, and the
/// aggregate ERGAS / fiber-angle SAM headline values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metadata: ReportMeta,
    pub per_slice: SliceTable,
    pub mean: MeanRow,
    /// RMS aggregate over slices (the standard ERGAS definition).
    pub ergas: f64,
    /// Mean mode-3 fiber angle in degrees (the standard SAM definition).
    pub sam: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn compute(
        reference: &DenseTensor,
        estimate: &DenseTensor,
        opts: &MetricsOptions,
    ) -> Result<MetricsReport> {
        let sr_scale = opts.sr_scale.unwrap_or(1.0);
        let (psnr_slices, psnr_mean) = match opts.peak {
            Some(p) => psnr_with_peak(reference, estimate, p)?,
            None => psnr(reference, estimate)?,
        };
        let (ssim_slices, ssim_mean) = ssim(reference, estimate)?;
        let (ergas_slices, ergas_mean, guarded) = ergas_per_slice(reference, estimate, sr_scale)?;
        let ergas_agg = {
            let b = ergas_slices.len() as f64;
            (ergas_slices.iter().map(|v| v * v).sum::<f64>() / b).sqrt()
        };
        let (sam_slices, sam_mean) = sam_per_slice(reference, estimate)?;
        let (sam_fiber, degenerate) = sam_with_count(reference, estimate)?;
        let mut warnings = Vec::new();
        if !guarded.is_empty() {
            warnings.push(format!(
                "ergas: {} slice(s) with zero reference mean guarded by machine epsilon: {:?}",
                guarded.len(),
                guarded
            ));
        }
        if degenerate > 0 {
            warnings.push(format!(
                "sam: {} zero-norm fiber(s) contributed 0 degrees",
                degenerate
            ));
        }
        Ok(MetricsReport {
            metadata: ReportMeta {
                dims: reference.dims().to_vec(),
                ..ReportMeta::default()
            },
            per_slice: SliceTable {
                psnr: psnr_slices,
                ssim: ssim_slices,
                ergas: ergas_slices,
                sam: sam_slices,
            },
            mean: MeanRow {
                psnr: psnr_mean,
                ssim: ssim_mean,
                ergas: ergas_mean,
                sam: sam_mean,
            },
            ergas: ergas_agg,
            sam: sam_fiber,
            warnings,
        })
    }

    /// One row per slice plus a MEAN row; columns `slice,psnr,ssim,ergas,sam`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "slice,psnr,ssim,ergas,sam")?;
        for (b, (((p, s), e), a)) in self
            .per_slice
            .psnr
            .iter()
            .zip(&self.per_slice.ssim)
            .zip(&self.per_slice.ergas)
            .zip(&self.per_slice.sam)
            .enumerate()
        {
            writeln!(w, "{},{},{},{},{}", b, p, s, e, a)?;
        }
        writeln!(
            w,
            "MEAN,{},{},{},{}",
            self.mean.psnr, self.mean.ssim, self.mean.ergas, self.mean.sam
        )?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("report serialization: {}", e)))
    }
}
