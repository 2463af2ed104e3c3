//! Dense N-way tensor storage, mode-n reshaping, masking, sampling, and
//! synthetic data generation.
//!
//! Layout contract: entries are stored column-major, first index fastest, so
//! the linear index of `(i_1, …, i_N)` is `i_1 + I_1·(i_2 + I_2·(i_3 + …))`.
//! Mode-n unfolding (`n` is 0-based here) produces the `I_n × Π_{j≠n} I_j`
//! matrix whose columns are the mode-n fibers enumerated lexicographically
//! over the remaining indices, earlier indices varying fastest. Under this
//! layout the mode-0 unfolding is a pure reshape.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashSet;

use crate::error::{Error, Result};

/// Dense N-way tensor of `f64` values, column-major (first index fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor from raw column-major data, validating length and
    /// finiteness.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::argument("tensor dimensions must be positive"));
        }
        let total: usize = dims.iter().product();
        if data.len() != total {
            return Err(Error::shape(format!(
                "data length {} does not match product of dims {}",
                data.len(),
                total
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::argument("tensor entries must be finite"));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let total: usize = dims.iter().product();
        DenseTensor {
            dims,
            data: vec![0.0; total],
        }
    }

    pub fn constant(dims: Vec<usize>, value: f64) -> Self {
        let total: usize = dims.iter().product();
        DenseTensor {
            dims,
            data: vec![value; total],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Total number of entries, `Π I_n`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `⟨a, b⟩ = Σ a_i b_i` over all entries.
    pub fn inner_product(&self, other: &DenseTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "inner product dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum())
    }

    /// `‖a‖_F = sqrt(⟨a, a⟩)`.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mode-n unfolding (`mode` is 0-based): rows index dimension `mode`,
    /// columns enumerate the remaining indices lexicographically with
    /// earlier indices varying fastest.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        let n = self.dims.len();
        if mode >= n {
            return Err(Error::argument(format!(
                "mode {} out of range for order-{} tensor",
                mode, n
            )));
        }
        let rows = self.dims[mode];
        let cols = self.len() / rows;
        if mode == 0 {
            return Ok(DMatrix::from_column_slice(rows, cols, &self.data));
        }
        let strides = strides_of(&self.dims);
        let mode_stride = strides[mode];
        let mut out = DMatrix::zeros(rows, cols);
        let mut odo = vec![0usize; n];
        let mut base = 0usize;
        for c in 0..cols {
            let col = &mut out.as_mut_slice()[c * rows..(c + 1) * rows];
            for (t, slot) in col.iter_mut().enumerate() {
                *slot = self.data[base + t * mode_stride];
            }
            // advance the odometer over dims other than `mode`
            for j in 0..n {
                if j == mode {
                    continue;
                }
                odo[j] += 1;
                if odo[j] < self.dims[j] {
                    base += strides[j];
                    break;
                }
                odo[j] = 0;
                base -= (self.dims[j] - 1) * strides[j];
            }
        }
        Ok(out)
    }

    /// Inverse of [`unfold`](Self::unfold): exact (bit-level) round-trip.
    pub fn fold(m: &DMatrix<f64>, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
        let n = dims.len();
        if mode >= n {
            return Err(Error::argument(format!(
                "mode {} out of range for order-{} tensor",
                mode, n
            )));
        }
        let total: usize = dims.iter().product();
        let rows = dims[mode];
        let cols = total / rows;
        if m.nrows() != rows || m.ncols() != cols {
            return Err(Error::shape(format!(
                "fold expects {}x{} matrix for mode {} of dims {:?}, got {}x{}",
                rows,
                cols,
                mode,
                dims,
                m.nrows(),
                m.ncols()
            )));
        }
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::argument("fold input entries must be finite"));
        }
        if mode == 0 {
            return Ok(DenseTensor {
                dims: dims.to_vec(),
                data: m.as_slice().to_vec(),
            });
        }
        let strides = strides_of(dims);
        let mode_stride = strides[mode];
        let mut data = vec![0.0; total];
        let mut odo = vec![0usize; n];
        let mut base = 0usize;
        let src = m.as_slice();
        for c in 0..cols {
            let col = &src[c * rows..(c + 1) * rows];
            for (t, v) in col.iter().enumerate() {
                data[base + t * mode_stride] = *v;
            }
            for j in 0..n {
                if j == mode {
                    continue;
                }
                odo[j] += 1;
                if odo[j] < dims[j] {
                    base += strides[j];
                    break;
                }
                odo[j] = 0;
                base -= (dims[j] - 1) * strides[j];
            }
        }
        Ok(DenseTensor {
            dims: dims.to_vec(),
            data,
        })
    }

    /// `P_Ω`: keeps entries in the mask, zeros out the rest.
    pub fn project(&self, mask: &ObservationMask) -> Result<DenseTensor> {
        if self.dims != mask.dims {
            return Err(Error::shape(format!(
                "project dims {:?} vs mask dims {:?}",
                self.dims, mask.dims
            )));
        }
        let mut data = vec![0.0; self.data.len()];
        for &i in &mask.indices {
            let i = i as usize;
            data[i] = self.data[i];
        }
        Ok(DenseTensor {
            dims: self.dims.clone(),
            data,
        })
    }

    /// `P_{Ω^c}`: zeros entries in the mask, keeps the rest, so that
    /// `project + project_complement` is the identity.
    pub fn project_complement(&self, mask: &ObservationMask) -> Result<DenseTensor> {
        if self.dims != mask.dims {
            return Err(Error::shape(format!(
                "project_complement dims {:?} vs mask dims {:?}",
                self.dims, mask.dims
            )));
        }
        let mut data = self.data.clone();
        for &i in &mask.indices {
            data[i as usize] = 0.0;
        }
        Ok(DenseTensor {
            dims: self.dims.clone(),
            data,
        })
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, other: &DenseTensor, s: f64) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape("add_scaled dims mismatch".to_string()));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
        Ok(())
    }
}

fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(dims.len());
    let mut acc = 1usize;
    for &d in dims {
        s.push(acc);
        acc *= d;
    }
    s
}

/// Sorted set of observed 0-based column-major linear indices Ω.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationMask {
    dims: Vec<usize>,
    indices: Vec<u64>,
}

impl ObservationMask {
    /// Validates that indices are strictly increasing and in range.
    pub fn new(dims: Vec<usize>, indices: Vec<u64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::argument("mask dimensions must be positive"));
        }
        let total = dims.iter().product::<usize>() as u64;
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::argument(
                    "mask indices must be strictly increasing",
                ));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= total {
                return Err(Error::argument(format!(
                    "mask index {} out of range (total {})",
                    last, total
                )));
            }
        }
        Ok(ObservationMask { dims, indices })
    }

    /// Mask observing every entry.
    pub fn full(dims: Vec<usize>) -> Self {
        let total = dims.iter().product::<usize>() as u64;
        ObservationMask {
            dims,
            indices: (0..total).collect(),
        }
    }

    /// Uniform sample without replacement of `floor(sr · Π dims)` indices,
    /// deterministic for a given seed.
    pub fn random(dims: Vec<usize>, sr: f64, seed: u64) -> Result<Self> {
        if !(sr > 0.0 && sr <= 1.0) {
            return Err(Error::argument(format!(
                "sampling ratio must lie in (0, 1], got {}",
                sr
            )));
        }
        let total = dims.iter().product::<usize>() as u64;
        let t = sr * total as f64;
        // guard against the product landing an ulp below an exact integer
        let count = ((t + 1e-9 * t.max(1.0)).floor() as u64).min(total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Floyd's sampling: O(count) memory regardless of tensor size
        let mut chosen: HashSet<u64> = HashSet::with_capacity(count as usize);
        for i in (total - count)..total {
            let j = rng.random_range(0..=i);
            if !chosen.insert(j) {
                chosen.insert(i);
            }
        }
        let mut indices: Vec<u64> = chosen.into_iter().collect();
        indices.sort_unstable();
        Ok(ObservationMask { dims, indices })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    /// Number of observed entries |Ω|.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `|Ω| / Π I_n`.
    pub fn sampling_ratio(&self) -> f64 {
        self.indices.len() as f64 / self.dims.iter().product::<usize>() as f64
    }
}

/// Generates a tensor of exact multilinear rank `ranks` as a random Tucker
/// product (Gaussian core, orthonormalized factors), scaled so the largest
/// magnitude entry is 255 — the scale of 8-bit imagery, which the default
/// solver parameters are calibrated for.
///
/// With `smooth`, factor columns along modes 0 and 1 are low-frequency
/// trigonometric profiles (periodic, so images in the first two modes are
/// smooth under circular differences); other factors stay Gaussian.
pub fn synth_lowrank(
    dims: &[usize],
    ranks: &[usize],
    seed: u64,
    smooth: bool,
) -> Result<DenseTensor> {
    if dims.len() != ranks.len() {
        return Err(Error::argument(format!(
            "ranks {:?} must match dims {:?} in length",
            ranks, dims
        )));
    }
    for (n, (&i_n, &r_n)) in dims.iter().zip(ranks.iter()).enumerate() {
        if r_n == 0 || r_n > i_n {
            return Err(Error::argument(format!(
                "rank {} invalid for dimension {} of size {}",
                r_n, n, i_n
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core_len: usize = ranks.iter().product();
    let core_data: Vec<f64> = (0..core_len)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut t = DenseTensor {
        dims: ranks.to_vec(),
        data: core_data,
    };
    for (n, (&i_n, &r_n)) in dims.iter().zip(ranks.iter()).enumerate() {
        let raw = if smooth && n < 2 {
            smooth_profile_matrix(i_n, r_n, &mut rng)
        } else {
            DMatrix::from_fn(i_n, r_n, |_, _| StandardNormal.sample(&mut rng))
        };
        let q = orthonormal_columns(raw);
        t = n_mode_product(&t, &q, n)?;
    }
    let peak = t.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = 255.0 / peak;
        for v in &mut t.data {
            *v *= scale;
        }
    }
    Ok(t)
}

/// Mode-n product: replaces dimension `mode` by `u.nrows()` via
/// `fold_n(U · T_(n))`.
pub fn n_mode_product(t: &DenseTensor, u: &DMatrix<f64>, mode: usize) -> Result<DenseTensor> {
    let unf = t.unfold(mode)?;
    if u.ncols() != unf.nrows() {
        return Err(Error::shape(format!(
            "mode product expects {} columns, got {}",
            unf.nrows(),
            u.ncols()
        )));
    }
    let prod = u * unf;
    let mut dims = t.dims().to_vec();
    dims[mode] = u.nrows();
    DenseTensor::fold(&prod, mode, &dims)
}

fn smooth_profile_matrix(len: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let freqs = 3.max(rank);
    let mut m = DMatrix::zeros(len, rank);
    for c in 0..rank {
        let a0: f64 = StandardNormal.sample(rng);
        let coeffs: Vec<(f64, f64)> = (0..freqs)
            .map(|_| (StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect();
        for r in 0..len {
            let t = r as f64 / len as f64;
            let mut v = a0;
            for (f, (a, b)) in coeffs.iter().enumerate() {
                let w = 2.0 * std::f64::consts::PI * (f + 1) as f64 * t;
                v += a * w.cos() + b * w.sin();
            }
            m[(r, c)] = v;
        }
    }
    m
}

fn orthonormal_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.qr();
    qr.q()
}
