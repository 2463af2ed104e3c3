//! Matrix-level numerical kernels: thin SVD, singular value thresholding,
//! circular difference operators with their FFT eigenvalues, isotropic TV
//! evaluation, 2-D group shrinkage, and the FFT-diagonalized Sylvester solve.
//!
//! Images here are `I_1 × I_2` grids stored column-major inside longer
//! vectors; a matrix column of length `I_1·I_2·S` is read as `S` stacked
//! images. Difference operators use periodic (circular) boundaries, which is
//! what makes `BᵀB` diagonal under the 2-D discrete Fourier basis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Thin SVD `m = U Σ Vᵀ` with Σ non-negative and non-increasing.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Computes the thin SVD with singular values sorted in non-increasing order.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::argument("thin_svd input must be finite"));
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD failed to converge".to_string()))?;
    let mut u = svd.u.expect("u requested");
    let mut sigma = svd.singular_values;
    let mut v_t = svd.v_t.expect("v_t requested");
    // nalgebra sorts, but the contract is ours to enforce
    if sigma.as_slice().windows(2).any(|w| w[0] < w[1]) {
        let mut order: Vec<usize> = (0..sigma.len()).collect();
        order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());
        let up = u.clone();
        let vp = v_t.clone();
        let sp = sigma.clone();
        for (new, &old) in order.iter().enumerate() {
            u.set_column(new, &up.column(old));
            v_t.set_row(new, &vp.row(old));
            sigma[new] = sp[old];
        }
    }
    Ok(ThinSvd { u, sigma, v_t })
}

/// Singular value thresholding: `U diag(max(σ_i − δ, 0)) Vᵀ`, the minimizer
/// of `δ‖X‖_* + ½‖X − W‖_F²`.
pub fn svt(w: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    if delta < 0.0 {
        return Err(Error::argument("svt threshold must be non-negative"));
    }
    let ThinSvd { u, sigma, v_t } = thin_svd(w)?;
    let kept = sigma.iter().take_while(|&&s| s > delta).count();
    if kept == 0 {
        return Ok(DMatrix::zeros(w.nrows(), w.ncols()));
    }
    let mut scaled = u.columns(0, kept).clone_owned();
    for j in 0..kept {
        let s = sigma[j] - delta;
        scaled.column_mut(j).scale_mut(s);
    }
    Ok(&scaled * v_t.rows(0, kept))
}

/// Nuclear norm `Σ σ_i`.
pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD failed to converge".to_string()))?;
    Ok(svd.singular_values.iter().sum())
}

/// First-order circular difference operators `D̃_1`, `D̃_2` on an
/// `I_1 × I_2` grid, with the eigenvalue grid `Ψ²` of `D̃_1ᵀD̃_1 + D̃_2ᵀD̃_2`
/// under the 2-D DFT and cached FFT plans for the same grid.
pub struct DiffOperators {
    i1: usize,
    i2: usize,
    psi2: Vec<f64>,
    fft_rows_fwd: Arc<dyn Fft<f64>>,
    fft_rows_inv: Arc<dyn Fft<f64>>,
    fft_cols_fwd: Arc<dyn Fft<f64>>,
    fft_cols_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DiffOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffOperators")
            .field("i1", &self.i1)
            .field("i2", &self.i2)
            .finish()
    }
}

/// Builds the circular difference operators for an `i1 × i2` grid.
///
/// `Ψ²(p,q) = (2 − 2cos(2πp/I_1)) + (2 − 2cos(2πq/I_2))`; the `(0,0)`
/// eigenvalue is exactly zero.
pub fn build_diff_operators(i1: usize, i2: usize) -> Result<DiffOperators> {
    if i1 < 2 || i2 < 2 {
        return Err(Error::argument(format!(
            "difference operators need a grid of at least 2x2, got {}x{}",
            i1, i2
        )));
    }
    let mut psi2 = vec![0.0; i1 * i2];
    for q in 0..i2 {
        let wq = 2.0 - 2.0 * (2.0 * std::f64::consts::PI * q as f64 / i2 as f64).cos();
        for p in 0..i1 {
            let wp = 2.0 - 2.0 * (2.0 * std::f64::consts::PI * p as f64 / i1 as f64).cos();
            psi2[p + i1 * q] = wp + wq;
        }
    }
    let mut planner = FftPlanner::new();
    Ok(DiffOperators {
        i1,
        i2,
        psi2,
        fft_rows_fwd: planner.plan_fft_forward(i1),
        fft_rows_inv: planner.plan_fft_inverse(i1),
        fft_cols_fwd: planner.plan_fft_forward(i2),
        fft_cols_inv: planner.plan_fft_inverse(i2),
    })
}

impl DiffOperators {
    pub fn grid(&self) -> (usize, usize) {
        (self.i1, self.i2)
    }

    pub fn pixels(&self) -> usize {
        self.i1 * self.i2
    }

    /// Eigenvalues of `D̃_1ᵀD̃_1 + D̃_2ᵀD̃_2`, column-major over `(p, q)`.
    pub fn psi2(&self) -> &[f64] {
        &self.psi2
    }

    /// Applies `D̃_1` (circular forward difference along the first grid
    /// direction) to every stacked image in every column of `x`.
    pub fn apply_d1(&self, x: &DMatrix<f64>, blocks: usize) -> Result<DMatrix<f64>> {
        self.check_stacked(x, blocks)?;
        let (i1, i2) = (self.i1, self.i2);
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..x.ncols() {
            for k in 0..blocks {
                let off = k * i1 * i2;
                for q in 0..i2 {
                    for p in 0..i1 {
                        let up = if p + 1 == i1 { 0 } else { p + 1 };
                        out[(off + p + i1 * q, c)] =
                            x[(off + up + i1 * q, c)] - x[(off + p + i1 * q, c)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Applies `D̃_2` (circular forward difference along the second grid
    /// direction).
    pub fn apply_d2(&self, x: &DMatrix<f64>, blocks: usize) -> Result<DMatrix<f64>> {
        self.check_stacked(x, blocks)?;
        let (i1, i2) = (self.i1, self.i2);
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..x.ncols() {
            for k in 0..blocks {
                let off = k * i1 * i2;
                for q in 0..i2 {
                    let uq = if q + 1 == i2 { 0 } else { q + 1 };
                    for p in 0..i1 {
                        out[(off + p + i1 * q, c)] =
                            x[(off + p + i1 * uq, c)] - x[(off + p + i1 * q, c)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Applies `D̃_1ᵀ`.
    pub fn apply_d1_t(&self, y: &DMatrix<f64>, blocks: usize) -> Result<DMatrix<f64>> {
        self.check_stacked(y, blocks)?;
        let (i1, i2) = (self.i1, self.i2);
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        for c in 0..y.ncols() {
            for k in 0..blocks {
                let off = k * i1 * i2;
                for q in 0..i2 {
                    for p in 0..i1 {
                        let dn = if p == 0 { i1 - 1 } else { p - 1 };
                        out[(off + p + i1 * q, c)] =
                            y[(off + dn + i1 * q, c)] - y[(off + p + i1 * q, c)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Applies `D̃_2ᵀ`.
    pub fn apply_d2_t(&self, y: &DMatrix<f64>, blocks: usize) -> Result<DMatrix<f64>> {
        self.check_stacked(y, blocks)?;
        let (i1, i2) = (self.i1, self.i2);
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        for c in 0..y.ncols() {
            for k in 0..blocks {
                let off = k * i1 * i2;
                for q in 0..i2 {
                    let dq = if q == 0 { i2 - 1 } else { q - 1 };
                    for p in 0..i1 {
                        out[(off + p + i1 * q, c)] =
                            y[(off + p + i1 * dq, c)] - y[(off + p + i1 * q, c)];
                    }
                }
            }
        }
        Ok(out)
    }

    fn check_stacked(&self, x: &DMatrix<f64>, blocks: usize) -> Result<()> {
        if blocks == 0 || x.nrows() != self.i1 * self.i2 * blocks {
            return Err(Error::shape(format!(
                "expected {} rows ({}x{} grid, {} blocks), got {}",
                self.i1 * self.i2 * blocks,
                self.i1,
                self.i2,
                blocks,
                x.nrows()
            )));
        }
        Ok(())
    }

    /// In-place unnormalized 2-D FFT of one column-major `i1 × i2` image.
    fn fft2(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let (i1, i2) = (self.i1, self.i2);
        debug_assert_eq!(buf.len(), i1 * i2);
        let (rows, cols) = if inverse {
            (&self.fft_rows_inv, &self.fft_cols_inv)
        } else {
            (&self.fft_rows_fwd, &self.fft_cols_fwd)
        };
        let mut scratch = vec![Complex::default(); rows.get_inplace_scratch_len()];
        for col in buf.chunks_exact_mut(i1) {
            rows.process_with_scratch(col, &mut scratch);
        }
        // columns of the transposed image are the rows of the original
        let mut tr = vec![Complex::default(); i1 * i2];
        for q in 0..i2 {
            for p in 0..i1 {
                tr[q + i2 * p] = buf[p + i1 * q];
            }
        }
        scratch.resize(cols.get_inplace_scratch_len(), Complex::default());
        for row in tr.chunks_exact_mut(i2) {
            cols.process_with_scratch(row, &mut scratch);
        }
        for q in 0..i2 {
            for p in 0..i1 {
                buf[p + i1 * q] = tr[q + i2 * p];
            }
        }
    }
}

/// Isotropic total variation of `x3` whose rows are read as `blocks` stacked
/// `I_1 × I_2` images: `Σ_{k,i,j} sqrt(|D̃_{j,1} x|² + |D̃_{j,2} x|²)`.
pub fn tv_value(x3: &DMatrix<f64>, grid: (usize, usize), blocks: usize) -> Result<f64> {
    let (i1, i2) = grid;
    if blocks == 0 || x3.ncols() != i1 * i2 * blocks {
        return Err(Error::shape(format!(
            "tv_value expects {} columns ({}x{} grid, {} blocks), got {}",
            i1 * i2 * blocks,
            i1,
            i2,
            blocks,
            x3.ncols()
        )));
    }
    let mut total = 0.0;
    for r in 0..x3.nrows() {
        for k in 0..blocks {
            let off = k * i1 * i2;
            for q in 0..i2 {
                let uq = if q + 1 == i2 { 0 } else { q + 1 };
                for p in 0..i1 {
                    let up = if p + 1 == i1 { 0 } else { p + 1 };
                    let v = x3[(r, off + p + i1 * q)];
                    let d1 = x3[(r, off + up + i1 * q)] - v;
                    let d2 = x3[(r, off + p + i1 * uq)] - v;
                    total += (d1 * d1 + d2 * d2).sqrt();
                }
            }
        }
    }
    Ok(total)
}

/// 2-D group shrinkage: per entry,
/// `[U_1, U_2]_{i,j} = max(‖T_{i,j}‖₂ − thr, 0) · T_{i,j} / ‖T_{i,j}‖₂`
/// with `0·(0/0) := 0`.
pub fn shrink2d(
    t1: &DMatrix<f64>,
    t2: &DMatrix<f64>,
    threshold: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if threshold < 0.0 {
        return Err(Error::argument("shrink2d threshold must be non-negative"));
    }
    if t1.shape() != t2.shape() {
        return Err(Error::shape(format!(
            "shrink2d component shapes differ: {:?} vs {:?}",
            t1.shape(),
            t2.shape()
        )));
    }
    let mut u1 = DMatrix::zeros(t1.nrows(), t1.ncols());
    let mut u2 = DMatrix::zeros(t1.nrows(), t1.ncols());
    for j in 0..t1.ncols() {
        for i in 0..t1.nrows() {
            let a = t1[(i, j)];
            let b = t2[(i, j)];
            let norm = (a * a + b * b).sqrt();
            if norm > threshold {
                let scale = (norm - threshold) / norm;
                u1[(i, j)] = scale * a;
                u2[(i, j)] = scale * b;
            }
        }
    }
    Ok((u1, u2))
}

/// Solves the Sylvester-type system
/// `X̂ (Â Âᵀ) + β BᵀB X̂ + ρ X̂ = RHS`
/// for `X̂ ∈ R^{s×r}` (`s = I_1·I_2·blocks`), where `Â` is `r × m` and
/// `BᵀB = D̃_1ᵀD̃_1 + D̃_2ᵀD̃_2` acts block-wise on stacked images.
///
/// The factor side is diagonalized through the eigendecomposition
/// `Â Âᵀ = P diag(σ²) Pᵀ` and the spatial side through per-block 2-D FFTs
/// (`BᵀB = F* Ψ² F`), leaving an elementwise division by
/// `σ_j² + β ψ_i² + ρ`. The exact solution is real; the imaginary residue of
/// the inverse transform must stay below `1e-9 · ‖X̂‖_F`.
pub fn sylvester_fft_solve(
    a_hat: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    beta: f64,
    rho: f64,
    ops: &DiffOperators,
    blocks: usize,
) -> Result<DMatrix<f64>> {
    if beta <= 0.0 || rho <= 0.0 {
        return Err(Error::argument(
            "sylvester_fft_solve requires beta > 0 and rho > 0",
        ));
    }
    let r = rhs.ncols();
    if a_hat.nrows() != r {
        return Err(Error::shape(format!(
            "factor has {} rows but rhs has {} columns",
            a_hat.nrows(),
            r
        )));
    }
    ops.check_stacked(rhs, blocks)?;
    let pixels = ops.pixels();

    let coupling = a_hat * a_hat.transpose();
    let eig = SymmetricEigen::new(coupling);
    let p = eig.eigenvectors;
    let sigma2: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();

    let rotated = rhs * &p;
    let mut solution = DMatrix::zeros(rhs.nrows(), r);
    let mut imag_sq = 0.0;
    let mut buf = vec![Complex::default(); pixels];
    for j in 0..r {
        let col = rotated.column(j);
        for k in 0..blocks {
            let off = k * pixels;
            for (t, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(col[off + t], 0.0);
            }
            ops.fft2(&mut buf, false);
            for (t, slot) in buf.iter_mut().enumerate() {
                *slot /= sigma2[j] + beta * ops.psi2[t] + rho;
            }
            ops.fft2(&mut buf, true);
            let scale = 1.0 / pixels as f64;
            for (t, slot) in buf.iter().enumerate() {
                let v = *slot * scale;
                solution[(off + t, j)] = v.re;
                imag_sq += v.im * v.im;
            }
        }
    }
    let out = solution * p.transpose();
    let norm = out.norm();
    if imag_sq.sqrt() > 1e-9 * norm.max(1e-300) {
        return Err(Error::Numerical(format!(
            "sylvester_fft_solve imaginary residue {:.3e} exceeds 1e-9 * {:.3e}",
            imag_sq.sqrt(),
            norm
        )));
    }
    Ok(out)
}
