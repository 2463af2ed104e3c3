//! Block coordinate solver for the two completion models.
//!
//! Model-1 minimizes
//! `Σ_n (α_n/2‖Y_(n) − A_n X_n‖_F² + τ_n‖X_n‖_* + λ_n‖A_n‖_*)`
//! subject to `P_Ω(Y) = F`; model-2 adds `μ‖X_3‖_TV`.
//!
//! Each outer iteration performs, in order: the `Z_n` thresholding steps, the
//! `X_n` closed forms (mode 3 via an inner ADMM when the TV term is active),
//! the `J_n` thresholding steps, the `A_n` closed forms, the pinned `Y`
//! update, and the multiplier ascent. All proximal subproblems are solved
//! exactly except the TV block, whose inner ADMM runs on a configurable
//! budget with warm-started splitting variables and multipliers.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::kernels::{
    build_diff_operators, shrink2d, svt, sylvester_fft_solve, thin_svd, DiffOperators,
};
use crate::tensor::{DenseTensor, ObservationMask};

/// Which completion model to solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Model {
    One,
    Two,
}

impl From<Model> for u8 {
    fn from(m: Model) -> u8 {
        match m {
            Model::One => 1,
            Model::Two => 2,
        }
    }
}

impl TryFrom<u8> for Model {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Model::One),
            2 => Ok(Model::Two),
            other => Err(format!("model must be 1 or 2, got {}", other)),
        }
    }
}

/// Dual ascent step for the `Γ` multipliers.
///
/// `Scaled` is the standard unscaled-ALM ascent `Γ += ρ_n (primal residual)`,
/// consistent with the `Γ/ρ_n` terms inside the subproblems; `Paper` steps by
/// the bare residual, which rescales the dual step by `1/ρ_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualStep {
    Scaled,
    Paper,
}

/// All scalar parameters of the solver.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub model: Model,
    /// Factorization ranks `r_n`, one per mode.
    pub ranks: Vec<usize>,
    /// Mode weights, must sum to 1.
    pub alpha: Vec<f64>,
    /// Nuclear-norm weights on the encodings `X_n`.
    pub tau: Vec<f64>,
    /// Nuclear-norm weights on the libraries `A_n`.
    pub lambda: Vec<f64>,
    /// Proximal / penalty parameters, one per mode.
    pub rho: Vec<f64>,
    /// TV weight (model-2).
    pub mu: f64,
    /// TV penalty parameter (model-2).
    pub beta: f64,
    /// Outer stop: relative change of the iterate `Y`.
    pub tol: f64,
    pub max_outer: usize,
    /// Iteration budget of the inner TV ADMM.
    pub max_inner: usize,
    /// Inner stop: relative change of `X̂_3`.
    pub inner_tol: f64,
    /// Opt-in geometric penalty growth `ρ_n ← min(1.5·ρ_n, 1e6)`.
    pub adaptive_penalty: bool,
    pub dual_step: DualStep,
    /// Seed for the factor initialization.
    pub seed: u64,
}

pub const PENALTY_GROWTH: f64 = 1.5;
pub const PENALTY_CAP: f64 = 1e6;

impl SolverConfig {
    /// Defaults for an order-N tensor: `α_n = 1/N`, `τ = λ = ρ = 0.1`,
    /// `μ = 0.5`, `β = 10`, `ε = 1e-5`.
    pub fn new(model: Model, ranks: Vec<usize>) -> Self {
        let n = ranks.len();
        SolverConfig {
            model,
            ranks,
            alpha: vec![1.0 / n as f64; n],
            tau: vec![0.1; n],
            lambda: vec![0.1; n],
            rho: vec![0.1; n],
            mu: 0.5,
            beta: 10.0,
            tol: 1e-5,
            max_outer: 500,
            max_inner: 10,
            inner_tol: 1e-4,
            adaptive_penalty: false,
            dual_step: DualStep::Scaled,
            seed: 0,
        }
    }

    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        let n = dims.len();
        if n < 3 {
            return Err(Error::argument("solver requires an order-3+ tensor"));
        }
        if self.ranks.len() != n {
            return Err(Error::argument(format!(
                "{} ranks given for an order-{} tensor",
                self.ranks.len(),
                n
            )));
        }
        for (m, (&r, &d)) in self.ranks.iter().zip(dims.iter()).enumerate() {
            if r == 0 || r > d {
                return Err(Error::argument(format!(
                    "rank {} invalid for mode {} of size {}",
                    r, m, d
                )));
            }
        }
        for (name, v) in [
            ("alpha", &self.alpha),
            ("tau", &self.tau),
            ("lambda", &self.lambda),
            ("rho", &self.rho),
        ] {
            if v.len() != n {
                return Err(Error::argument(format!(
                    "{} must have one value per mode ({} expected, {} given)",
                    name,
                    n,
                    v.len()
                )));
            }
        }
        let alpha_sum: f64 = self.alpha.iter().sum();
        if (alpha_sum - 1.0).abs() > 1e-12 || self.alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::argument(format!(
                "alpha must be positive and sum to 1, got sum {}",
                alpha_sum
            )));
        }
        if self.tau.iter().any(|&t| t < 0.0) || self.lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::argument("tau and lambda must be non-negative"));
        }
        if self.rho.iter().any(|&r| r <= 0.0) {
            return Err(Error::argument("rho must be positive"));
        }
        if self.mu < 0.0 || self.beta <= 0.0 {
            return Err(Error::argument("mu must be >= 0 and beta > 0"));
        }
        if self.tol <= 0.0 {
            return Err(Error::argument("tolerance must be positive"));
        }
        if self.model == Model::Two && (dims[0] < 2 || dims[1] < 2) {
            return Err(Error::argument(
                "model-2 needs the first two modes to form a grid of at least 2x2",
            ));
        }
        Ok(())
    }
}

/// Per-mode variables: factors, auxiliaries, multipliers.
#[derive(Clone, Debug)]
pub struct ModeVars {
    /// Library `A_n`, `I_n × r_n`.
    pub a: DMatrix<f64>,
    /// Encoding `X_n`, `r_n × Π_{j≠n} I_j`.
    pub x: DMatrix<f64>,
    /// Auxiliary `Z_n` for `‖X_n‖_*`.
    pub z: DMatrix<f64>,
    /// Auxiliary `J_n` for `‖A_n‖_*`.
    pub j: DMatrix<f64>,
    /// Multiplier `Γ_n^X`.
    pub gamma_x: DMatrix<f64>,
    /// Multiplier `Γ_n^A`.
    pub gamma_a: DMatrix<f64>,
}

/// Splitting state of the inner TV ADMM, warm-started across outer
/// iterations. All matrices are `s_3 × r_3` (transposed layout).
#[derive(Clone, Debug)]
pub struct TvState {
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
}

/// The evolving iterate set `S = (X, A, Y)` plus auxiliaries.
pub struct SolverState {
    pub modes: Vec<ModeVars>,
    pub y: DenseTensor,
    pub tv: Option<TvState>,
    /// Live per-mode penalties (grow when `adaptive_penalty` is on).
    pub rho: Vec<f64>,
    pub iter: usize,
    ops: Option<DiffOperators>,
    blocks: usize,
}

/// One row of the convergence trace.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub rel_change: f64,
    pub max_feasibility_residual: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub tensor: DenseTensor,
    pub trace: Vec<TraceRow>,
}

impl SolverState {
    /// Seeded initialization: `A_n`, `X_n` uniform on [0, 1),
    /// `Z_n = X_n`, `J_n = A_n`, multipliers zero, `Y = P_Ω(F)`.
    pub fn init(f: &DenseTensor, mask: &ObservationMask, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate(f.dims())?;
        if f.dims() != mask.dims() {
            return Err(Error::shape(format!(
                "tensor dims {:?} do not match mask dims {:?}",
                f.dims(),
                mask.dims()
            )));
        }
        let dims = f.dims();
        let total = f.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut modes = Vec::with_capacity(dims.len());
        for (n, &i_n) in dims.iter().enumerate() {
            let r = cfg.ranks[n];
            let s = total / i_n;
            let a = DMatrix::from_fn(i_n, r, |_, _| rng.random::<f64>());
            let x = DMatrix::from_fn(r, s, |_, _| rng.random::<f64>());
            modes.push(ModeVars {
                z: x.clone(),
                j: a.clone(),
                gamma_x: DMatrix::zeros(r, s),
                gamma_a: DMatrix::zeros(i_n, r),
                a,
                x,
            });
        }
        let (tv, ops, blocks) = if cfg.model == Model::Two {
            let (i1, i2) = (dims[0], dims[1]);
            let blocks: usize = dims.iter().skip(3).product();
            let s3 = total / dims[2];
            let r3 = cfg.ranks[2];
            (
                Some(TvState {
                    u1: DMatrix::zeros(s3, r3),
                    u2: DMatrix::zeros(s3, r3),
                    l1: DMatrix::zeros(s3, r3),
                    l2: DMatrix::zeros(s3, r3),
                }),
                Some(build_diff_operators(i1, i2)?),
                blocks,
            )
        } else {
            (None, None, 1)
        };
        Ok(SolverState {
            modes,
            y: f.project(mask)?,
            tv,
            rho: cfg.rho.clone(),
            iter: 0,
            ops,
            blocks,
        })
    }
}

/// `Z_n = SVT_{τ_n/ρ_n}(X_n^k + Γ_n^X/ρ_n)`.
pub fn update_z(state: &SolverState, cfg: &SolverConfig, n: usize) -> Result<DMatrix<f64>> {
    let rho = state.rho[n];
    let mv = &state.modes[n];
    let w = &mv.x + &mv.gamma_x / rho;
    svt(&w, cfg.tau[n] / rho)
}

/// `J_n = SVT_{λ_n/ρ_n}(A_n^k + Γ_n^A/ρ_n)`.
pub fn update_j(state: &SolverState, cfg: &SolverConfig, n: usize) -> Result<DMatrix<f64>> {
    let rho = state.rho[n];
    let mv = &state.modes[n];
    let w = &mv.a + &mv.gamma_a / rho;
    svt(&w, cfg.lambda[n] / rho)
}

/// Closed-form `X_n` update:
/// `X_n = (α_n A_nᵀA_n + 2ρ_n I)⁻¹ (α_n A_nᵀ Y_(n) + 2ρ_n O_n)` with
/// `O_n = (Z_n^{k+1} − Γ_n^X/ρ_n + X_n^k)/2`. Reads `Z_n` as already
/// updated this iteration.
pub fn update_x_plain(
    state: &SolverState,
    cfg: &SolverConfig,
    n: usize,
    y_unf: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let rho = state.rho[n];
    let alpha = cfg.alpha[n];
    let mv = &state.modes[n];
    let o = (&mv.z - &mv.gamma_x / rho + &mv.x) * 0.5;
    let lhs = alpha * mv.a.transpose() * &mv.a
        + DMatrix::identity(mv.a.ncols(), mv.a.ncols()) * (2.0 * rho);
    let rhs = alpha * mv.a.transpose() * y_unf + 2.0 * rho * o;
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("X update system not SPD at mode {}", n)))?;
    Ok(chol.solve(&rhs))
}

/// Closed-form `A_n` update:
/// `A_n = (α_n Y_(n) X_nᵀ + 2ρ_n O_n^A)(α_n X_n X_nᵀ + 2ρ_n I)⁻¹` with
/// `O_n^A = (J_n^{k+1} − Γ_n^A/ρ_n + A_n^k)/2`. Reads `X_n` and `J_n` as
/// already updated this iteration.
pub fn update_a(
    state: &SolverState,
    cfg: &SolverConfig,
    n: usize,
    y_unf: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let rho = state.rho[n];
    let alpha = cfg.alpha[n];
    let mv = &state.modes[n];
    let o = (&mv.j - &mv.gamma_a / rho + &mv.a) * 0.5;
    let lhs = alpha * &mv.x * mv.x.transpose()
        + DMatrix::identity(mv.x.nrows(), mv.x.nrows()) * (2.0 * rho);
    let rhs = alpha * y_unf * mv.x.transpose() + 2.0 * rho * o;
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("A update system not SPD at mode {}", n)))?;
    // lhs is symmetric: A = RHS · lhs⁻¹ = (lhs⁻¹ RHSᵀ)ᵀ
    Ok(chol.solve(&rhs.transpose()).transpose())
}

/// The TV-regularized `X_3` subproblem (model-2), solved in the transposed
/// domain by an inner ADMM: Sylvester/FFT solve for `X̂_3`, 2-D shrinkage for
/// `U`, dual ascent for `Λ`. Returns the untransposed `X_3` and the final
/// splitting state.
///
/// The subproblem, after dividing the mode-3 block of the outer objective by
/// `α_3`, is `½‖Ŷ_(3) − X̂_3 Â_3‖² + (ρ̂/2)‖X̂_3 − Ô_3‖² + μ̂‖X̂_3‖_TV` with
/// `ρ̂ = 2ρ_3/α_3` and `μ̂ = μ/α_3`, so its μ→0 limit coincides with the
/// plain `X_3` closed form.
pub fn update_x3_tv(
    state: &SolverState,
    cfg: &SolverConfig,
    y_unf3: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, TvState)> {
    let ops = state
        .ops
        .as_ref()
        .ok_or_else(|| Error::argument("TV update requires a model-2 state"))?;
    let tv = state.tv.as_ref().expect("model-2 state carries TV data");
    let sub = TvSubproblem::from_state(state, cfg, y_unf3);
    let mut x_hat = state.modes[2].x.transpose();
    let mut u1 = tv.u1.clone();
    let mut u2 = tv.u2.clone();
    let mut l1 = tv.l1.clone();
    let mut l2 = tv.l2.clone();
    for _ in 0..cfg.max_inner {
        let prev = x_hat.clone();
        x_hat = sub.solve_x_hat(&u1, &u2, &l1, &l2, ops, state.blocks)?;
        let (nu1, nu2) = sub.shrink(&x_hat, &l1, &l2, ops, state.blocks)?;
        u1 = nu1;
        u2 = nu2;
        let d1x = ops.apply_d1(&x_hat, state.blocks)?;
        let d2x = ops.apply_d2(&x_hat, state.blocks)?;
        l1 += cfg.beta * (&d1x - &u1);
        l2 += cfg.beta * (&d2x - &u2);
        let denom = prev.norm().max(1.0);
        if (&x_hat - &prev).norm() / denom <= cfg.inner_tol {
            break;
        }
    }
    Ok((x_hat.transpose(), TvState { u1, u2, l1, l2 }))
}

/// Data of one outer iteration's TV subproblem in the transposed domain.
pub(crate) struct TvSubproblem {
    pub a_hat: DMatrix<f64>,
    pub rho_hat: f64,
    pub mu_hat: f64,
    pub beta: f64,
    /// `ρ̂·Ô_3 + Ŷ_(3)Âᵀ`, the U-independent part of the Sylvester RHS.
    rhs_static: DMatrix<f64>,
}

impl TvSubproblem {
    pub(crate) fn from_state(
        state: &SolverState,
        cfg: &SolverConfig,
        y_unf3: &DMatrix<f64>,
    ) -> Self {
        let rho3 = state.rho[2];
        let alpha3 = cfg.alpha[2];
        let mv = &state.modes[2];
        let o = (&mv.z - &mv.gamma_x / rho3 + &mv.x) * 0.5;
        let a_hat = mv.a.transpose();
        let y_hat = y_unf3.transpose();
        let o_hat = o.transpose();
        let rho_hat = 2.0 * rho3 / alpha3;
        let mu_hat = cfg.mu / alpha3;
        let rhs_static = rho_hat * &o_hat + &y_hat * a_hat.transpose();
        TvSubproblem {
            a_hat,
            rho_hat,
            mu_hat,
            beta: cfg.beta,
            rhs_static,
        }
    }

    /// Step (a): `X̂_3` from the Sylvester system with RHS
    /// `ρ̂Ô + ŶÂᵀ − BᵀΛ + β Bᵀ[U_1; U_2]`.
    pub(crate) fn solve_x_hat(
        &self,
        u1: &DMatrix<f64>,
        u2: &DMatrix<f64>,
        l1: &DMatrix<f64>,
        l2: &DMatrix<f64>,
        ops: &DiffOperators,
        blocks: usize,
    ) -> Result<DMatrix<f64>> {
        let rhs = &self.rhs_static - ops.apply_d1_t(l1, blocks)? - ops.apply_d2_t(l2, blocks)?
            + self.beta * (ops.apply_d1_t(u1, blocks)? + ops.apply_d2_t(u2, blocks)?);
        sylvester_fft_solve(&self.a_hat, &rhs, self.beta, self.rho_hat, ops, blocks)
    }

    /// Step (b): 2-D shrinkage of `T_t = D_t X̂_3 + Λ_t/β` at `μ̂/β`.
    pub(crate) fn shrink(
        &self,
        x_hat: &DMatrix<f64>,
        l1: &DMatrix<f64>,
        l2: &DMatrix<f64>,
        ops: &DiffOperators,
        blocks: usize,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let t1 = ops.apply_d1(x_hat, blocks)? + l1 / self.beta;
        let t2 = ops.apply_d2(x_hat, blocks)? + l2 / self.beta;
        shrink2d(&t1, &t2, self.mu_hat / self.beta)
    }
}

/// Pinned `Y` update:
/// `Y = P_{Ω^c}(Σ_n α_n fold_n((A_n X_n + ρ_n Y_(n)^k)/(1 + ρ_n))) + P_Ω(F)`.
/// Observed entries of the result equal `F` exactly.
pub fn update_y(
    state: &SolverState,
    cfg: &SolverConfig,
    f: &DenseTensor,
    mask: &ObservationMask,
    y_unfs: &[DMatrix<f64>],
) -> Result<DenseTensor> {
    let dims = state.y.dims().to_vec();
    let mut acc = DenseTensor::zeros(dims.clone());
    for (n, mv) in state.modes.iter().enumerate() {
        let rho = state.rho[n];
        let blend = (&mv.a * &mv.x + rho * &y_unfs[n]) / (1.0 + rho);
        let folded = DenseTensor::fold(&blend, n, &dims)?;
        acc.add_scaled(&folded, cfg.alpha[n])?;
    }
    let mut out = acc;
    let fd = f.data();
    let od = out.data_mut();
    for &i in mask.indices() {
        od[i as usize] = fd[i as usize];
    }
    Ok(out)
}

/// Dual ascent `Γ_n^X += step·(X_n − Z_n)`, `Γ_n^A += step·(A_n − J_n)`
/// where `step` is `ρ_n` ([`DualStep::Scaled`]) or 1 ([`DualStep::Paper`]).
pub fn update_multipliers(
    state: &SolverState,
    cfg: &SolverConfig,
    n: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let step = match cfg.dual_step {
        DualStep::Scaled => state.rho[n],
        DualStep::Paper => 1.0,
    };
    let mv = &state.modes[n];
    let gx = &mv.gamma_x + step * (&mv.x - &mv.z);
    let ga = &mv.gamma_a + step * (&mv.a - &mv.j);
    (gx, ga)
}

/// Evaluates the model objective at the current state:
/// `Σ_n (α_n/2‖Y_(n) − A_n X_n‖² + τ_n‖X_n‖_* + λ_n‖A_n‖_*)` plus
/// `μ‖X_3‖_TV` for model-2.
pub fn objective(state: &SolverState, cfg: &SolverConfig) -> Result<f64> {
    let y_unfs = unfold_all(&state.y)?;
    objective_with_unfoldings(state, cfg, &y_unfs)
}

fn objective_with_unfoldings(
    state: &SolverState,
    cfg: &SolverConfig,
    y_unfs: &[DMatrix<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for (n, mv) in state.modes.iter().enumerate() {
        let fit = (&y_unfs[n] - &mv.a * &mv.x).norm_squared();
        total += 0.5 * cfg.alpha[n] * fit;
        if cfg.tau[n] > 0.0 {
            total += cfg.tau[n] * nuclear_via_thin_svd(&mv.x)?;
        }
        if cfg.lambda[n] > 0.0 {
            total += cfg.lambda[n] * nuclear_via_thin_svd(&mv.a)?;
        }
    }
    if cfg.model == Model::Two && cfg.mu > 0.0 {
        let dims = state.y.dims();
        let grid = (dims[0], dims[1]);
        total += cfg.mu * crate::kernels::tv_value(&state.modes[2].x, grid, state.blocks)?;
    }
    Ok(total)
}

fn nuclear_via_thin_svd(m: &DMatrix<f64>) -> Result<f64> {
    Ok(thin_svd(m)?.sigma.iter().sum())
}

fn unfold_all(y: &DenseTensor) -> Result<Vec<DMatrix<f64>>> {
    (0..y.dims().len()).map(|n| y.unfold(n)).collect()
}

fn check_finite(m: &DMatrix<f64>, what: &str, iter: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "non-finite value produced by {} at outer iteration {}",
            what, iter
        )))
    }
}

/// Attaches the offending update and iteration to errors escaping a phase.
/// Inputs were validated up front, so anything surfacing mid-run is a
/// numerical failure.
fn phase_context(e: Error, what: &str, iter: usize) -> Error {
    match e {
        Error::Numerical(msg) | Error::Argument(msg) => Error::Numerical(format!(
            "{} (during {} at outer iteration {})",
            msg, what, iter
        )),
        other => other,
    }
}

/// Runs the full outer loop on the observed tensor `f`.
///
/// Stops when `‖Y^{k+1} − Y^k‖_F / max(‖Y^k‖_F, 1) ≤ tol` or after
/// `max_outer` iterations; returns the completed tensor and the
/// per-iteration trace.
pub fn run(f: &DenseTensor, mask: &ObservationMask, cfg: &SolverConfig) -> Result<RunResult> {
    let start = Instant::now();
    let mut state = SolverState::init(f, mask, cfg)?;
    let n_modes = f.dims().len();
    let mut y_unfs = unfold_all(&state.y)?;
    let mut trace = Vec::new();

    for iter in 1..=cfg.max_outer {
        state.iter = iter;

        // 1st step: Z_n
        let zs: Vec<_> = (0..n_modes)
            .into_par_iter()
            .map(|n| update_z(&state, cfg, n))
            .collect::<Result<_>>()
            .map_err(|e| phase_context(e, "update_z", iter))?;
        for (n, z) in zs.into_iter().enumerate() {
            check_finite(&z, &format!("update_z (mode {})", n), iter)?;
            state.modes[n].z = z;
        }

        // 2nd step: X_n (mode 3 via the inner TV ADMM for model-2)
        let tv_mode = cfg.model == Model::Two;
        let xs: Vec<_> = (0..n_modes)
            .into_par_iter()
            .map(|n| {
                if tv_mode && n == 2 {
                    update_x3_tv(&state, cfg, &y_unfs[2]).map(|(x, tv)| (x, Some(tv)))
                } else {
                    update_x_plain(&state, cfg, n, &y_unfs[n]).map(|x| (x, None))
                }
            })
            .collect::<Result<_>>()
            .map_err(|e| phase_context(e, "update_x", iter))?;
        for (n, (x, tv)) in xs.into_iter().enumerate() {
            check_finite(&x, &format!("update_x (mode {})", n), iter)?;
            state.modes[n].x = x;
            if let Some(tv) = tv {
                state.tv = Some(tv);
            }
        }

        // 3rd step: J_n
        let js: Vec<_> = (0..n_modes)
            .into_par_iter()
            .map(|n| update_j(&state, cfg, n))
            .collect::<Result<_>>()
            .map_err(|e| phase_context(e, "update_j", iter))?;
        for (n, j) in js.into_iter().enumerate() {
            check_finite(&j, &format!("update_j (mode {})", n), iter)?;
            state.modes[n].j = j;
        }

        // 4th step: A_n
        let avs: Vec<_> = (0..n_modes)
            .into_par_iter()
            .map(|n| update_a(&state, cfg, n, &y_unfs[n]))
            .collect::<Result<_>>()
            .map_err(|e| phase_context(e, "update_a", iter))?;
        for (n, a) in avs.into_iter().enumerate() {
            check_finite(&a, &format!("update_a (mode {})", n), iter)?;
            state.modes[n].a = a;
        }

        // 5th step: Y, pinned to the data on Ω
        let y_new =
            update_y(&state, cfg, f, mask, &y_unfs).map_err(|e| phase_context(e, "update_y", iter))?;
        if !y_new.data().iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value produced by update_y at outer iteration {}",
                iter
            )));
        }
        let diff = {
            let mut d = y_new.clone();
            d.add_scaled(&state.y, -1.0)?;
            d.frobenius_norm()
        };
        let rel_change = diff / state.y.frobenius_norm().max(1.0);
        state.y = y_new;
        y_unfs = unfold_all(&state.y)?;

        // 6th step: multipliers
        let gs: Vec<_> = (0..n_modes)
            .into_par_iter()
            .map(|n| update_multipliers(&state, cfg, n))
            .collect();
        let mut max_feas = 0.0f64;
        for (n, (gx, ga)) in gs.into_iter().enumerate() {
            max_feas = max_feas
                .max((&state.modes[n].x - &state.modes[n].z).norm())
                .max((&state.modes[n].a - &state.modes[n].j).norm());
            check_finite(&gx, &format!("update_multipliers (mode {})", n), iter)?;
            state.modes[n].gamma_x = gx;
            state.modes[n].gamma_a = ga;
        }

        if cfg.adaptive_penalty {
            for r in &mut state.rho {
                *r = (*r * PENALTY_GROWTH).min(PENALTY_CAP);
            }
        }

        let obj = objective_with_unfoldings(&state, cfg, &y_unfs)?;
        if !obj.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite objective at outer iteration {}",
                iter
            )));
        }
        trace.push(TraceRow {
            iter,
            objective: obj,
            rel_change,
            max_feasibility_residual: max_feas,
            seconds: start.elapsed().as_secs_f64(),
        });

        if rel_change <= cfg.tol {
            break;
        }
    }

    Ok(RunResult {
        tensor: state.y,
        trace,
    })
}

/// Heuristic rank suggestion: for each mode, the smallest `r` whose leading
/// singular values of the observed unfolding carry `energy` of the total
/// squared spectrum. A guide only; the solver takes ranks as given.
pub fn suggest_ranks(f_observed: &DenseTensor, energy: f64) -> Result<Vec<usize>> {
    if !(0.0 < energy && energy <= 1.0) {
        return Err(Error::argument("energy threshold must lie in (0, 1]"));
    }
    let mut out = Vec::with_capacity(f_observed.dims().len());
    for n in 0..f_observed.dims().len() {
        let unf = f_observed.unfold(n)?;
        let sv = thin_svd(&unf)?.sigma;
        let total: f64 = sv.iter().map(|s| s * s).sum();
        if total == 0.0 {
            out.push(1);
            continue;
        }
        let mut acc = 0.0;
        let mut r = sv.len();
        for (i, s) in sv.iter().enumerate() {
            acc += s * s;
            if acc >= energy * total {
                r = i + 1;
                break;
            }
        }
        out.push(r.max(1));
    }
    Ok(out)
}
