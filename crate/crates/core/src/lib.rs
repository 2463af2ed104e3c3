//! Low-rank tensor completion toolkit.
//!
//! Recovers a dense N-way tensor from a subset of its entries by factorizing
//! every mode-n unfolding as `Y_(n) = A_n X_n` with nuclear-norm penalties on
//! both factors, optionally adding an isotropic total-variation term on the
//! mode-3 encoding. The solver is a block coordinate scheme with proximal
//! upper bounds; each block is handled by closed forms, singular value
//! thresholding, or (for the TV block) an inner ADMM with an FFT-diagonalized
//! Sylvester solve.
//!
//! Modules:
//! - [`tensor`]: dense N-way storage, mode-n unfold/fold, masking, sampling,
//!   synthetic data generation.
//! - [`kernels`]: matrix kernels (SVD, SVT, difference operators, isotropic
//!   TV, 2-D shrinkage, the Sylvester/FFT solve).
//! - [`solver`]: the outer loop and all subproblem updates for model-1
//!   (nuclear norms only) and model-2 (nuclear norms + TV).
//! - [`metrics`]: per-slice picture quality indices (PSNR, SSIM, ERGAS, SAM).
//! - [`io`]: TNS1/MSK1 binary file formats and CSV/JSON report emission.

pub mod error;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, ObservationMask};
