//! Numerical laboratory for central limit behavior of Hermite functionals
//! of Gaussian stationary sequences: spectral models, causal factorization,
//! exact path simulation, Breuer–Major statistics, Malliavin-derivative
//! norms, and density-convergence diagnostics.

// `!(x > 0.0)` is used deliberately where NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod grid;
pub mod hermite;
pub mod poly;
pub mod simulate;
pub mod spectral;
pub mod stats;
pub mod svg;
pub mod wold;

pub use hermite::{HermiteCombination, HermiteSeries};
pub use simulate::{NoiseStream, PathBatch, SimMethod};
pub use spectral::{CovarianceSequence, SpectralModel};
pub use wold::CausalCoefficients;
