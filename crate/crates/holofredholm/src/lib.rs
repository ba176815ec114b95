//! Galerkin approximation of eigenvalue problems for holomorphic Fredholm
//! operator functions.
//!
//! A reference Hilbert space `X` is represented by a Hermitian positive
//! definite Gram matrix. Operator functions are stored through their sesquilinear
//! forms `<A(λ)u, v>_X = vᴴ Â(λ) u`, which keeps finite element matrices banded
//! and makes Galerkin compression a pair of matrix products.
//!
//! Module overview:
//!
//! * [`linalg`]: Gram spaces, X-adjoints, generalized singular values, solvers.
//! * [`opfun`]: scalar holomorphic coefficients and operator functions.
//! * [`galerkin`]: nested subspace hierarchies, projection and compression.
//! * [`tco`]: T-coercivity witnesses and T-compatibility diagnostics.
//! * [`nep`]: contour-integral eigensolver and Jordan chain analysis.
//! * [`convlab`]: convergence, stability and pollution studies.
//! * [`models`]: model problems and the model registry.

pub mod convlab;
pub mod dense;
pub mod error;
pub mod galerkin;
pub mod linalg;
pub mod models;
pub mod nep;
pub mod opfun;
pub mod output;
pub mod tco;

pub use error::{Error, Result};

/// Complex scalar type used throughout the crate.
pub type C64 = faer::complex_native::c64;

/// Dense complex matrix.
pub type CMat = faer::Mat<C64>;

/// Shorthand constructor for a complex number.
#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
