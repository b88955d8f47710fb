//! Gaussian-process regression with exact and iterative posteriors.
//!
//! Iterative posteriors replace `(K + sigma^2 I)^{-1}` by a rank-`m`
//! precision built from a policy of actions: eigenvectors (EVGP), Lanczos
//! Ritz vectors (LGP) or conjugate-gradient directions (CGGP).

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod itergp;
pub mod kernels;
pub mod linalg;
pub mod posterior;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
