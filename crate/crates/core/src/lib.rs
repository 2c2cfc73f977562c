//! Manifold proximal point solvers for `min ‖Yᵀx‖₁` over the unit sphere and
//! its column-by-column Stiefel extension, with subgradient and IRLS baselines,
//! synthetic instance generators and an experiment harness.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod manppa;
pub mod metrics;
pub mod rng;
pub mod stiefel;
pub mod stmanppa;
pub mod subsolver;
pub mod trace;

pub use error::{Error, Result};
pub use geometry::{DataMatrix, LipschitzBound, SpherePoint, SubspaceBasis, TangentVector};
