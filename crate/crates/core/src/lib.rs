//! Sparse linear regression recovery with ℓq (0 < q ≤ 1) estimators.
//!
//! The crate covers four layers:
//!
//! * [`sparsity`]: ℓq quasi-norms, top-`t` index sets and the restricted cone
//!   `C_q(s, a)`.
//! * [`regularity`]: sparse eigenvalues, restricted isometry/orthogonality
//!   constants, the q-restricted eigenvalue modulus and its sufficient conditions.
//! * [`solvers`]: proximal operators, proximal gradient (with IHT and FISTA as
//!   special cases), iteratively reweighted ℓ1 for the constrained problem and
//!   an exhaustive global solver for tiny instances.
//! * [`bounds`]: closed-form tuning rules, recovery bounds, probability floors
//!   and sample-size thresholds.
//!
//! [`experiments`] ties everything together into a reproducible Monte-Carlo
//! harness.
//!
//! Numerical routines are generic over [`Scalar`] (`f32` or `f64`); the
//! experiment harness runs in `f64`.

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod instance;
pub mod regularity;
pub mod scalar;
pub mod solvers;
pub mod sparsity;

pub use error::{Error, Result};
pub use instance::RegressionInstance;
pub use scalar::Scalar;
pub use sparsity::{ConeParams, IndexSet};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type Matrix32 = nalgebra::DMatrix<f32>;
pub type Vector32 = nalgebra::DVector<f32>;
pub type Instance = RegressionInstance<f64>;
