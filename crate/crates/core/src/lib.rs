//! Positive, negative and sign-changing solutions of
//!
//! ```text
//! -Δ_p u = λ A(x) |u|^{p-2} u + g(x, u)   on ℝ^N
//! ```
//!
//! by minimization of the action over Nehari-type sets on a truncated,
//! discretized domain, together with executable checks of the variational
//! structure.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common case.

pub mod domain;
pub mod eigen;
pub mod error;
pub mod fields;
pub mod functional;
pub mod linalg;
pub mod nehari;
pub mod optimize;
pub mod sampling;
pub mod verify;
pub mod scalar;

pub use domain::{Domain, Field, Geometry};
pub use error::{Error, Hypothesis, Result};
pub use fields::{Nonlinearity, PowerLaw, Profile, WeightField, WeightRole};
pub use functional::{EnergyBreakdown, ProblemSpec};
pub use nehari::{NehariProjection, NodalProjection};
pub use scalar::Real;

pub type Domain64 = Domain<f64>;
pub type Field64 = Field<f64>;
pub type Geometry64 = Geometry<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type WeightField64 = WeightField<f64>;
pub type PowerLaw64 = PowerLaw<f64>;

pub type Domain32 = Domain<f32>;
pub type Field32 = Field<f32>;
pub type ProblemSpec32 = ProblemSpec<f32>;
