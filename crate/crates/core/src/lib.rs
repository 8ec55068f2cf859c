//! Spectral Galerkin simulation of the stochastic damped sine-Gordon
//! equation on the circle,
//!
//! ```text
//! ∂ₜ²u + ∂ₜu + (1 − ∂ₓ²)u + γ P_N sin(β P_N u) = √2 ξ,
//! ```
//!
//! with tools to check invariance of the Gibbs measure, Lyapunov bounds,
//! Girsanov couplings and Wasserstein contraction numerically.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod dynamics;
pub mod ergodicity;
pub mod error;
pub mod io;
pub mod nonlinearity;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod spectral;
pub mod stats;
pub mod tangent;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::Scalar;

pub type FourierField64 = spectral::FourierField<f64>;
pub type PairField64 = spectral::PairField<f64>;
pub type NoisePath64 = dynamics::NoisePath<f64>;
pub type FlowConfig64 = dynamics::FlowConfig<f64>;
pub type Flow64 = dynamics::Flow<f64>;
pub type GibbsEnsemble64 = sampling::GibbsEnsemble<f64>;
