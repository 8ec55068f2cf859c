//! Time integration: exact per-mode linear transitions, realized noise, and
//! the split-step nonlinear flow.

pub mod flow;
pub mod linear;
pub mod noise;

pub use flow::{
    hamiltonian, linear_flow, nonlinear_flow, remainder_flow, Flow, FlowBuffers, FlowConfig, RemainderRun,
    TrajectoryRecord,
};
pub use linear::{
    build_linear_step, homogeneous_matrix, homogeneous_matrix_damped, propagator_multiplier, stationary_covariance,
    LinearPropagator, LinearStep, Mat2,
};
pub use noise::{ModeNoise, NoisePath};
