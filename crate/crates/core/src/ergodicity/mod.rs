//! Lyapunov functionals, the weighted metrics, empirical Wasserstein
//! distances and the ergodicity experiments built on them.

pub mod assignment;
pub mod balls;
pub mod experiments;
pub mod lyapunov;
pub mod metrics;

pub use assignment::{cost_matrix, solve_assignment, wasserstein_assignment, EmpiricalCloud, ASSIGNMENT_CAP};
pub use balls::{
    ball_grid, ball_probability_importance, ball_probability_plain, ball_report, irreducibility_estimate,
    linear_ball_mass_bounds, small_set_experiment, BallEstimate, BallMethod, BallReport,
};
pub use experiments::{
    contraction_experiment, exp_inequality_check, gaussian_abs_moment, invariance_experiment, smoothing_experiment,
    ContractionCurve, ExpInequalityReport, ExpInequalityRow, InvarianceObservable, InvarianceRow, InvarianceTable,
    SmoothingCurve,
};
pub use lyapunov::{
    drift_trace_constant, exp_moment_experiment, exp_norm_moment, fit_decay, generator_drift_estimate,
    linear_drift_oracle, linear_gaussian_moment, lyapunov_g, lyapunov_m, lyapunov_v, lyapunov_v_mod,
    stationary_exp_moment, DecayFit, ExpMomentCurve, LyapunovParams, QuadraticForm,
};
pub use metrics::{
    d_delta, d_n, d_tilde, rho_lambda_upper, LipschitzObservable, Metric, MetricKind, MetricParams, ObservableKind,
};
