use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("max_mode must be at least 1, got {0}")]
    EmptySpectrum(usize),
    #[error("zero-mode coefficient must be real, got imaginary part {0}")]
    NonRealZeroMode(f64),
    #[error("non-finite coefficient at mode {0}")]
    NonFinite(usize),
    #[error("mode count mismatch: {left} vs {right}")]
    ModeMismatch { left: usize, right: usize },
    #[error("grid of {points} points aliases {modes} modes (need at least {needed})")]
    Aliasing {
        points: usize,
        modes: usize,
        needed: usize,
    },
    #[error("projector cutoff {cutoff} exceeds field max_mode {max_mode}")]
    CutoffTooLarge { cutoff: usize, max_mode: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("beta must be non-zero: the cos(beta u) density is undefined at beta = 0")]
    ZeroBeta,
    #[error("noise covariance for mode {mode} at step {tau} is not positive definite")]
    NotPositiveDefinite { mode: usize, tau: f64 },
    #[error("time {t} is not a multiple of the step {dt}")]
    PartialStep { t: f64, dt: f64 },
    #[error("noise path too short: need {needed} steps, have {available}")]
    NoiseTooShort { needed: usize, available: usize },
    #[error("non-finite state after step {step} (try a smaller dt)")]
    BlowUp { step: usize },
    #[error("exponential moment overflowed (lambda = {lambda}); use a smaller lambda")]
    MomentOverflow { lambda: f64 },
    #[error("cloud sizes differ: {left} vs {right}")]
    CloudSizeMismatch { left: usize, right: usize },
    #[error("cloud size {size} exceeds the assignment cap {cap}; subsample first")]
    AssignmentCap { size: usize, cap: usize },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
