//! Energy-type Lyapunov functionals, their exponential moments along the
//! flow, and a finite-difference proxy for the generator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{homogeneous_matrix_damped, stationary_covariance, Flow, Mat2, NoisePath};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::spectral::{bracket_sq, PairField, PairNorm, SobolevIndex, SobolevWeights};
use crate::stats::{linear_fit, pairwise_sum, Estimate, LinearFit};

/// Largest exponent `λ·V` we are willing to exponentiate.
const EXP_CEILING: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub lambda: f64,
    pub alpha_minus: SobolevIndex<f64>,
    /// Ceiling `λ₀` on admissible exponents.
    pub lambda_max: f64,
}

impl LyapunovParams {
    pub const DEFAULT_LAMBDA_MAX: f64 = 0.25;

    pub fn new(lambda: f64) -> Result<Self> {
        let lp = Self {
            lambda,
            alpha_minus: SobolevIndex::default(),
            lambda_max: Self::DEFAULT_LAMBDA_MAX,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn with_lambda_max(mut self, lambda_max: f64) -> Result<Self> {
        self.lambda_max = lambda_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= self.lambda_max && self.lambda_max.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("need 0 < lambda <= {}, got {}", self.lambda_max, self.lambda),
            });
        }
        Ok(())
    }
}

/// `V = ½‖p‖²` in `H^α × H^{α−1}`.
pub fn lyapunov_v<T: Scalar>(p: &PairField<T>, alpha: SobolevIndex<T>) -> T {
    T::lit(0.5) * PairNorm::new(p.max_mode(), alpha).norm_sq(p)
}

/// `M = ¼‖u‖²_{H^{α−1}} + ½ Σ_{n∈Z} ⟨n⟩^{2α−2} Re(û(n) conj v̂(n))`.
pub fn lyapunov_m<T: Scalar>(p: &PairField<T>, alpha: SobolevIndex<T>) -> T {
    let w = SobolevWeights::new(p.max_mode(), alpha.shifted(-T::one()));
    T::lit(0.25) * w.norm_sq(&p.u) + T::lit(0.5) * w.inner(&p.u, &p.v)
}

/// `V_mod = V + M`, comparable with `V` up to a factor 2 either way.
pub fn lyapunov_v_mod<T: Scalar>(p: &PairField<T>, alpha: SobolevIndex<T>) -> T {
    lyapunov_v(p, alpha) + lyapunov_m(p, alpha)
}

/// `G_λ = exp(λ V_mod)`.
pub fn lyapunov_g<T: Scalar>(p: &PairField<T>, lp: &LyapunovParams) -> Result<f64> {
    checked_exp(lp.lambda * lyapunov_v_mod(p, alpha_of::<T>(lp)).as_f64(), lp.lambda)
}

/// `exp(λ‖p‖²)`.
pub fn exp_norm_moment<T: Scalar>(p: &PairField<T>, norm: &PairNorm<T>, lambda: f64) -> Result<f64> {
    checked_exp(lambda * norm.norm_sq(p).as_f64(), lambda)
}

fn checked_exp(x: f64, lambda: f64) -> Result<f64> {
    if !(x.is_finite() && x < EXP_CEILING) {
        return Err(Error::MomentOverflow { lambda });
    }
    Ok(x.exp())
}

fn alpha_of<T: Scalar>(lp: &LyapunovParams) -> SobolevIndex<T> {
    SobolevIndex(T::lit(lp.alpha_minus.0))
}

/// Quadratic functional whose exponential moment is computed in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadraticForm {
    /// `‖p‖²` in the `α⁻` phase-space norm.
    Norm,
    /// `V_mod`.
    ModifiedEnergy,
}

impl QuadraticForm {
    /// Matrix of the form on one real coordinate block `(Re û(n), Re v̂(n))`,
    /// conjugate mode included.
    fn block(self, n: usize, alpha: f64) -> Mat2<f64> {
        let k2: f64 = bracket_sq(n);
        let wu = k2.powf(alpha);
        let wv = k2.powf(alpha - 1.0);
        let mult = if n == 0 { 1.0 } else { 2.0 };
        let m = match self {
            QuadraticForm::Norm => Mat2::diag(wu, wv),
            QuadraticForm::ModifiedEnergy => Mat2([
                [0.5 * wu + 0.25 * wv, 0.25 * wv],
                [0.25 * wv, 0.5 * wv],
            ]),
        };
        m.scale(mult)
    }
}

/// `log E exp(xᵀBx)` for `x ~ N(m, C)` in two dimensions; `None` if the
/// moment is infinite.
fn log_gaussian_quadratic_moment(m: [f64; 2], c: &Mat2<f64>, b: &Mat2<f64>) -> Option<f64> {
    let a = Mat2::<f64>::identity().sub(&b.mul(c).scale(2.0));
    let det = a.get(0, 0) * a.get(1, 1) - a.get(0, 1) * a.get(1, 0);
    let tr = a.get(0, 0) + a.get(1, 1);
    if !(det > 0.0 && tr > 0.0) {
        return None;
    }
    let inv = Mat2([[a.get(1, 1) / det, -a.get(0, 1) / det], [-a.get(1, 0) / det, a.get(0, 0) / det]]);
    let bm = [
        b.get(0, 0) * m[0] + b.get(0, 1) * m[1],
        b.get(1, 0) * m[0] + b.get(1, 1) * m[1],
    ];
    let y = [inv.get(0, 0) * bm[0] + inv.get(0, 1) * bm[1], inv.get(1, 0) * bm[0] + inv.get(1, 1) * bm[1]];
    Some(-0.5 * det.ln() + m[0] * y[0] + m[1] * y[1])
}

/// `E exp(λ·form(L_t))` for the linear flow `L` with damping `damping`
/// started at `start = (p0, t)`, or under the stationary Gaussian measure
/// when `start` is `None`.
pub fn linear_gaussian_moment<T: Scalar>(
    form: QuadraticForm,
    lambda: f64,
    alpha: SobolevIndex<f64>,
    max_mode: usize,
    damping: f64,
    start: Option<(&PairField<T>, f64)>,
) -> Result<f64> {
    let mut log_m = 0.0;
    for n in 0..=max_mode {
        let sigma = stationary_covariance::<f64>(n);
        let (mean_op, cov) = match start {
            None => (Mat2::zero(), sigma),
            Some((_, t)) => {
                let e = homogeneous_matrix_damped::<f64>(n, t, damping);
                (e, sigma.sub(&e.congruence(&sigma)))
            }
        };
        let b = form.block(n, alpha.0).scale(lambda);
        let parts: &[usize] = if n == 0 { &[0] } else { &[0, 1] };
        let cov = if n == 0 { cov } else { cov.scale(0.5) };
        for &part in parts {
            let m = match start {
                None => [0.0, 0.0],
                Some((p0, _)) => {
                    let pick = |z: num_complex::Complex<T>| if part == 0 { z.re.as_f64() } else { z.im.as_f64() };
                    let (a, v) = (pick(p0.u.coeff(n)), pick(p0.v.coeff(n)));
                    [
                        mean_op.get(0, 0) * a + mean_op.get(0, 1) * v,
                        mean_op.get(1, 0) * a + mean_op.get(1, 1) * v,
                    ]
                }
            };
            log_m += log_gaussian_quadratic_moment(m, &cov, &b).ok_or(Error::MomentOverflow { lambda })?;
        }
    }
    checked_exp(log_m, lambda)
}

/// Stationary `E exp(λ‖p‖²) = (1−2λ)^{-1} Π_{n=1}^N (1 − 2λ⟨n⟩^{2α−2})^{-2}`.
pub fn stationary_exp_moment(max_mode: usize, lambda: f64, alpha: SobolevIndex<f64>) -> Result<f64> {
    linear_gaussian_moment::<f64>(QuadraticForm::Norm, lambda, alpha, max_mode, 1.0, None)
}

/// Monte Carlo curve `t ↦ E exp(λ‖Φ_t‖²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub lambda: f64,
    /// `exp(λ‖u₀‖²)` averaged over the initial states.
    pub initial: f64,
}

/// Runs `trajectories` paths, the `i`-th from `initial[i % len]` with noise
/// from `stream.substream(i)`, recording `exp(λ‖Φ_t‖²)` every `every` steps.
pub fn exp_moment_experiment<T: Scalar>(
    flow: &Flow<T>,
    initial: &[PairField<T>],
    lp: &LyapunovParams,
    t_final: T,
    every: usize,
    trajectories: usize,
    stream: &RngStream,
) -> Result<ExpMomentCurve> {
    lp.validate()?;
    if initial.is_empty() || trajectories == 0 {
        return Err(Error::InvalidParameter {
            name: "trajectories",
            reason: "need at least one initial state and one trajectory".into(),
        });
    }
    let cfg = flow.config();
    let steps = flow.steps_for(t_final)?;
    let every = every.max(1);
    let norm = PairNorm::new(cfg.max_mode, alpha_of::<T>(lp));
    let init: Vec<f64> = initial
        .iter()
        .map(|p| exp_norm_moment(p, &norm, lp.lambda))
        .collect::<Result<_>>()?;
    let paths: Vec<Vec<f64>> = (0..trajectories)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let noise = NoisePath::generate(&stream.substream(i as u64), cfg.dt, steps, cfg.max_mode)?;
            let mut p = initial[i % initial.len()].clone();
            let mut buf = flow.buffers();
            let mut row = vec![init[i % initial.len()]];
            let mut overflow = false;
            flow.advance(&mut p, &noise, 0, steps, &mut buf, |k, q| {
                if k % every == 0 {
                    match exp_norm_moment(q, &norm, lp.lambda) {
                        Ok(v) => row.push(v),
                        Err(_) => overflow = true,
                    }
                }
            })?;
            if overflow {
                return Err(Error::MomentOverflow { lambda: lp.lambda });
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let dt = cfg.dt.as_f64();
    let points = paths[0].len();
    let mut curve = ExpMomentCurve {
        times: (0..points).map(|j| (j * every) as f64 * dt).collect(),
        mean: Vec::with_capacity(points),
        stderr: Vec::with_capacity(points),
        lambda: lp.lambda,
        initial: pairwise_sum(&init) / init.len() as f64,
    };
    let mut column = vec![0.0; trajectories];
    for j in 0..points {
        for (c, row) in column.iter_mut().zip(&paths) {
            *c = row[j];
        }
        let est = if trajectories > 1 {
            Estimate::from_samples(&column)
        } else {
            Estimate { mean: column[0], stderr: 0.0, count: 1 }
        };
        curve.mean.push(est.mean);
        curve.stderr.push(est.stderr);
    }
    Ok(curve)
}

/// Fit of `m(t) ≈ C e^{−γt} G₀ + K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub gamma_ci: (f64, f64),
    pub c: f64,
    pub k: f64,
    pub k_stderr: f64,
    /// Number of curve points used in the log-linear fit.
    pub fit_points: usize,
}

/// `K̂` is the mean over the last `tail_fraction` of the curve; `γ̂` and `Ĉ`
/// come from least squares on `log(m − K̂)` over the initial stretch where
/// `m − K̂` exceeds both `3` standard errors and `5%` of `K̂`.
pub fn fit_decay(curve: &ExpMomentCurve, tail_fraction: f64, confidence: f64) -> Option<DecayFit> {
    let n = curve.times.len();
    let tail = ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n);
    let tail_means = &curve.mean[n - tail..];
    let k = pairwise_sum(tail_means) / tail as f64;
    let k_stderr = if tail > 1 {
        Estimate::from_samples(tail_means).stderr
    } else {
        curve.stderr[n - 1]
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..n - tail {
        let excess = curve.mean[j] - k;
        let floor = (3.0 * curve.stderr[j].hypot(k_stderr)).max(0.05 * k);
        if excess <= floor {
            break;
        }
        xs.push(curve.times[j]);
        ys.push(excess.ln());
    }
    let fit: LinearFit = linear_fit(&xs, &ys, confidence)?;
    Some(DecayFit {
        gamma: -fit.slope,
        gamma_ci: (-fit.slope_ci.1, -fit.slope_ci.0),
        c: fit.intercept.exp() / curve.initial,
        k,
        k_stderr,
        fit_points: xs.len(),
    })
}

/// `(E G_λ(Φ_{dt_obs}(u₀)) − G_λ(u₀)) / dt_obs` over `trajectories` paths.
pub fn generator_drift_estimate<T: Scalar>(
    flow: &Flow<T>,
    u0: &PairField<T>,
    lp: &LyapunovParams,
    dt_obs: T,
    trajectories: usize,
    stream: &RngStream,
) -> Result<Estimate> {
    lp.validate()?;
    let cfg = flow.config();
    if dt_obs < cfg.dt {
        return Err(Error::InvalidParameter {
            name: "dt_obs",
            reason: format!("observation step {dt_obs} is below the flow step {}", cfg.dt),
        });
    }
    if trajectories < 2 {
        return Err(Error::InvalidParameter {
            name: "trajectories",
            reason: "need at least two trajectories".into(),
        });
    }
    let steps = flow.steps_for(dt_obs)?;
    let g0 = lyapunov_g(u0, lp)?;
    let h = dt_obs.as_f64();
    let values: Vec<f64> = (0..trajectories)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let noise = NoisePath::generate(&stream.substream(i as u64), cfg.dt, steps, cfg.max_mode)?;
            let p = flow.run(u0, &noise, dt_obs)?;
            Ok((lyapunov_g(&p, lp)? - g0) / h)
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&values))
}

/// Exact counterpart of [`generator_drift_estimate`] for the linear flow.
pub fn linear_drift_oracle<T: Scalar>(
    u0: &PairField<T>,
    lp: &LyapunovParams,
    damping: f64,
    dt_obs: f64,
) -> Result<f64> {
    let g0 = lyapunov_g(u0, lp)?;
    let m = linear_gaussian_moment(
        QuadraticForm::ModifiedEnergy,
        lp.lambda,
        lp.alpha_minus,
        u0.max_mode(),
        damping,
        Some((u0, dt_obs)),
    )?;
    Ok((m - g0) / dt_obs)
}

/// `ℒ G_λ(0)/λ = 1 + 2 Σ_{n=1}^N ⟨n⟩^{2α−2}`: the trace of the noise
/// against the velocity part of `V_mod`.
pub fn drift_trace_constant(max_mode: usize, alpha: SobolevIndex<f64>) -> f64 {
    1.0 + (1..=max_mode).map(|n| 2.0 * bracket_sq::<f64>(n).powf(alpha.0 - 1.0)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::FlowConfig;
    use crate::sampling::sample_free_pair;
    use crate::spectral::FourierField;
    use approx::assert_relative_eq;
    use num_complex::Complex;

    fn cos_pair(n: usize) -> PairField<f64> {
        PairField::new(FourierField::cosine(n, 1, 1.0), FourierField::zeros(n)).unwrap()
    }

    #[test]
    fn functional_examples() {
        let a = SobolevIndex(0.4);
        let z = PairField::<f64>::zeros(4);
        assert_eq!((lyapunov_v(&z, a), lyapunov_m(&z, a), lyapunov_v_mod(&z, a)), (0.0, 0.0, 0.0));
        let p = cos_pair(4);
        // cos x has û(±1) = ½: V = ½·2·2^{0.4}/4, M = ¼·2·2^{−0.6}/4.
        assert_relative_eq!(lyapunov_v(&p, a), 2f64.powf(0.4) / 4.0, epsilon = 1e-15);
        assert_relative_eq!(lyapunov_v(&p, a), 0.329877, epsilon = 1e-6);
        assert_relative_eq!(lyapunov_m(&p, a), 0.082469, epsilon = 1e-6);
        assert_relative_eq!(lyapunov_v_mod(&p, a), 0.412346, epsilon = 1e-6);
    }

    #[test]
    fn sandwich_on_random_pairs() {
        let a = SobolevIndex(0.4);
        let s = RngStream::new(4, 4);
        for i in 0..100_000u64 {
            let mut p: PairField<f64> = sample_free_pair(6, &s.substream(i));
            // Stress the cross term with strongly anti-aligned velocity.
            if i % 3 == 0 {
                p.v = p.u.scaled(-(1.0 + (i % 7) as f64));
            }
            let (v, vm) = (lyapunov_v(&p, a), lyapunov_v_mod(&p, a));
            assert!(0.5 * v <= vm && vm <= 2.0 * v, "{v} {vm}");
        }
    }

    #[test]
    fn stationary_moment_matches_product_formula() {
        let a = SobolevIndex(0.4);
        let (n, lam) = (8, 0.05);
        let mut direct = 1.0 / (1.0 - 2.0 * lam);
        for k in 1..=n {
            direct /= (1.0 - 2.0 * lam * (1.0 + (k * k) as f64).powf(a.0 - 1.0)).powi(2);
        }
        assert_relative_eq!(stationary_exp_moment(n, lam, a).unwrap(), direct, epsilon = 1e-12);
        assert!(stationary_exp_moment(n, 0.5, a).is_err());
        // Long-time limit from zero data.
        let z = PairField::<f64>::zeros(n);
        let late = linear_gaussian_moment(QuadraticForm::Norm, lam, a, n, 1.0, Some((&z, 60.0))).unwrap();
        assert_relative_eq!(late, direct, epsilon = 1e-10);
    }

    #[test]
    fn moment_matches_monte_carlo_for_modified_energy() {
        let a = SobolevIndex(0.4);
        let (n, lam) = (4, 0.1);
        let s = RngStream::new(8, 1);
        let lp = LyapunovParams::new(lam).unwrap();
        let xs: Vec<f64> = (0..200_000u64)
            .map(|i| lyapunov_g(&sample_free_pair::<f64>(n, &s.substream(i)), &lp).unwrap())
            .collect();
        let exact = linear_gaussian_moment::<f64>(QuadraticForm::ModifiedEnergy, lam, a, n, 1.0, None).unwrap();
        assert!(Estimate::from_samples(&xs).z_to(exact) < 5.0);
    }

    #[test]
    fn zero_data_curve_rises_to_plateau() {
        let n = 4;
        let flow = Flow::new(FlowConfig::new(n, 1.0, 0.0, 0.05)).unwrap();
        let lp = LyapunovParams::new(0.05).unwrap();
        let curve = exp_moment_experiment(&flow, &[PairField::zeros(n)], &lp, 6.0, 10, 4000, &RngStream::new(2, 0)).unwrap();
        let a = lp.alpha_minus;
        let z = PairField::<f64>::zeros(n);
        for (j, &t) in curve.times.iter().enumerate() {
            let exact = if t == 0.0 {
                1.0
            } else {
                linear_gaussian_moment(QuadraticForm::Norm, lp.lambda, a, n, 1.0, Some((&z, t))).unwrap()
            };
            if j > 0 {
                assert!((curve.mean[j] - exact).abs() < 5.0 * curve.stderr[j], "t={t}");
                let prev = linear_gaussian_moment(QuadraticForm::Norm, lp.lambda, a, n, 1.0, Some((&z, curve.times[j - 1].max(1e-9)))).unwrap();
                assert!(exact >= prev - 1e-12);
            }
        }
        let plateau = stationary_exp_moment(n, lp.lambda, a).unwrap();
        assert!(*curve.mean.last().unwrap() < plateau + 5.0 * curve.stderr.last().unwrap());
    }

    #[test]
    fn tiny_lambda_gives_unit_curve_and_huge_lambda_overflows() {
        let n = 3;
        let flow = Flow::new(FlowConfig::new(n, 1.0, 1.0, 0.05)).unwrap();
        let lp = LyapunovParams::new(1e-12).unwrap();
        let p0: PairField<f64> = sample_free_pair(n, &RngStream::new(1, 2));
        let curve = exp_moment_experiment(&flow, &[p0.clone()], &lp, 1.0, 5, 20, &RngStream::new(3, 3)).unwrap();
        assert!(curve.mean.iter().all(|m| (m - 1.0).abs() < 1e-9));
        let big = LyapunovParams::new(0.2).unwrap();
        let huge = p0.scaled(1e3);
        assert_eq!(
            exp_moment_experiment(&flow, &[huge], &big, 1.0, 5, 2, &RngStream::new(3, 3)),
            Err(Error::MomentOverflow { lambda: 0.2 })
        );
        assert!(LyapunovParams::new(0.3).is_err());
        assert!(LyapunovParams::new(0.0).is_err());
    }

    #[test]
    fn decay_fit_recovers_synthetic_rate() {
        let times: Vec<f64> = (0..80).map(|j| j as f64 * 0.25).collect();
        let mean: Vec<f64> = times.iter().map(|t| 3.0 * (-0.7 * t).exp() * 5.0 + 1.2).collect();
        let curve = ExpMomentCurve {
            stderr: vec![1e-6; times.len()],
            times,
            mean,
            lambda: 0.1,
            initial: 5.0,
        };
        let fit = fit_decay(&curve, 0.25, 0.95).unwrap();
        assert_relative_eq!(fit.k, 1.2, epsilon = 1e-3);
        assert_relative_eq!(fit.gamma, 0.7, max_relative = 0.02);
        assert_relative_eq!(fit.c, 3.0, max_relative = 0.05);
    }

    #[test]
    fn drift_at_zero_matches_trace_and_oracle() {
        let n = 4;
        let lp = LyapunovParams::new(0.05).unwrap();
        let z = PairField::<f64>::zeros(n);
        let trace = drift_trace_constant(n, lp.alpha_minus);
        // The exact short-time difference quotient tends to λ·trace.
        let small = linear_drift_oracle(&z, &lp, 1.0, 1e-5).unwrap();
        assert_relative_eq!(small, lp.lambda * trace, max_relative = 1e-3);
        let dt_obs = 0.05;
        let flow = Flow::new(FlowConfig::new(n, 1.0, 0.0, 0.01)).unwrap();
        let est = generator_drift_estimate(&flow, &z, &lp, dt_obs, 40_000, &RngStream::new(6, 1)).unwrap();
        let exact = linear_drift_oracle(&z, &lp, 1.0, dt_obs).unwrap();
        assert!(est.z_to(exact) < 5.0, "{est:?} vs {exact}");
        assert!(est.mean > 0.0 && est.mean <= 1.1 * lp.lambda * trace);
    }

    #[test]
    fn drift_negative_for_large_energy() {
        let n = 8;
        let mut u0 = PairField::<f64>::zeros(n);
        u0.u.coeffs_mut()[1] = Complex::new(3.0, 0.0);
        u0.v.coeffs_mut()[1] = Complex::new(3.0, 1.0);
        let norm = PairNorm::new(n, SobolevIndex(0.4));
        let u0 = u0.scaled(10.0 / norm.norm(&u0));
        assert_relative_eq!(norm.norm_sq(&u0), 100.0, epsilon = 1e-9);
        let lp = LyapunovParams::new(0.02).unwrap();
        let flow = Flow::new(FlowConfig::new(n, 1.0, 1.0, 0.01)).unwrap();
        let est = generator_drift_estimate(&flow, &u0, &lp, 0.05, 2000, &RngStream::new(9, 9)).unwrap();
        assert!(est.mean + 5.0 * est.stderr < 0.0, "{est:?}");
    }

    #[test]
    fn drift_scales_linearly_in_lambda() {
        let n = 4;
        let z = PairField::<f64>::zeros(n);
        let flow = Flow::new(FlowConfig::new(n, 1.0, 0.0, 0.01)).unwrap();
        let s = RngStream::new(1, 8);
        let a = generator_drift_estimate(&flow, &z, &LyapunovParams::new(0.02).unwrap(), 0.05, 20_000, &s).unwrap();
        let b = generator_drift_estimate(&flow, &z, &LyapunovParams::new(0.01).unwrap(), 0.05, 20_000, &s).unwrap();
        let ratio = a.mean / b.mean;
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn drift_rejects_short_observation() {
        let flow = Flow::new(FlowConfig::new(2, 1.0, 0.0, 0.01)).unwrap();
        let lp = LyapunovParams::new(0.01).unwrap();
        assert!(generator_drift_estimate(&flow, &PairField::zeros(2), &lp, 0.001, 10, &RngStream::new(0, 0)).is_err());
    }
}
