//! Gibbs invariance, contraction of the weighted metric, large-time
//! smoothing, and the elementary exponential inequality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::dynamics::linear::gauss_legendre;
use crate::dynamics::{Flow, NoisePath};
use crate::ergodicity::assignment::{wasserstein_assignment, EmpiricalCloud};
use crate::ergodicity::metrics::{LipschitzObservable, Metric, MetricKind, MetricParams};
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::rng::{normal, RngStream};
use crate::sampling::{effective_sample_size, GibbsEnsemble};
use crate::scalar::Scalar;
use crate::spectral::{PairField, PairNorm, SobolevIndex};
use crate::stats::Estimate;
use crate::tangent::shifted_flow_observe;

/// Noise path for one trajectory: drawn at `dt / 2^refine` and coarsened
/// back, so runs at different `dt` can share a realization.
fn refined_noise<T: Scalar>(flow: &Flow<T>, steps: usize, refine: u32, stream: &RngStream) -> Result<NoisePath<T>> {
    let cfg = flow.config();
    let factor = 1usize << refine;
    let fine_dt = cfg.dt / T::from_usize_lossy(factor);
    let mut path = NoisePath::generate(stream, fine_dt, steps * factor, cfg.max_mode)?;
    for _ in 0..refine {
        path = path.coarsen_with(cfg.damping)?;
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvarianceObservable {
    /// `mean_x cos(β P_N u(x))`.
    CosAverage,
    /// `‖p‖²` in the `α⁻` phase-space norm.
    PairNormSq,
    /// `|û(0)|²`.
    ZeroModeSq,
    /// `|û(1)|²`.
    FirstModeSq,
    Hamiltonian,
}

impl InvarianceObservable {
    pub const STANDARD: [Self; 4] = [Self::CosAverage, Self::PairNormSq, Self::ZeroModeSq, Self::FirstModeSq];

    pub fn label(self) -> &'static str {
        match self {
            Self::CosAverage => "cos_average",
            Self::PairNormSq => "pair_norm_sq",
            Self::ZeroModeSq => "u0_sq",
            Self::FirstModeSq => "u1_sq",
            Self::Hamiltonian => "hamiltonian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub observable: InvarianceObservable,
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceTable {
    pub rows: Vec<InvarianceRow>,
    pub effective_sample_size: f64,
}

impl InvarianceTable {
    pub fn series(&self, observable: InvarianceObservable) -> Vec<InvarianceRow> {
        self.rows.iter().copied().filter(|r| r.observable == observable).collect()
    }

    /// Largest `|mean(t) − mean(0)| / combined stderr` over all rows.
    pub fn max_drift_z(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for obs in self.rows.iter().map(|r| r.observable) {
            let s = self.series(obs);
            let first = Estimate { mean: s[0].mean, stderr: s[0].stderr, count: 0 };
            for r in &s[1..] {
                let e = Estimate { mean: r.mean, stderr: r.stderr, count: 0 };
                worst = worst.max(e.z_distance(&first));
            }
        }
        worst
    }
}

/// Pushes every ensemble member through the flow with its own noise
/// (`stream.substream(i)`, drawn `refine` dyadic levels finer and coarsened)
/// and reports weighted means at `0, every·dt, …, t_final`.
#[allow(clippy::too_many_arguments)]
pub fn invariance_experiment<T: Scalar>(
    ensemble: &GibbsEnsemble<T>,
    flow: &Flow<T>,
    t_final: T,
    every: usize,
    observables: &[InvarianceObservable],
    refine: u32,
    stream: &RngStream,
) -> Result<InvarianceTable> {
    let cfg = flow.config();
    if ensemble.is_empty() {
        return Err(Error::InvalidParameter {
            name: "ensemble",
            reason: "ensemble is empty".into(),
        });
    }
    if ensemble.max_mode() != cfg.max_mode {
        return Err(Error::ConfigMismatch(format!(
            "ensemble has max_mode {} but the flow uses {}",
            ensemble.max_mode(),
            cfg.max_mode
        )));
    }
    if ensemble.coupling != cfg.coupling {
        return Err(Error::ConfigMismatch(format!(
            "ensemble coupling {:?} differs from flow coupling {:?}",
            ensemble.coupling, cfg.coupling
        )));
    }
    let steps = flow.steps_for(t_final)?;
    let every = every.max(1);
    let needs_cos = observables.contains(&InvarianceObservable::CosAverage);
    let cos_nl = if needs_cos { Some(Nonlinearity::new(cfg.max_mode, cfg.coupling)?) } else { None };
    let norm = PairNorm::new(cfg.max_mode, SobolevIndex::<T>::default());
    let evaluate = |p: &PairField<T>, buf: &mut crate::dynamics::FlowBuffers<T>, nb: &mut Option<crate::nonlinearity::NonlinearBuffers<T>>, out: &mut Vec<f64>| {
        for obs in observables {
            out.push(match obs {
                InvarianceObservable::CosAverage => {
                    let (nl, b) = (cos_nl.as_ref().unwrap(), nb.as_mut().unwrap());
                    nl.cos_average(&p.u, b).as_f64()
                }
                InvarianceObservable::PairNormSq => norm.norm_sq(p).as_f64(),
                InvarianceObservable::ZeroModeSq => p.u.coeff(0).norm_sqr().as_f64(),
                InvarianceObservable::FirstModeSq => p.u.coeff(1).norm_sqr().as_f64(),
                InvarianceObservable::Hamiltonian => flow.hamiltonian(p, buf).as_f64(),
            });
        }
    };
    // rows[i] = observables at every recorded time, flattened.
    let per_member: Vec<Vec<f64>> = ensemble
        .states
        .par_iter()
        .enumerate()
        .map(|(i, p0)| -> Result<Vec<f64>> {
            let noise = refined_noise(flow, steps, refine, &stream.substream(i as u64))?;
            let mut buf = flow.buffers();
            let mut hbuf = flow.buffers();
            let mut nb = cos_nl.as_ref().map(|n| n.buffers());
            let mut out = Vec::new();
            evaluate(p0, &mut hbuf, &mut nb, &mut out);
            let mut p = p0.clone();
            flow.advance(&mut p, &noise, 0, steps, &mut buf, |k, q| {
                if k % every == 0 {
                    evaluate(q, &mut hbuf, &mut nb, &mut out);
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let weights = ensemble.weights();
    let points = per_member[0].len() / observables.len().max(1);
    let dt = cfg.dt.as_f64();
    let mut rows = Vec::new();
    let mut column = vec![0.0; per_member.len()];
    for j in 0..points {
        for (o, obs) in observables.iter().enumerate() {
            for (c, m) in column.iter_mut().zip(&per_member) {
                *c = m[j * observables.len() + o];
            }
            let e = Estimate::weighted(&column, &weights);
            rows.push(InvarianceRow {
                observable: *obs,
                t: (j * every) as f64 * dt,
                mean: e.mean,
                stderr: e.stderr,
            });
        }
    }
    Ok(InvarianceTable {
        rows,
        effective_sample_size: effective_sample_size(ensemble),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCurve {
    pub times: Vec<f64>,
    /// `E d_δ(Φ_t(u₁, ξ), Φ_t(u₂, ξ))` with shared noise.
    pub sync_mean: Vec<f64>,
    pub sync_stderr: Vec<f64>,
    /// Assignment distance between clouds from `u₁` and `u₂` driven by
    /// independent noises (`NaN` where not computed).
    pub w_independent: Vec<f64>,
    /// Assignment distance between two independent clouds from `u₁`: the
    /// finite-sample floor of `w_independent`.
    pub w_floor: Vec<f64>,
    /// Assignment distance between the shared-noise clouds; never above the
    /// synchronous mean.
    pub w_shared: Vec<f64>,
    pub d0: f64,
    pub half_level: f64,
    /// First recorded time from which the synchronous curve stays at or
    /// below `½ d_δ(u₁, u₂)` through the end of the run.
    pub t_star: Option<f64>,
}

/// Synchronous-coupling curve and empirical Wasserstein distances under
/// `d_δ`. Pair `i` uses noises `substream(3i)` (shared), `substream(3i+1)`
/// (independent copy from `u₂`) and `substream(3i+2)` (second copy from
/// `u₁`). Assignment distances are computed on every `wasserstein_every`-th
/// recorded time (never if zero).
#[allow(clippy::too_many_arguments)]
pub fn contraction_experiment<T: Scalar>(
    flow: &Flow<T>,
    u1: &PairField<T>,
    u2: &PairField<T>,
    mp: &MetricParams,
    t_final: T,
    every: usize,
    pairs: usize,
    wasserstein_every: usize,
    stream: &RngStream,
) -> Result<ContractionCurve> {
    let cfg = flow.config();
    let metric = Metric::<T>::new(cfg.max_mode, *mp)?;
    let d0 = metric.d_delta(u1, u2);
    if d0 >= 1.0 {
        return Err(Error::InvalidParameter {
            name: "u2",
            reason: format!("initial data must satisfy d_delta < 1, got {d0}"),
        });
    }
    if pairs < 2 {
        return Err(Error::InvalidParameter {
            name: "pairs",
            reason: "need at least two pairs".into(),
        });
    }
    let steps = flow.steps_for(t_final)?;
    let every = every.max(1);
    let points = steps / every + 1;
    let keep = |j: usize| wasserstein_every > 0 && j % wasserstein_every == 0;
    struct PairRun<T: Scalar> {
        sync: Vec<f64>,
        clouds: Vec<[PairField<T>; 4]>,
    }
    let runs: Vec<PairRun<T>> = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<PairRun<T>> {
            let i = i as u64;
            let rec = |p0: &PairField<T>, s: u64| -> Result<Vec<PairField<T>>> {
                let noise = NoisePath::generate(&stream.substream(3 * i + s), cfg.dt, steps, cfg.max_mode)?;
                Ok(flow.record(p0, &noise, t_final, every)?.states)
            };
            let a1 = rec(u1, 0)?;
            let a2 = rec(u2, 0)?;
            let need_clouds = wasserstein_every > 0;
            let (b2, c1) = if need_clouds { (rec(u2, 1)?, rec(u1, 2)?) } else { (Vec::new(), Vec::new()) };
            let sync = a1.iter().zip(&a2).map(|(x, y)| metric.d_delta(x, y)).collect();
            let clouds = (0..points)
                .filter(|&j| keep(j))
                .map(|j| [a1[j].clone(), a2[j].clone(), b2[j].clone(), c1[j].clone()])
                .collect();
            Ok(PairRun { sync, clouds })
        })
        .collect::<Result<_>>()?;
    let dt = cfg.dt.as_f64();
    let mut curve = ContractionCurve {
        times: (0..points).map(|j| (j * every) as f64 * dt).collect(),
        sync_mean: Vec::with_capacity(points),
        sync_stderr: Vec::with_capacity(points),
        w_independent: vec![f64::NAN; points],
        w_floor: vec![f64::NAN; points],
        w_shared: vec![f64::NAN; points],
        d0,
        half_level: 0.5 * d0,
        t_star: None,
    };
    for j in 0..points {
        let col: Vec<f64> = runs.iter().map(|r| r.sync[j]).collect();
        let e = Estimate::from_samples(&col);
        curve.sync_mean.push(e.mean);
        curve.sync_stderr.push(e.stderr);
    }
    let mut slot = 0;
    for j in 0..points {
        if !keep(j) {
            continue;
        }
        let cloud = |which: usize| {
            EmpiricalCloud::new(runs.iter().map(|r| r.clouds[slot][which].clone()).collect(), *mp, MetricKind::DDelta)
        };
        let (a1, a2, b2, c1) = (cloud(0)?, cloud(1)?, cloud(2)?, cloud(3)?);
        curve.w_shared[j] = wasserstein_assignment(&a1, &a2)?;
        curve.w_independent[j] = wasserstein_assignment(&a1, &b2)?;
        curve.w_floor[j] = wasserstein_assignment(&a1, &c1)?;
        slot += 1;
    }
    let mut t_star = None;
    for j in (0..points).rev() {
        if curve.sync_mean[j] <= curve.half_level {
            t_star = Some(curve.times[j]);
        } else {
            break;
        }
    }
    curve.t_star = t_star;
    Ok(curve)
}

/// Difference `𝒫_tF(u₁) − 𝒫_tF(u₂)` with its Girsanov decomposition:
/// `F(Φ(u₁,ξ)) − F(Φ(u₂,ξ)) = −[F(Φ(u₂,ξ+h)) − F(Φ(u₁,ξ))] − [F(Φ(u₂,ξ)) − F(Φ(u₂,ξ+h))]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCurve {
    pub observable: String,
    pub times: Vec<f64>,
    pub diff_mean: Vec<f64>,
    pub diff_stderr: Vec<f64>,
    /// Lipschitz term `E[F(Φ(u₂,ξ+h)) − F(Φ(u₁,ξ))]`.
    pub term1_mean: Vec<f64>,
    pub term1_stderr: Vec<f64>,
    /// Its analytic bound `1 ∧ 2n e^{−t/2}‖u₂ − u₁‖`.
    pub term1_bound: Vec<f64>,
    /// Girsanov term `E[F(Φ(u₂,ξ)) − F(Φ(u₂,ξ+h))]`.
    pub term2_mean: Vec<f64>,
    pub term2_stderr: Vec<f64>,
    /// Its bound `½ E|ℰ(−h) − 1|`.
    pub term2_bound: Vec<f64>,
    pub term2_bound_stderr: Vec<f64>,
}

/// Common-random-number estimate of `|𝒫_tF(u₁) − 𝒫_tF(u₂)|` for each
/// observable, one noise path per trajectory (`stream.substream(i)`).
#[allow(clippy::too_many_arguments)]
pub fn smoothing_experiment<T: Scalar>(
    flow: &Flow<T>,
    u1: &PairField<T>,
    u2: &PairField<T>,
    observables: &[LipschitzObservable],
    t_final: T,
    every: usize,
    trajectories: usize,
    stream: &RngStream,
) -> Result<Vec<SmoothingCurve>> {
    if trajectories < 2 {
        return Err(Error::InvalidParameter {
            name: "trajectories",
            reason: "need at least two trajectories".into(),
        });
    }
    let cfg = flow.config();
    let steps = flow.steps_for(t_final)?;
    let every = every.max(1);
    let points = steps / every + 1;
    let nobs = observables.len();
    // Per trajectory and recorded time: for each observable (diff, term1,
    // term2), then |ℰ(−h) − 1| once.
    let width = 3 * nobs + 1;
    let rows: Vec<Vec<f64>> = (0..trajectories)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let noise = NoisePath::generate(&stream.substream(i as u64), cfg.dt, steps, cfg.max_mode)?;
            let plain = flow.record(u2, &noise, t_final, every)?.states;
            let mut out = Vec::with_capacity(points * width);
            let push = |out: &mut Vec<f64>, p1: &PairField<T>, p2s: &PairField<T>, p2: &PairField<T>, log_e: f64, hsq: f64| {
                for f in observables {
                    let (f1, f2s, f2) = (f.eval(p1), f.eval(p2s), f.eval(p2));
                    out.extend_from_slice(&[f1 - f2, f2s - f1, f2 - f2s]);
                }
                out.push(((-log_e - hsq).exp() - 1.0).abs());
            };
            push(&mut out, u1, u2, u2, 0.0, 0.0);
            let mut j = 0;
            shifted_flow_observe(flow, u1, u2, &noise, steps, |k, p1, p2s, rec| {
                if k % every == 0 {
                    j += 1;
                    push(&mut out, p1, p2s, &plain[j], rec.log_e, rec.h_l2_sq);
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let dt = cfg.dt.as_f64();
    let times: Vec<f64> = (0..points).map(|j| (j * every) as f64 * dt).collect();
    let gap = PairNorm::new(cfg.max_mode, SobolevIndex::<T>::default()).dist(u1, u2).as_f64();
    let column = |j: usize, c: usize| -> Estimate {
        let xs: Vec<f64> = rows.iter().map(|r| r[j * width + c]).collect();
        Estimate::from_samples(&xs)
    };
    Ok(observables
        .iter()
        .enumerate()
        .map(|(o, f)| {
            let mut c = SmoothingCurve {
                observable: f.label(),
                times: times.clone(),
                diff_mean: vec![],
                diff_stderr: vec![],
                term1_mean: vec![],
                term1_stderr: vec![],
                term1_bound: vec![],
                term2_mean: vec![],
                term2_stderr: vec![],
                term2_bound: vec![],
                term2_bound_stderr: vec![],
            };
            for (j, &t) in times.iter().enumerate() {
                let (d, a, b, e) = (column(j, 3 * o), column(j, 3 * o + 1), column(j, 3 * o + 2), column(j, 3 * nobs));
                c.diff_mean.push(d.mean);
                c.diff_stderr.push(d.stderr);
                c.term1_mean.push(a.mean);
                c.term1_stderr.push(a.stderr);
                c.term1_bound.push((2.0 * f.n as f64 * (-0.5 * t).exp() * gap).min(1.0));
                c.term2_mean.push(b.mean);
                c.term2_stderr.push(b.stderr);
                c.term2_bound.push(0.5 * e.mean);
                c.term2_bound_stderr.push(0.5 * e.stderr);
            }
            c
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpInequalityRow {
    pub sigma: f64,
    pub p: f64,
    pub l: f64,
    /// Monte Carlo `E|e^X − 1|`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Closed form `2(Φ(σ/2) − Φ(−σ/2))`.
    pub lhs_exact: f64,
    /// `2(1 − e^{−L} + e^{−L} L^{−p} E|X|^p)`.
    pub rhs: f64,
    /// `lhs − 3·stderr − rhs`; positive means a violation.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpInequalityReport {
    pub rows: Vec<ExpInequalityRow>,
    pub max_violation: f64,
    pub violations: usize,
}

/// `E|X|^p` for `X ~ N(−σ²/2, σ²)` by composite Gauss–Legendre quadrature,
/// split at the kink of `|x|^p`.
pub fn gaussian_abs_moment(sigma: f64, p: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let mu = -0.5 * sigma * sigma;
    let dist = Normal::new(mu, sigma).expect("valid normal");
    let (nodes, weights) = gauss_legendre::<f64>(16);
    let integrate = |a: f64, b: f64| -> f64 {
        let panels = 64;
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for k in 0..panels {
            let mid = a + (k as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let s = mid + 0.5 * h * x;
                acc += 0.5 * h * w * s.abs().powf(p) * dist.pdf(s);
            }
        }
        acc
    };
    let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
    if lo < 0.0 && hi > 0.0 {
        integrate(lo, 0.0) + integrate(0.0, hi)
    } else {
        integrate(lo, hi)
    }
}

/// Checks `E|e^X − 1| ≤ 2(1 − e^{−L} + e^{−L} L^{−p} E|X|^p)` for
/// `X = σZ − σ²/2` over the sweep, with `samples` standard normals shared
/// across the sweep.
pub fn exp_inequality_check(sigmas: &[f64], ps: &[f64], ls: &[f64], samples: usize, stream: &RngStream) -> Result<ExpInequalityReport> {
    if samples < 2 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "need at least two samples".into(),
        });
    }
    if let Some(p) = ps.iter().find(|&&p| !(p >= 1.0)) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("exponent must be at least 1, got {p}"),
        });
    }
    let mut rng = stream.rng();
    let z: Vec<f64> = (0..samples).map(|_| normal(&mut rng)).collect();
    let std = Normal::standard();
    let mut rows = Vec::new();
    for &sigma in sigmas {
        let vals: Vec<f64> = z.iter().map(|z| ((sigma * z - 0.5 * sigma * sigma).exp() - 1.0).abs()).collect();
        let lhs = Estimate::from_samples(&vals);
        let lhs_exact = 2.0 * (std.cdf(0.5 * sigma) - std.cdf(-0.5 * sigma));
        for &p in ps {
            let moment = gaussian_abs_moment(sigma, p);
            for &l in ls {
                let rhs = 2.0 * (1.0 - (-l).exp() + (-l).exp() * l.powf(-p) * moment);
                rows.push(ExpInequalityRow {
                    sigma,
                    p,
                    l,
                    lhs: lhs.mean,
                    lhs_stderr: lhs.stderr,
                    lhs_exact,
                    rhs,
                    violation: lhs.mean - 3.0 * lhs.stderr - rhs,
                });
            }
        }
    }
    let max_violation = rows.iter().map(|r| r.violation).fold(f64::NEG_INFINITY, f64::max);
    let violations = rows.iter().filter(|r| r.violation > 0.0).count();
    Ok(ExpInequalityReport {
        rows,
        max_violation,
        violations,
    })
}
