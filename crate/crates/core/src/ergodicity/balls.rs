//! Probabilities of landing in a small ball around the origin, for the
//! small-set and irreducibility arguments.
//!
//! Plain Monte Carlo cannot resolve these probabilities once the ball is
//! small compared with the stationary spread (at `N = 8`, `ε = 1` the mass
//! is of order `1e-9`). The importance sampler draws the linear endpoint
//! `L_t` from an exponentially tilted Gaussian concentrated on the ball,
//! fills in the noise path with the exact Gaussian bridge to that endpoint,
//! and carries the nonlinearity through the density of the nonlinear law
//! with respect to the linear one:
//!
//! ```text
//! P{‖Φ_t‖ ≤ ε} = E[ℰ(−g(L)) 1{‖L_t‖ ≤ ε}] = E_q[(p/q)(L_t) 1{‖L_t‖ ≤ ε} ℰ(−g(L))].
//! ```

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_lr;

use crate::dynamics::{homogeneous_matrix_damped, stationary_covariance, Flow, Mat2, ModeNoise, NoisePath};
use crate::error::{Error, Result};
use crate::rng::{normal, RngStream};
use crate::sampling::sample_free_pair;
use crate::scalar::Scalar;
use crate::spectral::{bracket_sq, PairField, PairNorm, SobolevIndex};
use crate::stats::{binomial_lower_bound, Estimate};
use crate::tangent::linear_path_log_density;

/// Estimator used for a ball probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallMethod {
    /// Run the nonlinear flow and count hits.
    Plain,
    /// Tilted endpoint, Gaussian bridge and path reweighting.
    Importance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallEstimate {
    pub estimate: Estimate,
    /// One-sided lower confidence bound (Clopper–Pearson for plain sampling,
    /// normal approximation for importance sampling).
    pub lower_bound: f64,
    /// Samples whose endpoint fell in the ball.
    pub hits: usize,
    pub method: BallMethod,
}

/// Deterministic and random initial data in the closed ball of radius `R`:
/// `±R` times unit vectors along `Re û(0)`, `Re û(1)`, `Re v̂(0)`, `Re v̂(1)`,
/// then `random` free-field directions at radius `R·U`, `U` uniform.
pub fn ball_grid<T: Scalar>(max_mode: usize, radius: f64, random: usize, alpha: SobolevIndex<T>, stream: &RngStream) -> Vec<PairField<T>> {
    let norm = PairNorm::new(max_mode, alpha);
    let mut out = Vec::with_capacity(8 + random);
    for (velocity, mode) in [(false, 0usize), (false, 1), (true, 0), (true, 1)] {
        let mut p = PairField::zeros(max_mode);
        let slot = if velocity { &mut p.v } else { &mut p.u };
        slot.coeffs_mut()[mode] = Complex::new(T::one(), T::zero());
        let unit = p.scaled(T::one() / norm.norm(&p));
        for sign in [1.0, -1.0] {
            out.push(unit.scaled(T::lit(sign * radius)));
        }
    }
    for i in 0..random as u64 {
        let s = stream.substream(i);
        let dir: PairField<T> = sample_free_pair(max_mode, &s);
        let len = norm.norm(&dir);
        let r: f64 = s.substream(u64::MAX).rng().random();
        let scale = if len > T::zero() { T::lit(radius * r) / len } else { T::zero() };
        out.push(dir.scaled(scale));
    }
    out
}

/// `P{‖Φ_t(u0)‖ ≤ ε}` by running the flow.
pub fn ball_probability_plain<T: Scalar>(
    flow: &Flow<T>,
    u0: &PairField<T>,
    eps: f64,
    t: T,
    samples: usize,
    confidence: f64,
    stream: &RngStream,
) -> Result<BallEstimate> {
    check_samples(samples)?;
    let cfg = flow.config();
    let steps = flow.steps_for(t)?;
    let norm = PairNorm::new(cfg.max_mode, SobolevIndex::<T>::default());
    let hits: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let noise = NoisePath::generate(&stream.substream(i as u64), cfg.dt, steps, cfg.max_mode)?;
            let p = flow.run(u0, &noise, t)?;
            Ok(if norm.norm_sq(&p).as_f64() <= eps * eps { 1.0 } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    let count = hits.iter().filter(|&&h| h > 0.0).count();
    Ok(BallEstimate {
        estimate: Estimate::from_samples(&hits),
        lower_bound: binomial_lower_bound(count, samples, confidence),
        hits: count,
        method: BallMethod::Plain,
    })
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "need at least two samples".into(),
        });
    }
    Ok(())
}

/// Real coordinate blocks of the endpoint: mode `n`, part 0 (real) or 1
/// (imaginary).
fn blocks(max_mode: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=max_mode).flat_map(|n| (0..if n == 0 { 1 } else { 2 }).map(move |part| (n, part)))
}

/// Variance of each unit normal behind a block: 1 for the zero mode, ½ for
/// the real and imaginary parts of the others.
fn part_variance(n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        0.5
    }
}

/// The norm's quadratic form on one block, conjugate mode included.
fn norm_block(n: usize, alpha: f64) -> Mat2<f64> {
    let k2: f64 = bracket_sq(n);
    let mult = if n == 0 { 1.0 } else { 2.0 };
    Mat2::diag(mult * k2.powf(alpha), mult * k2.powf(alpha - 1.0))
}

fn inverse(m: &Mat2<f64>) -> Mat2<f64> {
    let det = m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0);
    Mat2([[m.get(1, 1) / det, -m.get(0, 1) / det], [-m.get(1, 0) / det, m.get(0, 0) / det]])
}

fn apply(m: &Mat2<f64>, x: [f64; 2]) -> [f64; 2] {
    [m.get(0, 0) * x[0] + m.get(0, 1) * x[1], m.get(1, 0) * x[0] + m.get(1, 1) * x[1]]
}

fn quad(m: &Mat2<f64>, x: [f64; 2]) -> f64 {
    let y = apply(m, x);
    x[0] * y[0] + x[1] * y[1]
}

fn log_det(m: &Mat2<f64>) -> f64 {
    (m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0)).ln()
}

/// Discretized linear dynamics over `[0, t]`, per mode: the step matrices
/// `A_k = E^{K−1−k} B` mapping the three unit normals of step `k` to the
/// endpoint, their Gram matrix `G = Σ A_k A_kᵀ`, and `E^K`.
#[derive(Debug, Clone)]
struct BridgePlan {
    steps: usize,
    modes: usize,
    tau: f64,
    /// `a[k * modes + n]`, a 2×3 matrix.
    a: Vec<[[f64; 3]; 2]>,
    gram_inv: Vec<Mat2<f64>>,
    /// Endpoint covariance per unit-normal scale, `G`.
    gram: Vec<Mat2<f64>>,
    propagator: Vec<Mat2<f64>>,
}

impl BridgePlan {
    fn new<T: Scalar>(flow: &Flow<T>, steps: usize) -> Self {
        let lin = flow.linear();
        let modes = lin.steps.len();
        let tau = lin.tau.as_f64();
        let cast = |m: &Mat2<T>| Mat2([[m.0[0][0].as_f64(), m.0[0][1].as_f64()], [m.0[1][0].as_f64(), m.0[1][1].as_f64()]]);
        let mut a = vec![[[0.0; 3]; 2]; steps * modes];
        let mut gram = vec![Mat2::zero(); modes];
        let mut propagator = vec![Mat2::identity(); modes];
        for (n, st) in lin.steps.iter().enumerate() {
            let e = cast(&st.mean);
            let l = cast(&st.cond_chol);
            let b = [
                [st.gain[0].as_f64() * tau.sqrt(), l.get(0, 0), l.get(0, 1)],
                [st.gain[1].as_f64() * tau.sqrt(), l.get(1, 0), l.get(1, 1)],
            ];
            // Walk backwards: power holds E^{K−1−k}.
            let mut power = Mat2::<f64>::identity();
            for k in (0..steps).rev() {
                let mut ak = [[0.0; 3]; 2];
                for (i, row) in ak.iter_mut().enumerate() {
                    for (j, x) in row.iter_mut().enumerate() {
                        *x = power.get(i, 0) * b[0][j] + power.get(i, 1) * b[1][j];
                    }
                }
                for i in 0..2 {
                    for j in 0..2 {
                        gram[n].0[i][j] += (0..3).map(|c| ak[i][c] * ak[j][c]).sum::<f64>();
                    }
                }
                a[k * modes + n] = ak;
                power = power.mul(&e);
            }
            propagator[n] = power;
        }
        let gram_inv = gram.iter().map(inverse).collect();
        Self {
            steps,
            modes,
            tau,
            a,
            gram_inv,
            gram,
            propagator,
        }
    }
}

/// Exponentially tilted endpoint law on one block:
/// `q ∝ p · exp(−θ xᵀWx)` for `p = N(m, C)`.
#[derive(Debug, Clone)]
struct TiltedBlock {
    mean: [f64; 2],
    cov_inv: Mat2<f64>,
    log_det_cov: f64,
    q_mean: [f64; 2],
    q_prec: Mat2<f64>,
    q_chol: Mat2<f64>,
    log_det_q: f64,
    form: Mat2<f64>,
}

fn tilted_blocks(laws: &[([f64; 2], Mat2<f64>, Mat2<f64>)], theta: f64) -> Vec<TiltedBlock> {
    laws.iter()
        .map(|(m, c, w)| {
            let cov_inv = inverse(c);
            let q_prec = cov_inv.add(&w.scale(2.0 * theta));
            let q_cov = inverse(&q_prec);
            let q_mean = apply(&q_cov, apply(&cov_inv, *m));
            TiltedBlock {
                mean: *m,
                cov_inv,
                log_det_cov: log_det(c),
                q_mean,
                q_chol: q_cov.cholesky().expect("tilted covariance is positive definite"),
                log_det_q: log_det(&q_cov),
                q_prec,
                form: *w,
            }
        })
        .collect()
}

/// `E_q‖x‖²` under the tilt `θ`.
fn tilted_mean_norm(laws: &[([f64; 2], Mat2<f64>, Mat2<f64>)], theta: f64) -> f64 {
    tilted_blocks(laws, theta)
        .iter()
        .map(|b| {
            let cov = inverse(&b.q_prec);
            let w = &b.form;
            w.get(0, 0) * cov.get(0, 0) + w.get(1, 1) * cov.get(1, 1) + 2.0 * w.get(0, 1) * cov.get(0, 1) + quad(w, b.q_mean)
        })
        .sum()
}

/// Tilt putting the proposal's mean squared norm on the ball boundary.
fn saddle_tilt(laws: &[([f64; 2], Mat2<f64>, Mat2<f64>)], eps: f64) -> f64 {
    let target = eps * eps;
    if tilted_mean_norm(laws, 0.0) <= target {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while tilted_mean_norm(laws, hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tilted_mean_norm(laws, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `P{‖Φ_t(u0)‖ ≤ ε}` by importance sampling. At `γ = 0` only the endpoint
/// is sampled; otherwise every sample carries a bridged noise path and the
/// path density of the nonlinear law.
pub fn ball_probability_importance<T: Scalar>(
    flow: &Flow<T>,
    u0: &PairField<T>,
    eps: f64,
    t: T,
    samples: usize,
    confidence: f64,
    stream: &RngStream,
) -> Result<BallEstimate> {
    check_samples(samples)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("radius must be positive, got {eps}"),
        });
    }
    let cfg = flow.config();
    let steps = flow.steps_for(t)?;
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: "need at least one step".into(),
        });
    }
    let plan = BridgePlan::new(flow, steps);
    let alpha = SobolevIndex::<f64>::default().0;
    let laws: Vec<([f64; 2], Mat2<f64>, Mat2<f64>)> = blocks(cfg.max_mode)
        .map(|(n, part)| {
            let pick = |z: Complex<T>| if part == 0 { z.re.as_f64() } else { z.im.as_f64() };
            let m = apply(&plan.propagator[n], [pick(u0.u.coeff(n)), pick(u0.v.coeff(n))]);
            (m, plan.gram[n].scale(part_variance(n)), norm_block(n, alpha))
        })
        .collect();
    let theta = saddle_tilt(&laws, eps);
    let tilted = tilted_blocks(&laws, theta);
    let nonlinear = flow.nonlinearity().is_some();
    let values: Vec<(f64, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(f64, bool)> {
            let mut rng = stream.substream(i as u64).rng();
            let mut endpoint = Vec::with_capacity(tilted.len());
            let mut log_ratio = 0.0;
            let mut norm_sq = 0.0;
            for b in &tilted {
                let z = [normal::<f64, _>(&mut rng), normal::<f64, _>(&mut rng)];
                let lz = apply(&b.q_chol, z);
                let x = [b.q_mean[0] + lz[0], b.q_mean[1] + lz[1]];
                let dp = [x[0] - b.mean[0], x[1] - b.mean[1]];
                let dq = [x[0] - b.q_mean[0], x[1] - b.q_mean[1]];
                log_ratio += -0.5 * quad(&b.cov_inv, dp) - 0.5 * b.log_det_cov + 0.5 * quad(&b.q_prec, dq) + 0.5 * b.log_det_q;
                norm_sq += quad(&b.form, x);
                endpoint.push(x);
            }
            if norm_sq > eps * eps {
                return Ok((0.0, false));
            }
            if !nonlinear {
                return Ok((log_ratio.exp(), true));
            }
            let noise = bridge_path::<T, _>(&plan, &laws, &endpoint, cfg.dt, &mut rng)?;
            let (_, log_density) = linear_path_log_density(flow, u0, &noise, t)?;
            Ok(((log_ratio + log_density).exp(), true))
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = values.iter().map(|v| v.0).collect();
    let hits = values.iter().filter(|v| v.1).count();
    let estimate = Estimate::from_samples(&xs);
    let z = Normal::standard().inverse_cdf(confidence);
    Ok(BallEstimate {
        estimate,
        lower_bound: (estimate.mean - z * estimate.stderr).max(0.0),
        hits,
        method: BallMethod::Importance,
    })
}

/// Unit normals for every step conditioned on the endpoint: draw freely,
/// then add `A_kᵀ G⁻¹ (target − Σ A_j z_j)`.
fn bridge_path<T: Scalar, R: Rng + ?Sized>(
    plan: &BridgePlan,
    laws: &[([f64; 2], Mat2<f64>, Mat2<f64>)],
    endpoint: &[[f64; 2]],
    dt: T,
    rng: &mut R,
) -> Result<NoisePath<T>> {
    let (k_steps, modes) = (plan.steps, plan.modes);
    // z[(k * modes + n) * 2 + part][0..3]
    let mut z = vec![[0.0f64; 3]; k_steps * modes * 2];
    for k in 0..k_steps {
        for n in 0..modes {
            let parts = if n == 0 { 1 } else { 2 };
            for part in 0..parts {
                let slot = &mut z[(k * modes + n) * 2 + part];
                for x in slot.iter_mut() {
                    *x = normal(rng);
                }
            }
        }
    }
    for (b, (n, part)) in blocks(modes - 1).enumerate() {
        let scale = part_variance(n).sqrt();
        let target = [(endpoint[b][0] - laws[b].0[0]) / scale, (endpoint[b][1] - laws[b].0[1]) / scale];
        let mut y = [0.0; 2];
        for k in 0..k_steps {
            let a = &plan.a[k * modes + n];
            let zk = &z[(k * modes + n) * 2 + part];
            for i in 0..2 {
                y[i] += a[i][0] * zk[0] + a[i][1] * zk[1] + a[i][2] * zk[2];
            }
        }
        let c = apply(&plan.gram_inv[n], [target[0] - y[0], target[1] - y[1]]);
        for k in 0..k_steps {
            let a = &plan.a[k * modes + n];
            let zk = &mut z[(k * modes + n) * 2 + part];
            for j in 0..3 {
                zk[j] += a[0][j] * c[0] + a[1][j] * c[1];
            }
        }
    }
    let sd = plan.tau.sqrt();
    let mut data = Vec::with_capacity(k_steps * modes);
    for k in 0..k_steps {
        for n in 0..modes {
            let s = part_variance(n).sqrt();
            let re = z[(k * modes + n) * 2];
            let im = if n == 0 { [0.0; 3] } else { z[(k * modes + n) * 2 + 1] };
            let c = |j: usize| Complex::new(T::lit(s * re[j]), T::lit(s * im[j]));
            data.push(ModeNoise {
                db: c(0) * T::lit(sd),
                aux: [c(1), c(2)],
            });
        }
    }
    NoisePath::from_steps(dt, modes - 1, data)
}

/// Worst case over a grid of initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallReport {
    pub radius: f64,
    pub eps: f64,
    pub t: f64,
    pub per_point: Vec<BallEstimate>,
    /// Smallest point estimate over the grid.
    pub p_min: f64,
    /// Smallest lower confidence bound over the grid.
    pub p_min_lower: f64,
    /// `1 − ½ p_min²`, the bound on `W_{d_δ}` between transition laws.
    pub bound: f64,
    /// The same bound evaluated at the lower confidence limit.
    pub bound_conservative: f64,
    /// `½ p_min_lower²`, the distance of the conservative bound below `1`.
    /// Kept separately because it underflows `1 − ·` in double precision
    /// once `p_min` drops below about `1e-8`.
    pub bound_gap: f64,
}

/// Ball probabilities from every point of [`ball_grid`]; the `j`-th grid
/// point uses `stream.substream(j)` for its samples.
#[allow(clippy::too_many_arguments)]
pub fn ball_report<T: Scalar>(
    flow: &Flow<T>,
    grid: &[PairField<T>],
    radius: f64,
    eps: f64,
    t: T,
    samples: usize,
    confidence: f64,
    method: BallMethod,
    stream: &RngStream,
) -> Result<BallReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "need at least one initial state".into(),
        });
    }
    let per_point = grid
        .iter()
        .enumerate()
        .map(|(j, u0)| {
            let s = stream.substream(j as u64);
            match method {
                BallMethod::Plain => ball_probability_plain(flow, u0, eps, t, samples, confidence, &s),
                BallMethod::Importance => ball_probability_importance(flow, u0, eps, t, samples, confidence, &s),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let p_min = per_point.iter().map(|e| e.estimate.mean).fold(f64::INFINITY, f64::min);
    let p_min_lower = per_point.iter().map(|e| e.lower_bound).fold(f64::INFINITY, f64::min);
    Ok(BallReport {
        radius,
        eps,
        t: t.as_f64(),
        per_point,
        p_min,
        p_min_lower,
        bound: 1.0 - 0.5 * p_min * p_min,
        bound_conservative: 1.0 - 0.5 * p_min_lower * p_min_lower,
        bound_gap: 0.5 * p_min_lower * p_min_lower,
    })
}

/// Small-set bound `1 − ½ p_min²` with `p(u0) = P{‖Φ_t(u0)‖ ≤ ε}` over the
/// standard grid in `B_R` (8 extreme and 8 random points).
#[allow(clippy::too_many_arguments)]
pub fn small_set_experiment<T: Scalar>(
    flow: &Flow<T>,
    radius: f64,
    eps: f64,
    t: T,
    samples: usize,
    confidence: f64,
    method: BallMethod,
    stream: &RngStream,
) -> Result<BallReport> {
    let grid = ball_grid(flow.config().max_mode, radius, 8, SobolevIndex::default(), &stream.substream(u64::MAX));
    ball_report(flow, &grid, radius, eps, t, samples, confidence, method, stream)
}

/// Lower confidence bound on `inf_{u0 ∈ grid} P{‖Φ_t(u0)‖ ≤ r}`.
#[allow(clippy::too_many_arguments)]
pub fn irreducibility_estimate<T: Scalar>(
    flow: &Flow<T>,
    radius: f64,
    r: f64,
    t: T,
    samples: usize,
    confidence: f64,
    method: BallMethod,
    stream: &RngStream,
) -> Result<BallReport> {
    small_set_experiment(flow, radius, r, t, samples, confidence, method, stream)
}

/// Two-sided enclosure of `P{‖L_t(u0)‖ ≤ ε}` for the linear flow, from the
/// closed-form Gaussian law of the endpoint.
///
/// Each block contributes `Σ λ_j (Z_j + δ_j)²`; real and imaginary blocks of
/// a mode share their eigenvalues and combine into scaled noncentral `χ²₂`
/// variables. Their laws are binned on a lattice of `bins` cells over
/// `[0, ε²]` and convolved; rounding every term up (down) to a lattice point
/// gives a lower (upper) bound.
pub fn linear_ball_mass_bounds<T: Scalar>(u0: &PairField<T>, eps: f64, t: f64, damping: f64, bins: usize) -> Result<(f64, f64)> {
    if !(eps > 0.0 && t > 0.0 && bins >= 16) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: "need eps > 0, t > 0 and at least 16 bins".into(),
        });
    }
    let alpha = SobolevIndex::<f64>::default().0;
    let y_max = eps * eps;
    let h = y_max / bins as f64;
    let mut terms: Vec<(f64, f64, f64)> = Vec::new(); // (scale, dof, noncentrality)
    for n in 0..=u0.max_mode() {
        let sigma = stationary_covariance::<f64>(n);
        let e = homogeneous_matrix_damped::<f64>(n, t, damping);
        let cov = sigma.sub(&e.congruence(&sigma)).scale(part_variance(n));
        let w = norm_block(n, alpha);
        let ws = Mat2::diag(w.get(0, 0).sqrt(), w.get(1, 1).sqrt());
        let m = ws.mul(&cov).mul(&ws);
        let (lams, vecs) = symmetric_eigen(&m);
        let parts = if n == 0 { 1 } else { 2 };
        let mut nc = [0.0; 2];
        for part in 0..parts {
            let pick = |z: Complex<T>| if part == 0 { z.re.as_f64() } else { z.im.as_f64() };
            let mean = apply(&e, [pick(u0.u.coeff(n)), pick(u0.v.coeff(n))]);
            let wm = apply(&ws, mean);
            for j in 0..2 {
                let proj = vecs[j][0] * wm[0] + vecs[j][1] * wm[1];
                nc[j] += proj * proj / lams[j];
            }
        }
        for j in 0..2 {
            terms.push((lams[j], parts as f64, nc[j]));
        }
    }
    let mut lower = vec![0.0; bins + 1];
    let mut upper = vec![0.0; bins + 1];
    lower[0] = 1.0;
    upper[0] = 1.0;
    let mut planner = FftPlanner::<f64>::new();
    for &(scale, dof, nc) in &terms {
        let cdf: Vec<f64> = (0..=bins).map(|i| noncentral_chi2_cdf(i as f64 * h / scale, dof, nc)).collect();
        let masses: Vec<f64> = cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        let mut up = vec![0.0; bins + 1];
        let mut down = vec![0.0; bins + 1];
        for (i, &m) in masses.iter().enumerate() {
            down[i] = m;
            up[i + 1] = m;
        }
        lower = truncated_convolution(&lower, &up, &mut planner);
        upper = truncated_convolution(&upper, &down, &mut planner);
    }
    let lo: f64 = lower.iter().sum();
    let hi: f64 = upper.iter().sum();
    Ok((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

/// Eigenvalues and unit eigenvectors (rows) of a symmetric 2×2 matrix.
fn symmetric_eigen(m: &Mat2<f64>) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let l1 = half_tr + disc;
    let l2 = (a * d - b * b) / l1;
    if b.abs() < 1e-300 {
        return ([a, d], [[1.0, 0.0], [0.0, 1.0]]);
    }
    let v1 = {
        let (x, y) = (b, l1 - a);
        let r = x.hypot(y);
        [x / r, y / r]
    };
    ([l1, l2], [v1, [-v1[1], v1[0]]])
}

/// `P(χ²_k(nc) ≤ y)` as a Poisson mixture of central laws.
fn noncentral_chi2_cdf(y: f64, dof: f64, nc: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * nc;
    if half < 1e-300 {
        return gamma_lr(0.5 * dof, 0.5 * y);
    }
    let mut total = 0.0;
    let mut log_w = -half;
    let peak = half.ceil() as usize;
    for j in 0..10_000usize {
        if j > 0 {
            log_w += half.ln() - (j as f64).ln();
        }
        let w = log_w.exp();
        total += w * gamma_lr(0.5 * dof + j as f64, 0.5 * y);
        if j > peak && w < 1e-20 {
            break;
        }
    }
    total
}

fn truncated_convolution(a: &[f64], b: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let keep = a.len();
    let size = (a.len() + b.len()).next_power_of_two();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let lift = |x: &[f64]| {
        let mut v: Vec<Complex<f64>> = x.iter().map(|&r| Complex::new(r, 0.0)).collect();
        v.resize(size, Complex::new(0.0, 0.0));
        v
    };
    let (mut fa, mut fb) = (lift(a), lift(b));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa[..keep].iter().map(|c| (c.re / size as f64).max(0.0)).collect()
}
