//! One function per experiment: each returns its table, fitted results and
//! pass/fail checks. Nothing here touches the filesystem.

use itertools::Itertools;
use num_complex::Complex;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sgergo::dynamics::{homogeneous_matrix, LinearStep, NoisePath};
use sgergo::ergodicity::{
    ball_grid, contraction_experiment, exp_moment_experiment, fit_decay, linear_ball_mass_bounds, linear_gaussian_moment,
    small_set_experiment, smoothing_experiment, solve_assignment, stationary_exp_moment, BallMethod, BallReport,
    InvarianceObservable, LipschitzObservable, QuadraticForm,
};
use sgergo::io::Table;
use sgergo::sampling::{build_gibbs_ensemble, sample_free_pair};
use sgergo::spectral::{FourierField, PairField, PairNorm, SobolevIndex};
use sgergo::stats::Estimate;
use sgergo::tangent::{free_evolution, shifted_flow_observe};
use sgergo::{Flow64, PairField64, RngStream};

use crate::config::{Experiment, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
        }
    }

    fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value > threshold,
            value,
            threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Table,
    pub results: Value,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Errors that end a run before any checks are made.
pub type RunError = sgergo::Error;

/// Root stream of a run; experiments draw disjoint substreams from it.
pub fn root_stream(cfg: &RunConfig) -> RngStream {
    let id = Experiment::ALL.iter().position(|&e| e == cfg.experiment).unwrap_or(0) as u64;
    RngStream::new(cfg.seed, id)
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    match cfg.experiment {
        Experiment::Invariance => invariance(cfg),
        Experiment::Lyapunov => lyapunov(cfg),
        Experiment::Contraction => contraction(cfg),
        Experiment::Smallset | Experiment::Irreducibility => balls(cfg),
        Experiment::Smoothing => smoothing(cfg),
        Experiment::Girsanov => girsanov(cfg),
        Experiment::Selftest => Ok(selftest()),
    }
}

fn schedule(cfg: &RunConfig) -> Result<(usize, usize), RunError> {
    cfg.schedule().ok_or_else(|| RunError::PartialStep {
        t: cfg.run.t_final,
        dt: cfg.physics.dt,
    })
}

/// Unit vector along `Re û(1)` in the phase-space norm.
fn unit_direction(max_mode: usize) -> PairField64 {
    let u = FourierField::single_mode(max_mode, 1.min(max_mode), Complex::new(1.0, 0.0));
    let e = PairField::new(u, FourierField::zeros(max_mode)).expect("matching modes");
    let norm = PairNorm::new(max_mode, SobolevIndex::default()).norm(&e);
    e.scaled(1.0 / norm)
}

fn push(t: &mut Table, row: Vec<f64>) {
    t.push(row).expect("row width matches header");
}

fn invariance(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let flow = Flow64::new(cfg.flow_config())?;
    let (_, every) = schedule(cfg)?;
    let root = root_stream(cfg);
    let n = cfg.physics.max_mode;
    let ens = build_gibbs_ensemble(n, &flow.config().coupling, cfg.run.ensemble_size, &root.substream(0))?;
    let obs = InvarianceObservable::STANDARD;
    let res = sgergo::ergodicity::invariance_experiment(&ens, &flow, cfg.run.t_final, every, &obs, 0, &root.substream(1))?;
    let mut headers = vec!["t".to_owned()];
    for o in obs {
        headers.push(format!("{}_mean", o.label()));
        headers.push(format!("{}_stderr", o.label()));
    }
    let mut table = Table::new(headers);
    for chunk in res.rows.chunks(obs.len()) {
        let mut row = vec![chunk[0].t];
        for r in chunk {
            row.extend([r.mean, r.stderr]);
        }
        push(&mut table, row);
    }
    let drift = res.max_drift_z();
    let mut checks = vec![Check::at_most("max_drift_z", drift, 5.0)];
    let mut oracle_z = Value::Null;
    if cfg.physics.gamma == 0.0 {
        // Gaussian reference: E|û(0)|² = 1 and E|û(1)|² = ⟨1⟩^{-2} = ½.
        let z = res
            .rows
            .iter()
            .filter_map(|r| match r.observable {
                InvarianceObservable::ZeroModeSq => Some((r.mean - 1.0).abs() / r.stderr),
                InvarianceObservable::FirstModeSq => Some((r.mean - 0.5).abs() / r.stderr),
                _ => None,
            })
            .fold(0.0, f64::max);
        checks.push(Check::at_most("max_gaussian_oracle_z", z, 5.0));
        oracle_z = json!(z);
    }
    Ok(Outcome {
        table,
        results: json!({
            "effective_sample_size": res.effective_sample_size,
            "max_drift_z": drift,
            "max_gaussian_oracle_z": oracle_z,
            "observables": obs.iter().map(|o| o.label()).collect::<Vec<_>>(),
        }),
        checks,
    })
}

fn lyapunov(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let flow = Flow64::new(cfg.flow_config())?;
    let (_, every) = schedule(cfg)?;
    let n = cfg.physics.max_mode;
    let lp = cfg.lyapunov_params();
    let u0 = unit_direction(n).scaled(cfg.params.initial_norm_sq.sqrt());
    let curve = exp_moment_experiment(&flow, &[u0.clone()], &lp, cfg.run.t_final, every, cfg.run.ensemble_size, &root_stream(cfg))?;
    let alpha = SobolevIndex(lp.alpha_minus.0);
    let mut table = Table::new(["t", "mean", "stderr", "linear_oracle"]);
    for j in 0..curve.times.len() {
        let t = curve.times[j];
        let oracle = if t > 0.0 {
            linear_gaussian_moment(QuadraticForm::Norm, lp.lambda, alpha, n, 1.0, Some((&u0, t)))?
        } else {
            curve.initial
        };
        push(&mut table, vec![t, curve.mean[j], curve.stderr[j], oracle]);
    }
    let k_oracle = stationary_exp_moment(n, lp.lambda, alpha)?;
    let fit = fit_decay(&curve, 0.25, 0.95);
    let mut checks = Vec::new();
    let results = match fit {
        Some(f) => {
            checks.push(Check::above("gamma_ci_lower", f.gamma_ci.0, 0.0));
            let ratio = f.k / k_oracle;
            checks.push(Check::at_most("plateau_ratio_log2_abs", ratio.log2().abs(), 1.0));
            json!({ "fit": f, "k_oracle": k_oracle, "plateau_ratio": ratio, "initial": curve.initial })
        }
        None => {
            checks.push(Check::at_least("decay_fit_points", 0.0, 2.0));
            json!({ "fit": Value::Null, "k_oracle": k_oracle, "initial": curve.initial })
        }
    };
    Ok(Outcome { table, results, checks })
}

fn contraction(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let flow = Flow64::new(cfg.flow_config())?;
    let (_, every) = schedule(cfg)?;
    let n = cfg.physics.max_mode;
    let root = root_stream(cfg);
    let mp = cfg.metric_params();
    let u1: PairField64 = sample_free_pair(n, &root.substream(0));
    let u2 = u1.add(&unit_direction(n).scaled(cfg.params.separations[0]));
    let c = contraction_experiment(
        &flow,
        &u1,
        &u2,
        &mp,
        cfg.run.t_final,
        every,
        cfg.run.ensemble_size,
        cfg.params.wasserstein_every,
        &root.substream(1),
    )?;
    let mut table = Table::new(["t", "sync_mean", "sync_stderr", "w_independent", "w_floor", "w_shared", "half_level"]);
    for j in 0..c.times.len() {
        push(
            &mut table,
            vec![c.times[j], c.sync_mean[j], c.sync_stderr[j], c.w_independent[j], c.w_floor[j], c.w_shared[j], c.half_level],
        );
    }
    let t_star = c.t_star.unwrap_or(f64::INFINITY);
    let shared_ok = c
        .w_shared
        .iter()
        .zip(&c.sync_mean)
        .filter(|(w, _)| w.is_finite())
        .all(|(w, s)| *w <= *s + 1e-12);
    let checks = vec![
        Check::at_most("t_star", t_star, 0.5 * cfg.run.t_final),
        Check::at_least("shared_below_sync", shared_ok as u8 as f64, 1.0),
    ];
    Ok(Outcome {
        table,
        results: json!({ "d0": c.d0, "half_level": c.half_level, "t_star": c.t_star, "pairs": cfg.run.ensemble_size }),
        checks,
    })
}

fn balls(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let flow = Flow64::new(cfg.flow_config())?;
    schedule(cfg)?;
    let n = cfg.physics.max_mode;
    let q = &cfg.params;
    let method = if q.importance { BallMethod::Importance } else { BallMethod::Plain };
    let root = root_stream(cfg);
    let report: BallReport =
        small_set_experiment(&flow, q.radius, q.eps, cfg.run.t_final, q.samples, q.confidence, method, &root)?;
    // The same grid the experiment used.
    let grid: Vec<PairField64> = ball_grid(n, q.radius, 8, SobolevIndex::default(), &root.substream(u64::MAX));
    let norm = PairNorm::new(n, SobolevIndex::default());
    let linear = cfg.physics.gamma == 0.0;
    let mut table = Table::new(["point", "norm", "estimate", "stderr", "lower_bound", "hits", "oracle_lo", "oracle_hi"]);
    let mut worst_oracle_z: f64 = 0.0;
    for (j, (u0, e)) in grid.iter().zip(&report.per_point).enumerate() {
        let (lo, hi) = if linear {
            linear_ball_mass_bounds(u0, q.eps, cfg.run.t_final, 1.0, 1 << 12)?
        } else {
            (f64::NAN, f64::NAN)
        };
        if linear {
            let m = e.estimate.mean;
            let gap = if m < lo { lo - m } else if m > hi { m - hi } else { 0.0 };
            worst_oracle_z = worst_oracle_z.max(gap / e.estimate.stderr.max(f64::MIN_POSITIVE));
        }
        push(
            &mut table,
            vec![j as f64, norm.norm(u0), e.estimate.mean, e.estimate.stderr, e.lower_bound, e.hits as f64, lo, hi],
        );
    }
    let mut checks = vec![
        Check::above("p_min_lower", report.p_min_lower, 0.0),
        // 1 − bound; the bound itself rounds to 1 for tiny p_min.
        Check::above("bound_gap", report.bound_gap, 0.0),
    ];
    if linear {
        checks.push(Check::at_most("max_linear_oracle_z", worst_oracle_z, 5.0));
    }
    Ok(Outcome {
        table,
        results: json!({
            "radius": report.radius,
            "eps": report.eps,
            "t": report.t,
            "p_min": report.p_min,
            "p_min_lower": report.p_min_lower,
            "bound": report.bound,
            "bound_conservative": report.bound_conservative,
            "bound_gap": report.bound_gap,
            "method": method,
            "max_linear_oracle_z": if linear { json!(worst_oracle_z) } else { Value::Null },
        }),
        checks,
    })
}

fn smoothing(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let flow = Flow64::new(cfg.flow_config())?;
    let (_, every) = schedule(cfg)?;
    let n = cfg.physics.max_mode;
    let root = root_stream(cfg);
    let u1: PairField64 = sample_free_pair(n, &root.substream(0));
    let obs = LipschitzObservable::standard_set(cfg.metric.n);
    let mut table = Table::new([
        "separation",
        "observable",
        "t",
        "diff_mean",
        "diff_stderr",
        "term1_mean",
        "term1_stderr",
        "term1_bound",
        "term2_mean",
        "term2_stderr",
        "term2_bound",
        "term2_bound_stderr",
    ]);
    let mut finals: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for &sep in &cfg.params.separations {
        let u2 = u1.add(&unit_direction(n).scaled(sep));
        // Same stream for every separation: common random numbers.
        let curves = smoothing_experiment(&flow, &u1, &u2, &obs, cfg.run.t_final, every, cfg.run.ensemble_size, &root.substream(1))?;
        let mut last = Vec::new();
        for (o, c) in curves.iter().enumerate() {
            for j in 0..c.times.len() {
                push(
                    &mut table,
                    vec![
                        sep,
                        o as f64,
                        c.times[j],
                        c.diff_mean[j],
                        c.diff_stderr[j],
                        c.term1_mean[j],
                        c.term1_stderr[j],
                        c.term1_bound[j],
                        c.term2_mean[j],
                        c.term2_stderr[j],
                        c.term2_bound[j],
                        c.term2_bound_stderr[j],
                    ],
                );
            }
            let k = c.times.len() - 1;
            last.push((c.diff_mean[k], c.diff_stderr[k]));
        }
        finals.push((sep, last));
    }
    let worst = finals
        .iter()
        .flat_map(|(_, l)| l.iter().map(|(m, _)| m.abs()))
        .fold(0.0, f64::max);
    let mut checks = vec![Check::at_most("max_final_diff", worst, 0.99)];
    if finals.len() >= 2 {
        let (big, small) = (
            finals.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap(),
            finals.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap(),
        );
        let scale = (small.0 / big.0).sqrt();
        // Excess of |d_small| over the square-root envelope, in standard errors.
        let excess = big
            .1
            .iter()
            .zip(&small.1)
            .map(|(b, s)| (s.0.abs() - scale * b.0.abs()) / s.1.hypot(scale * b.1).max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::at_most("sqrt_scaling_excess_z", excess, 3.0));
    }
    Ok(Outcome {
        table,
        results: json!({
            "observables": obs.iter().map(|o| o.label()).collect::<Vec<_>>(),
            "final": finals.iter().map(|(s, l)| json!({ "separation": s, "diff": l.iter().map(|p| p.0).collect::<Vec<_>>(), "stderr": l.iter().map(|p| p.1).collect::<Vec<_>>() })).collect::<Vec<_>>(),
        }),
        checks,
    })
}

/// Largest deviation from `Φ(u₂, ξ+h) = Φ(u₁, ξ) + S(t)Δ`, plus the
/// recorded trace when `table` is given.
fn shift_run(flow: &Flow64, u1: &PairField64, u2: &PairField64, noise: &NoisePath<f64>, steps: usize, every: usize, table: Option<&mut Table>) -> Result<(f64, f64), RunError> {
    let dt = flow.config().dt;
    let norm = PairNorm::new(flow.config().max_mode, SobolevIndex::default());
    let delta = u2.sub(u1);
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    if table.is_some() {
        rows.push(vec![0.0, norm.norm_sq(&delta), 0.0, 0.0, 0.0]);
    }
    let record = table.is_some();
    let (_, _, rec) = shifted_flow_observe(flow, u1, u2, noise, steps, |k, p1, p2, r| {
        let t = k as f64 * dt;
        let rho = p2.sub(p1);
        let dev = norm.dist(&rho, &free_evolution(&delta, t));
        worst = worst.max(dev);
        if record && k % every == 0 {
            rows.push(vec![t, norm.norm_sq(&rho), r.h_l2_sq, r.log_e, dev]);
        }
    })?;
    if let Some(t) = table {
        for r in rows {
            push(t, r);
        }
    }
    Ok((worst, rec.log_e))
}

fn girsanov(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let fc = cfg.flow_config();
    let flow = Flow64::new(fc)?;
    let half = Flow64::new(fc.with_dt(0.5 * fc.dt))?;
    let (steps, every) = schedule(cfg)?;
    let n = cfg.physics.max_mode;
    let root = root_stream(cfg);
    let u1 = unit_direction(n).scaled(cfg.params.initial_norm_sq.sqrt());
    let u2 = u1.add(&unit_direction(n).scaled(cfg.params.separations[0]));
    let mut table = Table::new(["t", "rho_norm_sq", "h_l2_sq", "log_e", "deviation"]);
    let fine = NoisePath::generate(&root.substream(0), 0.5 * fc.dt, 2 * steps, n)?;
    let coarse = fine.coarsen_with(fc.damping)?;
    let (dev_dt, _) = shift_run(&flow, &u1, &u2, &coarse, steps, every, Some(&mut table))?;
    let (dev_half, _) = shift_run(&half, &u1, &u2, &fine, 2 * steps, 2 * every, None)?;
    let log_e: Vec<f64> = {
        use rayon::prelude::*;
        (0..cfg.run.ensemble_size)
            .into_par_iter()
            .map(|i| -> Result<f64, RunError> {
                let noise = NoisePath::generate(&root.substream(1 + i as u64), fc.dt, steps, n)?;
                Ok(shift_run(&flow, &u1, &u2, &noise, steps, every, None)?.1)
            })
            .collect::<Result<_, _>>()?
    };
    let e: Vec<f64> = log_e.iter().map(|l| l.exp()).collect();
    let mart = Estimate::from_samples(&e);
    let ratio = dev_dt / dev_half;
    let checks = vec![
        Check::at_most("max_deviation", dev_dt, 1e-6),
        Check::at_least("dt_halving_ratio", ratio, 3.0),
        Check::at_most("martingale_z", mart.z_to(1.0).abs(), 5.0),
    ];
    Ok(Outcome {
        table,
        results: json!({
            "max_deviation": dev_dt,
            "max_deviation_half_dt": dev_half,
            "dt_halving_ratio": ratio,
            "martingale_mean": mart.mean,
            "martingale_stderr": mart.stderr,
            "paths": cfg.run.ensemble_size,
        }),
        checks,
    })
}

fn brute_force(cost: &[f64], n: usize) -> f64 {
    (0..n)
        .permutations(n)
        .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Deterministic invariants: discrete Lyapunov identity of every exact step,
/// the semigroup law of the homogeneous flow, and the assignment solver
/// against brute force.
pub fn selftest() -> Outcome {
    let mut table = Table::new(["check", "value", "threshold", "passed"]);
    let mut checks = Vec::new();

    let mut resid: f64 = 0.0;
    for n in 0..=32 {
        for tau in [1e-3, 1e-2, 1e-1] {
            let r = LinearStep::<f64>::new(n, tau).map_or(f64::INFINITY, |s| s.stationarity_residual());
            resid = resid.max(r);
        }
    }
    checks.push(Check::at_most("stationarity_residual", resid, 1e-10));

    let mut semi: f64 = 0.0;
    for n in [0, 1, 5, 32] {
        for (s, t) in [(0.3, 0.7), (1.0, 2.5), (1e-3, 4.0)] {
            let lhs = homogeneous_matrix::<f64>(n, s).mul(&homogeneous_matrix(n, t));
            semi = semi.max(lhs.sub(&homogeneous_matrix(n, s + t)).max_abs());
        }
    }
    checks.push(Check::at_most("semigroup_error", semi, 1e-12));

    let mut rng = RngStream::new(0, 0).rng();
    let mut mismatches = 0usize;
    for _ in 0..200 {
        let cost: Vec<f64> = (0..36).map(|_| rng.random::<f64>()).collect();
        if solve_assignment(&cost, 6).1 != brute_force(&cost, 6) {
            mismatches += 1;
        }
    }
    checks.push(Check::at_most("assignment_mismatches", mismatches as f64, 0.0));

    for (i, c) in checks.iter().enumerate() {
        push(&mut table, vec![i as f64, c.value, c.threshold, c.passed as u8 as f64]);
    }
    Outcome {
        table,
        results: json!({ "checks": checks.iter().map(|c| c.name.clone()).collect::<Vec<_>>() }),
        checks,
    }
}
