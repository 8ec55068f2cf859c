//! Run configuration: flat `key = value` text with one level of `[sections]`.
//!
//! ```text
//! experiment = invariance
//! seed = 7
//!
//! [physics]
//! N = 16
//! dt = 0.005
//! gamma = 0
//! ```
//!
//! `#` starts a comment line. Unknown sections and keys are errors. Every
//! key has a default, so a file only needs what it changes.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use sgergo::dynamics::{Flow, FlowConfig};
use sgergo::ergodicity::{LyapunovParams, MetricParams, ASSIGNMENT_CAP};
use sgergo::spectral::{ProjectorSpec, SobolevIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Invariance,
    Lyapunov,
    Contraction,
    Smallset,
    Irreducibility,
    Smoothing,
    Girsanov,
    Selftest,
}

impl Experiment {
    pub const ALL: [Self; 8] = [
        Self::Invariance,
        Self::Lyapunov,
        Self::Contraction,
        Self::Smallset,
        Self::Irreducibility,
        Self::Smoothing,
        Self::Girsanov,
        Self::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Invariance => "invariance",
            Self::Lyapunov => "lyapunov",
            Self::Contraction => "contraction",
            Self::Smallset => "smallset",
            Self::Irreducibility => "irreducibility",
            Self::Smoothing => "smoothing",
            Self::Girsanov => "girsanov",
            Self::Selftest => "selftest",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment {s:?} (expected one of {})", names().join(", ")))
    }
}

fn names() -> Vec<&'static str> {
    Experiment::ALL.iter().map(|e| e.name()).collect()
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Smooth,
    Sharp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Physics {
    #[serde(rename = "N")]
    pub max_mode: usize,
    pub grid_factor: usize,
    pub dt: f64,
    pub beta: f64,
    pub gamma: f64,
    pub projector: Profile,
    /// Projector cutoff; `0` means `N`.
    pub cutoff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub lambda: f64,
    pub delta: f64,
    pub n: u32,
    pub quad_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lyapunov {
    pub lambda: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Run {
    pub ensemble_size: usize,
    pub t_final: f64,
    pub t_samples: usize,
}

/// Knobs only some experiments read.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    /// Radius of the ball of initial data (smallset, irreducibility).
    pub radius: f64,
    /// Target ball radius (smallset, irreducibility).
    pub eps: f64,
    /// Samples per initial point (smallset, irreducibility).
    pub samples: usize,
    pub confidence: f64,
    /// Use the importance sampler for ball probabilities.
    pub importance: bool,
    /// `‖u₀‖²` of the initial datum (lyapunov, girsanov).
    pub initial_norm_sq: f64,
    /// Initial separations (contraction uses the first; smoothing all).
    pub separations: Vec<f64>,
    /// Recorded times between assignment solves (contraction; 0 = never).
    pub wasserstein_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    // Neither affects results, so neither is echoed into summary.json.
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Worker threads; `0` lets the pool decide.
    #[serde(skip)]
    pub workers: usize,
    pub physics: Physics,
    pub metric: Metric,
    pub lyapunov: Lyapunov,
    pub run: Run,
    pub params: Params,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Selftest,
            seed: 0,
            out_dir: PathBuf::from("out"),
            workers: 0,
            physics: Physics {
                max_mode: 16,
                grid_factor: 8,
                dt: 5e-3,
                beta: 1.0,
                gamma: 1.0,
                projector: Profile::Smooth,
                cutoff: 0,
            },
            metric: Metric {
                lambda: 0.02,
                delta: 0.5,
                n: 1,
                quad_points: 16,
            },
            lyapunov: Lyapunov {
                lambda: 0.02,
                lambda_max: LyapunovParams::DEFAULT_LAMBDA_MAX,
            },
            run: Run {
                ensemble_size: 256,
                t_final: 5.0,
                t_samples: 11,
            },
            params: Params {
                radius: 2.0,
                eps: 1.0,
                samples: 400,
                confidence: 0.95,
                importance: true,
                initial_norm_sq: 100.0,
                separations: vec![0.1, 0.01],
                wasserstein_every: 5,
            },
        }
    }
}

/// A config file problem at a known line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// `section.key`, or the bare key at top level.
    pub field: String,
    /// Line the field was set on, if it came from a file.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match self.line {
            Some(l) => write!(f, "{sev}: line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{sev}: {}: {}", self.field, self.message),
        }
    }
}

/// Parsed config plus where each field was set.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub config: RunConfig,
    pub lines: Vec<(String, usize)>,
}

impl Parsed {
    pub fn line_of(&self, field: &str) -> Option<usize> {
        self.lines.iter().find(|(f, _)| f == field).map(|&(_, l)| l)
    }
}

fn parse_value<V: FromStr>(raw: &str, line: usize) -> Result<V, ParseError>
where
    V::Err: fmt::Display,
{
    raw.parse().map_err(|e| ParseError {
        line,
        message: format!("cannot parse {raw:?}: {e}"),
    })
}

fn parse_list(raw: &str, line: usize) -> Result<Vec<f64>, ParseError> {
    raw.split(',').map(|s| parse_value(s.trim(), line)).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Parsed, ParseError> {
        let mut c = RunConfig::default();
        let mut section = String::new();
        let mut lines: Vec<(String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ParseError {
                    line,
                    message: format!("unterminated section header {s:?}"),
                })?;
                let name = name.trim();
                if !["physics", "metric", "lyapunov", "run", "params"].contains(&name) {
                    return Err(ParseError {
                        line,
                        message: format!("unknown section [{name}]"),
                    });
                }
                section = name.to_owned();
                continue;
            }
            let (key, value) = s.split_once('=').ok_or_else(|| ParseError {
                line,
                message: format!("expected `key = value`, found {s:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let field = if section.is_empty() { key.to_owned() } else { format!("{section}.{key}") };
            if lines.iter().any(|(f, _)| *f == field) {
                return Err(ParseError {
                    line,
                    message: format!("{field} is set twice"),
                });
            }
            let v = value;
            match field.as_str() {
                "experiment" => {
                    c.experiment = v.parse().map_err(|message| ParseError { line, message })?;
                }
                "seed" => c.seed = parse_value(v, line)?,
                "out_dir" => c.out_dir = PathBuf::from(v),
                "workers" => c.workers = parse_value(v, line)?,
                "physics.N" => c.physics.max_mode = parse_value(v, line)?,
                "physics.grid_factor" => c.physics.grid_factor = parse_value(v, line)?,
                "physics.dt" => c.physics.dt = parse_value(v, line)?,
                "physics.beta" => c.physics.beta = parse_value(v, line)?,
                "physics.gamma" => c.physics.gamma = parse_value(v, line)?,
                "physics.cutoff" => c.physics.cutoff = parse_value(v, line)?,
                "physics.projector" => {
                    c.physics.projector = match v {
                        "smooth" => Profile::Smooth,
                        "sharp" => Profile::Sharp,
                        _ => {
                            return Err(ParseError {
                                line,
                                message: format!("projector must be smooth or sharp, found {v:?}"),
                            })
                        }
                    }
                }
                "metric.lambda" => c.metric.lambda = parse_value(v, line)?,
                "metric.delta" => c.metric.delta = parse_value(v, line)?,
                "metric.n" => c.metric.n = parse_value(v, line)?,
                "metric.quad_points" => c.metric.quad_points = parse_value(v, line)?,
                "lyapunov.lambda" => c.lyapunov.lambda = parse_value(v, line)?,
                "lyapunov.lambda_max" => c.lyapunov.lambda_max = parse_value(v, line)?,
                "run.ensemble_size" => c.run.ensemble_size = parse_value(v, line)?,
                "run.t_final" => c.run.t_final = parse_value(v, line)?,
                "run.t_samples" => c.run.t_samples = parse_value(v, line)?,
                "params.radius" => c.params.radius = parse_value(v, line)?,
                "params.eps" => c.params.eps = parse_value(v, line)?,
                "params.samples" => c.params.samples = parse_value(v, line)?,
                "params.confidence" => c.params.confidence = parse_value(v, line)?,
                "params.importance" => c.params.importance = parse_value(v, line)?,
                "params.initial_norm_sq" => c.params.initial_norm_sq = parse_value(v, line)?,
                "params.separations" => c.params.separations = parse_list(v, line)?,
                "params.wasserstein_every" => c.params.wasserstein_every = parse_value(v, line)?,
                _ => {
                    return Err(ParseError {
                        line,
                        message: format!("unknown key {field}"),
                    })
                }
            }
            lines.push((field, line));
        }
        Ok(Parsed { config: c, lines })
    }

    /// Canonical text form; `parse(to_text())` reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.physics;
        let list = self.params.separations.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let profile = match p.projector {
            Profile::Smooth => "smooth",
            Profile::Sharp => "sharp",
        };
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "\n[physics]");
        let _ = writeln!(s, "N = {}\ngrid_factor = {}\ndt = {}", p.max_mode, p.grid_factor, p.dt);
        let _ = writeln!(s, "beta = {}\ngamma = {}\nprojector = {profile}\ncutoff = {}", p.beta, p.gamma, p.cutoff);
        let m = &self.metric;
        let _ = writeln!(s, "\n[metric]");
        let _ = writeln!(s, "lambda = {}\ndelta = {}\nn = {}\nquad_points = {}", m.lambda, m.delta, m.n, m.quad_points);
        let _ = writeln!(s, "\n[lyapunov]");
        let _ = writeln!(s, "lambda = {}\nlambda_max = {}", self.lyapunov.lambda, self.lyapunov.lambda_max);
        let r = &self.run;
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "ensemble_size = {}\nt_final = {}\nt_samples = {}", r.ensemble_size, r.t_final, r.t_samples);
        let q = &self.params;
        let _ = writeln!(s, "\n[params]");
        let _ = writeln!(s, "radius = {}\neps = {}\nsamples = {}", q.radius, q.eps, q.samples);
        let _ = writeln!(s, "confidence = {}\nimportance = {}", q.confidence, q.importance);
        let _ = writeln!(s, "initial_norm_sq = {}\nseparations = {list}", q.initial_norm_sq);
        let _ = writeln!(s, "wasserstein_every = {}", q.wasserstein_every);
        s
    }

    pub fn flow_config(&self) -> FlowConfig<f64> {
        let p = &self.physics;
        let cutoff = if p.cutoff == 0 { p.max_mode } else { p.cutoff };
        let proj = match p.projector {
            Profile::Smooth => ProjectorSpec::smooth(cutoff),
            Profile::Sharp => ProjectorSpec::sharp(cutoff),
        };
        FlowConfig::new(p.max_mode, p.beta, p.gamma, p.dt)
            .with_grid_factor(p.grid_factor)
            .with_projector(proj)
    }

    pub fn metric_params(&self) -> MetricParams {
        MetricParams {
            lambda: self.metric.lambda,
            delta: self.metric.delta,
            n: self.metric.n,
            quad_points: self.metric.quad_points,
            alpha_minus: SobolevIndex::default(),
        }
    }

    pub fn lyapunov_params(&self) -> LyapunovParams {
        LyapunovParams {
            lambda: self.lyapunov.lambda,
            alpha_minus: SobolevIndex::default(),
            lambda_max: self.lyapunov.lambda_max,
        }
    }

    /// Steps in `[0, t_final]` and the recording stride.
    pub fn schedule(&self) -> Option<(usize, usize)> {
        let steps = (self.run.t_final / self.physics.dt).round();
        if !(steps >= 1.0 && (steps * self.physics.dt - self.run.t_final).abs() <= 1e-9 * self.run.t_final.max(1.0)) {
            return None;
        }
        let steps = steps as usize;
        let intervals = self.run.t_samples.checked_sub(1).filter(|&k| k > 0)?;
        (steps % intervals == 0).then_some((steps, steps / intervals))
    }

    /// Schema and range checks. Empty means the file is fine.
    pub fn validate(&self, parsed: Option<&Parsed>) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let line = |f: &str| parsed.and_then(|p| p.line_of(f));
        let push = |out: &mut Vec<Diagnostic>, severity, field: &str, message: String| {
            out.push(Diagnostic {
                severity,
                field: field.to_owned(),
                line: line(field),
                message,
            })
        };
        let p = &self.physics;
        if !(p.dt > 0.0 && p.dt.is_finite()) {
            push(&mut out, Severity::Error, "physics.dt", format!("must be positive and finite, got {}", p.dt));
        } else if p.dt * p.max_mode as f64 > 0.5 {
            push(
                &mut out,
                Severity::Warning,
                "physics.dt",
                format!("dt·N = {} exceeds 0.5; the fastest mode is poorly resolved", p.dt * p.max_mode as f64),
            );
        }
        if p.max_mode < 1 {
            push(&mut out, Severity::Error, "physics.N", "must be at least 1".into());
        }
        if p.grid_factor < 4 {
            push(&mut out, Severity::Error, "physics.grid_factor", format!("must be at least 4, got {}", p.grid_factor));
        }
        if p.cutoff > p.max_mode {
            push(&mut out, Severity::Error, "physics.cutoff", format!("cutoff {} exceeds N = {}", p.cutoff, p.max_mode));
        }
        if !(p.beta.is_finite() && p.gamma.is_finite()) {
            push(&mut out, Severity::Error, "physics.beta", "couplings must be finite".into());
        }
        if p.beta == 0.0 && p.gamma != 0.0 {
            push(
                &mut out,
                Severity::Error,
                "physics.beta",
                "beta = 0 with gamma != 0: the Gibbs density exp(-(gamma/beta) ∫cos(beta u)) is undefined".into(),
            );
        }
        if p.beta == 0.0 && self.experiment == Experiment::Invariance {
            push(&mut out, Severity::Error, "physics.beta", "invariance reads mean cos(beta u), which needs beta != 0".into());
        }
        if let Err(e) = self.metric_params().validate() {
            push(&mut out, Severity::Error, "metric", e.to_string());
        }
        if let Err(e) = self.lyapunov_params().validate() {
            push(&mut out, Severity::Error, "lyapunov.lambda", e.to_string());
        }
        let r = &self.run;
        if r.ensemble_size < 2 {
            push(&mut out, Severity::Error, "run.ensemble_size", "need at least 2".into());
        }
        if !(r.t_final > 0.0 && r.t_final.is_finite()) {
            push(&mut out, Severity::Error, "run.t_final", format!("must be positive, got {}", r.t_final));
        } else if p.dt > 0.0 && r.t_samples >= 2 && self.schedule().is_none() {
            push(
                &mut out,
                Severity::Error,
                "run.t_samples",
                format!("t_final / dt must be a whole number of steps divisible by t_samples − 1 = {}", r.t_samples - 1),
            );
        }
        if r.t_samples < 2 {
            push(&mut out, Severity::Error, "run.t_samples", "need at least 2".into());
        }
        let q = &self.params;
        if self.experiment == Experiment::Contraction && q.wasserstein_every > 0 && r.ensemble_size > ASSIGNMENT_CAP {
            push(
                &mut out,
                Severity::Error,
                "run.ensemble_size",
                format!("assignment distances need at most {ASSIGNMENT_CAP} pairs (or params.wasserstein_every = 0)"),
            );
        }
        if !(q.radius >= 0.0 && q.eps > 0.0) {
            push(&mut out, Severity::Error, "params.eps", "need radius >= 0 and eps > 0".into());
        }
        if q.samples < 2 {
            push(&mut out, Severity::Error, "params.samples", "need at least 2".into());
        }
        if !(q.confidence > 0.0 && q.confidence < 1.0) {
            push(&mut out, Severity::Error, "params.confidence", format!("must lie in (0, 1), got {}", q.confidence));
        }
        if !(q.initial_norm_sq >= 0.0 && q.initial_norm_sq.is_finite()) {
            push(&mut out, Severity::Error, "params.initial_norm_sq", "must be finite and non-negative".into());
        }
        if q.separations.is_empty() || q.separations.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            push(&mut out, Severity::Error, "params.separations", "need one or more positive separations".into());
        }
        if out.iter().all(|d| d.severity != Severity::Error) {
            if let Err(e) = Flow::new(self.flow_config()) {
                push(&mut out, Severity::Error, "physics", e.to_string());
            }
        }
        out
    }
}
