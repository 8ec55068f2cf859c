use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use sgergo_cli::config::{Experiment, RunConfig, Severity};
use sgergo_cli::{output, runner};

/// Runs one experiment, or `validate` to check a config file.
#[derive(Debug, Parser)]
#[command(name = "sgergo", version, about)]
struct Cli {
    /// invariance, lyapunov, contraction, smallset, irreducibility,
    /// smoothing, girsanov, selftest or validate.
    command: String,
    /// Config file; defaults apply to every key it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to SGERGO_WORKERS, then `workers`).
    #[arg(long)]
    workers: Option<usize>,
}

const EXIT_FAILED_CHECKS: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut cfg, parsed) = match &cli.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match RunConfig::parse(&text) {
                Ok(p) => (p.config.clone(), Some(p)),
                Err(e) => {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
        None => (RunConfig::default(), None),
    };
    let validate_only = cli.command == "validate";
    if !validate_only {
        match cli.command.parse::<Experiment>() {
            Ok(e) => cfg.experiment = e,
            Err(msg) => {
                eprintln!("error: {msg}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    let env_workers = std::env::var("SGERGO_WORKERS").ok().and_then(|v| v.parse().ok());
    if let Some(w) = cli.workers.or(env_workers) {
        cfg.workers = w;
    }

    let diags = cfg.validate(parsed.as_ref());
    for d in &diags {
        eprintln!("{d}");
    }
    let fatal = diags.iter().any(|d| d.severity == Severity::Error);
    if validate_only || fatal {
        return ExitCode::from(if fatal { EXIT_CONFIG } else { 0 });
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if cfg.workers > 0 {
        pool = pool.num_threads(cfg.workers);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let start = Instant::now();
    let outcome = match pool.install(|| runner::run(&cfg)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {} failed: {e}", cfg.experiment);
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let wall = start.elapsed().as_secs_f64();
    if let Err(e) = output::write_artifacts(&cfg.out_dir, &cfg, &outcome, wall, pool.current_num_threads()) {
        eprintln!("error: cannot write to {}: {e}", cfg.out_dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    for c in &outcome.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("{mark} {:<26} {:>14.6e}  (limit {:.6e})", c.name, c.value, c.threshold);
    }
    println!("wrote {} ({wall:.2} s)", cfg.out_dir.display());
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED_CHECKS)
    }
}
