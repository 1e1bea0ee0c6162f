//! `bmlab`: reproducible experiments on Hermite functionals of Gaussian
//! stationary sequences.
//!
//! Exit codes: 0 thresholds met, 2 thresholds violated, 3 precondition or
//! hypothesis failure, 4 i/o error.

mod config;
mod experiment;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use experiment::RunError;

#[derive(Parser)]
#[command(
    name = "bmlab",
    version,
    about = "Spectral models, causal factorization, exact simulation and \
             central-limit diagnostics for Gaussian stationary sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Key=value config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model spec: white | fgn:H=0.7 | arfima:d=0.2;ar=1,-0.5;ma=1 | tabulated:file=PATH
    #[arg(long)]
    model: Option<String>,
    /// Hermite combination, e.g. 2:1.0,3:0.5 for a2=1, a3=0.5
    #[arg(long)]
    f: Option<String>,
    /// Path length grid, comma separated and increasing
    #[arg(long)]
    n: Option<String>,
    /// Paths per batch
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// circulant | causal_ma
    #[arg(long)]
    method: Option<String>,
    /// Negative-moment orders, comma separated
    #[arg(long)]
    p: Option<String>,
    /// Output directory (or file for `simulate`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truncation length for the causal factorization
    #[arg(long = "L")]
    truncation_l: Option<usize>,
    /// Frequency grid size (power of two); default 16·L
    #[arg(long)]
    grid_size: Option<usize>,
    /// Burn-in for the causal sampler; default L
    #[arg(long)]
    burn_in: Option<usize>,
    /// KDE bandwidth; default Silverman's rule
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Lag cutoff for the summability check
    #[arg(long)]
    tail_cutoff: Option<usize>,
    /// per_n | none — whether thresholds decide the exit code
    #[arg(long)]
    gate: Option<String>,
}

impl CommonArgs {
    fn build(&self) -> Result<ExperimentConfig, RunError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text).map_err(RunError::from)?;
        }
        let mut apply = |key: &str, value: Option<String>| -> Result<(), RunError> {
            if let Some(v) = value {
                cfg.apply_pair(key, &v).map_err(RunError::from)?;
            }
            Ok(())
        };
        apply("model", self.model.clone())?;
        apply("f", self.f.clone())?;
        apply("n", self.n.clone())?;
        apply("M", self.m.map(|v| v.to_string()))?;
        apply("seed", self.seed.map(|v| v.to_string()))?;
        apply("method", self.method.clone())?;
        apply("p", self.p.clone())?;
        apply("out", self.out.as_ref().map(|v| v.display().to_string()))?;
        apply("L", self.truncation_l.map(|v| v.to_string()))?;
        apply("grid_size", self.grid_size.map(|v| v.to_string()))?;
        apply("burn_in", self.burn_in.map(|v| v.to_string()))?;
        apply("bandwidth", self.bandwidth.map(|v| v.to_string()))?;
        apply("tail_cutoff", self.tail_cutoff.map(|v| v.to_string()))?;
        apply("gate", self.gate.clone())?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute causal MA coefficients and the spectral-match report
    Factorize(CommonArgs),
    /// Generate a path batch and store it as a binary file
    Simulate(CommonArgs),
    /// Moment / distance report for V_n over an n-grid
    Clt(CommonArgs),
    /// Negative moments of the Malliavin derivative norm over an n-grid
    Malliavin(CommonArgs),
    /// Density estimate of the normalized statistic
    Density {
        #[command(flatten)]
        common: CommonArgs,
        /// Read paths from a stored batch instead of simulating
        #[arg(long)]
        batch: Option<PathBuf>,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("BM_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}

fn run() -> Result<i32, RunError> {
    // Usage errors fall in the precondition class (exit 3); clap's default
    // exit code 2 is reserved for threshold violations here.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(3);
        }
    };
    init_threads();
    match cli.command {
        Command::Factorize(args) => {
            let cfg = args.build()?;
            experiment::run_factorize(&cfg)?;
            Ok(0)
        }
        Command::Simulate(args) => {
            let cfg = args.build()?;
            let out = cfg.out.clone();
            experiment::run_simulate(&cfg, &out)?;
            Ok(0)
        }
        Command::Clt(args) => {
            let cfg = args.build()?;
            let outcome = experiment::run_clt(&cfg)?;
            for row in &outcome.rows {
                let sup = row
                    .kde_sup
                    .map(|s| format!("{s:.5}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "n={}: variance={:.6} (exact {:.6}), E[F^4]={:.4}, KS={:.5}, sup={}",
                    row.n,
                    row.report.variance,
                    row.report.sigma_n_sq_exact,
                    row.report.fn_fourth_moment,
                    row.ks,
                    sup
                );
            }
            if outcome.violations.is_empty() {
                Ok(0)
            } else {
                for v in &outcome.violations {
                    eprintln!("threshold violated: {v}");
                }
                Ok(2)
            }
        }
        Command::Malliavin(args) => {
            let cfg = args.build()?;
            let reports = experiment::run_malliavin(&cfg)?;
            for r in &reports {
                let parts: Vec<String> = r
                    .estimates
                    .iter()
                    .map(|e| format!("p={}: {:.4}±{:.4}", e.p, e.estimate, e.bootstrap_se))
                    .collect();
                println!(
                    "n={}: {} (min ‖DV‖² = {:.3e}, anomalies {})",
                    r.n,
                    parts.join(", "),
                    r.min_norm_sq,
                    r.anomaly_count
                );
            }
            Ok(0)
        }
        Command::Density { common, batch } => {
            let cfg = common.build()?;
            experiment::run_density(&cfg, batch.as_deref())?;
            Ok(0)
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("bmlab: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
