//! Command-line front end for marketlab.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors (the
//! message names the offending field), 1 for errors raised while running.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use marketlab::sweeps::{Objective, SweepAxis, SweepMode};
use marketlab::DesignKind;

pub mod commands;
pub mod config;
pub mod output;

use config::GteSource;
pub use config::RunConfig;
use output::Format;

/// Sets the default size of the worker pool. Advisory: results never
/// depend on it.
pub const THREADS_ENV: &str = "MARKETLAB_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "marketlab",
    version,
    about = "Marketplace experiment simulator and mean-field engine"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Large-market limits: estimator, GTE, bias, variance
    Analytic,
    /// Replicated finite-market runs of one design
    Simulate,
    /// Analytic and/or Monte Carlo table along one axis
    Sweep,
    /// Exact moments of a tiny market, optionally checked by simulation
    Oracle,
    /// Consideration rate that yields a target booking rate
    Calibrate,
    /// Best design on the allocation grid for an objective
    Recommend,
}

/// Flags override the matching config entries.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Relative demand (market.lambda)
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Homogeneous control consideration rate (market.phi)
    #[arg(long, global = true)]
    pub phi: Option<f64>,
    /// Homogeneous treatment consideration rate (market.phi_tilde)
    #[arg(long = "phi-tilde", global = true)]
    pub phi_tilde: Option<f64>,
    /// gc, gt, cr or lr (design.kind)
    #[arg(long, global = true)]
    pub design: Option<DesignKind>,
    /// Treatment allocation (design.allocation)
    #[arg(long, global = true)]
    pub alloc: Option<f64>,
    /// Listings in the finite market (execution.n)
    #[arg(long, global = true)]
    pub n: Option<u64>,
    /// Replications (execution.replications)
    #[arg(long, global = true)]
    pub reps: Option<u64>,
    /// Master seed (execution.master_seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// analytic, montecarlo or both (execution.mode)
    #[arg(long, global = true)]
    pub mode: Option<SweepMode>,
    /// GTE reference for simulations: analytic or montecarlo (execution.gte)
    #[arg(long, global = true)]
    pub gte: Option<GteSource>,
    /// Runs per global world for a Monte Carlo GTE (execution.gte_replications)
    #[arg(long = "gte-reps", global = true)]
    pub gte_reps: Option<u64>,
    /// lambda, allocation, alpha or n (sweep.axis)
    #[arg(long, global = true)]
    pub axis: Option<SweepAxis>,
    /// Comma-separated axis values (sweep.values)
    #[arg(long, global = true, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Comma-separated design kinds for sweeps (sweep.designs)
    #[arg(long, global = true, value_delimiter = ',')]
    pub designs: Option<Vec<DesignKind>>,
    /// bias, variance or mse (recommend.objective)
    #[arg(long, global = true)]
    pub objective: Option<Objective>,
    /// Target booking rate (calibrate.target)
    #[arg(long, global = true)]
    pub target: Option<f64>,
    /// json or csv (output.format)
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Output file; standard output when absent (output.path)
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

impl Options {
    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        set(&mut cfg.market.lambda, &self.lambda);
        set(&mut cfg.market.phi, &self.phi);
        set(&mut cfg.market.phi_tilde, &self.phi_tilde);
        set(&mut cfg.design.kind, &self.design);
        set(&mut cfg.design.allocation, &self.alloc);
        set(&mut cfg.execution.n, &self.n);
        set(&mut cfg.execution.replications, &self.reps);
        set(&mut cfg.execution.master_seed, &self.seed);
        set(&mut cfg.execution.mode, &self.mode);
        set(&mut cfg.execution.gte, &self.gte);
        set(&mut cfg.execution.gte_replications, &self.gte_reps);
        set(&mut cfg.sweep.axis, &self.axis);
        set(&mut cfg.sweep.values, &self.values);
        set(&mut cfg.sweep.designs, &self.designs);
        set(&mut cfg.recommend.objective, &self.objective);
        set(&mut cfg.calibrate.target, &self.target);
        set(&mut cfg.output.format, &self.format);
        set(&mut cfg.output.path, &self.output);
    }
}

/// Loads the config file (if any) and applies the flag overrides.
pub fn resolve_config(options: &Options) -> Result<RunConfig, CliError> {
    let mut cfg = match &options.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    options.apply(&mut cfg);
    Ok(cfg)
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    let rendered = match command {
        Command::Analytic => commands::analytic(cfg)?,
        Command::Simulate => commands::simulate(cfg)?,
        Command::Sweep => commands::sweep(cfg)?,
        Command::Oracle => commands::oracle(cfg)?,
        Command::Calibrate => commands::calibrate(cfg)?,
        Command::Recommend => commands::recommend(cfg)?,
    };
    rendered.render(cfg.output.format)
}

fn configure_threads() {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if the pool already exists, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        _ => eprintln!("marketlab: ignoring {THREADS_ENV}={value:?}; expected a positive integer"),
    }
}

fn write_output(cfg: &RunConfig, text: &str) -> Result<(), CliError> {
    match &cfg.output.path {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(
                    format!("cannot write to standard output: {e}"),
                )),
                _ => Ok(()),
            }
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads();
    let result = resolve_config(&cli.options)
        .and_then(|cfg| execute(cli.command, &cfg).and_then(|text| write_output(&cfg, &text)));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("marketlab: {e}");
            e.exit_code()
        }
    }
}
