use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;

use eigenflow::analysis::{spectral_transform, validate_eigenfunction};
use eigenflow::cli::{exit_code, read_field, run_batch, ExperimentConfig, RunStatus};
use eigenflow::{FlowConfig, FunctionalKind, Result};

#[derive(Parser)]
#[command(name = "eigenflow", version, about = "Nonlinear eigenfunctions of TV and TGV by forward and inverse flows")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Functional {
    #[value(name = "TV", alias = "tv")]
    Tv,
    #[value(name = "TGV2", alias = "tgv2")]
    Tgv2,
}

#[derive(clap::Args)]
struct FunctionalArgs {
    #[arg(long, value_enum, default_value = "TV")]
    functional: Functional,
    #[arg(long, default_value_t = FunctionalKind::DEFAULT_TGV_ALPHA0)]
    alpha0: f64,
    #[arg(long, default_value_t = FunctionalKind::DEFAULT_TGV_ALPHA1)]
    alpha1: f64,
}

impl FunctionalArgs {
    fn kind(&self) -> FunctionalKind {
        match self.functional {
            Functional::Tv => FunctionalKind::Tv,
            Functional::Tgv2 => FunctionalKind::Tgv2 {
                alpha0: self.alpha0,
                alpha1: self.alpha1,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment config files.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Number of configs to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory; with several configs, one subdirectory per config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check whether a field is an eigenfunction with the given eigenvalue.
    Validate {
        field: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        functional: FunctionalArgs,
        /// Also write the gradient-flow curve as CSV here.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Spectral decomposition of a field by its gradient flow; prints `t,S`.
    Spectrum {
        field: PathBuf,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        dt: f64,
        #[command(flatten)]
        functional: FunctionalArgs,
    },
}

fn run(configs: &[PathBuf], jobs: usize, out: Option<PathBuf>) -> Result<i32> {
    let mut cfgs = Vec::with_capacity(configs.len());
    for path in configs {
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(o) = &out {
            cfg.output_dir = if configs.len() == 1 {
                o.clone()
            } else {
                let stem = path.file_stem().map(PathBuf::from).unwrap_or_else(|| "run".into());
                o.join(stem)
            };
        }
        cfgs.push(cfg);
    }
    let mut seen = HashSet::new();
    for c in &cfgs {
        if !seen.insert(c.output_dir.clone()) {
            return Err(eigenflow::Error::InvalidParameter(format!(
                "two runs share the output directory {}",
                c.output_dir.display()
            )));
        }
    }
    let results = run_batch(&cfgs, jobs);
    let mut code = 0;
    for (path, r) in configs.iter().zip(&results) {
        match r {
            Ok(o) => {
                let lambda = o.lambda.map_or("n/a".to_string(), |l| l.to_string());
                let status = match o.status {
                    RunStatus::Converged => "converged",
                    RunStatus::NotConverged => "not converged",
                };
                println!("{}: {status}, lambda {lambda}, output {}", path.display(), o.output_dir.display());
            }
            Err(e) => error!("{}: {e}", path.display()),
        }
        let c = exit_code(r);
        // errors dominate non-convergence
        if c == 1 || code == 0 {
            code = c;
        }
    }
    Ok(code)
}

fn validate(field: &Path, lambda: f64, kind: FunctionalKind, curve: Option<PathBuf>) -> Result<i32> {
    let u = read_field(field)?;
    let report = validate_eigenfunction(&u, lambda, &kind, &FlowConfig::default())?;
    print!("{report}");
    if let Some(p) = curve {
        std::fs::write(&p, report.curve_csv()).map_err(|e| eigenflow::Error::Io { path: p, source: e })?;
    }
    Ok(if report.passed() { 0 } else { 2 })
}

fn spectrum(field: &Path, t_end: f64, dt: f64, kind: FunctionalKind) -> Result<i32> {
    if !(dt > 0.0 && t_end >= 2.0 * dt) {
        return Err(eigenflow::Error::InvalidParameter(format!(
            "need dt > 0 and t_end >= 2 dt, got dt={dt}, t_end={t_end}"
        )));
    }
    let u = read_field(field)?;
    let sr = spectral_transform(&u, &kind, dt, t_end, &FlowConfig::default().inner)?;
    print!("{}", sr.spectrum_csv());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let r = match cli.command {
        Command::Run { configs, jobs, out } => run(&configs, jobs, out),
        Command::Validate {
            field,
            lambda,
            functional,
            curve,
        } => validate(&field, lambda, functional.kind(), curve),
        Command::Spectrum {
            field,
            t_end,
            dt,
            functional,
        } => spectrum(&field, t_end, dt, functional.kind()),
    };
    match r {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
