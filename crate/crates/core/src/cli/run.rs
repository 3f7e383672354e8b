//! Run orchestration and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};

use super::config::{ExperimentConfig, Method};
use super::fieldio::{write_pgm, write_text};
use super::init::generate_init;
use crate::analysis::{estimate_lambda, spectral_transform, theta_deg, validate_eigenfunction};
use crate::error::{Error, Result};
use crate::flows::{run_forward_observed, run_inverse_observed, run_linear_observed, EigenResult};
use crate::functional::{evaluate, FunctionalKind};
use crate::grid::GridField;
use crate::ipm::run_ipm_observed;
use crate::operators::{LinearOperator, NegLaplacian};

/// How a run ended, short of an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// Converged flow, or a passed validation.
    Converged,
    /// Outer iteration limit reached, or a failed validation.
    NotConverged,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub lambda: Option<f64>,
    pub output_dir: PathBuf,
}

/// Process exit code: 0 converged, 2 not converged, 1 error.
pub fn exit_code(r: &Result<RunOutcome>) -> i32 {
    match r {
        Ok(RunOutcome {
            status: RunStatus::Converged,
            ..
        }) => 0,
        Ok(_) => 2,
        Err(_) => 1,
    }
}

/// Artifact header; the output location is left out so that the same
/// experiment yields identical files wherever it is written.
fn header(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    cfg.to_kv()
        .into_iter()
        .filter(|(k, _)| k != "output_dir")
        .map(|(k, v)| (format!("config.{k}"), v))
        .collect()
}

fn comment_block(h: &[(String, String)]) -> String {
    h.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs one experiment and writes its artifacts into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let h = header(cfg);
    write(&dir.join("config.txt"), &cfg.to_string())?;

    let kind = match cfg.method {
        // the Laplacian's null space is the constants, like TV
        Method::Linear => FunctionalKind::Tv,
        _ => cfg.functional,
    };
    let mut f = generate_init(&cfg.init, cfg.grid, cfg.seed, &kind)?;
    if let Some(target) = cfg.init_norm {
        let n = f.norm();
        if n == 0.0 {
            return Err(Error::DegenerateInput);
        }
        f = f.scaled(target / n);
    }
    info!("{}: {} on {} from {}", dir.display(), cfg.method.name(), cfg.grid, cfg.init.kind_name());

    match cfg.method {
        Method::Forward | Method::Inverse | Method::Ipm | Method::Linear => {
            run_flow(cfg, &f, &h)
        }
        Method::Spectral => run_spectral(cfg, &f, &h),
        Method::Validate => run_validate(cfg, &f, &h),
    }
}

fn run_flow(cfg: &ExperimentConfig, f: &GridField, h: &[(String, String)]) -> Result<RunOutcome> {
    let dir = &cfg.output_dir;
    let snap_dir = dir.join("snapshots");
    if cfg.snapshot_every > 0 {
        fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    }
    let mut snap_err: Option<Error> = None;
    let mut observer = |rec: &crate::flows::TraceRecord, u: &GridField| {
        if cfg.snapshot_every == 0 || !rec.k.is_multiple_of(cfg.snapshot_every) || snap_err.is_some() {
            return;
        }
        let p = snap_dir.join(format!("u_{:06}.txt", rec.k));
        if let Err(e) = write_text(&p, u, h) {
            snap_err = Some(e);
        }
    };
    let kind = &cfg.functional;
    let res = match cfg.method {
        Method::Forward => run_forward_observed(f, kind, &cfg.flow, &mut observer)?,
        Method::Inverse => run_inverse_observed(f, kind, &cfg.flow, &mut observer)?,
        Method::Ipm => run_ipm_observed(f, kind, &cfg.flow, &mut observer)?,
        Method::Linear => run_linear_observed(f, &NegLaplacian, &cfg.flow, &mut observer)?,
        _ => unreachable!("not a flow method"),
    };
    if let Some(e) = snap_err {
        return Err(e);
    }

    let mut trace = comment_block(h);
    trace.push_str(&res.trace.to_csv());
    write(&dir.join("trace.csv"), &trace)?;
    write_text(&dir.join("final.txt"), &res.u_star, h)?;
    write_pgm(&dir.join("final.pgm"), &res.u_star, h)?;

    let report = flow_report(cfg, f, &res)?;
    write(&dir.join("report.txt"), &format!("{}{report}", comment_block(h)))?;
    if !res.converged {
        warn!("{}: no convergence within {} outer iterations", dir.display(), cfg.flow.max_outer);
    }
    Ok(RunOutcome {
        status: if res.converged {
            RunStatus::Converged
        } else {
            RunStatus::NotConverged
        },
        lambda: Some(res.lambda),
        output_dir: dir.clone(),
    })
}

fn flow_report(cfg: &ExperimentConfig, f: &GridField, res: &EigenResult) -> Result<String> {
    let mut s = String::new();
    let w = &mut s;
    let last_k = res.trace.last().map_or(0, |r| r.k);
    let _ = writeln!(w, "method: {}", cfg.method.name());
    let _ = writeln!(w, "converged: {}", res.converged);
    let _ = writeln!(w, "iterations: {last_k}");
    let _ = writeln!(w, "lambda: {}", res.lambda);
    let _ = writeln!(w, "affinity: {}", res.affinity);
    let _ = writeln!(w, "theta_deg: {}", theta_deg(res.affinity));

    // Rayleigh quotient of the input bounds λ from above for the descending
    // methods and from below for the inverse flow.
    let fn2 = f.norm().powi(2);
    let j_f = match cfg.method {
        Method::Linear => f.inner(&NegLaplacian.apply(f))?,
        _ => evaluate(&cfg.functional, f, &cfg.flow.inner)?,
    };
    let bound = j_f / fn2;
    let (relation, holds) = if cfg.method == Method::Inverse {
        (">=", res.lambda >= bound * (1.0 - 1e-6))
    } else {
        ("<=", res.lambda > 0.0 && res.lambda <= bound * (1.0 + 1e-6))
    };
    let _ = writeln!(w, "input_J: {j_f}");
    let _ = writeln!(w, "input_norm_sq: {fn2}");
    let _ = writeln!(w, "rayleigh_bound: {bound}");
    let _ = writeln!(
        w,
        "bound_check: {} (lambda {relation} J(f)/|f|^2)",
        if holds { "pass" } else { "fail" }
    );
    let halvings = res
        .trace
        .meta
        .iter()
        .find(|(k, _)| k == "dt_halvings")
        .map_or("0", |(_, v)| v.as_str());
    let _ = writeln!(w, "dt_halvings: {halvings}");
    if cfg.method == Method::Linear {
        let resid = res.p_star.lin_comb(1.0, &res.u_star, -res.lambda)?.norm() / res.u_star.norm();
        let _ = writeln!(w, "residual: {resid}");
    }
    if cfg.method == Method::Ipm {
        let _ = writeln!(w, "stopping_rule: same affinity rule as the flows");
    }
    for (k, v) in &res.trace.meta {
        let _ = writeln!(w, "trace.{k}: {v}");
    }
    if cfg.validate_result && cfg.method != Method::Linear && res.converged {
        match validate_eigenfunction(&res.u_star, res.lambda, &cfg.functional, &cfg.flow) {
            Ok(v) => {
                for line in v.to_string().lines() {
                    let _ = writeln!(w, "validation.{line}");
                }
            }
            Err(e) => {
                let _ = writeln!(w, "validation.error: {e}");
            }
        }
    }
    Ok(s)
}

fn run_spectral(cfg: &ExperimentConfig, f: &GridField, h: &[(String, String)]) -> Result<RunOutcome> {
    let dir = &cfg.output_dir;
    let sr = spectral_transform(f, &cfg.functional, cfg.spectral_dt, cfg.spectral_t_end, &cfg.flow.inner)?;
    write(
        &dir.join("spectrum.csv"),
        &format!("{}{}", comment_block(h), sr.spectrum_csv()),
    )?;
    write_text(&dir.join("residual.txt"), &sr.residual, h)?;
    let (peak_t, peak_s) = sr
        .times
        .iter()
        .zip(&sr.spectrum)
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, (&t, &s)| if s > acc.1 { (t, s) } else { acc });
    let lambda = estimate_lambda(f, &cfg.functional, &cfg.flow.inner)?;
    let mut s = comment_block(h);
    let _ = writeln!(s, "total_mass: {}", sr.total_mass());
    let _ = writeln!(s, "peak_time: {peak_t}");
    let _ = writeln!(s, "peak_value: {peak_s}");
    let _ = writeln!(s, "input_lambda_estimate: {lambda}");
    let _ = writeln!(
        s,
        "mass_fraction_near_1_over_lambda: {}",
        sr.mass_fraction(0.8 / lambda, 1.2 / lambda)
    );
    let _ = writeln!(s, "residual_norm: {}", sr.residual.norm());
    write(&dir.join("report.txt"), &s)?;
    Ok(RunOutcome {
        status: RunStatus::Converged,
        lambda: Some(lambda),
        output_dir: dir.clone(),
    })
}

fn run_validate(cfg: &ExperimentConfig, f: &GridField, h: &[(String, String)]) -> Result<RunOutcome> {
    let dir = &cfg.output_dir;
    let lambda = match cfg.validate_lambda {
        Some(l) => l,
        None => estimate_lambda(f, &cfg.functional, &cfg.flow.inner)?,
    };
    let v = validate_eigenfunction(f, lambda, &cfg.functional, &cfg.flow)?;
    write(&dir.join("report.txt"), &format!("{}{v}", comment_block(h)))?;
    write(
        &dir.join("curve.csv"),
        &format!("{}{}", comment_block(h), v.curve_csv()),
    )?;
    Ok(RunOutcome {
        status: if v.passed() {
            RunStatus::Converged
        } else {
            RunStatus::NotConverged
        },
        lambda: Some(lambda),
        output_dir: dir.clone(),
    })
}

/// Runs independent experiments on up to `jobs` threads; results keep the
/// input order. Each run is single-threaded, so outputs do not depend on `jobs`.
pub fn run_batch(configs: &[ExperimentConfig], jobs: usize) -> Vec<Result<RunOutcome>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutcome>>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();
    let workers = jobs.clamp(1, configs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let r = run_experiment(cfg);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every config ran"))
        .collect()
}
