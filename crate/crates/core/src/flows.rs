//! Flows whose steady states are nonlinear eigenfunctions: the forward
//! semi-implicit flow, the explicit inverse flow, the linear-operator flow,
//! and the plain gradient flow `u_t = −p`.

use std::io::Write;

use log::{debug, info, warn};

use crate::analysis::{affinity, rayleigh_lambda, theta_deg};
use crate::error::{Error, Result};
use crate::functional::{evaluate, tv_value, FunctionalKind};
use crate::grid::{null_component, null_project, GridField};
use crate::operators::LinearOperator;
use crate::solver::{
    prox_unchecked, relative_sharpness, PdState, ProxResult, SolverParams, DEFAULT_SHARPNESS,
};

/// Outer-loop settings shared by all flows.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub dt: f64,
    /// Stop once `|θ_{k+1} − θ_k| < eps` (degrees) ...
    pub eps: f64,
    /// ... and `θ_{k+1} ≤ theta_thresh` (degrees).
    pub theta_thresh: f64,
    pub max_outer: usize,
    pub inner: SolverParams,
    /// Inner tolerance once `θ` drops below `tight_below_deg`.
    pub tight_tol: f64,
    pub tight_below_deg: f64,
    /// Subgradients are extracted from a prox whose weight is `sharpness`
    /// times a bound on the Rayleigh quotient of the iterate.
    pub sharpness: f64,
    /// How many times a too-large time step may be halved.
    pub max_halvings: u32,
    /// Relative residual `‖Lu − λu‖/‖u‖` required by the linear flow.
    pub linear_residual_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt: 0.2,
            eps: 0.1,
            theta_thresh: 1.0,
            max_outer: 2000,
            inner: SolverParams::default(),
            tight_tol: 1e-7,
            tight_below_deg: 5.0,
            sharpness: DEFAULT_SHARPNESS,
            max_halvings: 5,
            linear_residual_tol: 1e-3,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        pos("dt", self.dt)?;
        pos("eps", self.eps)?;
        pos("theta_thresh", self.theta_thresh)?;
        pos("tight_tol", self.tight_tol)?;
        pos("sharpness", self.sharpness)?;
        pos("linear_residual_tol", self.linear_residual_tol)?;
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter("max_outer must be >= 1".into()));
        }
        self.inner.validate()
    }

    /// `key=value` pairs echoed into trace headers.
    pub fn describe(&self) -> Vec<(String, String)> {
        vec![
            ("dt".into(), self.dt.to_string()),
            ("eps".into(), self.eps.to_string()),
            ("theta_thresh".into(), self.theta_thresh.to_string()),
            ("theta_unit".into(), "degrees".into()),
            ("max_outer".into(), self.max_outer.to_string()),
            ("inner_tol".into(), self.inner.tol.to_string()),
            ("inner_tight_tol".into(), self.tight_tol.to_string()),
            ("inner_max_iters".into(), self.inner.max_iters.to_string()),
            ("sharpness".into(), self.sharpness.to_string()),
        ]
    }
}

/// One outer iteration of a flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub t: f64,
    pub j: f64,
    pub norm_sq: f64,
    pub affinity: f64,
    pub theta_deg: f64,
    pub lambda_est: f64,
}

/// Per-iteration history of a flow plus `key=value` metadata.
#[derive(Clone, Debug, Default)]
pub struct FlowTrace {
    pub meta: Vec<(String, String)>,
    pub records: Vec<TraceRecord>,
}

impl FlowTrace {
    pub const HEADER: &'static str = "k,t,J,norm_sq,affinity,theta_deg,lambda_est";

    pub fn new(meta: Vec<(String, String)>) -> Self {
        FlowTrace {
            meta,
            records: Vec::new(),
        }
    }

    fn push(&mut self, r: TraceRecord) {
        debug_assert!(self.records.last().is_none_or(|l| l.k < r.k));
        self.records.push(r);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{}", Self::HEADER)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.k, r.t, r.j, r.norm_sq, r.affinity, r.theta_deg, r.lambda_est
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace is ASCII")
    }
}

/// Limit of a flow run.
#[derive(Clone, Debug)]
pub struct EigenResult {
    pub u_star: GridField,
    /// Subgradient (or `Lu` for the linear flow) paired with `u_star`.
    pub p_star: GridField,
    pub lambda: f64,
    pub affinity: f64,
    pub converged: bool,
    pub trace: FlowTrace,
}

fn record(k: usize, t: f64, j: f64, u: &GridField, aff: f64) -> TraceRecord {
    TraceRecord {
        k,
        t,
        j,
        norm_sq: u.norm().powi(2),
        affinity: aff,
        theta_deg: theta_deg(aff),
        lambda_est: rayleigh_lambda(u, j),
    }
}

fn stop_rule(cfg: &FlowConfig, theta_prev: f64, theta: f64) -> bool {
    (theta - theta_prev).abs() < cfg.eps && theta <= cfg.theta_thresh
}

/// Prox solve that retries once with a larger budget and tolerates a
/// residual within ten times the target.
pub(crate) fn prox_robust(
    kind: &FunctionalKind,
    f: &GridField,
    alpha: f64,
    params: &SolverParams,
    warm: Option<&PdState>,
) -> Result<ProxResult> {
    let r = prox_unchecked(kind, f, alpha, params, warm)?;
    if r.stats.converged {
        return Ok(r);
    }
    let more = params.with_max_iters(params.max_iters.saturating_mul(4));
    let r = prox_unchecked(kind, f, alpha, &more, Some(r.state()))?;
    if r.stats.converged {
        return Ok(r);
    }
    if r.residual <= 10.0 * params.tol {
        warn!(
            "inner solve stopped at residual {:.2e} (target {:.1e}) after {} iterations",
            r.residual, params.tol, r.iters
        );
        return Ok(r);
    }
    Err(Error::MaxItersExceeded {
        iters: r.iters,
        residual: r.residual,
    })
}

fn forward_coeffs(u_norm: f64, p_norm: f64, dt: f64) -> Result<(f64, f64)> {
    if dt >= u_norm {
        return Err(Error::StepTooLarge { dt, norm: u_norm });
    }
    if !(p_norm > 0.0) {
        return Err(Error::ZeroSubgradient { norm: p_norm });
    }
    let shrink = 1.0 - dt / u_norm;
    Ok(((p_norm / dt) * shrink, 1.0 / shrink))
}

fn forward_step_inner(
    u_k: &GridField,
    p_k: &GridField,
    kind: &FunctionalKind,
    dt: f64,
    params: &SolverParams,
    warm: Option<&PdState>,
) -> Result<ProxResult> {
    let (alpha, grow) = forward_coeffs(u_k.norm(), p_k.norm(), dt)?;
    let f_tilde = u_k.scaled(grow);
    prox_robust(kind, &f_tilde, alpha, params, warm)
}

/// One semi-implicit step: `u_{k+1} = prox` of `u_k/(1 − Δt/‖u_k‖)` with weight
/// `(‖p_k‖/Δt)(1 − Δt/‖u_k‖)`; returns `(u_{k+1}, p_{k+1})`.
pub fn forward_step(
    u_k: &GridField,
    p_k: &GridField,
    kind: &FunctionalKind,
    cfg: &FlowConfig,
) -> Result<(GridField, GridField)> {
    cfg.validate()?;
    let r = forward_step_inner(u_k, p_k, kind, cfg.dt, &cfg.inner, None)?;
    Ok((r.u, r.p))
}

/// Observer invoked after every outer iteration with the record and iterate.
pub type Observer<'a> = &'a mut dyn FnMut(&TraceRecord, &GridField);

fn base_meta(method: &str, kind: &FunctionalKind, cfg: &FlowConfig) -> Vec<(String, String)> {
    let mut meta = vec![
        ("method".to_string(), method.to_string()),
        ("functional".to_string(), kind.name().to_string()),
    ];
    if let FunctionalKind::Tgv2 { alpha0, alpha1 } = kind {
        meta.push(("alpha0".into(), alpha0.to_string()));
        meta.push(("alpha1".into(), alpha1.to_string()));
    }
    meta.extend(cfg.describe());
    meta
}

fn checked_start(f: &GridField, kind: &FunctionalKind) -> Result<GridField> {
    let u0 = null_project(f, kind);
    let scale = f.norm().max(f64::MIN_POSITIVE);
    if u0.norm() <= 1e-12 * scale {
        return Err(Error::DegenerateInput);
    }
    Ok(u0)
}

/// Projects out the null-space component, which the inner solver only keeps
/// at zero up to its tolerance.
fn recenter(u: GridField, kind: &FunctionalKind, k: usize) -> GridField {
    let c = null_component(&u, kind);
    if c.norm() > 1e-6 * u.norm() {
        info!("iteration {k}: re-centering, null-space component {:.3e}", c.norm());
    }
    u.sub(&c).expect("same shape")
}

fn j_of(kind: &FunctionalKind, u: &GridField, r: &ProxResult) -> f64 {
    match kind {
        FunctionalKind::Tv => tv_value(u),
        FunctionalKind::Tgv2 { .. } => r.reg_value,
    }
}

/// Forward flow from `f` until the affinity of `(u, p)` settles within
/// `theta_thresh` degrees.
pub fn run_forward(f: &GridField, kind: &FunctionalKind, cfg: &FlowConfig) -> Result<EigenResult> {
    run_forward_observed(f, kind, cfg, &mut |_, _| {})
}

/// [`run_forward`] with a per-iteration observer.
pub fn run_forward_observed(
    f: &GridField,
    kind: &FunctionalKind,
    cfg: &FlowConfig,
    observer: Observer<'_>,
) -> Result<EigenResult> {
    cfg.validate()?;
    kind.validate()?;
    let mut u = checked_start(f, kind)?;
    let p0 = prox_robust(kind, &u, relative_sharpness(kind, &u, cfg.sharpness), &cfg.inner, None)?;
    let mut p = p0.p.clone();
    if p.norm() == 0.0 {
        return Err(Error::DegenerateInput);
    }
    let mut j = j_of(kind, &u, &p0);
    let mut trace = FlowTrace::new(base_meta("forward", kind, cfg));
    let mut aff = affinity(&u, &p)?;
    let mut theta = theta_deg(aff);
    let rec = record(0, 0.0, j, &u, aff);
    observer(&rec, &u);
    trace.push(rec);

    let mut dt = cfg.dt;
    let mut halvings = 0;
    let mut t = 0.0;
    let mut warm: Option<PdState> = None;
    let mut prev_input_norm = 0.0;
    let mut converged = false;

    for k in 1..=cfg.max_outer {
        let tol = if theta < cfg.tight_below_deg {
            cfg.tight_tol.min(cfg.inner.tol)
        } else {
            cfg.inner.tol
        };
        let params = cfg.inner.with_tol(tol);
        let un = u.norm();
        if dt >= un {
            if halvings >= cfg.max_halvings {
                return Err(Error::StepTooLarge { dt, norm: un });
            }
            while dt >= un && halvings < cfg.max_halvings {
                dt *= 0.5;
                halvings += 1;
                info!("iteration {k}: time step halved to {dt} (norm {un:.4})");
            }
            if dt >= un {
                return Err(Error::StepTooLarge { dt, norm: un });
            }
        }
        // The prox input scales with ‖u‖; rescale the warm primal accordingly.
        let input_norm = un / (1.0 - dt / un);
        if let Some(w) = warm.as_mut() {
            if prev_input_norm > 0.0 {
                w.scale_primal(input_norm / prev_input_norm);
            }
        }
        let r = forward_step_inner(&u, &p, kind, dt, &params, warm.as_ref())?;
        debug!("iteration {k}: {} inner iterations, residual {:.2e}", r.iters, r.residual);
        prev_input_norm = input_norm;
        t += dt;
        let u_next = recenter(r.u.clone(), kind, k);
        j = j_of(kind, &u_next, &r);
        let p_next = r.p.clone();
        warm = Some(r.state().clone());
        if p_next.norm() == 0.0 {
            return Err(Error::ZeroSubgradient { norm: 0.0 });
        }
        let aff_next = affinity(&u_next, &p_next)?;
        let theta_next = theta_deg(aff_next);
        let rec = record(k, t, j, &u_next, aff_next);
        observer(&rec, &u_next);
        trace.push(rec);
        u = u_next;
        p = p_next;
        aff = aff_next;
        let stop = stop_rule(cfg, theta, theta_next);
        theta = theta_next;
        if stop {
            converged = true;
            break;
        }
    }
    if halvings > 0 {
        trace.meta.push(("dt_halvings".into(), halvings.to_string()));
        trace.meta.push(("dt_final".into(), dt.to_string()));
    }
    let j_final = evaluate(kind, &u, &cfg.inner).unwrap_or(j);
    let lambda = rayleigh_lambda(&u, j_final);
    trace.meta.push(("converged".into(), converged.to_string()));
    Ok(EigenResult {
        u_star: u,
        p_star: p,
        lambda,
        affinity: aff,
        converged,
        trace,
    })
}

fn inverse_update(u_k: &GridField, p_k: &GridField, dt: f64) -> Result<GridField> {
    let pn = p_k.norm();
    if pn <= 1e-12 {
        return Err(Error::ZeroSubgradient { norm: pn });
    }
    let un = u_k.norm();
    // u + Δt(−u/‖u‖ + p/‖p‖)
    let a = u_k.scaled(1.0 - dt / un);
    a.lin_comb(1.0, p_k, dt / pn)
}

/// One explicit inverse step `u + Δt(−u/‖u‖ + p/‖p‖)` with `p` from
/// [`subgradient_at`](crate::solver::subgradient_at).
pub fn inverse_step(u_k: &GridField, kind: &FunctionalKind, cfg: &FlowConfig) -> Result<GridField> {
    cfg.validate()?;
    if u_k.norm() == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let alpha = relative_sharpness(kind, u_k, cfg.sharpness);
    let r = prox_robust(kind, u_k, alpha, &cfg.inner, None)?;
    inverse_update(u_k, &r.p, cfg.dt)
}

/// Explicit inverse flow; subgradients come from the sharp prox.
pub fn run_inverse(f: &GridField, kind: &FunctionalKind, cfg: &FlowConfig) -> Result<EigenResult> {
    run_inverse_observed(f, kind, cfg, &mut |_, _| {})
}

/// [`run_inverse`] with a per-iteration observer.
pub fn run_inverse_observed(
    f: &GridField,
    kind: &FunctionalKind,
    cfg: &FlowConfig,
    observer: Observer<'_>,
) -> Result<EigenResult> {
    cfg.validate()?;
    kind.validate()?;
    let mut u = checked_start(f, kind)?;
    let mut meta = base_meta("inverse", kind, cfg);
    meta.push(("subgradient".into(), "sharp_prox".into()));
    let mut trace = FlowTrace::new(meta);
    let mut warm: Option<PdState> = None;
    let mut j_last: Option<f64> = None;
    let mut theta_prev = f64::NAN;
    let mut converged = false;
    let mut t = 0.0;
    let mut k = 0;
    loop {
        let params = if theta_prev < cfg.tight_below_deg {
            cfg.inner.with_tol(cfg.tight_tol.min(cfg.inner.tol))
        } else {
            cfg.inner
        };
        // The TGV bound can be loose; J moves little per explicit step, so the
        // last value sets the scale instead.
        let alpha = match (kind, j_last) {
            (FunctionalKind::Tgv2 { .. }, Some(jl)) => cfg.sharpness * rayleigh_lambda(&u, jl),
            _ => relative_sharpness(kind, &u, cfg.sharpness),
        };
        let r = prox_robust(kind, &u, alpha, &params, warm.as_ref())?;
        let p = r.p.clone();
        let j = j_of(kind, &u, &r);
        j_last = Some(j).filter(|v| *v > 0.0);
        warm = Some(r.state().clone());
        if p.norm() <= 1e-12 {
            return Err(Error::ZeroSubgradient { norm: p.norm() });
        }
        let aff = affinity(&u, &p)?;
        let theta = theta_deg(aff);
        let rec = record(k, t, j, &u, aff);
        observer(&rec, &u);
        trace.push(rec);
        if k > 0 && stop_rule(cfg, theta_prev, theta) {
            converged = true;
        }
        if converged || k == cfg.max_outer {
            let j_final = evaluate(kind, &u, &cfg.inner).unwrap_or(j);
            trace.meta.push(("converged".into(), converged.to_string()));
            return Ok(EigenResult {
                lambda: rayleigh_lambda(&u, j_final),
                u_star: u,
                p_star: p,
                affinity: aff,
                converged,
                trace,
            });
        }
        theta_prev = theta;
        let un = u.norm();
        u = recenter(inverse_update(&u, &p, cfg.dt)?, kind, k + 1);
        if let Some(w) = warm.as_mut() {
            w.scale_primal(u.norm() / un);
        }
        t += cfg.dt;
        k += 1;
    }
}

/// Implicit Euler for `u_t = −p`: each step is `prox(u_k, 1/dt)`. Returns
/// `(t, u(t))` for every step, starting with `(0, f)`.
pub fn run_gradient_flow(
    f: &GridField,
    kind: &FunctionalKind,
    dt: f64,
    t_end: f64,
    inner: &SolverParams,
) -> Result<Vec<(f64, GridField)>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end must be non-negative, got {t_end}")));
    }
    kind.validate()?;
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, f.clone()));
    let floor = 1e-9 * f.norm();
    let mut u = f.clone();
    let mut warm: Option<PdState> = None;
    for k in 1..=steps {
        let moving = u.sub(&null_component(&u, kind))?;
        if moving.norm() > floor {
            let r = prox_robust(kind, &u, 1.0 / dt, inner, warm.as_ref())?;
            u = r.u.clone();
            warm = Some(r.state().clone());
        } else {
            // prox leaves null-space elements fixed
            u = null_component(&u, kind);
        }
        out.push((k as f64 * dt, u.clone()));
    }
    Ok(out)
}

/// Explicit Euler for `u_t = u/‖u‖ − Lu/‖Lu‖`.
///
/// The step is capped at `‖Lu‖/‖L‖` so that the explicit scheme stays stable
/// for stiff operators.
pub fn run_linear(f: &GridField, op: &dyn LinearOperator, cfg: &FlowConfig) -> Result<EigenResult> {
    run_linear_observed(f, op, cfg, &mut |_, _| {})
}

/// [`run_linear`] with a per-iteration observer.
pub fn run_linear_observed(
    f: &GridField,
    op: &dyn LinearOperator,
    cfg: &FlowConfig,
    observer: Observer<'_>,
) -> Result<EigenResult> {
    cfg.validate()?;
    let n = f.len() as f64;
    if f.sum().abs() > 1e-8 * f.norm() * n.sqrt() {
        return Err(Error::InvalidParameter(
            "linear flow input must have zero mean".into(),
        ));
    }
    if f.norm() == 0.0 {
        return Err(Error::DegenerateInput);
    }
    let bound = op.norm_bound(f.shape());
    let mut meta = vec![("method".to_string(), "linear".to_string())];
    meta.extend(cfg.describe());
    let mut trace = FlowTrace::new(meta);
    let mut u = f.clone();
    let mut theta_prev = f64::NAN;
    let mut t = 0.0;
    let mut k = 0;
    loop {
        let lu = op.apply(&u);
        let ln = lu.norm();
        if ln <= 1e-12 {
            return Err(Error::ZeroImage { norm: ln });
        }
        let un = u.norm();
        let aff = affinity(&u, &lu)?;
        let theta = theta_deg(aff);
        let lambda = u.inner(&lu)? / (un * un);
        let resid = lu.lin_comb(1.0, &u, -lambda)?.norm() / un;
        let rec = TraceRecord {
            k,
            t,
            j: u.inner(&lu)?,
            norm_sq: un * un,
            affinity: aff,
            theta_deg: theta,
            lambda_est: lambda,
        };
        observer(&rec, &u);
        trace.push(rec);
        let converged =
            k > 0 && stop_rule(cfg, theta_prev, theta) && resid <= cfg.linear_residual_tol;
        if converged || k == cfg.max_outer {
            trace.meta.push(("converged".into(), converged.to_string()));
            return Ok(EigenResult {
                u_star: u,
                p_star: lu,
                lambda,
                affinity: aff,
                converged,
                trace,
            });
        }
        theta_prev = theta;
        let h = cfg.dt.min(ln / bound);
        u = u.scaled(1.0 + h / un).lin_comb(1.0, &lu, -h / ln)?;
        t += h;
        k += 1;
    }
}
