//! Affinity measure, eigenvalue estimates, eigenpair validation and the
//! spectral TV transform.

use std::fmt;

use crate::error::{Error, Result};
use crate::flows::{run_gradient_flow, FlowConfig};
use crate::functional::{evaluate, FunctionalKind};
use crate::grid::GridField;
use crate::solver::{prox, subgradient_at, SolverParams};

/// `|⟨u, Tu⟩| / (‖u‖‖Tu‖)`.
pub fn affinity(u: &GridField, tu: &GridField) -> Result<f64> {
    let nu = u.norm();
    let nt = tu.norm();
    if nu == 0.0 || nt == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((u.inner(tu)?.abs() / (nu * nt)).min(1.0))
}

/// Angle in degrees whose cosine is `a` (clamped to `[0, 1]`).
pub fn theta_deg(a: f64) -> f64 {
    a.clamp(0.0, 1.0).acos().to_degrees()
}

/// `J(u)/‖u‖²`.
pub fn rayleigh_lambda(u: &GridField, j_val: f64) -> f64 {
    let n2 = u.norm().powi(2);
    if n2 > 0.0 {
        j_val / n2
    } else {
        0.0
    }
}

/// `‖p‖/‖u‖`, which equals the Rayleigh quotient for an exact eigenpair.
pub fn subgradient_lambda(u: &GridField, p: &GridField) -> f64 {
    let nu = u.norm();
    if nu > 0.0 {
        p.norm() / nu
    } else {
        0.0
    }
}

/// Tolerances used by [`validate_eigenfunction`].
pub const CORRELATION_MIN: f64 = 0.99;
pub const EXTINCTION_REL_TOL: f64 = 0.10;
pub const SHRINKAGE_REL_TOL: f64 = 0.02;
pub const SUBGRADIENT_REL_TOL: f64 = 0.01;
/// `‖u(t)‖/‖f‖` below which the gradient flow counts as extinct.
pub const EXTINCTION_LEVEL: f64 = 0.01;

/// Outcome of [`validate_eigenfunction`].
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub lambda: f64,
    /// Set when the claimed eigenvalue is not positive and finite.
    pub invalid_claim: bool,
    /// `(t, ⟨u(t), f⟩/(‖u(t)‖‖f‖), ‖u(t)‖/‖f‖)` along the gradient flow.
    pub curve: Vec<(f64, f64, f64)>,
    /// Smallest correlation over `t ≤ 0.9/λ`.
    pub min_correlation: f64,
    /// First time with `‖u(t)‖/‖f‖ ≤ 0.01`, if reached.
    pub extinction_time: Option<f64>,
    pub shrinkage_ratio: f64,
    pub affinity: f64,
    pub subgradient_residual: f64,
    pub correlation_ok: bool,
    pub extinction_ok: bool,
    pub shrinkage_ok: bool,
    pub subgradient_ok: bool,
}

impl ValidationReport {
    fn invalid(lambda: f64) -> Self {
        ValidationReport {
            lambda,
            invalid_claim: true,
            curve: Vec::new(),
            min_correlation: f64::NAN,
            extinction_time: None,
            shrinkage_ratio: f64::NAN,
            affinity: f64::NAN,
            subgradient_residual: f64::NAN,
            correlation_ok: false,
            extinction_ok: false,
            shrinkage_ok: false,
            subgradient_ok: false,
        }
    }

    pub fn passed(&self) -> bool {
        !self.invalid_claim
            && self.correlation_ok
            && self.extinction_ok
            && self.shrinkage_ok
            && self.subgradient_ok
    }

    /// Gradient-flow curve as CSV `t,correlation,norm_ratio`.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("t,correlation,norm_ratio\n");
        for (t, c, r) in &self.curve {
            s.push_str(&format!("{t},{c},{r}\n"));
        }
        s
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lambda: {}", self.lambda)?;
        if self.invalid_claim {
            writeln!(f, "status: invalid claim (lambda must be positive)")?;
            return Ok(());
        }
        writeln!(f, "expected_extinction_time: {}", 1.0 / self.lambda)?;
        match self.extinction_time {
            Some(t) => writeln!(f, "extinction_time: {t}")?,
            None => writeln!(f, "extinction_time: not reached")?,
        }
        writeln!(f, "extinction_check: {}", verdict(self.extinction_ok))?;
        writeln!(f, "min_correlation: {}", self.min_correlation)?;
        writeln!(f, "correlation_check: {}", verdict(self.correlation_ok))?;
        writeln!(f, "shrinkage_ratio: {}", self.shrinkage_ratio)?;
        writeln!(f, "shrinkage_check: {}", verdict(self.shrinkage_ok))?;
        writeln!(f, "affinity: {}", self.affinity)?;
        writeln!(f, "theta_deg: {}", theta_deg(self.affinity))?;
        writeln!(f, "subgradient_residual: {}", self.subgradient_residual)?;
        writeln!(f, "subgradient_check: {}", verdict(self.subgradient_ok))?;
        writeln!(f, "status: {}", if self.passed() { "pass" } else { "fail" })
    }
}

/// Checks a claimed eigenpair `(u, λ)` three ways: the gradient flow should
/// shrink `u` linearly to zero at `t = 1/λ`, the prox at `α = 2λ` should
/// halve it, and a computed subgradient should be close to `λu`.
pub fn validate_eigenfunction(
    u: &GridField,
    lambda: f64,
    kind: &FunctionalKind,
    cfg: &FlowConfig,
) -> Result<ValidationReport> {
    if !(lambda > 0.0 && lambda.is_finite()) || u.norm() == 0.0 {
        return Ok(ValidationReport::invalid(lambda));
    }
    let inner = &cfg.inner;
    let un = u.norm();

    // (a) gradient flow, run a little past the predicted extinction time
    let t_ext = 1.0 / lambda;
    let dt = t_ext / 100.0;
    let traj = run_gradient_flow(u, kind, dt, 1.3 * t_ext, inner)?;
    let mut curve = Vec::with_capacity(traj.len());
    let mut min_corr = 1.0f64;
    let mut extinction = None;
    for (t, ut) in &traj {
        let ratio = ut.norm() / un;
        let corr = ut.cosine(u)?;
        curve.push((*t, corr, ratio));
        if *t <= 0.9 * t_ext + 1e-12 {
            min_corr = min_corr.min(corr);
        }
        if extinction.is_none() && ratio <= EXTINCTION_LEVEL {
            extinction = Some(*t);
        }
    }
    let extinction_ok = extinction
        .map(|t| (t - t_ext).abs() <= EXTINCTION_REL_TOL * t_ext)
        .unwrap_or(false);

    // (b) prox shrinkage at α = 2λ: expected factor 1 − λ/α = 1/2
    let pr = prox(kind, u, 2.0 * lambda, inner)?;
    let shrinkage_ratio = pr.u.inner(u)? / (un * un);
    let shrinkage_ok = (shrinkage_ratio - 0.5).abs() <= SHRINKAGE_REL_TOL * 0.5;

    // (c) affinity and subgradient residual, prox weight relative to λ
    let p = subgradient_at(kind, u, cfg.sharpness * lambda.max(f64::MIN_POSITIVE), inner)?;
    let aff = if p.norm() > 0.0 { affinity(u, &p)? } else { 0.0 };
    let lu = u.scaled(lambda);
    let subgradient_residual = p.rel_dist(&lu)?;

    Ok(ValidationReport {
        lambda,
        invalid_claim: false,
        curve,
        min_correlation: min_corr,
        extinction_time: extinction,
        shrinkage_ratio,
        affinity: aff,
        subgradient_residual,
        correlation_ok: min_corr >= CORRELATION_MIN,
        extinction_ok,
        shrinkage_ok,
        subgradient_ok: subgradient_residual <= SUBGRADIENT_REL_TOL,
    })
}

/// Estimates `λ` for `u` from its regularizer value.
pub fn estimate_lambda(u: &GridField, kind: &FunctionalKind, params: &SolverParams) -> Result<f64> {
    Ok(rayleigh_lambda(u, evaluate(kind, u, params)?))
}

/// Spectral decomposition `φ(t) = t·u_tt(t)` of the gradient flow.
#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub dt: f64,
    pub times: Vec<f64>,
    pub phi: Vec<GridField>,
    /// `S(t) = ‖φ(t)‖₁`.
    pub spectrum: Vec<f64>,
    /// `f − Σ φ_k Δt`.
    pub residual: GridField,
    pub input: GridField,
}

impl SpectralResult {
    /// CSV `t,S`.
    pub fn spectrum_csv(&self) -> String {
        let mut s = String::from("t,S\n");
        for (t, v) in self.times.iter().zip(&self.spectrum) {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }

    /// `Σ S(t_k) Δt`.
    pub fn total_mass(&self) -> f64 {
        self.spectrum.iter().sum::<f64>() * self.dt
    }

    /// Fraction of spectral mass with `t` in `[lo, hi]`.
    pub fn mass_fraction(&self, lo: f64, hi: f64) -> f64 {
        let total = self.total_mass();
        if total == 0.0 {
            return 0.0;
        }
        let inside: f64 = self
            .times
            .iter()
            .zip(&self.spectrum)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, s)| s)
            .sum();
        inside * self.dt / total
    }
}

/// Runs the TV gradient flow from `f` to `t_end` and differentiates it twice in time.
pub fn spectral_transform(
    f: &GridField,
    kind: &FunctionalKind,
    dt: f64,
    t_end: f64,
    inner: &SolverParams,
) -> Result<SpectralResult> {
    let traj = run_gradient_flow(f, kind, dt, t_end, inner)?;
    let m = traj.len();
    let shape = f.shape();
    let n = shape.len();
    let mut times = Vec::with_capacity(m);
    let mut phi = Vec::with_capacity(m);
    let mut spectrum = Vec::with_capacity(m);
    let inv = 1.0 / (dt * dt);
    for k in 0..m {
        let t = traj[k].0;
        // centered where possible, one-sided second differences at the ends
        let (a, b, c) = if m < 3 {
            (0, 0, 0)
        } else if k == 0 {
            (0, 1, 2)
        } else if k == m - 1 {
            (m - 3, m - 2, m - 1)
        } else {
            (k - 1, k, k + 1)
        };
        let (ua, ub, uc) = (traj[a].1.values(), traj[b].1.values(), traj[c].1.values());
        let vals: Vec<f64> = (0..n)
            .map(|i| t * (ua[i] - 2.0 * ub[i] + uc[i]) * inv)
            .collect();
        let field = GridField::new(shape, vals)?;
        spectrum.push(field.values().iter().map(|v| v.abs()).sum());
        times.push(t);
        phi.push(field);
    }
    let mut acc = vec![0.0; n];
    for p in &phi {
        acc.iter_mut().zip(p.values()).for_each(|(a, v)| *a += v * dt);
    }
    let residual: Vec<f64> = f.values().iter().zip(&acc).map(|(fi, a)| fi - a).collect();
    Ok(SpectralResult {
        dt,
        times,
        phi,
        spectrum,
        residual: GridField::new(shape, residual)?,
        input: f.clone(),
    })
}

/// `Σ φ_k H(t_k) Δt`, plus the residual when `include_residual` (the low-pass
/// convention `H(t > t_end) = 1`). With the residual included the result is
/// evaluated as `f − Σ φ_k (1 − H(t_k)) Δt`, so `H ≡ 1` returns `f` exactly.
pub fn spectral_filter<H>(sr: &SpectralResult, h: H, include_residual: bool) -> GridField
where
    H: Fn(f64) -> f64,
{
    let shape = sr.residual.shape();
    let (mut acc, sign, weight): (Vec<f64>, f64, Box<dyn Fn(f64) -> f64>) = if include_residual {
        (sr.input.values().to_vec(), -1.0, Box::new(|t| 1.0 - h(t)))
    } else {
        (vec![0.0; shape.len()], 1.0, Box::new(&h))
    };
    for (t, p) in sr.times.iter().zip(&sr.phi) {
        let w = weight(*t) * sr.dt;
        if w != 0.0 {
            acc.iter_mut()
                .zip(p.values())
                .for_each(|(a, v)| *a += sign * w * v);
        }
    }
    GridField::new(shape, acc).unwrap_or_else(|_| GridField::zeros(shape))
}
