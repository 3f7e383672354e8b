//! Regularizers: isotropic total variation and second-order TGV.

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::operators::grad;
use crate::solver::{tgv2_solve, SolverParams};

/// Which one-homogeneous regularizer `J` to use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FunctionalKind {
    Tv,
    Tgv2 { alpha0: f64, alpha1: f64 },
}

impl FunctionalKind {
    pub const DEFAULT_TGV_ALPHA0: f64 = 2.0;
    pub const DEFAULT_TGV_ALPHA1: f64 = 1.0;

    pub fn tgv2_default() -> Self {
        FunctionalKind::Tgv2 {
            alpha0: Self::DEFAULT_TGV_ALPHA0,
            alpha1: Self::DEFAULT_TGV_ALPHA1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FunctionalKind::Tv => Ok(()),
            FunctionalKind::Tgv2 { alpha0, alpha1 } => {
                let ok = |a: f64| a > 0.0 && a.is_finite();
                if ok(alpha0) && ok(alpha1) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "TGV weights must be positive, got alpha0={alpha0}, alpha1={alpha1}"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionalKind::Tv => "TV",
            FunctionalKind::Tgv2 { .. } => "TGV2",
        }
    }
}

impl std::fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FunctionalKind::Tv => write!(f, "TV"),
            FunctionalKind::Tgv2 { alpha0, alpha1 } => {
                write!(f, "TGV2(alpha0={alpha0}, alpha1={alpha1})")
            }
        }
    }
}

/// Sum over sites of the Euclidean magnitude of the forward-difference gradient.
pub fn tv_value(u: &GridField) -> f64 {
    grad(u).magnitudes().iter().sum()
}

/// `min_w α1‖∇u − w‖₁ + α0‖E w‖₁`, solved iteratively.
pub fn tgv2_value(u: &GridField, alpha0: f64, alpha1: f64, params: &SolverParams) -> Result<f64> {
    FunctionalKind::Tgv2 { alpha0, alpha1 }.validate()?;
    let (value, stats) = tgv2_solve(u, alpha0, alpha1, params)?;
    if !stats.converged {
        return Err(Error::MaxItersExceeded {
            iters: stats.iters,
            residual: stats.residual,
        });
    }
    Ok(value)
}

/// `J(u)` for either regularizer.
pub fn evaluate(kind: &FunctionalKind, u: &GridField, params: &SolverParams) -> Result<f64> {
    match *kind {
        FunctionalKind::Tv => Ok(tv_value(u)),
        FunctionalKind::Tgv2 { alpha0, alpha1 } => tgv2_value(u, alpha0, alpha1, params),
    }
}

/// `|J(αu) − |α|J(u)| ≤ 1e-8 (1 + J(u))`.
pub fn one_hom_check<J>(j: J, u: &GridField, alpha: f64) -> bool
where
    J: Fn(&GridField) -> f64,
{
    let ju = j(u);
    let jau = j(&u.scaled(alpha));
    (jau - alpha.abs() * ju).abs() <= 1e-8 * (1.0 + ju)
}

/// `J(v) + 1e-6 (1 + J(v)) ≥ ⟨p, v⟩`.
pub fn subgrad_inequality_check<J>(j: J, p: &GridField, v: &GridField) -> Result<bool>
where
    J: Fn(&GridField) -> f64,
{
    let jv = j(v);
    Ok(jv + 1e-6 * (1.0 + jv) >= p.inner(v)?)
}
