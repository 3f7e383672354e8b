//! First-order primal-dual solver (Chambolle–Pock) for the saddle problems
//! used throughout the crate:
//!
//! * the prox problem `min_v J(v) + (α/2)‖f − v‖²`, which also yields the
//!   subgradient `p = α(f − v) ∈ ∂J(v)`;
//! * the ball-constrained inverse-power subproblem
//!   `min_{‖v‖≤1} J(v) − λ⟨v, u⟩`;
//! * evaluation of TGV², `min_w α1‖∇u − w‖₁ + α0‖E(w)‖₁`.
//!
//! Primal and dual states are flat vectors. For TGV² the primal is `[v, w]`
//! and the dual `[z, t]`; the tensor part is stored with its off-diagonal
//! entry scaled by √2 so Euclidean norms of the flat vector are Frobenius
//! norms.

use crate::error::{Error, Result};
use crate::functional::{tv_value, FunctionalKind};
use crate::grid::{dot, norm_sq, GridField, Shape};
use crate::operators::{div2_into, div_into, grad_into, sym_grad_into, TensorLayout};

const CHECK_EVERY: usize = 10;
const CHECKPOINT_EVERY: usize = 50;
// σ/τ = (c·α)²: the dual variable is dimensionless and the primal carries the
// units of f, so the ratio must scale like α². The constants were tuned on
// square indicators of several sizes.
const TV_BALANCE: f64 = 30.0;
const TGV_BALANCE: f64 = 100.0;
const TGV_VALUE_BALANCE: f64 = 10.0;

/// Parameters of the inner primal-dual iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub max_iters: usize,
    /// Relative tolerance on both the iterate change and the optimality residual.
    pub tol: f64,
    /// Safety factor `r` in `τσL² = r² ≤ 1`.
    pub step_ratio: f64,
    /// Extrapolation weight θ in `x̄ = x + θ(x − x_prev)`.
    pub over_relaxation: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            max_iters: 50_000,
            tol: 1e-6,
            step_ratio: 0.99,
            over_relaxation: 1.0,
        }
    }
}

impl SolverParams {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if !(self.step_ratio > 0.0 && self.step_ratio <= 1.0) {
            return Err(Error::InvalidParameter("step_ratio must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.over_relaxation) {
            return Err(Error::InvalidParameter(
                "over_relaxation must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Primal/dual iterate pair, reusable as a warm start for a problem of the
/// same kind and shape.
#[derive(Clone, Debug)]
pub struct PdState {
    shape: Shape,
    tgv: bool,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PdState {
    fn fits(&self, shape: Shape, tgv: bool) -> bool {
        self.shape == shape && self.tgv == tgv
    }

    /// Rescales the primal part; the prox of `s·f` with weight `α/s` is `s`
    /// times the prox of `f` with the same dual variable.
    pub(crate) fn scale_primal(&mut self, s: f64) {
        if s.is_finite() && s > 0.0 {
            self.x.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Dual variable of the first-order term (`z`), component-major.
    pub fn dual_gradient_part(&self) -> &[f64] {
        &self.y[..self.shape.vec_comps() * self.shape.len()]
    }
}

/// Diagnostics of one solver run.
#[derive(Clone, Debug, Default)]
pub struct SolverStats {
    pub iters: usize,
    pub residual: f64,
    pub converged: bool,
    /// Length of the last step in the solver's metric, sampled every 50 iterations.
    pub checkpoints: Vec<f64>,
}

/// Result of [`prox`].
#[derive(Clone, Debug)]
pub struct ProxResult {
    /// Minimizer.
    pub u: GridField,
    /// Subgradient `α(f − u)`.
    pub p: GridField,
    pub iters: usize,
    pub residual: f64,
    /// `J(u) + (α/2)‖f − u‖²` at the returned iterate.
    pub objective: f64,
    /// `J(u)`; for TGV² the regularizer evaluated with the solver's auxiliary field.
    pub reg_value: f64,
    pub stats: SolverStats,
    state: PdState,
}

impl ProxResult {
    pub fn state(&self) -> &PdState {
        &self.state
    }

    /// Largest per-site magnitude of the first-order dual variable.
    pub fn dual_sup_norm(&self) -> f64 {
        let shape = self.state.shape;
        let n = shape.len();
        let c = shape.vec_comps();
        let z = self.state.dual_gradient_part();
        (0..n)
            .map(|k| (0..c).map(|q| z[q * n + k].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

trait Saddle {
    fn primal_len(&self) -> usize;
    fn dual_len(&self) -> usize;
    fn k(&self, x: &[f64], out: &mut [f64]);
    fn kt(&self, y: &[f64], out: &mut [f64]);
    fn prox_primal(&self, x: &mut [f64], tau: f64);
    fn prox_dual(&self, y: &mut [f64], sigma: f64);
    fn op_norm_sq(&self) -> f64;
    /// `sqrt(σ/τ)`; balances the step sizes to the problem's natural scaling.
    fn balance(&self) -> f64;
    /// Floors for the relative primal change, primal residual and dual residual.
    fn scales(&self) -> (f64, f64, f64);
}

/// Bound on `‖[[A, -I], [0, B]]‖²` from `‖A‖² ≤ a`, `‖B‖² ≤ b`.
fn block_bound(a: f64, b: f64) -> f64 {
    let d = 1.0 + b;
    0.5 * (a + d + ((a - d).powi(2) + 4.0 * a).sqrt())
}

fn grad_norm_sq(shape: Shape) -> f64 {
    if shape.is_1d() {
        4.0
    } else {
        8.0
    }
}

/// Shared linear part for TV (`K = ∇`) and TGV² (`K(v, w) = (∇v − w, E w)`).
struct RegOps {
    shape: Shape,
    kind: FunctionalKind,
}

impl RegOps {
    fn n(&self) -> usize {
        self.shape.len()
    }

    fn vlen(&self) -> usize {
        self.shape.vec_comps() * self.n()
    }

    fn tgv(&self) -> Option<(f64, f64)> {
        match self.kind {
            FunctionalKind::Tv => None,
            FunctionalKind::Tgv2 { alpha0, alpha1 } => Some((alpha0, alpha1)),
        }
    }

    fn primal_len(&self) -> usize {
        match self.tgv() {
            None => self.n(),
            Some(_) => self.n() + self.vlen(),
        }
    }

    fn dual_len(&self) -> usize {
        match self.tgv() {
            None => self.vlen(),
            Some(_) => self.vlen() + self.shape.sym_comps() * self.n(),
        }
    }

    fn k(&self, x: &[f64], out: &mut [f64]) {
        let (n, vl) = (self.n(), self.vlen());
        grad_into(self.shape, &x[..n], &mut out[..vl]);
        if self.tgv().is_some() {
            let w = &x[n..];
            out[..vl].iter_mut().zip(w).for_each(|(o, wi)| *o -= wi);
            sym_grad_into(self.shape, w, TensorLayout::Isometric, &mut out[vl..]);
        }
    }

    fn kt(&self, y: &[f64], out: &mut [f64]) {
        let (n, vl) = (self.n(), self.vlen());
        div_into(self.shape, &y[..vl], &mut out[..n]);
        out[..n].iter_mut().for_each(|v| *v = -*v);
        if self.tgv().is_some() {
            let wout = &mut out[n..];
            div2_into(self.shape, &y[vl..], TensorLayout::Isometric, wout);
            wout.iter_mut().zip(&y[..vl]).for_each(|(o, z)| *o = -*z - *o);
        }
    }

    fn project_dual(&self, y: &mut [f64]) {
        let n = self.n();
        let vl = self.vlen();
        let (r1, r0) = match self.tgv() {
            None => (1.0, 0.0),
            Some((a0, a1)) => (a1, a0),
        };
        project_balls(&mut y[..vl], n, self.shape.vec_comps(), r1);
        if self.tgv().is_some() {
            project_balls(&mut y[vl..], n, self.shape.sym_comps(), r0);
        }
    }

    fn op_norm_sq(&self) -> f64 {
        let g = grad_norm_sq(self.shape);
        match self.tgv() {
            None => g,
            // ‖E‖² obeys the same bound as ‖∇‖² for these stencils.
            Some(_) => block_bound(g, g),
        }
    }

    /// Regularizer value of the primal state `x`.
    fn value(&self, x: &[f64]) -> f64 {
        let n = self.n();
        match self.tgv() {
            None => {
                let u = GridField::from_raw(self.shape, x[..n].to_vec());
                tv_value(&u)
            }
            Some((a0, a1)) => {
                let mut kx = vec![0.0; self.dual_len()];
                self.k(x, &mut kx);
                let vl = self.vlen();
                a1 * sum_site_norms(&kx[..vl], n, self.shape.vec_comps())
                    + a0 * sum_site_norms(&kx[vl..], n, self.shape.sym_comps())
            }
        }
    }
}

fn project_balls(y: &mut [f64], n: usize, comps: usize, radius: f64) {
    for k in 0..n {
        let mag = (0..comps).map(|c| y[c * n + k].powi(2)).sum::<f64>().sqrt();
        if mag > radius {
            let s = radius / mag;
            (0..comps).for_each(|c| y[c * n + k] *= s);
        }
    }
}

fn sum_site_norms(y: &[f64], n: usize, comps: usize) -> f64 {
    (0..n)
        .map(|k| (0..comps).map(|c| y[c * n + k].powi(2)).sum::<f64>().sqrt())
        .sum()
}

struct ProxProblem<'a> {
    ops: RegOps,
    f: &'a [f64],
    alpha: f64,
    f_norm: f64,
    grad_f_norm: f64,
}

impl Saddle for ProxProblem<'_> {
    fn primal_len(&self) -> usize {
        self.ops.primal_len()
    }
    fn dual_len(&self) -> usize {
        self.ops.dual_len()
    }
    fn k(&self, x: &[f64], out: &mut [f64]) {
        self.ops.k(x, out)
    }
    fn kt(&self, y: &[f64], out: &mut [f64]) {
        self.ops.kt(y, out)
    }
    fn prox_primal(&self, x: &mut [f64], tau: f64) {
        let ta = tau * self.alpha;
        let inv = 1.0 / (1.0 + ta);
        x[..self.f.len()]
            .iter_mut()
            .zip(self.f)
            .for_each(|(v, fi)| *v = (*v + ta * fi) * inv);
    }
    fn prox_dual(&self, y: &mut [f64], _sigma: f64) {
        self.ops.project_dual(y)
    }
    fn op_norm_sq(&self) -> f64 {
        self.ops.op_norm_sq()
    }
    fn balance(&self) -> f64 {
        match self.ops.kind {
            FunctionalKind::Tv => TV_BALANCE * self.alpha,
            FunctionalKind::Tgv2 { alpha1, .. } => TGV_BALANCE * self.alpha / alpha1,
        }
    }
    fn scales(&self) -> (f64, f64, f64) {
        (self.f_norm, 1e-12 * self.alpha * self.f_norm, self.grad_f_norm)
    }
}

#[cfg(test)]
struct IpmProblem<'a> {
    ops: RegOps,
    u: &'a [f64],
    lambda: f64,
    grad_u_norm: f64,
}

#[cfg(test)]
impl Saddle for IpmProblem<'_> {
    fn primal_len(&self) -> usize {
        self.ops.primal_len()
    }
    fn dual_len(&self) -> usize {
        self.ops.dual_len()
    }
    fn k(&self, x: &[f64], out: &mut [f64]) {
        self.ops.k(x, out)
    }
    fn kt(&self, y: &[f64], out: &mut [f64]) {
        self.ops.kt(y, out)
    }
    fn prox_primal(&self, x: &mut [f64], tau: f64) {
        let n = self.u.len();
        let v = &mut x[..n];
        let tl = tau * self.lambda;
        v.iter_mut().zip(self.u).for_each(|(vi, ui)| *vi += tl * ui);
        let nv = norm_sq(v).sqrt();
        if nv > 1.0 {
            v.iter_mut().for_each(|vi| *vi /= nv);
        }
    }
    fn prox_dual(&self, y: &mut [f64], _sigma: f64) {
        self.ops.project_dual(y)
    }
    fn op_norm_sq(&self) -> f64 {
        self.ops.op_norm_sq()
    }
    fn balance(&self) -> f64 {
        match self.ops.kind {
            FunctionalKind::Tv => TV_BALANCE * self.lambda,
            FunctionalKind::Tgv2 { alpha1, .. } => TGV_BALANCE * self.lambda / alpha1,
        }
    }
    fn scales(&self) -> (f64, f64, f64) {
        (1.0, 1e-12 * self.lambda, self.grad_u_norm)
    }
}

/// `min_w α1‖g − w‖₁ + α0‖E w‖₁` with `K w = (w, E w)`.
struct TgvValueProblem<'a> {
    shape: Shape,
    g: &'a [f64],
    alpha0: f64,
    alpha1: f64,
    g_norm: f64,
}

impl Saddle for TgvValueProblem<'_> {
    fn primal_len(&self) -> usize {
        self.g.len()
    }
    fn dual_len(&self) -> usize {
        self.g.len() + self.shape.sym_comps() * self.shape.len()
    }
    fn k(&self, x: &[f64], out: &mut [f64]) {
        let vl = self.g.len();
        out[..vl].copy_from_slice(x);
        sym_grad_into(self.shape, x, TensorLayout::Isometric, &mut out[vl..]);
    }
    fn kt(&self, y: &[f64], out: &mut [f64]) {
        let vl = self.g.len();
        div2_into(self.shape, &y[vl..], TensorLayout::Isometric, out);
        out.iter_mut().zip(&y[..vl]).for_each(|(o, z)| *o = *z - *o);
    }
    fn prox_primal(&self, _x: &mut [f64], _tau: f64) {}
    fn prox_dual(&self, y: &mut [f64], sigma: f64) {
        let n = self.shape.len();
        let vl = self.g.len();
        y[..vl]
            .iter_mut()
            .zip(self.g)
            .for_each(|(yi, gi)| *yi -= sigma * gi);
        project_balls(&mut y[..vl], n, self.shape.vec_comps(), self.alpha1);
        project_balls(&mut y[vl..], n, self.shape.sym_comps(), self.alpha0);
    }
    fn op_norm_sq(&self) -> f64 {
        1.0 + grad_norm_sq(self.shape)
    }
    fn balance(&self) -> f64 {
        let n = self.shape.len() as f64;
        TGV_VALUE_BALANCE * self.alpha1 * n.sqrt() / self.g_norm.max(1e-300)
    }
    fn scales(&self) -> (f64, f64, f64) {
        let n = self.shape.len() as f64;
        (self.g_norm, 1e-3 * self.alpha1 * n.sqrt(), self.g_norm)
    }
}

struct Outcome {
    x: Vec<f64>,
    y: Vec<f64>,
    stats: SolverStats,
}

fn sub_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn solve<P: Saddle>(p: &P, mut x: Vec<f64>, mut y: Vec<f64>, params: &SolverParams) -> Outcome {
    let (nx, ny) = (p.primal_len(), p.dual_len());
    debug_assert_eq!(x.len(), nx);
    debug_assert_eq!(y.len(), ny);
    let l = p.op_norm_sq().sqrt();
    let beta = p.balance();
    let tau = params.step_ratio / (l * beta);
    let sigma = params.step_ratio * beta / l;
    let theta = params.over_relaxation;
    let (x_floor, p_floor, d_floor) = p.scales();

    let mut xbar = x.clone();
    let mut kx = vec![0.0; ny];
    let mut kty = vec![0.0; nx];
    let mut x_prev = vec![0.0; nx];
    let mut xbar_prev = vec![0.0; nx];
    let mut y_prev = vec![0.0; ny];
    let mut dx = vec![0.0; nx];
    let mut kdx = vec![0.0; ny];

    let mut stats = SolverStats::default();
    let mut residual = f64::INFINITY;

    for it in 1..=params.max_iters {
        let check = it % CHECK_EVERY == 0 || it == params.max_iters;
        if check {
            x_prev.copy_from_slice(&x);
            y_prev.copy_from_slice(&y);
            xbar_prev.copy_from_slice(&xbar);
        }

        p.k(&xbar, &mut kx);
        y.iter_mut().zip(&kx).for_each(|(yi, ki)| *yi += sigma * ki);
        p.prox_dual(&mut y, sigma);

        p.kt(&y, &mut kty);
        for i in 0..nx {
            xbar[i] = x[i] - tau * kty[i];
        }
        p.prox_primal(&mut xbar, tau);
        for i in 0..nx {
            let old = x[i];
            x[i] = xbar[i];
            xbar[i] = x[i] + theta * (x[i] - old);
        }

        if !check {
            continue;
        }
        stats.iters = it;

        // Optimality residuals of the dual-first ordering:
        //   (x_n − x_{n+1})/τ ∈ ∂G(x_{n+1}) + Kᵀy_{n+1}
        //   (y_n − y_{n+1})/σ + K(x̄_n − x_{n+1}) ∈ ∂F*(y_{n+1}) − K x_{n+1}
        let r_primal = sub_norm(&x_prev, &x) / tau;
        let kty_norm = norm_sq(&kty).sqrt();
        for i in 0..nx {
            dx[i] = xbar_prev[i] - x[i];
        }
        p.k(&dx, &mut kdx);
        let r_dual = y_prev
            .iter()
            .zip(&y)
            .zip(&kdx)
            .map(|((a, b), c)| ((a - b) / sigma + c).powi(2))
            .sum::<f64>()
            .sqrt();
        p.k(&x, &mut kx);
        let kx_norm = norm_sq(&kx).sqrt();
        residual = (r_primal / kty_norm.max(p_floor).max(1e-300))
            .max(r_dual / kx_norm.max(d_floor).max(1e-300));

        let change = (sub_norm(&x_prev, &x) / norm_sq(&x).sqrt().max(x_floor).max(1e-300))
            .max(sub_norm(&y_prev, &y) / norm_sq(&y).sqrt().max(sigma * d_floor).max(1e-300));

        if it % CHECKPOINT_EVERY == 0 {
            for i in 0..nx {
                dx[i] = x_prev[i] - x[i];
            }
            p.k(&dx, &mut kdx);
            let dy: Vec<f64> = y_prev.iter().zip(&y).map(|(a, b)| a - b).collect();
            let m = norm_sq(&dx) / tau - 2.0 * dot(&kdx, &dy) + norm_sq(&dy) / sigma;
            stats.checkpoints.push(m.max(0.0).sqrt());
        }

        if residual < params.tol && change < params.tol {
            stats.converged = true;
            break;
        }
    }
    stats.residual = residual;
    Outcome { x, y, stats }
}

fn warm_or_cold(
    warm: Option<&PdState>,
    shape: Shape,
    tgv: bool,
    x0: impl FnOnce() -> Vec<f64>,
    ny: usize,
) -> (Vec<f64>, Vec<f64>) {
    match warm {
        Some(s) if s.fits(shape, tgv) => (s.x.clone(), s.y.clone()),
        _ => (x0(), vec![0.0; ny]),
    }
}

/// Prox solve that reports non-convergence in `stats` instead of failing.
pub(crate) fn prox_unchecked(
    kind: &FunctionalKind,
    f: &GridField,
    alpha: f64,
    params: &SolverParams,
    warm: Option<&PdState>,
) -> Result<ProxResult> {
    params.validate()?;
    kind.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("prox weight must be positive, got {alpha}")));
    }
    let shape = f.shape();
    let ops = RegOps { shape, kind: *kind };
    let tgv = ops.tgv().is_some();
    let n = shape.len();
    let f_vals = f.values();
    let mut gf = vec![0.0; shape.vec_comps() * n];
    grad_into(shape, f_vals, &mut gf);
    let problem = ProxProblem {
        f: f_vals,
        alpha,
        f_norm: f.norm(),
        grad_f_norm: norm_sq(&gf).sqrt(),
        ops,
    };
    let (x0, y0) = warm_or_cold(
        warm,
        shape,
        tgv,
        || {
            let mut x = vec![0.0; problem.primal_len()];
            x[..n].copy_from_slice(f_vals);
            if tgv {
                x[n..].copy_from_slice(&gf);
            }
            x
        },
        problem.dual_len(),
    );
    let out = solve(&problem, x0, y0, params);
    let u = GridField::from_raw(shape, out.x[..n].to_vec());
    let p_vals: Vec<f64> = f_vals
        .iter()
        .zip(u.values())
        .map(|(fi, ui)| alpha * (fi - ui))
        .collect();
    let p = GridField::from_raw(shape, p_vals);
    let reg_value = problem.ops.value(&out.x);
    let fid = 0.5 * alpha * f.sub(&u)?.norm().powi(2);
    Ok(ProxResult {
        u,
        p,
        iters: out.stats.iters,
        residual: out.stats.residual,
        objective: reg_value + fid,
        reg_value,
        stats: out.stats,
        state: PdState {
            shape,
            tgv,
            x: out.x,
            y: out.y,
        },
    })
}

/// Solves `min_v J(v) + (α/2)‖f − v‖²` and recovers `p = α(f − v) ∈ ∂J(v)`.
///
/// Fails with [`Error::MaxItersExceeded`] when the residual target is not met.
pub fn prox(
    kind: &FunctionalKind,
    f: &GridField,
    alpha: f64,
    params: &SolverParams,
) -> Result<ProxResult> {
    prox_warm(kind, f, alpha, params, None)
}

/// [`prox`] started from a previous solver state.
pub fn prox_warm(
    kind: &FunctionalKind,
    f: &GridField,
    alpha: f64,
    params: &SolverParams,
    warm: Option<&PdState>,
) -> Result<ProxResult> {
    let r = prox_unchecked(kind, f, alpha, params, warm)?;
    if !r.stats.converged {
        return Err(Error::MaxItersExceeded {
            iters: r.iters,
            residual: r.residual,
        });
    }
    Ok(r)
}

/// Default sharpness for [`subgradient_at`].
pub const DEFAULT_SHARPNESS: f64 = 1e3;

/// `sharpness · (u − prox(u, sharpness).u)`: a subgradient of `J` at the
/// prox point next to `u` (the minimal-norm element as sharpness grows).
pub fn subgradient_at(
    kind: &FunctionalKind,
    u: &GridField,
    sharpness: f64,
    params: &SolverParams,
) -> Result<GridField> {
    Ok(subgradient_at_warm(kind, u, sharpness, params, None)?.p)
}

/// [`subgradient_at`] returning the full prox result for warm starts.
pub fn subgradient_at_warm(
    kind: &FunctionalKind,
    u: &GridField,
    sharpness: f64,
    params: &SolverParams,
    warm: Option<&PdState>,
) -> Result<ProxResult> {
    if !(sharpness > 0.0) {
        return Err(Error::InvalidParameter("sharpness must be positive".into()));
    }
    prox_warm(kind, u, sharpness, params, warm)
}

/// Prox weight for subgradient extraction that stays `sharpness` times above
/// the Rayleigh quotient of `u`, so the prox point is within about
/// `‖u‖/sharpness` of `u` whatever the scale of `u`. Uses the bound
/// `TGV² ≤ α1·TV` to avoid an inner solve.
pub fn relative_sharpness(kind: &FunctionalKind, u: &GridField, sharpness: f64) -> f64 {
    let n2 = u.norm().powi(2);
    let tv = tv_value(u);
    let bound = match kind {
        FunctionalKind::Tv => tv,
        FunctionalKind::Tgv2 { alpha1, .. } => alpha1 * tv,
    };
    if n2 > 0.0 && bound > 0.0 {
        sharpness * (bound / n2)
    } else {
        sharpness
    }
}

/// `argmin_{‖v‖≤1} J(v) − λ⟨v, u⟩` by the primal-dual engine, with the ball
/// handled by radial projection in the primal prox. Slow near fixed points,
/// so it only serves as the reference for the inverse power step.
#[cfg(test)]
pub(crate) fn ball_linear_solve(
    kind: &FunctionalKind,
    u: &GridField,
    lambda: f64,
    params: &SolverParams,
) -> Result<(GridField, SolverStats)> {
    params.validate()?;
    kind.validate()?;
    let shape = u.shape();
    let ops = RegOps { shape, kind: *kind };
    let tgv = ops.tgv().is_some();
    let n = shape.len();
    let mut gu = vec![0.0; shape.vec_comps() * n];
    grad_into(shape, u.values(), &mut gu);
    let problem = IpmProblem {
        u: u.values(),
        lambda,
        grad_u_norm: norm_sq(&gu).sqrt(),
        ops,
    };
    let un = u.norm().max(1e-300);
    let mut x0 = vec![0.0; problem.primal_len()];
    x0[..n].iter_mut().zip(u.values()).for_each(|(a, b)| *a = b / un);
    if tgv {
        x0[n..].iter_mut().zip(&gu).for_each(|(a, b)| *a = b / un);
    }
    let y0 = vec![0.0; problem.dual_len()];
    let out = solve(&problem, x0, y0, params);
    Ok((GridField::from_raw(shape, out.x[..n].to_vec()), out.stats))
}

/// `min_w α1‖∇u − w‖₁ + α0‖E w‖₁` at the final iterate, with solver stats.
pub(crate) fn tgv2_solve(
    u: &GridField,
    alpha0: f64,
    alpha1: f64,
    params: &SolverParams,
) -> Result<(f64, SolverStats)> {
    params.validate()?;
    let shape = u.shape();
    let n = shape.len();
    let mut g = vec![0.0; shape.vec_comps() * n];
    grad_into(shape, u.values(), &mut g);
    let g_norm = norm_sq(&g).sqrt();
    if g_norm == 0.0 {
        return Ok((
            0.0,
            SolverStats {
                converged: true,
                residual: 0.0,
                ..SolverStats::default()
            },
        ));
    }
    let problem = TgvValueProblem {
        shape,
        g: &g,
        alpha0,
        alpha1,
        g_norm,
    };
    let out = solve(
        &problem,
        g.clone(),
        vec![0.0; problem.dual_len()],
        params,
    );
    let mut kx = vec![0.0; problem.dual_len()];
    problem.k(&out.x, &mut kx);
    let vl = g.len();
    let first: Vec<f64> = g.iter().zip(&out.x).map(|(a, b)| a - b).collect();
    let value = alpha1 * sum_site_norms(&first, n, shape.vec_comps())
        + alpha0 * sum_site_norms(&kx[vl..], n, shape.sym_comps());
    Ok((value, out.stats))
}
