//! Forward/backward difference stencils and their adjoints.
//!
//! `grad` uses forward differences with a zero last row/column, `div` is
//! its negative adjoint. The second-order pair `sym_grad`/`div2` is built
//! so that `sym_grad(grad(u)) = 0` for every affine `u`, which makes the
//! TGV² null space exactly the affine functions.

use crate::grid::{GridField, Shape, SymTensorField, VecField};

// Slice kernels. Inputs and outputs are component-major like the field types.

pub(crate) fn grad_into(shape: Shape, u: &[f64], out: &mut [f64]) {
    let (rows, cols) = (shape.rows, shape.cols);
    let n = shape.len();
    let (g1, rest) = out.split_at_mut(n);
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            g1[k] = if i + 1 < rows { u[k + cols] - u[k] } else { 0.0 };
        }
    }
    if cols > 1 {
        let g2 = &mut rest[..n];
        for i in 0..rows {
            let row = i * cols;
            for j in 0..cols - 1 {
                g2[row + j] = u[row + j + 1] - u[row + j];
            }
            g2[row + cols - 1] = 0.0;
        }
    }
}

pub(crate) fn div_into(shape: Shape, z: &[f64], out: &mut [f64]) {
    let (rows, cols) = (shape.rows, shape.cols);
    let n = shape.len();
    let z1 = &z[..n];
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let fwd = if i + 1 < rows { z1[k] } else { 0.0 };
            let bwd = if i > 0 { z1[k - cols] } else { 0.0 };
            out[k] = fwd - bwd;
        }
    }
    if cols > 1 {
        let z2 = &z[n..2 * n];
        for i in 0..rows {
            let row = i * cols;
            for j in 0..cols {
                let k = row + j;
                let fwd = if j + 1 < cols { z2[k] } else { 0.0 };
                let bwd = if j > 0 { z2[k - 1] } else { 0.0 };
                out[k] += fwd - bwd;
            }
        }
    }
}

/// Backward difference along `axis` that vanishes on both boundary layers.
fn bwd_inner(shape: Shape, axis: usize, w: &[f64], out: &mut [f64]) {
    let (rows, cols) = (shape.rows, shape.cols);
    let (len, stride) = if axis == 0 { (rows, cols) } else { (cols, 1) };
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let pos = if axis == 0 { i } else { j };
            out[k] = if pos >= 1 && pos + 2 <= len {
                w[k] - w[k - stride]
            } else {
                0.0
            };
        }
    }
}

/// Negative transpose of `bwd_inner`, accumulated into `out`.
fn bwd_inner_adj_acc(shape: Shape, axis: usize, t: &[f64], out: &mut [f64]) {
    let (rows, cols) = (shape.rows, shape.cols);
    let (len, stride) = if axis == 0 { (rows, cols) } else { (cols, 1) };
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let pos = if axis == 0 { i } else { j };
            let next = if pos + 3 <= len { t[k + stride] } else { 0.0 };
            let here = if pos >= 1 && pos + 2 <= len { t[k] } else { 0.0 };
            out[k] += next - here;
        }
    }
}

/// Forward difference along `axis` (the `grad` stencil), scaled and accumulated.
fn fwd_acc(shape: Shape, axis: usize, w: &[f64], scale: f64, out: &mut [f64]) {
    let (rows, cols) = (shape.rows, shape.cols);
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let d = if axis == 0 {
                if i + 1 < rows {
                    w[k + cols] - w[k]
                } else {
                    0.0
                }
            } else if j + 1 < cols {
                w[k + 1] - w[k]
            } else {
                0.0
            };
            out[k] += scale * d;
        }
    }
}

/// Negative transpose of the forward difference (the `div` stencil), scaled and accumulated.
fn fwd_adj_acc(shape: Shape, axis: usize, t: &[f64], scale: f64, out: &mut [f64]) {
    let (rows, cols) = (shape.rows, shape.cols);
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let d = if axis == 0 {
                let fwd = if i + 1 < rows { t[k] } else { 0.0 };
                let bwd = if i > 0 { t[k - cols] } else { 0.0 };
                fwd - bwd
            } else {
                let fwd = if j + 1 < cols { t[k] } else { 0.0 };
                let bwd = if j > 0 { t[k - 1] } else { 0.0 };
                fwd - bwd
            };
            out[k] += scale * d;
        }
    }
}

/// Storage convention for the off-diagonal tensor entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum TensorLayout {
    /// `t12` stored as is; paired with the Frobenius inner product.
    Plain,
    /// `√2·t12` stored, so the Euclidean inner product of the flat vector is Frobenius.
    Isometric,
}

impl TensorLayout {
    fn offdiag_scale(self) -> f64 {
        match self {
            TensorLayout::Plain => 1.0,
            TensorLayout::Isometric => std::f64::consts::SQRT_2,
        }
    }

    /// Coefficient of the off-diagonal term in the adjoint.
    fn adjoint_scale(self) -> f64 {
        match self {
            // Frobenius pairing counts t12 twice, which cancels the ½.
            TensorLayout::Plain => 1.0,
            TensorLayout::Isometric => 0.5 * std::f64::consts::SQRT_2,
        }
    }
}

/// Symmetrized gradient in the given layout.
pub(crate) fn sym_grad_into(shape: Shape, w: &[f64], layout: TensorLayout, out: &mut [f64]) {
    let n = shape.len();
    bwd_inner(shape, 0, &w[..n], &mut out[..n]);
    if shape.cols > 1 {
        let (w1, w2) = (&w[..n], &w[n..2 * n]);
        bwd_inner(shape, 1, w2, &mut out[n..2 * n]);
        let t12 = &mut out[2 * n..3 * n];
        t12.fill(0.0);
        let h = 0.5 * layout.offdiag_scale();
        fwd_acc(shape, 1, w1, h, t12);
        fwd_acc(shape, 0, w2, h, t12);
    }
}

/// Negative adjoint of `sym_grad_into` for the same layout.
pub(crate) fn div2_into(shape: Shape, t: &[f64], layout: TensorLayout, out: &mut [f64]) {
    let n = shape.len();
    out.fill(0.0);
    bwd_inner_adj_acc(shape, 0, &t[..n], &mut out[..n]);
    if shape.cols > 1 {
        bwd_inner_adj_acc(shape, 1, &t[n..2 * n], &mut out[n..2 * n]);
        let h = layout.adjoint_scale();
        let t12 = &t[2 * n..3 * n];
        fwd_adj_acc(shape, 1, t12, h, &mut out[..n]);
        fwd_adj_acc(shape, 0, t12, h, &mut out[n..2 * n]);
    }
}

/// Forward-difference gradient.
pub fn grad(u: &GridField) -> VecField {
    let shape = u.shape();
    let mut out = vec![0.0; shape.vec_comps() * shape.len()];
    grad_into(shape, u.values(), &mut out);
    VecField::from_raw(shape, out)
}

/// Backward-difference divergence, the negative adjoint of [`grad`].
pub fn div(z: &VecField) -> GridField {
    let shape = z.shape();
    let mut out = vec![0.0; shape.len()];
    div_into(shape, z.values(), &mut out);
    GridField::from_raw(shape, out)
}

/// Symmetrized gradient `E(w)`: backward differences on the diagonal,
/// `½(∂₂w¹ + ∂₁w²)` off the diagonal.
pub fn sym_grad(w: &VecField) -> SymTensorField {
    let shape = w.shape();
    let mut out = vec![0.0; shape.sym_comps() * shape.len()];
    sym_grad_into(shape, w.values(), TensorLayout::Plain, &mut out);
    SymTensorField::from_raw(shape, out)
}

/// Negative adjoint of [`sym_grad`] under the Frobenius pairing.
pub fn div2(t: &SymTensorField) -> VecField {
    let shape = t.shape();
    let mut out = vec![0.0; shape.vec_comps() * shape.len()];
    div2_into(shape, t.values(), TensorLayout::Plain, &mut out);
    VecField::from_raw(shape, out)
}

/// `-div(grad(u))`.
pub fn neg_laplacian(u: &GridField) -> GridField {
    div(&grad(u)).scaled(-1.0)
}

/// A linear operator on grid fields, used by the linear flow.
pub trait LinearOperator: Sync {
    fn apply(&self, u: &GridField) -> GridField;

    /// Upper bound on the spectral radius for fields of this shape.
    fn norm_bound(&self, shape: Shape) -> f64;
}

/// The discrete `-Δ` with the boundary handling of [`grad`]/[`div`].
#[derive(Clone, Copy, Debug, Default)]
pub struct NegLaplacian;

impl LinearOperator for NegLaplacian {
    fn apply(&self, u: &GridField) -> GridField {
        neg_laplacian(u)
    }

    fn norm_bound(&self, shape: Shape) -> f64 {
        if shape.is_1d() {
            4.0
        } else {
            8.0
        }
    }
}

/// Largest grid side for which dense assembly is allowed.
pub const DENSE_MAX_SIDE: usize = 32;

/// Column-major dense matrix of a linear map, built by applying it to unit vectors.
///
/// Debug path for oracle tests; panics on grids larger than 32x32.
pub fn assemble_dense(
    in_len: usize,
    out_len: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    assert!(
        in_len <= DENSE_MAX_SIDE * DENSE_MAX_SIDE * 3,
        "dense assembly is limited to small grids"
    );
    let mut cols = Vec::with_capacity(in_len);
    let mut e = vec![0.0; in_len];
    for c in 0..in_len {
        e[c] = 1.0;
        let col = apply(&e);
        assert_eq!(col.len(), out_len);
        cols.push(col);
        e[c] = 0.0;
    }
    cols
}
