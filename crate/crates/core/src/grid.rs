//! Scalar, vector and symmetric-tensor fields on regular 1D/2D grids.
//!
//! Storage is row-major with `index = i * cols + j`; `i` runs along the
//! first grid axis. A 1D signal of length `N` is an `N x 1` grid, so every
//! operator has a single code path. Grid spacing is 1 and integrals are
//! plain sums.

use std::fmt;

use crate::error::{Error, Result};
use crate::functional::FunctionalKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub fn line(n: usize) -> Self {
        Shape { rows: n, cols: 1 }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_1d(&self) -> bool {
        self.cols == 1
    }

    /// Number of gradient components per site.
    pub fn vec_comps(&self) -> usize {
        if self.is_1d() {
            1
        } else {
            2
        }
    }

    /// Number of stored symmetric-tensor components per site.
    pub fn sym_comps(&self) -> usize {
        if self.is_1d() {
            1
        } else {
            3
        }
    }

    fn check_same(&self, other: &Shape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                left: *self,
                right: *other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// A real-valued field `u` on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    shape: Shape,
    data: Vec<f64>,
}

impl GridField {
    /// Wraps `data` (row-major). Fails on length mismatch or non-finite values.
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values supplied for a {} grid",
                data.len(),
                shape
            )));
        }
        check_finite(&data)?;
        Ok(GridField { shape, data })
    }

    pub fn from_column(data: Vec<f64>) -> Result<Self> {
        GridField::new(Shape::line(data.len()), data)
    }

    pub fn zeros(shape: Shape) -> Self {
        GridField {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn constant(shape: Shape, c: f64) -> Self {
        GridField {
            shape,
            data: vec![c; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for i in 0..shape.rows {
            for j in 0..shape.cols {
                data.push(f(i, j));
            }
        }
        GridField { shape, data }
    }

    /// Internal constructor for values produced by arithmetic on finite fields.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        GridField { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape.cols + j]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inner(&self, other: &GridField) -> Result<f64> {
        inner(self, other)
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    pub fn scaled(&self, s: f64) -> GridField {
        self.map(|v| s * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField::from_raw(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &GridField, b: f64) -> Result<GridField> {
        self.shape.check_same(&other.shape)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(GridField::from_raw(self.shape, data))
    }

    pub fn add(&self, other: &GridField) -> Result<GridField> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.lin_comb(1.0, other, -1.0)
    }

    /// `‖self - other‖ / ‖other‖`, or the plain distance when `other` is zero.
    pub fn rel_dist(&self, other: &GridField) -> Result<f64> {
        let d = self.sub(other)?.norm();
        let n = other.norm();
        Ok(if n > 0.0 { d / n } else { d })
    }

    /// Cosine of the angle between two fields (0 if either vanishes).
    pub fn cosine(&self, other: &GridField) -> Result<f64> {
        let d = self.norm() * other.norm();
        let ip = self.inner(other)?;
        Ok(if d > 0.0 { ip / d } else { 0.0 })
    }
}

/// `⟨u, v⟩ = Σ u_i v_i`.
pub fn inner(u: &GridField, v: &GridField) -> Result<f64> {
    u.shape.check_same(&v.shape)?;
    Ok(dot(&u.data, &v.data))
}

pub fn norm(u: &GridField) -> f64 {
    norm_sq(&u.data).sqrt()
}

/// Orthonormal basis of the null space of `kind` on `shape`.
///
/// TV: constants. TGV²: affine functions `{1, x, y}` (just `{1, x}` in 1D).
/// Centered monomials are mutually orthogonal on a full rectangular grid, so
/// the Gram matrix is diagonal and the basis is just the normalized
/// centered monomials.
pub fn null_space_basis(shape: Shape, kind: &FunctionalKind) -> Vec<Vec<f64>> {
    let n = shape.len();
    let mut basis = vec![vec![1.0 / (n as f64).sqrt(); n]];
    if matches!(kind, FunctionalKind::Tgv2 { .. }) {
        let ci = (shape.rows as f64 - 1.0) / 2.0;
        let cj = (shape.cols as f64 - 1.0) / 2.0;
        let mut axes: Vec<Box<dyn Fn(usize, usize) -> f64>> = Vec::new();
        if shape.rows > 1 {
            axes.push(Box::new(move |i, _| i as f64 - ci));
        }
        if shape.cols > 1 {
            axes.push(Box::new(move |_, j| j as f64 - cj));
        }
        for axis in axes {
            let mut v = Vec::with_capacity(n);
            for i in 0..shape.rows {
                for j in 0..shape.cols {
                    v.push(axis(i, j));
                }
            }
            let s = norm_sq(&v).sqrt();
            v.iter_mut().for_each(|x| *x /= s);
            basis.push(v);
        }
    }
    basis
}

/// Component of `f` inside the null space of `kind`.
pub fn null_component(f: &GridField, kind: &FunctionalKind) -> GridField {
    let mut out = vec![0.0; f.len()];
    for b in null_space_basis(f.shape, kind) {
        let c = dot(&f.data, &b);
        out.iter_mut().zip(&b).for_each(|(o, bi)| *o += c * bi);
    }
    GridField::from_raw(f.shape, out)
}

/// Removes the null-space component: the mean for TV, the least-squares
/// affine fit for TGV².
pub fn null_project(f: &GridField, kind: &FunctionalKind) -> GridField {
    let p = null_component(f, kind);
    let data = f.data.iter().zip(&p.data).map(|(a, b)| a - b).collect();
    GridField::from_raw(f.shape, data)
}

/// Per-site gradient vectors (`vec_comps` components, stored component-major).
#[derive(Clone, Debug, PartialEq)]
pub struct VecField {
    shape: Shape,
    data: Vec<f64>,
}

impl VecField {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.vec_comps() * shape.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values supplied for a vector field on a {} grid",
                data.len(),
                shape
            )));
        }
        check_finite(&data)?;
        Ok(VecField { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        VecField {
            shape,
            data: vec![0.0; shape.vec_comps() * shape.len()],
        }
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.vec_comps() * shape.len());
        VecField { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn comps(&self) -> usize {
        self.shape.vec_comps()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn inner(&self, other: &VecField) -> Result<f64> {
        self.shape.check_same(&other.shape)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.data).sqrt()
    }

    /// Euclidean magnitude of the vector at each site.
    pub fn magnitudes(&self) -> Vec<f64> {
        let n = self.shape.len();
        (0..n)
            .map(|k| {
                (0..self.comps())
                    .map(|c| self.data[c * n + k].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Symmetric 2-tensors per site: `(t11, t22, t12)` in 2D, `t11` in 1D.
///
/// The off-diagonal entry is stored once; the inner product counts it twice
/// (Frobenius).
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    shape: Shape,
    data: Vec<f64>,
}

impl SymTensorField {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.sym_comps() * shape.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values supplied for a tensor field on a {} grid",
                data.len(),
                shape
            )));
        }
        check_finite(&data)?;
        Ok(SymTensorField { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        SymTensorField {
            shape,
            data: vec![0.0; shape.sym_comps() * shape.len()],
        }
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.sym_comps() * shape.len());
        SymTensorField { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn comps(&self) -> usize {
        self.shape.sym_comps()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn inner(&self, other: &SymTensorField) -> Result<f64> {
        self.shape.check_same(&other.shape)?;
        let n = self.shape.len();
        let mut s = dot(&self.data, &other.data);
        if self.comps() == 3 {
            s += dot(&self.data[2 * n..], &other.data[2 * n..]);
        }
        Ok(s)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).unwrap_or(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_field(shape: Shape, mut seed: u64) -> GridField {
        GridField::from_fn(shape, |_, _| {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn inner_small_cases() {
        let ones = GridField::from_column(vec![1.0; 3]).unwrap();
        assert_eq!(inner(&ones, &ones).unwrap(), 3.0);
        let u = GridField::from_column(vec![1.0, 2.0]).unwrap();
        let v = GridField::from_column(vec![3.0, -1.0]).unwrap();
        assert_eq!(inner(&u, &v).unwrap(), 1.0);
        assert_eq!(inner(&v, &u).unwrap(), 1.0);
    }

    #[test]
    fn inner_matches_double_loop() {
        let shape = Shape::new(32, 32);
        let u = lcg_field(shape, 1);
        let v = lcg_field(shape, 2);
        let mut oracle = 0.0;
        for i in 0..32 {
            for j in 0..32 {
                oracle += u.at(i, j) * v.at(i, j);
            }
        }
        assert!((inner(&u, &v).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn inner_rejects_shape_mismatch() {
        let u = GridField::zeros(Shape::new(2, 3));
        let v = GridField::zeros(Shape::new(3, 2));
        assert!(matches!(inner(&u, &v), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn norm_cases() {
        assert_eq!(GridField::zeros(Shape::new(4, 4)).norm(), 0.0);
        let u = GridField::from_column(vec![3.0, 4.0]).unwrap();
        assert_eq!(u.norm(), 5.0);
        let r = lcg_field(Shape::new(7, 5), 9);
        assert!((r.norm().powi(2) - inner(&r, &r).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let err = GridField::from_column(vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
        assert!(GridField::new(Shape::new(2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn null_project_tv_constant_and_mean() {
        let c = GridField::constant(Shape::new(5, 6), 2.5);
        assert!(null_project(&c, &FunctionalKind::Tv).norm() < 1e-12);
        let r = lcg_field(Shape::new(16, 12), 4);
        let q = null_project(&r, &FunctionalKind::Tv);
        assert!(q.sum().abs() < 1e-10);
    }

    #[test]
    fn null_project_tgv_affine() {
        let kind = FunctionalKind::tgv2_default();
        let line = GridField::from_fn(Shape::line(20), |i, _| i as f64);
        assert!(null_project(&line, &kind).norm() < 1e-10);
        let plane = GridField::from_fn(Shape::new(9, 7), |i, j| 1.0 + 0.3 * i as f64 - 2.0 * j as f64);
        assert!(null_project(&plane, &kind).norm() < 1e-10);

        let r = lcg_field(Shape::new(9, 7), 5);
        let q = null_project(&r, &kind);
        for b in null_space_basis(r.shape(), &kind) {
            assert!(dot(q.values(), &b).abs() < 1e-10);
        }
    }

    #[test]
    fn tensor_inner_counts_off_diagonal_twice() {
        let shape = Shape::new(1, 2);
        let t = SymTensorField::new(shape, vec![1.0, 0.0, 0.0, 0.0, 0.0, 3.0]).unwrap();
        assert_eq!(t.inner(&t).unwrap(), 1.0 + 2.0 * 9.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field(rows: usize, cols: usize) -> impl Strategy<Value = GridField> {
            proptest::collection::vec(-10.0f64..10.0, rows * cols)
                .prop_map(move |v| GridField::new(Shape::new(rows, cols), v).unwrap())
        }

        proptest! {
            #[test]
            fn cauchy_schwarz(u in field(6, 5), v in field(6, 5)) {
                let ip = inner(&u, &v).unwrap();
                prop_assert!(ip.abs() <= u.norm() * v.norm() * (1.0 + 1e-12) + 1e-12);
                prop_assert!((ip - inner(&v, &u).unwrap()).abs() < 1e-12);
            }

            #[test]
            fn null_project_idempotent_and_contracting(u in field(7, 4), tgv in any::<bool>()) {
                let kind = if tgv { FunctionalKind::tgv2_default() } else { FunctionalKind::Tv };
                let once = null_project(&u, &kind);
                let twice = null_project(&once, &kind);
                prop_assert!(once.sub(&twice).unwrap().norm() <= 1e-12 * (1.0 + u.norm()));
                prop_assert!(once.norm() <= u.norm() * (1.0 + 1e-12));
            }
        }
    }
}
