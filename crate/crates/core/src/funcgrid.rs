//! Discretised functions on `[0, 1]`: grids with trapezoidal quadrature, curves,
//! ordered curve panels, Fourier / B-spline bases, band-pass projection and
//! multi-channel concatenation.
//!
//! Every inner product in the crate is the quadrature rule
//! `<x, y> = sum_i w_i x(t_i) y(t_i)`, so curves, kernels and eigenfunctions
//! all live in the same discretised L2 space.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, VpcError};
use crate::linalg;
use crate::scalar::Scalar;

/// Quadrature grid on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<S> {
    points: Vec<S>,
    weights: Vec<S>,
}

pub type GridRef<S> = Arc<Grid<S>>;

impl<S: Scalar> Grid<S> {
    /// `t` equally spaced points with trapezoidal weights.
    pub fn uniform(t: usize) -> Result<GridRef<S>> {
        if t < 2 {
            return Err(invalid(format!("grid needs at least 2 points, got {t}")));
        }
        let step = S::one() / S::from_usize_lossy(t - 1);
        let half = step / S::lit(2.0);
        let mut points: Vec<S> = (0..t)
            .map(|i| S::from_usize_lossy(i) / S::from_usize_lossy(t - 1))
            .collect();
        points[t - 1] = S::one();
        let mut weights = vec![step; t];
        weights[0] = half;
        weights[t - 1] = half;
        Ok(Arc::new(Grid { points, weights }))
    }

    /// Arbitrary strictly increasing points from 0 to 1 with the composite trapezoid rule.
    pub fn from_points(points: Vec<S>) -> Result<GridRef<S>> {
        let t = points.len();
        if t < 2 {
            return Err(invalid(format!("grid needs at least 2 points, got {t}")));
        }
        let weights = trapezoid_weights(&points);
        Self::from_parts(points, weights)
    }

    /// Validating constructor used when a grid is restored from a file.
    pub fn from_parts(points: Vec<S>, weights: Vec<S>) -> Result<GridRef<S>> {
        let t = points.len();
        if t < 2 || weights.len() != t {
            return Err(invalid("grid points and weights must have equal length >= 2"));
        }
        let tol = S::lit(S::STRUCTURAL_TOL);
        if points[0].abs() > tol || (points[t - 1] - S::one()).abs() > tol {
            return Err(invalid("grid must start at 0 and end at 1"));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("grid points must be strictly increasing"));
        }
        if weights.iter().any(|w| !(*w > S::zero())) {
            return Err(invalid("quadrature weights must be positive"));
        }
        let total: S = weights.iter().copied().sum();
        if (total - S::one()).abs() > tol {
            return Err(invalid(format!("quadrature weights sum to {total}, expected 1")));
        }
        Ok(Arc::new(Grid { points, weights }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[S] {
        &self.points
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weights_view(&self) -> ArrayView1<'_, S> {
        ArrayView1::from(&self.weights[..])
    }

    /// Quadrature inner product of two value vectors on this grid.
    #[inline]
    pub fn dot(&self, x: ArrayView1<'_, S>, y: ArrayView1<'_, S>) -> S {
        let mut acc = S::zero();
        for ((w, a), b) in self.weights.iter().zip(x.iter()).zip(y.iter()) {
            acc += *w * *a * *b;
        }
        acc
    }
}

fn trapezoid_weights<S: Scalar>(points: &[S]) -> Vec<S> {
    let t = points.len();
    let two = S::lit(2.0);
    (0..t)
        .map(|i| {
            let left = if i == 0 { points[0] } else { points[i - 1] };
            let right = if i + 1 == t { points[t - 1] } else { points[i + 1] };
            (right - left) / two
        })
        .collect()
}

/// Grids are considered equal when they are the same allocation or have identical points.
pub fn same_grid<S: Scalar>(a: &GridRef<S>, b: &GridRef<S>) -> bool {
    Arc::ptr_eq(a, b) || (a.points == b.points && a.weights == b.weights)
}

pub(crate) fn ensure_same_grid<S: Scalar>(a: &GridRef<S>, b: &GridRef<S>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(VpcError::IncompatibleGrids)
    }
}

pub fn make_uniform_grid<S: Scalar>(t: usize) -> Result<GridRef<S>> {
    Grid::uniform(t)
}

/// A single function sampled on a grid.
#[derive(Debug, Clone)]
pub struct Curve<S> {
    grid: GridRef<S>,
    values: Array1<S>,
}

impl<S: Scalar> Curve<S> {
    pub fn new(grid: GridRef<S>, values: Array1<S>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "curve has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("curve values must be finite"));
        }
        Ok(Curve { grid, values })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: GridRef<S>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|t| S::lit(f(t.to_f64_lossy()))).collect();
        Curve::new(grid, values)
    }

    pub fn zeros(grid: GridRef<S>) -> Self {
        let t = grid.len();
        Curve { grid, values: Array1::zeros(t) }
    }

    pub fn grid(&self) -> &GridRef<S> {
        &self.grid
    }

    pub fn values(&self) -> ArrayView1<'_, S> {
        self.values.view()
    }

    pub fn into_values(self) -> Array1<S> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: S) -> Self {
        Curve { grid: self.grid.clone(), values: &self.values * c }
    }
}

pub fn inner_product<S: Scalar>(x: &Curve<S>, y: &Curve<S>) -> Result<S> {
    ensure_same_grid(&x.grid, &y.grid)?;
    Ok(x.grid.dot(x.values.view(), y.values.view()))
}

pub fn l2_norm<S: Scalar>(x: &Curve<S>) -> S {
    x.grid.dot(x.values.view(), x.values.view()).sqrt()
}

/// Curves observed in time order on a shared grid; row `k` is the `k`-th curve.
#[derive(Debug, Clone)]
pub struct CurvePanel<S> {
    grid: GridRef<S>,
    data: Array2<S>,
    label: Option<i64>,
}

impl<S: Scalar> CurvePanel<S> {
    pub fn from_rows(grid: GridRef<S>, data: Array2<S>) -> Result<Self> {
        if data.ncols() != grid.len() {
            return Err(invalid(format!(
                "panel rows have {} values but the grid has {} points",
                data.ncols(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("panel values must be finite"));
        }
        Ok(CurvePanel { grid, data, label: None })
    }

    pub fn from_curves(grid: GridRef<S>, curves: &[Curve<S>]) -> Result<Self> {
        let mut data = Array2::zeros((curves.len(), grid.len()));
        for (k, c) in curves.iter().enumerate() {
            ensure_same_grid(&grid, &c.grid)?;
            data.row_mut(k).assign(&c.values);
        }
        Ok(CurvePanel { grid, data, label: None })
    }

    pub fn with_label(mut self, label: i64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    pub fn grid(&self) -> &GridRef<S> {
        &self.grid
    }

    /// Number of curves.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn data(&self) -> ArrayView2<'_, S> {
        self.data.view()
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, S> {
        self.data.row(k)
    }

    pub fn curve(&self, k: usize) -> Curve<S> {
        Curve { grid: self.grid.clone(), values: self.data.row(k).to_owned() }
    }

    pub fn curves(&self) -> Vec<Curve<S>> {
        (0..self.len()).map(|k| self.curve(k)).collect()
    }

    /// Consecutive sub-panel `range` (time order preserved).
    pub fn slice(&self, range: Range<usize>) -> CurvePanel<S> {
        CurvePanel {
            grid: self.grid.clone(),
            data: self.data.slice(s![range, ..]).to_owned(),
            label: self.label,
        }
    }

    pub fn norms(&self) -> Vec<S> {
        self.data.axis_iter(Axis(0)).map(|r| self.grid.dot(r, r).sqrt()).collect()
    }

    pub fn scaled(&self, c: S) -> CurvePanel<S> {
        CurvePanel { grid: self.grid.clone(), data: &self.data * c, label: self.label }
    }
}

/// Divides every curve by its own L2 norm.
pub fn scale_to_unit<S: Scalar>(panel: &CurvePanel<S>) -> Result<CurvePanel<S>> {
    let mut data = panel.data.clone();
    for (k, mut row) in data.axis_iter_mut(Axis(0)).enumerate() {
        let norm = panel.grid.dot(row.view(), row.view()).sqrt();
        if !(norm > S::zero()) {
            return Err(VpcError::DegenerateCurve { index: k });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(CurvePanel { grid: panel.grid.clone(), data, label: panel.label })
}

pub fn scale_curve_to_unit<S: Scalar>(y: &Curve<S>) -> Result<Curve<S>> {
    let norm = l2_norm(y);
    if !(norm > S::zero()) {
        return Err(VpcError::DegenerateCurve { index: 0 });
    }
    Ok(y.scaled(S::one() / norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
    Bspline,
}

/// Basis functions evaluated on a grid; row `j` is the `j`-th function.
#[derive(Debug, Clone)]
pub struct BasisSet<S> {
    kind: BasisKind,
    grid: GridRef<S>,
    evaluations: Array2<S>,
}

impl<S: Scalar> BasisSet<S> {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.evaluations.nrows()
    }

    pub fn grid(&self) -> &GridRef<S> {
        &self.grid
    }

    pub fn evaluations(&self) -> ArrayView2<'_, S> {
        self.evaluations.view()
    }

    pub fn function(&self, j: usize) -> Curve<S> {
        Curve { grid: self.grid.clone(), values: self.evaluations.row(j).to_owned() }
    }

    /// Quadrature Gram matrix `G_ij = <B_i, B_j>`.
    pub fn gram(&self) -> Array2<S> {
        let weighted = &self.evaluations * &self.grid.weights_view();
        weighted.dot(&self.evaluations.t())
    }

    /// Curves `sum_j coeffs[k, j] B_j` for every coefficient row `k`.
    pub fn synthesize(&self, coeffs: ArrayView2<'_, S>) -> Result<CurvePanel<S>> {
        if coeffs.ncols() != self.size() {
            return Err(invalid(format!(
                "{} coefficients per curve for a basis of size {}",
                coeffs.ncols(),
                self.size()
            )));
        }
        CurvePanel::from_rows(self.grid.clone(), coeffs.dot(&self.evaluations))
    }
}

/// Rows `1, sqrt2 cos(2 pi t), sqrt2 sin(2 pi t), sqrt2 cos(4 pi t), ...` until `size` rows exist.
pub fn fourier_basis<S: Scalar>(grid: &GridRef<S>, size: usize) -> Result<BasisSet<S>> {
    if size < 1 {
        return Err(invalid("Fourier basis needs at least one function"));
    }
    let t = grid.len();
    let mut evaluations = Array2::zeros((size, t));
    for (i, p) in grid.points().iter().enumerate() {
        let x = p.to_f64_lossy();
        evaluations[[0, i]] = S::one();
        for j in 1..size {
            let freq = j.div_ceil(2) as f64;
            let arg = 2.0 * PI * freq * x;
            let v = if j % 2 == 1 { arg.cos() } else { arg.sin() };
            evaluations[[j, i]] = S::lit(2f64.sqrt() * v);
        }
    }
    Ok(BasisSet { kind: BasisKind::Fourier, grid: grid.clone(), evaluations })
}

/// `size` B-splines of the given degree on a clamped, equally spaced knot vector over `[0, 1]`.
pub fn bspline_basis<S: Scalar>(grid: &GridRef<S>, size: usize, degree: usize) -> Result<BasisSet<S>> {
    if size < degree + 1 {
        return Err(invalid(format!(
            "{size} B-splines of degree {degree} is infeasible; need at least {}",
            degree + 1
        )));
    }
    let intervals = size - degree;
    let mut knots = vec![0.0; degree + 1];
    knots.extend((1..intervals).map(|j| j as f64 / intervals as f64));
    knots.extend(std::iter::repeat_n(1.0, degree + 1));

    let t = grid.len();
    let mut evaluations = Array2::zeros((size, t));
    let mut local = vec![0.0; degree + 1];
    for (i, p) in grid.points().iter().enumerate() {
        let x = p.to_f64_lossy().clamp(0.0, 1.0);
        // knot span: largest index with knots[span] <= x < knots[span + 1], last span closed.
        let span = if x >= 1.0 {
            size - 1
        } else {
            degree + ((x * intervals as f64).floor() as usize).min(intervals - 1)
        };
        bspline_nonzero(&knots, span, degree, x, &mut local);
        for (r, v) in local.iter().enumerate() {
            evaluations[[span - degree + r, i]] = S::lit(*v);
        }
    }
    Ok(BasisSet { kind: BasisKind::Bspline, grid: grid.clone(), evaluations })
}

/// Cox-de Boor triangle for the `degree + 1` basis functions that are non-zero on `span`.
fn bspline_nonzero(knots: &[f64], span: usize, degree: usize, x: f64, out: &mut [f64]) {
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { out[r] / denom };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

/// L2 projection of `x` onto the trigonometric functions of integer frequencies `lo..=hi`.
pub fn bandpass_project<S: Scalar>(x: &Curve<S>, lo: usize, hi: usize) -> Result<Curve<S>> {
    let t = x.grid.len();
    if lo < 1 || lo > hi || 2 * hi >= t {
        return Err(invalid(format!(
            "band [{lo}, {hi}] must satisfy 1 <= lo <= hi < T/2 with T = {t}"
        )));
    }
    let projector = BandProjector::new(&x.grid, lo, hi)?;
    Ok(projector.apply(x))
}

/// Precomputed band projector, reusable over many curves on one grid.
#[derive(Debug, Clone)]
pub struct BandProjector<S> {
    grid: GridRef<S>,
    functions: Array2<S>,
    gram_inv_rows: Array2<S>,
}

impl<S: Scalar> BandProjector<S> {
    pub fn new(grid: &GridRef<S>, lo: usize, hi: usize) -> Result<Self> {
        let t = grid.len();
        if lo < 1 || lo > hi || 2 * hi >= t {
            return Err(invalid(format!(
                "band [{lo}, {hi}] must satisfy 1 <= lo <= hi < T/2 with T = {t}"
            )));
        }
        let m = 2 * (hi - lo + 1);
        let mut functions = Array2::zeros((m, t));
        for (i, p) in grid.points().iter().enumerate() {
            let x = p.to_f64_lossy();
            for (b, k) in (lo..=hi).enumerate() {
                let arg = 2.0 * PI * k as f64 * x;
                functions[[2 * b, i]] = S::lit(2f64.sqrt() * arg.cos());
                functions[[2 * b + 1, i]] = S::lit(2f64.sqrt() * arg.sin());
            }
        }
        let weighted = &functions * &grid.weights_view();
        let gram = weighted.dot(&functions.t());
        // rows of G^{-1} B W give the projection coefficients directly
        let gram_inv_rows = linalg::cholesky_solve(&gram, &weighted)
            .ok_or_else(|| invalid("band basis Gram matrix is singular on this grid"))?;
        Ok(BandProjector { grid: grid.clone(), functions, gram_inv_rows })
    }

    pub fn apply(&self, x: &Curve<S>) -> Curve<S> {
        let coeffs = self.gram_inv_rows.dot(&x.values);
        let values = self.functions.t().dot(&coeffs);
        Curve { grid: self.grid.clone(), values }
    }

    pub fn apply_panel(&self, panel: &CurvePanel<S>) -> CurvePanel<S> {
        let coeffs = panel.data.dot(&self.gram_inv_rows.t());
        CurvePanel { grid: self.grid.clone(), data: coeffs.dot(&self.functions), label: panel.label }
    }
}

fn check_channels<S: Scalar>(panels: &[CurvePanel<S>]) -> Result<()> {
    let first = panels.first().ok_or_else(|| invalid("at least one channel is required"))?;
    for p in panels {
        if !same_grid(&p.grid, &first.grid) {
            return Err(VpcError::IncompatiblePanels("channels use different grids".into()));
        }
        if p.len() != first.len() {
            return Err(VpcError::IncompatiblePanels(format!(
                "channel lengths differ ({} vs {})",
                p.len(),
                first.len()
            )));
        }
    }
    Ok(())
}

/// Stacks the `k`-th curve of every channel end to end on a uniform grid of `channels * T` points.
pub fn concat_channels<S: Scalar>(panels: &[CurvePanel<S>], k: usize) -> Result<Curve<S>> {
    check_channels(panels)?;
    if k >= panels[0].len() {
        return Err(invalid(format!("time index {k} out of range for {} curves", panels[0].len())));
    }
    let t = panels[0].grid.len();
    let grid = Grid::uniform(panels.len() * t)?;
    let mut values = Array1::zeros(panels.len() * t);
    for (c, p) in panels.iter().enumerate() {
        values.slice_mut(s![c * t..(c + 1) * t]).assign(&p.data.row(k));
    }
    Ok(Curve { grid, values })
}

/// Concatenates every time index at once; all output curves share one grid.
pub fn concat_panels<S: Scalar>(panels: &[CurvePanel<S>]) -> Result<CurvePanel<S>> {
    check_channels(panels)?;
    let n = panels[0].len();
    let t = panels[0].grid.len();
    let grid = Grid::uniform(panels.len() * t)?;
    let mut data = Array2::zeros((n, panels.len() * t));
    for (c, p) in panels.iter().enumerate() {
        data.slice_mut(s![.., c * t..(c + 1) * t]).assign(&p.data);
    }
    Ok(CurvePanel { grid, data, label: panels[0].label })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn g(t: usize) -> GridRef<f64> {
        Grid::uniform(t).unwrap()
    }

    #[test]
    fn uniform_grid_weights() {
        let g2 = g(2);
        assert_eq!(g2.points(), &[0.0, 1.0]);
        assert_eq!(g2.weights(), &[0.5, 0.5]);
        assert_eq!(g(3).weights(), &[0.25, 0.5, 0.25]);
        let total: f64 = g(101).weights().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(matches!(Grid::<f64>::uniform(1), Err(VpcError::InvalidArgument(_))));
    }

    #[test]
    fn from_points_validates() {
        assert!(Grid::from_points(vec![0.0, 0.4, 1.0]).is_ok());
        assert!(Grid::from_points(vec![0.0, 0.6, 0.4, 1.0]).is_err());
        assert!(Grid::from_points(vec![0.1, 1.0]).is_err());
        let g = Grid::from_points(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn inner_products_on_fourier_pairs() {
        let grid = g(512);
        let one = Curve::from_fn(grid.clone(), |_| 1.0).unwrap();
        assert_abs_diff_eq!(inner_product(&one, &one).unwrap(), 1.0, epsilon = 1e-12);
        let c = Curve::from_fn(grid.clone(), |t| 2f64.sqrt() * (2.0 * PI * t).cos()).unwrap();
        let s = Curve::from_fn(grid.clone(), |t| 2f64.sqrt() * (2.0 * PI * t).sin()).unwrap();
        assert_abs_diff_eq!(inner_product(&c, &s).unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(inner_product(&c, &c).unwrap(), 1.0, epsilon = 1e-4);
        let other = Curve::from_fn(g(10), |_| 1.0).unwrap();
        assert!(matches!(inner_product(&one, &other), Err(VpcError::IncompatibleGrids)));
    }

    #[test]
    fn norms() {
        let grid = g(512);
        assert_eq!(l2_norm(&Curve::zeros(grid.clone())), 0.0);
        let two = Curve::from_fn(grid.clone(), |_| 2.0).unwrap();
        assert_abs_diff_eq!(l2_norm(&two), 2.0, epsilon = 1e-12);
        let s = Curve::from_fn(grid, |t| 2f64.sqrt() * (2.0 * PI * t).sin()).unwrap();
        assert_abs_diff_eq!(l2_norm(&s), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn trapezoid_exact_for_piecewise_linear() {
        // product of x = t and y = 1 is linear: integral 1/2
        let grid = g(7);
        let x = Curve::from_fn(grid.clone(), |t| t).unwrap();
        let one = Curve::from_fn(grid, |_| 1.0).unwrap();
        assert_abs_diff_eq!(inner_product(&x, &one).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn scale_to_unit_behaviour() {
        let grid = g(64);
        let c = Curve::from_fn(grid.clone(), |t| 3.0 * 2f64.sqrt() * (2.0 * PI * t).cos()).unwrap();
        let norm = l2_norm(&c);
        let panel = CurvePanel::from_curves(grid.clone(), std::slice::from_ref(&c)).unwrap();
        let unit = scale_to_unit(&panel).unwrap();
        assert_abs_diff_eq!(l2_norm(&unit.curve(0)), 1.0, epsilon = 1e-12);
        for (a, b) in unit.row(0).iter().zip(c.values()) {
            assert_abs_diff_eq!(*a, *b / norm, epsilon = 1e-14);
        }
        let again = scale_to_unit(&unit).unwrap();
        for (a, b) in again.data().iter().zip(unit.data()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        let bad = CurvePanel::from_curves(grid.clone(), &[c, Curve::zeros(grid)]).unwrap();
        assert!(matches!(scale_to_unit(&bad), Err(VpcError::DegenerateCurve { index: 1 })));
    }

    #[test]
    fn fourier_rows_and_gram() {
        let grid = g(512);
        let b = fourier_basis(&grid, 1).unwrap();
        assert!(b.evaluations().iter().all(|v| *v == 1.0));
        let b3 = fourier_basis(&grid, 3).unwrap();
        let t = grid.points()[37];
        assert_abs_diff_eq!(b3.evaluations()[[1, 37]], 2f64.sqrt() * (2.0 * PI * t).cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(b3.evaluations()[[2, 37]], 2f64.sqrt() * (2.0 * PI * t).sin(), epsilon = 1e-14);
        let gram = fourier_basis(&grid, 21).unwrap().gram();
        for i in 0..21 {
            for j in 0..21 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-4, "gram[{i},{j}] = {}", gram[[i, j]]);
            }
        }
        assert!(fourier_basis(&grid, 0).is_err());
    }

    #[test]
    fn bspline_degree_zero_blocks() {
        let grid = Grid::from_points(vec![0.0, 0.1, 0.3, 0.6, 0.8, 1.0]).unwrap();
        let b = bspline_basis(&grid, 4, 0).unwrap();
        let e = b.evaluations();
        let expect = array![
            [1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, 1.0]
        ];
        assert_eq!(e, expect.view());
    }

    #[test]
    fn bspline_cubic_partition_and_positivity() {
        let grid = g(257);
        let b = bspline_basis(&grid, 24, 3).unwrap();
        let e = b.evaluations();
        for i in 0..grid.len() {
            let col_sum: f64 = e.column(i).sum();
            assert_abs_diff_eq!(col_sum, 1.0, epsilon = 1e-10);
        }
        assert!(e.iter().all(|v| *v >= 0.0));
        assert!(bspline_basis(&grid, 3, 3).is_err());
    }

    #[test]
    fn bandpass_examples() {
        let grid = g(512);
        let s3 = Curve::from_fn(grid.clone(), |t| 2f64.sqrt() * (2.0 * PI * 3.0 * t).sin()).unwrap();
        let same = bandpass_project(&s3, 3, 3).unwrap();
        for (a, b) in same.values().iter().zip(s3.values()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-4);
        }
        let off = bandpass_project(&s3, 5, 9).unwrap();
        assert!(off.values().iter().all(|v| v.abs() < 1e-4));
        let slow = |t: f64| (2.0 * PI * 2.0 * t).cos();
        let fast = |t: f64| 0.7 * (2.0 * PI * 7.0 * t).sin();
        let mix = Curve::from_fn(grid.clone(), |t| slow(t) + fast(t)).unwrap();
        let out = bandpass_project(&mix, 5, 9).unwrap();
        for (v, t) in out.values().iter().zip(grid.points()) {
            assert_abs_diff_eq!(*v, fast(*t), epsilon = 1e-4);
        }
        assert!(bandpass_project(&mix, 0, 3).is_err());
        assert!(bandpass_project(&mix, 4, 3).is_err());
        assert!(bandpass_project(&mix, 3, 256).is_err());
    }

    #[test]
    fn concat_layout() {
        let grid = g(4);
        let a = CurvePanel::from_rows(grid.clone(), array![[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let b = CurvePanel::from_rows(grid.clone(), array![[5.0, 6.0, 7.0, 8.0]]).unwrap();
        let one = concat_channels(std::slice::from_ref(&a), 0).unwrap();
        assert_eq!(one.values(), a.row(0));
        let two = concat_channels(&[a.clone(), b.clone()], 0).unwrap();
        assert_eq!(two.values().as_slice().unwrap(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(two.grid().len(), 8);
        let short = CurvePanel::from_rows(grid, Array2::zeros((2, 4))).unwrap();
        assert!(matches!(concat_channels(&[a, short], 0), Err(VpcError::IncompatiblePanels(_))));
        assert!(concat_channels(&[b], 3).is_err());
    }

    #[test]
    fn concat_32_channels_rescales_norm() {
        let grid = g(1000);
        let panels: Vec<_> = (0..32)
            .map(|c| {
                let f = move |t: f64| ((c + 1) as f64) * (2.0 * PI * (c % 5 + 1) as f64 * t).sin();
                CurvePanel::from_curves(grid.clone(), &[Curve::from_fn(grid.clone(), f).unwrap()]).unwrap()
            })
            .collect();
        let cat = concat_channels(&panels, 0).unwrap();
        assert_eq!(cat.len(), 32_000);
        let expect: f64 = panels.iter().map(|p| l2_norm(&p.curve(0)).powi(2)).sum::<f64>() / 32.0;
        let got = l2_norm(&cat).powi(2);
        assert!((got - expect).abs() / expect < 2e-3, "{got} vs {expect}");
    }
}
