//! Integral operators on the discretised L2 space: lagged covariance
//! estimators, Hilbert-Schmidt norm, kernel arithmetic and the weighted
//! symmetric eigenproblem that yields L2-orthonormal eigenfunctions.

use std::cmp::Ordering;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{invalid, Result, VpcError};
use crate::funcgrid::{ensure_same_grid, Curve, CurvePanel, GridRef};
use crate::linalg::symmetric_eigen;
use crate::scalar::Scalar;

/// Operator `(A x)(t) = int k(t, s) x(s) ds` stored as its kernel on the grid.
#[derive(Debug, Clone)]
pub struct KernelOperator<S> {
    grid: GridRef<S>,
    kernel: Array2<S>,
}

impl<S: Scalar> KernelOperator<S> {
    pub fn new(grid: GridRef<S>, kernel: Array2<S>) -> Result<Self> {
        let t = grid.len();
        if kernel.dim() != (t, t) {
            return Err(invalid(format!(
                "kernel shape {:?} does not match grid of {t} points",
                kernel.dim()
            )));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(invalid("kernel entries must be finite"));
        }
        Ok(KernelOperator { grid, kernel })
    }

    pub fn zeros(grid: GridRef<S>) -> Self {
        let t = grid.len();
        KernelOperator { grid, kernel: Array2::zeros((t, t)) }
    }

    pub fn grid(&self) -> &GridRef<S> {
        &self.grid
    }

    pub fn kernel(&self) -> ArrayView2<'_, S> {
        self.kernel.view()
    }

    pub fn into_kernel(self) -> Array2<S> {
        self.kernel
    }

    pub fn transpose(&self) -> Self {
        KernelOperator { grid: self.grid.clone(), kernel: self.kernel.t().to_owned() }
    }

    /// Largest `|k(i, j) - k(j, i)|`.
    pub fn asymmetry(&self) -> S {
        let t = self.kernel.nrows();
        let mut worst = S::zero();
        for i in 0..t {
            for j in 0..i {
                worst = worst.max((self.kernel[[i, j]] - self.kernel[[j, i]]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> S {
        self.kernel.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    /// `(K + K^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = S::lit(0.5);
        let kernel = (&self.kernel + &self.kernel.t()) * half;
        KernelOperator { grid: self.grid.clone(), kernel }
    }

    /// Hilbert-Schmidt norm, i.e. the L2 norm of the kernel surface.
    pub fn hs_norm(&self) -> S {
        let w = self.grid.weights();
        let mut acc = S::zero();
        for (i, row) in self.kernel.axis_iter(Axis(0)).enumerate() {
            let mut r = S::zero();
            for (wj, k) in w.iter().zip(row.iter()) {
                r += *wj * *k * *k;
            }
            acc += w[i] * r;
        }
        acc.sqrt()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(KernelOperator { grid: self.grid.clone(), kernel: &self.kernel + &other.kernel })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(KernelOperator { grid: self.grid.clone(), kernel: &self.kernel - &other.kernel })
    }

    pub fn scale(&self, c: S) -> Self {
        KernelOperator { grid: self.grid.clone(), kernel: &self.kernel * c }
    }

    /// Quadrature application `(A x)(t_i) = sum_j w_j k(t_i, t_j) x(t_j)`.
    pub fn apply(&self, x: &Curve<S>) -> Result<Curve<S>> {
        ensure_same_grid(&self.grid, x.grid())?;
        Curve::new(self.grid.clone(), self.apply_values(x.values()))
    }

    pub(crate) fn apply_values(&self, x: ArrayView1<'_, S>) -> Array1<S> {
        let wx = &x * &self.grid.weights_view();
        self.kernel.dot(&wx)
    }

    /// Composition `A o B` with kernel `sum_m k_A(t_i, t_m) w_m k_B(t_m, t_j)`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        let weighted = &other.kernel * &self.grid.weights_view().insert_axis(Axis(1));
        Ok(KernelOperator { grid: self.grid.clone(), kernel: self.kernel.dot(&weighted) })
    }

    /// L2-orthonormal eigenpairs, descending eigenvalues, at most `max_rank` of them.
    pub fn eigendecompose(&self, max_rank: usize) -> Result<EigenSystem<S>> {
        let mut pairs = self.eigenpairs()?;
        sort_pairs_by(&mut pairs, |v| v);
        pairs.truncate(max_rank);
        Ok(EigenSystem::from_pairs(self.grid.clone(), pairs))
    }

    /// Unsorted, sign-normalised eigenpairs of the symmetrised kernel.
    pub(crate) fn eigenpairs(&self) -> Result<Vec<(S, Array1<S>)>> {
        let scale = S::one().max(self.max_abs());
        let asym = self.asymmetry();
        if asym > S::lit(S::STRUCTURAL_TOL) * scale {
            return Err(VpcError::NotSymmetric { asymmetry: asym.to_f64_lossy() });
        }
        let sym = self.symmetrized();
        let sqrt_w: Array1<S> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let t = sqrt_w.len();
        let mut m = sym.kernel;
        for i in 0..t {
            for j in 0..t {
                m[[i, j]] *= sqrt_w[i] * sqrt_w[j];
            }
        }
        let (values, vectors) = symmetric_eigen(&m);
        Ok(values
            .into_iter()
            .zip(vectors.axis_iter(Axis(0)))
            .map(|(lambda, u)| {
                let mut v = &u / &sqrt_w;
                normalize_sign(&mut v);
                (lambda, v)
            })
            .collect())
    }
}

/// Flips `v` so that its largest-magnitude coordinate is positive.
pub(crate) fn normalize_sign<S: Scalar>(v: &mut Array1<S>) {
    let mut best = 0;
    let mut best_abs = S::zero();
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < S::zero() {
        v.mapv_inplace(|x| -x);
    }
}

/// Sorts eigenpairs by descending `key(value)`; near-equal keys fall back to the
/// lexicographic order of the (sign-normalised) vectors, largest first.
pub(crate) fn sort_pairs_by<S: Scalar>(pairs: &mut [(S, Array1<S>)], key: impl Fn(S) -> S) {
    pairs.sort_by(|a, b| key(b.0).partial_cmp(&key(a.0)).unwrap_or(Ordering::Equal));
    let scale = pairs.iter().fold(S::zero(), |m, p| m.max(key(p.0).abs()));
    let tie = S::epsilon() * S::lit(64.0) * scale.max(S::min_positive_value());
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && (key(pairs[end - 1].0) - key(pairs[end].0)).abs() <= tie {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|a, b| lexicographic_desc(&a.1, &b.1));
        }
        start = end;
    }
}

fn lexicographic_desc<S: Scalar>(a: &Array1<S>, b: &Array1<S>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match y.partial_cmp(x) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Eigenvalues with their L2-orthonormal eigenfunctions (row `j` of `functions`).
#[derive(Debug, Clone)]
pub struct EigenSystem<S> {
    grid: GridRef<S>,
    eigenvalues: Vec<S>,
    functions: Array2<S>,
}

impl<S: Scalar> EigenSystem<S> {
    pub(crate) fn from_pairs(grid: GridRef<S>, pairs: Vec<(S, Array1<S>)>) -> Self {
        let t = grid.len();
        let mut functions = Array2::zeros((pairs.len(), t));
        let mut eigenvalues = Vec::with_capacity(pairs.len());
        for (j, (lambda, v)) in pairs.into_iter().enumerate() {
            eigenvalues.push(lambda);
            functions.row_mut(j).assign(&v);
        }
        EigenSystem { grid, eigenvalues, functions }
    }

    pub fn grid(&self) -> &GridRef<S> {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[S] {
        &self.eigenvalues
    }

    pub fn functions(&self) -> ArrayView2<'_, S> {
        self.functions.view()
    }

    pub fn function(&self, j: usize) -> Curve<S> {
        Curve::new(self.grid.clone(), self.functions.row(j).to_owned()).expect("finite eigenfunction")
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Kernel `sum_j lambda_j v_j(t) v_j(s)`.
    pub fn reconstruct(&self) -> KernelOperator<S> {
        let scaled = &self.functions * &Array1::from(self.eigenvalues.clone()).insert_axis(Axis(1));
        KernelOperator { grid: self.grid.clone(), kernel: self.functions.t().dot(&scaled) }
    }
}

/// `y (x) y`, the operator `<y, .> y`.
pub fn rank_one<S: Scalar>(y: &Curve<S>) -> KernelOperator<S> {
    let v = y.values();
    let col = v.insert_axis(Axis(1));
    let row = v.insert_axis(Axis(0));
    KernelOperator { grid: y.grid().clone(), kernel: col.dot(&row) }
}

/// Sum over all within-fragment pairs of `X_k(t_i) X_{k+h}(t_j)` and the number of pairs.
pub(crate) fn lagged_cross_sum<S: Scalar>(
    fragments: &[ArrayView2<'_, S>],
    t: usize,
    h: usize,
) -> (Array2<S>, usize) {
    let mut acc = Array2::zeros((t, t));
    let mut count = 0;
    for frag in fragments {
        let n = frag.nrows();
        if n <= h {
            continue;
        }
        let lead = frag.slice(s![..n - h, ..]);
        let lagged = frag.slice(s![h.., ..]);
        ndarray::linalg::general_mat_mul(S::one(), &lead.t(), &lagged, S::one(), &mut acc);
        count += n - h;
    }
    (acc, count)
}

/// Lag-`h` estimator averaged over independent fragments of one sequence; no pair
/// straddles two fragments.
pub fn estimate_lagged_cov_fragments<S: Scalar>(
    grid: &GridRef<S>,
    fragments: &[ArrayView2<'_, S>],
    h: usize,
) -> Result<KernelOperator<S>> {
    let (sum, count) = lagged_cross_sum(fragments, grid.len(), h);
    if count == 0 {
        return Err(VpcError::InsufficientSample(format!(
            "no curve pairs at lag {h} in {} fragment(s)",
            fragments.len()
        )));
    }
    Ok(KernelOperator { grid: grid.clone(), kernel: sum / S::from_usize_lossy(count) })
}

/// `(C^(h), C^(-h))` with `C^(h)(t_i, t_j) = (n - h)^-1 sum_k X_k(t_i) X_{k+h}(t_j)`.
pub fn estimate_lagged_cov<S: Scalar>(
    panel: &CurvePanel<S>,
    h: usize,
) -> Result<(KernelOperator<S>, KernelOperator<S>)> {
    estimate_lagged_cov_with(panel, h, false)
}

/// As [`estimate_lagged_cov`], optionally subtracting the panel mean curve first.
pub fn estimate_lagged_cov_with<S: Scalar>(
    panel: &CurvePanel<S>,
    h: usize,
    demean: bool,
) -> Result<(KernelOperator<S>, KernelOperator<S>)> {
    if h >= panel.len() {
        return Err(VpcError::InsufficientSample(format!(
            "lag {h} needs more than {h} curves, panel has {}",
            panel.len()
        )));
    }
    let forward = if demean {
        let mean = panel.data().mean_axis(Axis(0)).expect("non-empty panel");
        let centred = &panel.data() - &mean.insert_axis(Axis(0));
        estimate_lagged_cov_fragments(panel.grid(), &[centred.view()], h)?
    } else {
        estimate_lagged_cov_fragments(panel.grid(), &[panel.data()], h)?
    };
    let backward = forward.transpose();
    Ok((forward, backward))
}

/// `C^(h) + C^(-h)`.
pub fn symmetrized_lagged_cov<S: Scalar>(panel: &CurvePanel<S>, h: usize) -> Result<KernelOperator<S>> {
    let (fwd, bwd) = estimate_lagged_cov(panel, h)?;
    fwd.add(&bwd)
}

/// Symmetrised lag-`h` operator of a query block `Y_1..Y_{p+1}`.
pub fn empirical_y_operator<S: Scalar>(ys: &[Curve<S>], h: usize) -> Result<KernelOperator<S>> {
    let first = ys.first().ok_or_else(|| VpcError::InsufficientSample("empty query block".into()))?;
    if ys.len() < h + 1 {
        return Err(VpcError::InsufficientSample(format!(
            "lag {h} needs at least {} query curves, got {}",
            h + 1,
            ys.len()
        )));
    }
    let panel = CurvePanel::from_curves(first.grid().clone(), ys)?;
    symmetrized_lagged_cov(&panel, h)
}
