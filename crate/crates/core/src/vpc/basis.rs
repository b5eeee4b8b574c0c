//! Discriminative feature functions: eigenfunctions of the squared difference of
//! two groups' symmetrised lag-`h` operators, and the score matrices that
//! describe an operator in that basis.

use ndarray::{s, Array2, ArrayView1, ArrayView2};

use crate::error::{invalid, Result, VpcError};
use crate::funcgrid::{ensure_same_grid, Curve, CurvePanel, GridRef};
use crate::operators::{sort_pairs_by, symmetrized_lagged_cov, EigenSystem, KernelOperator};
use crate::scalar::Scalar;

/// Eigenpairs of `R_h = (kappa_0 - kappa_1)^2` for one lag.
///
/// `eigenvalues` holds the (descending) spectrum that was computed, `functions`
/// the first `d` eigenfunctions as rows. A basis with `d == 0` carries no
/// information and is skipped by the classifier.
#[derive(Debug, Clone)]
pub struct DiscriminativeBasis<S> {
    pub(crate) lag: usize,
    pub(crate) eigenvalues: Vec<S>,
    pub(crate) functions: Array2<S>,
    pub(crate) grid: GridRef<S>,
}

impl<S: Scalar> DiscriminativeBasis<S> {
    pub(crate) fn from_parts(
        grid: GridRef<S>,
        lag: usize,
        eigenvalues: Vec<S>,
        functions: Array2<S>,
    ) -> Result<Self> {
        if functions.ncols() != grid.len() {
            return Err(invalid("basis functions do not match the grid"));
        }
        if functions.nrows() > eigenvalues.len() {
            return Err(invalid("basis has more functions than eigenvalues"));
        }
        Ok(DiscriminativeBasis { lag, eigenvalues, functions, grid })
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn eigenvalues(&self) -> &[S] {
        &self.eigenvalues
    }

    /// Selected dimension.
    pub fn d(&self) -> usize {
        self.functions.nrows()
    }

    pub fn functions(&self) -> ArrayView2<'_, S> {
        self.functions.view()
    }

    pub fn function(&self, j: usize) -> Curve<S> {
        Curve::new(self.grid.clone(), self.functions.row(j).to_owned()).expect("finite basis function")
    }

    pub fn grid(&self) -> &GridRef<S> {
        &self.grid
    }

    /// Keeps the first `d` functions (clamped to what is available).
    pub fn truncated(&self, d: usize) -> Self {
        let d = d.min(self.functions.nrows());
        DiscriminativeBasis {
            lag: self.lag,
            eigenvalues: self.eigenvalues.clone(),
            functions: self.functions.slice(s![..d, ..]).to_owned(),
            grid: self.grid.clone(),
        }
    }

    /// Flips the sign of function `j`; used to check sign invariance.
    pub fn flip_sign(&mut self, j: usize) {
        self.functions.row_mut(j).mapv_inplace(|v| -v);
    }

    /// Rows `w(t) * nu_j(t)`: projecting a curve is a plain dot product with these.
    pub(crate) fn weighted_functions(&self) -> Array2<S> {
        &self.functions * &self.grid.weights_view()
    }
}

/// Eigenpairs of `R_h` from the symmetric difference `A = kappa_0 - kappa_1`:
/// `A v = theta v` gives `R_h v = theta^2 v`, so the square is never formed.
pub fn basis_from_difference<S: Scalar>(
    difference: &KernelOperator<S>,
    lag: usize,
    max_rank: usize,
) -> Result<DiscriminativeBasis<S>> {
    let mut pairs = difference.eigenpairs()?;
    for p in pairs.iter_mut() {
        p.0 = p.0 * p.0;
    }
    sort_pairs_by(&mut pairs, |v| v);
    pairs.truncate(max_rank);
    let sys = EigenSystem::from_pairs(difference.grid().clone(), pairs);
    Ok(DiscriminativeBasis {
        lag,
        eigenvalues: sys.eigenvalues().to_vec(),
        functions: sys.functions().to_owned(),
        grid: difference.grid().clone(),
    })
}

pub fn discriminative_basis<S: Scalar>(
    panel0: &CurvePanel<S>,
    panel1: &CurvePanel<S>,
    h: usize,
    max_rank: usize,
) -> Result<DiscriminativeBasis<S>> {
    ensure_same_grid(panel0.grid(), panel1.grid())?;
    let k0 = symmetrized_lagged_cov(panel0, h)?;
    let k1 = symmetrized_lagged_cov(panel1, h)?;
    basis_from_difference(&k0.sub(&k1)?, h, max_rank)
}

/// Smallest `d` whose leading eigenvalues carry at least `ratio` of the spectrum's mass.
pub fn select_dim<S: Scalar>(basis: &DiscriminativeBasis<S>, ratio: S) -> Result<usize> {
    select_dim_from_spectrum(&basis.eigenvalues, ratio)
}

pub fn select_dim_from_spectrum<S: Scalar>(eigenvalues: &[S], ratio: S) -> Result<usize> {
    if !(ratio > S::zero() && ratio <= S::one()) {
        return Err(invalid(format!("dimension ratio {ratio} must lie in (0, 1]")));
    }
    let mut cumulative = Vec::with_capacity(eigenvalues.len());
    let mut acc = S::zero();
    for v in eigenvalues {
        acc += v.max(S::zero());
        cumulative.push(acc);
    }
    let total = acc;
    if !(total > S::zero()) {
        return Err(VpcError::NoDiscrepancy);
    }
    let d = cumulative
        .iter()
        .position(|c| *c >= ratio * total)
        .unwrap_or(eigenvalues.len() - 1);
    Ok(d + 1)
}

/// `S_ij = <kappa(nu_i), nu_j>` for the basis functions.
pub fn score_matrix<S: Scalar>(kappa: &KernelOperator<S>, basis: &DiscriminativeBasis<S>) -> Result<Array2<S>> {
    ensure_same_grid(kappa.grid(), &basis.grid)?;
    Ok(scores_in_basis(kappa.kernel(), &basis.weighted_functions()))
}

pub(crate) fn scores_in_basis<S: Scalar>(kernel: ArrayView2<'_, S>, weighted: &Array2<S>) -> Array2<S> {
    // M_ij = <nu_i, K nu_j> = S_ji
    let m = weighted.dot(&kernel).dot(&weighted.t());
    m.reversed_axes()
}

/// Query scores `<kappa_y,h(nu_i), nu_j>` of a block from its projections
/// `xi[k, i] = <Y_k, nu_i>` (rows in time order).
pub(crate) fn query_scores<S: Scalar>(xi: ArrayView2<'_, S>, h: usize) -> Array2<S> {
    let m = xi.nrows();
    let d = xi.ncols();
    let mut out = Array2::zeros((d, d));
    if m <= h {
        return out;
    }
    let lead = xi.slice(s![..m - h, ..]);
    let lagged = xi.slice(s![h.., ..]);
    // sum_k xi_{k+h,i} xi_{k,j} + xi_{k,i} xi_{k+h,j}
    let cross = lagged.t().dot(&lead);
    out.assign(&cross);
    out += &cross.t();
    out / S::from_usize_lossy(m - h)
}

/// Squared Frobenius distance `sum_ij (a_ij - b_ij)^2`.
pub(crate) fn squared_distance<S: Scalar>(a: ArrayView2<'_, S>, b: ArrayView2<'_, S>) -> S {
    a.iter().zip(b.iter()).fold(S::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
}

pub(crate) fn project_block<S: Scalar>(block: ArrayView2<'_, S>, weighted: &Array2<S>) -> Array2<S> {
    block.dot(&weighted.t())
}

#[allow(dead_code)]
pub(crate) fn project_curve<S: Scalar>(y: ArrayView1<'_, S>, weighted: &Array2<S>) -> ndarray::Array1<S> {
    weighted.dot(&y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcgrid::{fourier_basis, Grid};
    use crate::operators::{empirical_y_operator, rank_one};
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};

    fn random_panel(grid: &GridRef<f64>, n: usize, seed: u64) -> CurvePanel<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let basis = fourier_basis(grid, 7).unwrap();
        let coeffs = Array2::from_shape_fn((n, 7), |_| rng.random_range(-1.0..1.0));
        basis.synthesize(coeffs.view()).unwrap()
    }

    #[test]
    fn identical_panels_have_zero_spectrum() {
        let grid = Grid::<f64>::uniform(32).unwrap();
        let p = random_panel(&grid, 10, 1);
        let b = discriminative_basis(&p, &p, 1, 32).unwrap();
        assert!(b.eigenvalues().iter().all(|v| v.abs() < 1e-10));
        assert!(matches!(select_dim(&b, 0.9), Err(VpcError::NoDiscrepancy)));
    }

    #[test]
    fn constructed_difference_recovers_fourier_directions() {
        let grid = Grid::<f64>::uniform(256).unwrap();
        let f = fourier_basis(&grid, 5).unwrap();
        let f3 = f.function(2);
        let f5 = f.function(4);
        let diff = rank_one(&f3).scale(2.0).sub(&rank_one(&f5)).unwrap();
        let b = basis_from_difference(&diff, 0, 4).unwrap();
        assert_abs_diff_eq!(b.eigenvalues()[0], 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(b.eigenvalues()[1], 1.0, epsilon = 1e-8);
        assert!(b.eigenvalues()[2].abs() < 1e-10);
        let ip = |a: &Curve<f64>, c: &Curve<f64>| crate::funcgrid::inner_product(a, c).unwrap();
        assert_abs_diff_eq!(ip(&b.function(0), &f3).abs(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(ip(&b.function(1), &f5).abs(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn select_dim_examples() {
        assert_eq!(select_dim_from_spectrum(&[4.0, 1.0], 0.9).unwrap(), 2);
        assert_eq!(select_dim_from_spectrum(&[9.0, 1.0], 0.9).unwrap(), 1);
        assert_eq!(select_dim_from_spectrum(&[1.0, 1.0, 1.0, 1.0], 1.0).unwrap(), 4);
        assert!(matches!(select_dim_from_spectrum(&[0.0, 0.0], 0.9), Err(VpcError::NoDiscrepancy)));
        assert!(select_dim_from_spectrum(&[1.0], 0.0).is_err());
        assert!(select_dim_from_spectrum(&[1.0], 1.5).is_err());
    }

    #[test]
    fn score_matrix_examples() {
        let grid = Grid::<f64>::uniform(64).unwrap();
        let p0 = random_panel(&grid, 12, 2);
        let p1 = random_panel(&grid, 12, 3);
        let b = discriminative_basis(&p0, &p1, 0, 64).unwrap().truncated(4);
        let zero = score_matrix(&KernelOperator::zeros(grid.clone()), &b).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let nu1 = b.function(0);
        let s = score_matrix(&rank_one(&nu1), &b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s[[i, j]], expect, epsilon = 1e-8);
            }
        }
        let kappa = symmetrized_lagged_cov(&p0, 2).unwrap();
        let s = score_matrix(&kappa, &b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(s[[i, j]], s[[j, i]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn score_matrix_matches_apply_then_inner_product() {
        let grid = Grid::<f64>::uniform(40).unwrap();
        let p0 = random_panel(&grid, 9, 4);
        let p1 = random_panel(&grid, 9, 5);
        let b = discriminative_basis(&p0, &p1, 1, 40).unwrap().truncated(3);
        let kappa = symmetrized_lagged_cov(&p1, 1).unwrap();
        let s = score_matrix(&kappa, &b).unwrap();
        for i in 0..3 {
            let applied = kappa.apply(&b.function(i)).unwrap();
            for j in 0..3 {
                let direct = crate::funcgrid::inner_product(&applied, &b.function(j)).unwrap();
                assert_abs_diff_eq!(s[[i, j]], direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn projection_route_equals_kernel_route() {
        let grid = Grid::<f64>::uniform(48).unwrap();
        let p0 = random_panel(&grid, 10, 6);
        let p1 = random_panel(&grid, 10, 7);
        let ys = random_panel(&grid, 4, 8);
        for h in 0..4 {
            let b = discriminative_basis(&p0, &p1, h, 48).unwrap().truncated(5);
            let kernel_route = score_matrix(&empirical_y_operator(&ys.curves(), h).unwrap(), &b).unwrap();
            let xi = project_block(ys.data(), &b.weighted_functions());
            let proj_route = query_scores(xi.view(), h);
            for (a, c) in kernel_route.iter().zip(proj_route.iter()) {
                assert_abs_diff_eq!(*a, *c, epsilon = 1e-12);
            }
        }
        let _ = Array1::<f64>::zeros(1);
    }
}
