//! Trained classifier state and the weighted nearest-centroid decision rule.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, VpcError};
use crate::funcgrid::{ensure_same_grid, Curve, CurvePanel, GridRef};
use crate::operators::{estimate_lagged_cov_fragments, KernelOperator};
use crate::scalar::Scalar;

use super::basis::{
    basis_from_difference, project_block, query_scores, scores_in_basis, select_dim_from_spectrum,
    squared_distance, DiscriminativeBasis,
};

/// Binary group label; ties in the decision rule go to `One`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Zero,
    One,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::Zero => 0,
            Group::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Group::Zero
        } else {
            Group::One
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision<S> {
    pub label: Group,
    pub d0: S,
    pub d1: S,
}

impl<S: Scalar> Decision<S> {
    pub(crate) fn from_distances(d0: S, d1: S) -> Self {
        let label = if d0 - d1 < S::zero() { Group::Zero } else { Group::One };
        Decision { label, d0, d1 }
    }
}

/// How many discriminative functions each lag keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimRule<S> {
    /// Smallest `d` reaching this fraction of the spectrum.
    Ratio(S),
    Fixed(usize),
    /// Every available direction (no reduction).
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `exp(alpha P(h)) / (||C_0^(h)|| + ||C_1^(h)||)`.
    LagWeighted,
    /// Every lag gets weight one.
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<S> {
    pub max_lag: usize,
    pub alpha: S,
    pub dim: DimRule<S>,
    pub weighting: Weighting,
    /// When false, a model whose every lag is dropped is returned instead of an error;
    /// it classifies everything as a tie.
    pub require_discrepancy: bool,
    /// Upper bound on the number of eigenpairs kept per lag.
    pub max_rank: Option<usize>,
}

impl<S: Scalar> TrainConfig<S> {
    pub fn new(max_lag: usize, alpha: S) -> Self {
        TrainConfig {
            max_lag,
            alpha,
            dim: DimRule::Ratio(S::lit(0.9)),
            weighting: Weighting::LagWeighted,
            require_discrepancy: true,
            max_rank: None,
        }
    }

    pub fn with_dim(mut self, dim: DimRule<S>) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn lenient(mut self) -> Self {
        self.require_discrepancy = false;
        self
    }
}

/// One lag of a trained model. `d() == 0` marks a lag dropped for lack of discrepancy.
#[derive(Debug, Clone)]
pub struct LagComponent<S> {
    pub(crate) basis: DiscriminativeBasis<S>,
    pub(crate) scores0: Array2<S>,
    pub(crate) scores1: Array2<S>,
    pub(crate) weight: S,
    pub(crate) single_lag_rate: S,
    pub(crate) amplitude: S,
    weighted: Array2<S>,
}

impl<S: Scalar> LagComponent<S> {
    /// Scores both centroids in `basis`.
    pub fn from_basis(
        basis: DiscriminativeBasis<S>,
        kappa0: &KernelOperator<S>,
        kappa1: &KernelOperator<S>,
        weight: S,
        single_lag_rate: S,
    ) -> Result<Self> {
        ensure_same_grid(kappa0.grid(), basis.grid())?;
        ensure_same_grid(kappa1.grid(), basis.grid())?;
        let weighted = basis.weighted_functions();
        let scores0 = scores_in_basis(kappa0.kernel(), &weighted);
        let scores1 = scores_in_basis(kappa1.kernel(), &weighted);
        Ok(LagComponent { basis, scores0, scores1, weight, single_lag_rate, amplitude: S::zero(), weighted })
    }

    pub(crate) fn from_stored(
        basis: DiscriminativeBasis<S>,
        scores0: Array2<S>,
        scores1: Array2<S>,
        weight: S,
        single_lag_rate: S,
        amplitude: S,
    ) -> Result<Self> {
        let d = basis.d();
        if scores0.dim() != (d, d) || scores1.dim() != (d, d) {
            return Err(invalid(format!("lag {}: score matrices must be {d}x{d}", basis.lag())));
        }
        let weighted = basis.weighted_functions();
        Ok(LagComponent { basis, scores0, scores1, weight, single_lag_rate, amplitude, weighted })
    }

    pub fn lag(&self) -> usize {
        self.basis.lag()
    }

    pub fn d(&self) -> usize {
        self.basis.d()
    }

    pub fn is_dropped(&self) -> bool {
        self.basis.d() == 0
    }

    pub fn basis(&self) -> &DiscriminativeBasis<S> {
        &self.basis
    }

    pub fn scores0(&self) -> ArrayView2<'_, S> {
        self.scores0.view()
    }

    pub fn scores1(&self) -> ArrayView2<'_, S> {
        self.scores1.view()
    }

    pub fn weight(&self) -> S {
        self.weight
    }

    pub fn single_lag_rate(&self) -> S {
        self.single_lag_rate
    }

    /// `||C_0^(h)||_S + ||C_1^(h)||_S` of the training panels.
    pub fn amplitude(&self) -> S {
        self.amplitude
    }

    /// Unweighted `(sum_ij (S0 - y)^2, sum_ij (S1 - y)^2)` for a query block.
    pub(crate) fn raw_distances(&self, block: ArrayView2<'_, S>) -> (S, S) {
        if self.is_dropped() {
            return (S::zero(), S::zero());
        }
        let xi = project_block(block, &self.weighted);
        let y = query_scores(xi.view(), self.lag());
        (squared_distance(self.scores0.view(), y.view()), squared_distance(self.scores1.view(), y.view()))
    }
}

/// Symmetrised lag operators and autocovariance norms of one group, for lags `0..=max_lag`.
#[derive(Debug, Clone)]
pub(crate) struct GroupStats<S> {
    pub(crate) n_curves: usize,
    pub(crate) kappa: Vec<KernelOperator<S>>,
    pub(crate) cov_norm: Vec<S>,
}

impl<S: Scalar> GroupStats<S> {
    pub(crate) fn from_fragments(grid: &GridRef<S>, fragments: &[ArrayView2<'_, S>], max_lag: usize) -> Result<Self> {
        let n_curves = fragments.iter().map(|f| f.nrows()).sum();
        let mut kappa = Vec::with_capacity(max_lag + 1);
        let mut cov_norm = Vec::with_capacity(max_lag + 1);
        for h in 0..=max_lag {
            let fwd = estimate_lagged_cov_fragments(grid, fragments, h)?;
            cov_norm.push(fwd.hs_norm());
            kappa.push(fwd.add(&fwd.transpose())?);
        }
        Ok(GroupStats { n_curves, kappa, cov_norm })
    }

    pub(crate) fn from_panel(panel: &CurvePanel<S>, max_lag: usize) -> Result<Self> {
        if panel.len() <= max_lag {
            return Err(VpcError::InsufficientSample(format!(
                "lag {max_lag} needs more than {max_lag} curves, panel has {}",
                panel.len()
            )));
        }
        Self::from_fragments(panel.grid(), &[panel.data()], max_lag)
    }
}

/// Discriminative basis and centroid scores for lag `h`, weight left at one.
/// A lag whose discrepancy spectrum is numerically zero comes back dropped.
pub(crate) fn fit_lag<S: Scalar>(
    grid: &GridRef<S>,
    st0: &GroupStats<S>,
    st1: &GroupStats<S>,
    h: usize,
    dim: DimRule<S>,
    max_rank: Option<usize>,
) -> Result<LagComponent<S>> {
    let t = grid.len();
    let k0 = &st0.kappa[h];
    let k1 = &st1.kappa[h];
    let diff = k0.sub(k1)?;
    let basis = basis_from_difference(&diff, h, max_rank.unwrap_or(t))?;
    let amplitude = st0.cov_norm[h] + st1.cov_norm[h];

    let mass: S = basis.eigenvalues().iter().map(|v| v.max(S::zero())).sum();
    let scale = k0.hs_norm() + k1.hs_norm();
    let cap = t
        .min(st0.n_curves.saturating_sub(h + 1))
        .min(st1.n_curves.saturating_sub(h + 1))
        .min(basis.eigenvalues().len());
    let zero = !(mass > S::lit(S::ZERO_SPECTRUM_TOL) * scale * scale);
    let d = if zero || cap == 0 {
        log::warn!("lag {h} dropped: no covariance discrepancy between the groups");
        0
    } else {
        match dim {
            DimRule::Ratio(r) => select_dim_from_spectrum(basis.eigenvalues(), r)?.min(cap),
            DimRule::Fixed(k) => {
                if k > cap {
                    log::warn!("lag {h}: requested d = {k} exceeds the available rank {cap}");
                }
                k.min(cap)
            }
            DimRule::Full => cap,
        }
    };
    let basis = basis.truncated(d);
    let mut comp = LagComponent::from_basis(basis, k0, k1, S::one(), S::zero())?;
    comp.amplitude = amplitude;
    Ok(comp)
}

/// `W(h) = exp(alpha P(h)) / amplitude`.
pub(crate) fn weight_from_amplitude<S: Scalar>(amplitude: S, alpha: S, rate: S, lag: usize) -> Result<S> {
    if !(amplitude > S::zero()) {
        return Err(VpcError::DegenerateLag { lag });
    }
    Ok((alpha * rate).exp() / amplitude)
}

pub fn lag_weight<S: Scalar>(
    panel0: &CurvePanel<S>,
    panel1: &CurvePanel<S>,
    h: usize,
    alpha: S,
    single_lag_rate: S,
) -> Result<S> {
    ensure_same_grid(panel0.grid(), panel1.grid())?;
    let n0 = estimate_lagged_cov_fragments(panel0.grid(), &[panel0.data()], h)?.hs_norm();
    let n1 = estimate_lagged_cov_fragments(panel1.grid(), &[panel1.data()], h)?.hs_norm();
    weight_from_amplitude(n0 + n1, alpha, single_lag_rate, h)
}

/// A trained classifier over lags `0..=max_lag`.
#[derive(Debug, Clone)]
pub struct VpcModel<S> {
    pub(crate) grid: GridRef<S>,
    pub(crate) components: Vec<LagComponent<S>>,
    pub(crate) alpha: S,
    pub(crate) tau: Option<S>,
    pub(crate) high_group: Option<Group>,
    pub(crate) scaled: bool,
    pub(crate) group_labels: [i64; 2],
}

impl<S: Scalar> VpcModel<S> {
    /// Assembles a model from components covering lags `0..components.len()` in order.
    pub fn from_components(grid: GridRef<S>, components: Vec<LagComponent<S>>, alpha: S) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("a model needs at least the lag-0 component"));
        }
        for (h, c) in components.iter().enumerate() {
            if c.lag() != h {
                return Err(invalid(format!("component {h} has lag {}", c.lag())));
            }
            ensure_same_grid(&grid, c.basis.grid())?;
        }
        Ok(VpcModel { grid, components, alpha, tau: None, high_group: None, scaled: false, group_labels: [0, 1] })
    }

    pub fn grid(&self) -> &GridRef<S> {
        &self.grid
    }

    pub fn max_lag(&self) -> usize {
        self.components.len() - 1
    }

    pub fn block_len(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[LagComponent<S>] {
        &self.components
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn tau(&self) -> Option<S> {
        self.tau
    }

    pub fn high_variation_group(&self) -> Option<Group> {
        self.high_group
    }

    pub fn scaled(&self) -> bool {
        self.scaled
    }

    pub fn group_labels(&self) -> [i64; 2] {
        self.group_labels
    }

    pub fn with_tau(mut self, tau: S, high_group: Group) -> Self {
        self.tau = Some(tau);
        self.high_group = Some(high_group);
        self
    }

    pub fn with_scaled(mut self, scaled: bool) -> Self {
        self.scaled = scaled;
        self
    }

    pub fn with_group_labels(mut self, labels: [i64; 2]) -> Self {
        self.group_labels = labels;
        self
    }

    pub fn is_degenerate(&self) -> bool {
        self.components.iter().all(|c| c.is_dropped())
    }

    /// Weighted distances of a block (rows in time order) to both centroids.
    pub fn distances(&self, block: ArrayView2<'_, S>) -> Result<Decision<S>> {
        if block.nrows() != self.block_len() {
            return Err(invalid(format!(
                "query block must hold exactly {} curves (max lag + 1), got {}",
                self.block_len(),
                block.nrows()
            )));
        }
        if block.ncols() != self.grid.len() {
            return Err(VpcError::IncompatibleGrids);
        }
        let mut d0 = S::zero();
        let mut d1 = S::zero();
        for c in &self.components {
            let (a, b) = c.raw_distances(block);
            d0 += c.weight * a;
            d1 += c.weight * b;
        }
        Ok(Decision::from_distances(d0, d1))
    }
}

/// Trains components for lags `0..=config.max_lag`; `rates[h]` is `P(h)`.
pub fn train<S: Scalar>(
    panel0: &CurvePanel<S>,
    panel1: &CurvePanel<S>,
    config: &TrainConfig<S>,
    rates: Option<&[S]>,
) -> Result<VpcModel<S>> {
    ensure_same_grid(panel0.grid(), panel1.grid())?;
    let st0 = GroupStats::from_panel(panel0, config.max_lag)?;
    let st1 = GroupStats::from_panel(panel1, config.max_lag)?;
    train_from_stats(panel0.grid(), &st0, &st1, config, rates)
}

pub(crate) fn train_from_stats<S: Scalar>(
    grid: &GridRef<S>,
    st0: &GroupStats<S>,
    st1: &GroupStats<S>,
    config: &TrainConfig<S>,
    rates: Option<&[S]>,
) -> Result<VpcModel<S>> {
    if let Some(r) = rates {
        if r.len() <= config.max_lag {
            return Err(invalid(format!("need P(h) for lags 0..={}, got {} rates", config.max_lag, r.len())));
        }
        if r.iter().any(|v| !(*v >= S::zero() && *v <= S::one())) {
            return Err(invalid("single-lag rates must lie in [0, 1]"));
        }
    } else if config.weighting == Weighting::LagWeighted && config.alpha != S::zero() {
        return Err(VpcError::PreconditionViolation(
            "lag weights with alpha != 0 need single-lag rates P(h)".into(),
        ));
    }
    let mut components = Vec::with_capacity(config.max_lag + 1);
    for h in 0..=config.max_lag {
        let mut comp = fit_lag(grid, st0, st1, h, config.dim, config.max_rank)?;
        let rate = rates.map_or(S::zero(), |r| r[h]);
        comp.single_lag_rate = rate;
        comp.weight = if comp.is_dropped() {
            S::zero()
        } else {
            match config.weighting {
                Weighting::Unit => S::one(),
                Weighting::LagWeighted => match weight_from_amplitude(comp.amplitude, config.alpha, rate, h) {
                    Ok(w) => w,
                    Err(e) => {
                        log::warn!("{e}; lag dropped");
                        comp = comp_dropped(comp);
                        S::zero()
                    }
                },
            }
        };
        components.push(comp);
    }
    if config.require_discrepancy && components.iter().all(|c| c.is_dropped()) {
        return Err(VpcError::UntrainableModel);
    }
    VpcModel::from_components(grid.clone(), components, config.alpha)
}

fn comp_dropped<S: Scalar>(c: LagComponent<S>) -> LagComponent<S> {
    let basis = c.basis.truncated(0);
    LagComponent::from_stored(basis, Array2::zeros((0, 0)), Array2::zeros((0, 0)), S::zero(), c.single_lag_rate, c.amplitude)
        .expect("empty component")
}

pub(crate) fn stack_block<S: Scalar>(grid: &GridRef<S>, ys: &[Curve<S>]) -> Result<Array2<S>> {
    let mut block = Array2::zeros((ys.len(), grid.len()));
    for (k, y) in ys.iter().enumerate() {
        ensure_same_grid(grid, y.grid())?;
        block.row_mut(k).assign(&y.values());
    }
    Ok(block)
}

/// Decision rule on a block `Y_1..Y_{p+1}`: group zero iff `D_0 - D_1 < 0`.
pub fn classify<S: Scalar>(model: &VpcModel<S>, ys: &[Curve<S>]) -> Result<Decision<S>> {
    if ys.len() != model.block_len() {
        return Err(invalid(format!(
            "query block must hold exactly {} curves (max lag + 1), got {}",
            model.block_len(),
            ys.len()
        )));
    }
    let block = stack_block(&model.grid, ys)?;
    model.distances(block.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcgrid::{fourier_basis, Grid};
    use crate::operators::symmetrized_lagged_cov;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn panel(grid: &GridRef<f64>, n: usize, seed: u64, stretch: &[f64]) -> CurvePanel<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let basis = fourier_basis(grid, stretch.len()).unwrap();
        let coeffs = Array2::from_shape_fn((n, stretch.len()), |(_, j)| stretch[j] * rng.random_range(-1.0..1.0));
        basis.synthesize(coeffs.view()).unwrap()
    }

    #[test]
    fn group_tie_rule() {
        assert_eq!(Decision::from_distances(1.0, 2.0).label, Group::Zero);
        assert_eq!(Decision::from_distances(2.0, 2.0).label, Group::One);
        assert_eq!(Decision::from_distances(3.0, 2.0).label, Group::One);
    }

    #[test]
    fn lag_weight_examples() {
        let grid = Grid::<f64>::uniform(32).unwrap();
        let p0 = panel(&grid, 20, 1, &[1.0, 2.0, 0.5]);
        let p1 = panel(&grid, 20, 2, &[1.0, 0.5, 2.0]);
        let n0 = estimate_lagged_cov_fragments(&grid, &[p0.data()], 1).unwrap().hs_norm();
        let n1 = estimate_lagged_cov_fragments(&grid, &[p1.data()], 1).unwrap().hs_norm();
        let w = lag_weight(&p0, &p1, 1, 0.0, 0.7).unwrap();
        assert_abs_diff_eq!(w, 1.0 / (n0 + n1), epsilon = 1e-14);
        let w10 = lag_weight(&p0, &p1, 1, 10.0, 0.5).unwrap();
        assert_abs_diff_eq!(w10 * (n0 + n1), 148.4131591025766, epsilon = 1e-9);
        let c = 3.0;
        let wc = lag_weight(&p0.scaled(c), &p1.scaled(c), 1, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(wc, w / (c * c), epsilon = 1e-14);
        let zero = CurvePanel::from_rows(grid.clone(), Array2::zeros((5, 32))).unwrap();
        assert!(matches!(lag_weight(&zero, &zero, 0, 1.0, 0.5), Err(VpcError::DegenerateLag { lag: 0 })));
    }

    #[test]
    fn p_zero_model_has_one_component() {
        let grid = Grid::<f64>::uniform(32).unwrap();
        let p0 = panel(&grid, 30, 3, &[1.0, 2.0, 0.5]);
        let p1 = panel(&grid, 30, 4, &[1.0, 0.5, 2.0]);
        let m = train(&p0, &p1, &TrainConfig::new(0, 0.0), None).unwrap();
        assert_eq!(m.components().len(), 1);
        assert!(m.components()[0].d() >= 1);
    }

    #[test]
    fn training_is_deterministic() {
        let grid = Grid::<f64>::uniform(24).unwrap();
        let p0 = panel(&grid, 30, 5, &[1.0, 2.0, 0.5, 1.0]);
        let p1 = panel(&grid, 30, 6, &[1.0, 0.5, 2.0, 1.0]);
        let cfg = TrainConfig::new(2, 10.0);
        let rates = [0.7, 0.6, 0.55];
        let a = train(&p0, &p1, &cfg, Some(&rates)).unwrap();
        let b = train(&p0, &p1, &cfg, Some(&rates)).unwrap();
        for (x, y) in a.components().iter().zip(b.components()) {
            assert_eq!(x.basis().functions(), y.basis().functions());
            assert_eq!(x.scores0(), y.scores0());
            assert_eq!(x.weight().to_bits(), y.weight().to_bits());
        }
    }

    #[test]
    fn identical_panels() {
        let grid = Grid::<f64>::uniform(24).unwrap();
        let p = panel(&grid, 30, 7, &[1.0, 2.0, 0.5]);
        let cfg = TrainConfig::new(1, 0.0);
        assert!(matches!(train(&p, &p, &cfg, None), Err(VpcError::UntrainableModel)));
        let m = train(&p, &p, &cfg.clone().lenient(), None).unwrap();
        let block = p.slice(0..2);
        let d = classify(&m, &block.curves()).unwrap();
        assert_eq!(d.d0, d.d1);
        assert_eq!(d.label, Group::One);
    }

    #[test]
    fn centroid_hit_classifies_to_group_zero() {
        // group 0 is the query block itself, so kappa_y = kappa_0 at every lag
        let grid = Grid::<f64>::uniform(24).unwrap();
        let ys = panel(&grid, 3, 8, &[1.0, 2.0, 0.5, 1.0]);
        let p1 = panel(&grid, 30, 9, &[1.0, 0.5, 2.0, 1.0]);
        let m = train(&ys, &p1, &TrainConfig::new(1, 0.0).with_weighting(Weighting::Unit).lenient(), None).unwrap();
        let d = classify(&m, &ys.slice(0..2).curves());
        // block of the first two curves does not reproduce kappa_0 of all three; use a full-rank check instead
        assert!(d.is_ok());
        let m = train(&ys.slice(0..2), &p1, &TrainConfig::new(1, 0.0).with_weighting(Weighting::Unit).lenient(), None)
            .unwrap();
        let d = classify(&m, &ys.slice(0..2).curves()).unwrap();
        assert!(d.d0.abs() < 1e-20, "{}", d.d0);
        assert!(d.d1 > 0.0);
        assert_eq!(d.label, Group::Zero);
    }

    #[test]
    fn classify_errors() {
        let grid = Grid::<f64>::uniform(24).unwrap();
        let p0 = panel(&grid, 30, 10, &[1.0, 2.0, 0.5]);
        let p1 = panel(&grid, 30, 11, &[1.0, 0.5, 2.0]);
        let m = train(&p0, &p1, &TrainConfig::new(1, 0.0), None).unwrap();
        assert!(matches!(classify(&m, &p0.slice(0..1).curves()), Err(VpcError::InvalidArgument(_))));
        let other = panel(&Grid::<f64>::uniform(20).unwrap(), 2, 12, &[1.0]);
        assert!(matches!(classify(&m, &other.curves()), Err(VpcError::IncompatibleGrids)));
        assert!(matches!(
            train(&p0, &p1, &TrainConfig::new(1, 10.0), None),
            Err(VpcError::PreconditionViolation(_))
        ));
    }

    #[test]
    fn component_scores_are_symmetric() {
        let grid = Grid::<f64>::uniform(24).unwrap();
        let p0 = panel(&grid, 30, 13, &[1.0, 2.0, 0.5, 1.0]);
        let p1 = panel(&grid, 30, 14, &[1.0, 0.5, 2.0, 1.0]);
        let m = train(&p0, &p1, &TrainConfig::new(2, 0.0), None).unwrap();
        for c in m.components() {
            for s in [c.scores0(), c.scores1()] {
                for i in 0..c.d() {
                    for j in 0..c.d() {
                        assert_abs_diff_eq!(s[[i, j]], s[[j, i]], epsilon = 1e-10);
                    }
                }
            }
        }
        let k = symmetrized_lagged_cov(&p0, 1).unwrap();
        let direct = crate::vpc::basis::score_matrix(&k, m.components()[1].basis()).unwrap();
        assert_eq!(direct, m.components()[1].scores0());
    }
}
