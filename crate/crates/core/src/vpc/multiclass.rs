//! More than two groups: a sequential tournament of pairwise classifiers.
//! The running winner plays group zero and the challenger group one, so a tie
//! hands the win to the challenger.

use crate::error::{invalid, Result, VpcError};
use crate::funcgrid::{Curve, CurvePanel};
use crate::scalar::Scalar;

use super::cv::single_lag_rates;
use super::model::{classify, train, Decision, Group, TrainConfig, VpcModel, Weighting};

/// Cross-validation settings used to estimate `P(h)` for each pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRateConfig<S> {
    pub reps: usize,
    pub ratio: S,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MulticlassModel<S> {
    labels: Vec<i64>,
    max_lag: usize,
    /// Upper-triangular pairs `(i, j)`, `i < j`, row-major; `None` when the pair
    /// shows no covariance discrepancy.
    pairs: Vec<Option<VpcModel<S>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassDecision<S> {
    /// Index of the winning group.
    pub winner: usize,
    pub label: i64,
    /// `(incumbent, challenger, decision)` for every round in order.
    pub rounds: Vec<(usize, usize, Decision<S>)>,
}

impl<S: Scalar> MulticlassModel<S> {
    pub fn groups(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn block_len(&self) -> usize {
        self.max_lag + 1
    }

    pub(crate) fn from_parts(labels: Vec<i64>, max_lag: usize, pairs: Vec<Option<VpcModel<S>>>) -> Result<Self> {
        let g = labels.len();
        if g < 2 || pairs.len() != g * (g - 1) / 2 {
            return Err(invalid(format!("{g} groups need {} pairwise models, got {}", g * (g.max(1) - 1) / 2, pairs.len())));
        }
        if pairs.iter().flatten().any(|m| m.max_lag() != max_lag) {
            return Err(invalid("every pairwise model must share the maximal lag"));
        }
        Ok(MulticlassModel { labels, max_lag, pairs })
    }

    /// Pairwise models in row-major upper-triangular order.
    pub fn pairs(&self) -> &[Option<VpcModel<S>>] {
        &self.pairs
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        let g = self.labels.len();
        i * g - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&VpcModel<S>> {
        assert!(i < j && j < self.groups());
        self.pairs[self.pair_index(i, j)].as_ref()
    }
}

/// Trains every pair. Group labels come from the panels' labels, defaulting to their position.
pub fn train_multiclass<S: Scalar>(
    panels: &[CurvePanel<S>],
    config: &TrainConfig<S>,
    rates: Option<PairRateConfig<S>>,
) -> Result<MulticlassModel<S>> {
    if panels.len() < 2 {
        return Err(invalid(format!("multi-class training needs at least 2 groups, got {}", panels.len())));
    }
    let needs_rates = config.weighting == Weighting::LagWeighted && config.alpha != S::zero();
    let mut pairs = Vec::new();
    for i in 0..panels.len() {
        for j in (i + 1)..panels.len() {
            let lag_rates = match (needs_rates, rates) {
                (false, _) => None,
                (true, Some(rc)) => Some(single_lag_rates(
                    &panels[i],
                    &panels[j],
                    config.max_lag,
                    rc.reps,
                    config.max_lag + 1,
                    rc.ratio,
                    crate::rng::derive_seed(rc.seed, &[i as u64, j as u64]),
                )?),
                (true, None) => {
                    return Err(VpcError::PreconditionViolation(
                        "lag weights with alpha != 0 need a rate configuration".into(),
                    ))
                }
            };
            let cfg = TrainConfig { require_discrepancy: true, ..config.clone() };
            let model = match train(&panels[i], &panels[j], &cfg, lag_rates.as_deref()) {
                Ok(m) => Some(m.with_group_labels([label_of(panels, i), label_of(panels, j)])),
                Err(VpcError::UntrainableModel) => {
                    log::warn!("groups {i} and {j} are indistinguishable; their comparison is always a tie");
                    None
                }
                Err(e) => return Err(e),
            };
            pairs.push(model);
        }
    }
    let labels = (0..panels.len()).map(|g| label_of(panels, g)).collect();
    Ok(MulticlassModel { labels, max_lag: config.max_lag, pairs })
}

fn label_of<S: Scalar>(panels: &[CurvePanel<S>], g: usize) -> i64 {
    panels[g].label().unwrap_or(g as i64)
}

pub fn classify_multiclass<S: Scalar>(model: &MulticlassModel<S>, ys: &[Curve<S>]) -> Result<MulticlassDecision<S>> {
    if ys.len() != model.block_len() {
        return Err(invalid(format!(
            "query block must hold exactly {} curves (max lag + 1), got {}",
            model.block_len(),
            ys.len()
        )));
    }
    let mut winner = 0;
    let mut rounds = Vec::with_capacity(model.groups() - 1);
    for challenger in 1..model.groups() {
        let decision = match model.pair(winner, challenger) {
            Some(m) => classify(m, ys)?,
            None => Decision { label: Group::One, d0: S::zero(), d1: S::zero() },
        };
        rounds.push((winner, challenger, decision));
        if decision.label == Group::One {
            winner = challenger;
        }
    }
    Ok(MulticlassDecision { winner, label: model.labels[winner], rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcgrid::{fourier_basis, Grid, GridRef};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn panel(grid: &GridRef<f64>, n: usize, seed: u64, stretch: &[f64]) -> CurvePanel<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let basis = fourier_basis(grid, stretch.len()).unwrap();
        let coeffs = Array2::from_shape_fn((n, stretch.len()), |(_, j)| stretch[j] * rng.random_range(-1.0..1.0));
        basis.synthesize(coeffs.view()).unwrap()
    }

    #[test]
    fn two_groups_match_binary_classifier() {
        let grid = Grid::<f64>::uniform(20).unwrap();
        let p0 = panel(&grid, 40, 1, &[1.0, 2.0, 0.5]);
        let p1 = panel(&grid, 40, 2, &[1.0, 0.5, 2.0]);
        let cfg = TrainConfig::new(1, 0.0);
        let multi = train_multiclass(&[p0.clone(), p1.clone()], &cfg, None).unwrap();
        let binary = train(&p0, &p1, &cfg, None).unwrap();
        for k in 0..10 {
            let ys = panel(&grid, 2, 100 + k, &[1.0, 1.0 + k as f64 * 0.2, 1.0]).curves();
            let m = classify_multiclass(&multi, &ys).unwrap();
            let b = classify(&binary, &ys).unwrap();
            assert_eq!(m.winner, b.label.index());
        }
    }

    #[test]
    fn exact_centroid_wins() {
        let grid = Grid::<f64>::uniform(20).unwrap();
        let y = panel(&grid, 1, 9, &[0.3, 1.0, 2.0, 0.5]);
        let repeated = Array2::from_shape_fn((12, 20), |(_, j)| y.data()[[0, j]]);
        let groups = vec![
            panel(&grid, 30, 3, &[1.0, 2.0, 0.5, 1.0]),
            panel(&grid, 30, 4, &[1.0, 0.5, 2.0, 1.0]),
            CurvePanel::from_rows(grid.clone(), repeated).unwrap(),
        ];
        let model = train_multiclass(&groups, &TrainConfig::new(0, 0.0), None).unwrap();
        let out = classify_multiclass(&model, &y.curves()).unwrap();
        assert_eq!(out.winner, 2);
    }

    #[test]
    fn identical_groups_last_wins() {
        let grid = Grid::<f64>::uniform(16).unwrap();
        let p = panel(&grid, 20, 5, &[1.0, 1.0]);
        let groups = vec![p.clone().with_label(7), p.clone().with_label(8), p.with_label(9)];
        let model = train_multiclass(&groups, &TrainConfig::new(0, 0.0), None).unwrap();
        let out = classify_multiclass(&model, &groups[0].slice(0..1).curves()).unwrap();
        assert_eq!((out.winner, out.label), (2, 9));
    }

    #[test]
    fn needs_two_groups() {
        let grid = Grid::<f64>::uniform(16).unwrap();
        let p = panel(&grid, 20, 5, &[1.0, 1.0]);
        assert!(matches!(
            train_multiclass(&[p], &TrainConfig::new(0, 0.0), None),
            Err(VpcError::InvalidArgument(_))
        ));
    }
}
