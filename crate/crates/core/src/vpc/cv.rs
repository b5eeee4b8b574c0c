//! Monte-Carlo cross-validation: single-lag rates `P(h)` and the `(p, alpha)` search.
//!
//! Repetition `r` holds out a block of consecutive curves from group `r % 2`. The
//! curves before and after the block are estimated as separate fragments. Each
//! repetition draws from its own stream keyed by `(seed, stage, r, group)`, so
//! the outcome does not depend on thread scheduling.

use ndarray::{s, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, VpcError};
use crate::funcgrid::{ensure_same_grid, CurvePanel, GridRef};
use crate::rng::{stream, uniform_index};
use crate::scalar::Scalar;

use super::model::{fit_lag, Decision, DimRule, Group, GroupStats};

const STAGE_RATES: u64 = 0;
const STAGE_TUNE: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry<S> {
    pub p: usize,
    pub alpha: S,
    pub rate: S,
    pub rate0: S,
    pub rate1: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport<S> {
    pub entries: Vec<CvEntry<S>>,
    /// `P(h)` for `h = 0..=max(p_candidates)`.
    pub lag_rates: Vec<S>,
    pub reps: usize,
    pub chosen_p: usize,
    pub chosen_alpha: S,
}

impl<S: Scalar> CvReport<S> {
    pub fn best(&self) -> &CvEntry<S> {
        self.entries
            .iter()
            .find(|e| e.p == self.chosen_p && e.alpha == self.chosen_alpha)
            .expect("chosen pair is among the entries")
    }
}

/// One held-out block: which group, and the training statistics with that block removed.
struct Fold<'a, S> {
    group: Group,
    block: ArrayView2<'a, S>,
    stats: GroupStats<S>,
}

fn draw_fold<'a, S: Scalar>(
    panels: [&'a CurvePanel<S>; 2],
    rep: usize,
    seed: u64,
    stage: u64,
    block: usize,
    max_lag: usize,
) -> Result<Fold<'a, S>> {
    let g = rep % 2;
    let panel = panels[g];
    let mut rng = stream(seed, &[stage, rep as u64, g as u64]);
    let start = uniform_index(&mut rng, panel.len() - block + 1);
    let before = panel.data().slice_move(s![..start, ..]);
    let after = panel.data().slice_move(s![start + block.., ..]);
    let stats = GroupStats::from_fragments(panel.grid(), &[before, after], max_lag)?;
    Ok(Fold { group: Group::from_index(g), block: panel.data().slice_move(s![start..start + block, ..]), stats })
}

fn check_inputs<S: Scalar>(panel0: &CurvePanel<S>, panel1: &CurvePanel<S>, max_lag: usize, block: usize, reps: usize, ratio: S) -> Result<()> {
    ensure_same_grid(panel0.grid(), panel1.grid())?;
    if reps == 0 {
        return Err(invalid("cross-validation needs at least one repetition"));
    }
    if block == 0 {
        return Err(invalid("held-out block must contain at least one curve"));
    }
    if block <= max_lag {
        return Err(invalid(format!("held-out block of {block} curves cannot carry lag {max_lag}")));
    }
    if !(ratio > S::zero() && ratio <= S::one()) {
        return Err(invalid("dimension ratio must lie in (0, 1]"));
    }
    for (g, p) in [panel0, panel1].iter().enumerate() {
        if p.len() <= max_lag + block {
            return Err(VpcError::InsufficientSample(format!(
                "group {g} has {} curves; lag {max_lag} with held-out blocks of {block} needs more than {}",
                p.len(),
                max_lag + block
            )));
        }
    }
    Ok(())
}

/// Mean over groups of the per-group fraction of correct outcomes.
fn group_balanced_rate<S: Scalar>(correct: &[bool]) -> (S, S, S) {
    let mut hits = [0usize; 2];
    let mut total = [0usize; 2];
    for (rep, ok) in correct.iter().enumerate() {
        total[rep % 2] += 1;
        hits[rep % 2] += usize::from(*ok);
    }
    let rate = |g: usize| {
        if total[g] == 0 {
            None
        } else {
            Some(S::from_usize_lossy(hits[g]) / S::from_usize_lossy(total[g]))
        }
    };
    match (rate(0), rate(1)) {
        (Some(a), Some(b)) => (a, b, (a + b) / S::lit(2.0)),
        (Some(a), None) => (a, S::nan(), a),
        _ => unreachable!("at least one repetition"),
    }
}

/// `P(h)` for every lag `0..=max_lag` from the same resampled folds.
pub fn single_lag_rates<S: Scalar>(
    panel0: &CurvePanel<S>,
    panel1: &CurvePanel<S>,
    max_lag: usize,
    reps: usize,
    block: usize,
    ratio: S,
    seed: u64,
) -> Result<Vec<S>> {
    check_inputs(panel0, panel1, max_lag, block, reps, ratio)?;
    let full = [GroupStats::from_panel(panel0, max_lag)?, GroupStats::from_panel(panel1, max_lag)?];
    let grid = panel0.grid();
    let outcomes: Vec<Vec<bool>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let fold = draw_fold([panel0, panel1], rep, seed, STAGE_RATES, block, max_lag)?;
            (0..=max_lag)
                .map(|h| {
                    let (st0, st1) = fold_stats(&fold, &full);
                    let comp = fit_lag(grid, st0, st1, h, DimRule::Ratio(ratio), None)?;
                    let (a, b) = comp.raw_distances(fold.block);
                    Ok(Decision::from_distances(a, b).label == fold.group)
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..=max_lag)
        .map(|h| {
            let col: Vec<bool> = outcomes.iter().map(|o| o[h]).collect();
            group_balanced_rate::<S>(&col).2
        })
        .collect())
}

fn fold_stats<'a, S>(fold: &'a Fold<'_, S>, full: &'a [GroupStats<S>; 2]) -> (&'a GroupStats<S>, &'a GroupStats<S>) {
    match fold.group {
        Group::Zero => (&fold.stats, &full[1]),
        Group::One => (&full[0], &fold.stats),
    }
}

/// Monte-Carlo estimate of the lag-`h`-only classification rate.
pub fn single_lag_rate<S: Scalar>(
    panel0: &CurvePanel<S>,
    panel1: &CurvePanel<S>,
    h: usize,
    reps: usize,
    block: usize,
    ratio: S,
    seed: u64,
) -> Result<S> {
    Ok(single_lag_rates(panel0, panel1, h, reps, block, ratio, seed)?[h])
}

/// Cross-validates every `(p, alpha)` pair and picks the best mean rate, breaking
/// ties toward smaller `p`, then smaller `alpha`.
///
/// `P(h)` is estimated once for all lags with held-out blocks of `max(p) + 1`
/// curves; each pair is then validated on blocks of `p + 1` curves.
pub fn tune<S: Scalar>(
    panel0: &CurvePanel<S>,
    panel1: &CurvePanel<S>,
    p_candidates: &[usize],
    alpha_candidates: &[S],
    reps: usize,
    ratio: S,
    seed: u64,
) -> Result<CvReport<S>> {
    if p_candidates.is_empty() || alpha_candidates.is_empty() {
        return Err(invalid("tuning needs at least one p and one alpha candidate"));
    }
    let mut ps = p_candidates.to_vec();
    ps.sort_unstable();
    ps.dedup();
    let mut alphas = alpha_candidates.to_vec();
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(invalid("alpha candidates must be finite"));
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    alphas.dedup();
    let max_p = *ps.last().expect("nonempty");
    let lag_rates = single_lag_rates(panel0, panel1, max_p, reps, max_p + 1, ratio, seed)?;
    let full = [GroupStats::from_panel(panel0, max_p)?, GroupStats::from_panel(panel1, max_p)?];
    let grid = panel0.grid();

    let mut entries = Vec::with_capacity(ps.len() * alphas.len());
    for &p in &ps {
        let correct: Vec<Vec<bool>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let fold = draw_fold([panel0, panel1], rep, seed, STAGE_TUNE + p as u64, p + 1, p)?;
                let raw = fold_raw_distances(grid, &fold, &full, p, ratio)?;
                Ok(alphas
                    .iter()
                    .map(|&alpha| {
                        let (d0, d1) = raw.iter().enumerate().fold((S::zero(), S::zero()), |acc, (h, r)| {
                            let w = r.map_or(S::zero(), |(amp, _, _)| (alpha * lag_rates[h]).exp() / amp);
                            let (a, b) = r.map_or((S::zero(), S::zero()), |(_, a, b)| (a, b));
                            (acc.0 + w * a, acc.1 + w * b)
                        });
                        Decision::from_distances(d0, d1).label == fold.group
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        for (k, &alpha) in alphas.iter().enumerate() {
            let col: Vec<bool> = correct.iter().map(|c| c[k]).collect();
            let (rate0, rate1, rate) = group_balanced_rate::<S>(&col);
            entries.push(CvEntry { p, alpha, rate, rate0, rate1 });
        }
    }
    let mut best = &entries[0];
    for e in &entries[1..] {
        if e.rate > best.rate {
            best = e;
        }
    }
    let (chosen_p, chosen_alpha) = (best.p, best.alpha);
    Ok(CvReport { entries, lag_rates, reps, chosen_p, chosen_alpha })
}

/// Per-lag `(amplitude, raw D0, raw D1)` on a fold; `None` for dropped lags.
fn fold_raw_distances<S: Scalar>(
    grid: &GridRef<S>,
    fold: &Fold<'_, S>,
    full: &[GroupStats<S>; 2],
    p: usize,
    ratio: S,
) -> Result<Vec<Option<(S, S, S)>>> {
    let (st0, st1) = fold_stats(fold, full);
    (0..=p)
        .map(|h| {
            let comp = fit_lag(grid, st0, st1, h, DimRule::Ratio(ratio), None)?;
            if comp.is_dropped() || !(comp.amplitude() > S::zero()) {
                return Ok(None);
            }
            let (a, b) = comp.raw_distances(fold.block);
            Ok(Some((comp.amplitude(), a, b)))
        })
        .collect()
}
