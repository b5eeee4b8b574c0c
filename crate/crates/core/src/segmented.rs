//! Classification with covariance change-points.
//!
//! Each group's sequence is split into stationary segments, each with its own
//! lag-0 covariance operator. A query curve is compared with the segment of each
//! group whose operator is nearest to `y (x) y` in Hilbert-Schmidt norm.
//!
//! The break detector is a CUSUM of the outer-product surfaces
//! `Z_i = sum_c X_ic (x) X_ic`, calibrated by permutation and applied by binary
//! segmentation. Break indices are 0-based positions of the first curve of each
//! new segment.

use std::collections::HashMap;

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, VpcError};
use crate::funcgrid::{ensure_same_grid, Curve, CurvePanel, GridRef};
use crate::operators::{estimate_lagged_cov_fragments, KernelOperator};
use crate::rng::{shuffle, stream};
use crate::scalar::Scalar;
use crate::vpc::basis::{basis_from_difference, project_block, scores_in_basis, select_dim_from_spectrum, squared_distance};
use crate::vpc::model::{Decision, DimRule, Group};

pub const DEFAULT_MIN_SEG: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedBreak {
    /// 0-based index of the first curve after the break.
    pub index: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakReport {
    /// Sorted by index.
    pub breaks: Vec<DetectedBreak>,
    pub level: f64,
    pub min_seg: usize,
    pub permutations: usize,
    pub curves: usize,
}

impl BreakReport {
    pub fn indices(&self) -> Vec<usize> {
        self.breaks.iter().map(|b| b.index).collect()
    }
}

pub fn detect_breaks<S: Scalar>(
    panel: &CurvePanel<S>,
    level: f64,
    min_seg: usize,
    permutations: usize,
    seed: u64,
) -> Result<BreakReport> {
    detect_breaks_multichannel(std::slice::from_ref(panel), level, min_seg, permutations, seed)
}

/// Common breaks for several channels observed at the same time indices.
pub fn detect_breaks_multichannel<S: Scalar>(
    channels: &[CurvePanel<S>],
    level: f64,
    min_seg: usize,
    permutations: usize,
    seed: u64,
) -> Result<BreakReport> {
    if permutations == 0 {
        return Err(invalid("the permutation test needs at least one permutation"));
    }
    if min_seg == 0 {
        return Err(invalid("minimum segment length must be positive"));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(invalid("significance level must lie in (0, 1]"));
    }
    let first = channels.first().ok_or_else(|| invalid("at least one channel is required"))?;
    let n = first.len();
    for c in channels {
        ensure_same_grid(first.grid(), c.grid())?;
        if c.len() != n {
            return Err(VpcError::IncompatiblePanels("channel lengths differ".into()));
        }
    }
    if n < 2 * min_seg {
        return Err(VpcError::InsufficientSample(format!(
            "{n} curves cannot hold two segments of at least {min_seg}"
        )));
    }
    let gram = surface_gram(channels);
    let mut breaks = Vec::new();
    let ctx = Segmentation { gram: &gram, level, min_seg, permutations, seed };
    ctx.split(0, n, &mut breaks);
    breaks.sort_by_key(|b| b.index);
    Ok(BreakReport { breaks, level, min_seg, permutations, curves: n })
}

/// `G_ij = <Z_i, Z_j>_HS = sum_{c,c'} <X_ic, X_jc'>^2`.
fn surface_gram<S: Scalar>(channels: &[CurvePanel<S>]) -> Array2<f64> {
    let n = channels[0].len();
    let t = channels[0].grid().len();
    let c = channels.len();
    let w = channels[0].grid().weights_view();
    // row i*c + ch holds channel ch of curve i
    let mut flat = Array2::<S>::zeros((n * c, t));
    for (ch, p) in channels.iter().enumerate() {
        for i in 0..n {
            flat.row_mut(i * c + ch).assign(&p.row(i));
        }
    }
    let weighted = &flat * &w;
    let inner = weighted.dot(&flat.t());
    let mut gram = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let block = inner.slice(s![i * c..(i + 1) * c, j * c..(j + 1) * c]);
            let v: f64 = block.iter().map(|x| x.to_f64_lossy().powi(2)).sum();
            gram[[i, j]] = v;
            gram[[j, i]] = v;
        }
    }
    gram
}

struct Segmentation<'a> {
    gram: &'a Array2<f64>,
    level: f64,
    min_seg: usize,
    permutations: usize,
    seed: u64,
}

impl Segmentation<'_> {
    fn split(&self, a: usize, b: usize, out: &mut Vec<DetectedBreak>) {
        if b - a < 2 * self.min_seg {
            return;
        }
        let order: Vec<usize> = (a..b).collect();
        let (stat, k) = self.cusum_max(&order);
        let exceed: usize = (0..self.permutations)
            .into_par_iter()
            .map(|r| {
                let mut perm = order.clone();
                let mut rng = stream(self.seed, &[a as u64, b as u64, r as u64]);
                shuffle(&mut rng, &mut perm);
                usize::from(self.cusum_max(&perm).0 >= stat)
            })
            .sum();
        let p_value = (1 + exceed) as f64 / (1 + self.permutations) as f64;
        if p_value > self.level {
            return;
        }
        let index = a + k;
        out.push(DetectedBreak { index, statistic: stat, p_value });
        self.split(a, index, out);
        self.split(index, b, out);
    }

    /// Largest `||S_k - (k/L) S_L|| / L` over admissible `k`, and the first `k` attaining it.
    fn cusum_max(&self, order: &[usize]) -> (f64, usize) {
        let len = order.len();
        let g = self.gram;
        let row_sums: Vec<f64> = order.iter().map(|&i| order.iter().map(|&j| g[[i, j]]).sum()).collect();
        let total: f64 = row_sums.iter().sum();
        let mut prefix = 0.0;
        let mut cross = 0.0;
        let mut best = (f64::NEG_INFINITY, self.min_seg);
        let lf = len as f64;
        for k in 1..=len - self.min_seg {
            let new = order[k - 1];
            let mut with_prev = 0.0;
            for &i in &order[..k - 1] {
                with_prev += g[[i, new]];
            }
            prefix += 2.0 * with_prev + g[[new, new]];
            cross += row_sums[k - 1];
            if k < self.min_seg {
                continue;
            }
            let r = k as f64 / lf;
            let sq = (prefix - 2.0 * r * cross + r * r * total).max(0.0);
            let stat = sq.sqrt() / lf;
            if stat > best.0 {
                best = (stat, k);
            }
        }
        best
    }
}

/// Segments of one group and their lag-0 covariance operators.
#[derive(Debug, Clone)]
pub struct SegmentRegistry<S> {
    grid: GridRef<S>,
    curves: usize,
    breaks: Vec<usize>,
    operators: Vec<KernelOperator<S>>,
}

impl<S: Scalar> SegmentRegistry<S> {
    pub fn from_parts(grid: GridRef<S>, curves: usize, breaks: Vec<usize>, operators: Vec<KernelOperator<S>>) -> Result<Self> {
        validate_breaks(&breaks, curves)?;
        if operators.len() != breaks.len() + 1 {
            return Err(invalid(format!(
                "{} breaks need {} segment operators, got {}",
                breaks.len(),
                breaks.len() + 1,
                operators.len()
            )));
        }
        for op in &operators {
            ensure_same_grid(&grid, op.grid())?;
        }
        Ok(SegmentRegistry { grid, curves, breaks, operators })
    }

    pub fn grid(&self) -> &GridRef<S> {
        &self.grid
    }

    pub fn curves(&self) -> usize {
        self.curves
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    pub fn segments(&self) -> usize {
        self.operators.len()
    }

    /// Half-open curve range of segment `l`.
    pub fn segment_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = if l == 0 { 0 } else { self.breaks[l - 1] };
        let end = self.breaks.get(l).copied().unwrap_or(self.curves);
        start..end
    }

    pub fn operator(&self, l: usize) -> &KernelOperator<S> {
        &self.operators[l]
    }

    pub fn operators(&self) -> &[KernelOperator<S>] {
        &self.operators
    }

    /// Index of the segment operator nearest to `y (x) y`, earliest on ties.
    pub fn nearest(&self, y: &Curve<S>) -> Result<(usize, S)> {
        ensure_same_grid(&self.grid, y.grid())?;
        let rank_one = crate::operators::rank_one(y);
        let mut best = (0, S::infinity());
        for (l, op) in self.operators.iter().enumerate() {
            let dist = op.sub(&rank_one)?.hs_norm();
            if dist < best.1 {
                best = (l, dist);
            }
        }
        Ok(best)
    }
}

fn validate_breaks(breaks: &[usize], curves: usize) -> Result<()> {
    let mut prev = 0;
    for &b in breaks {
        if b <= prev || b >= curves {
            return Err(invalid(format!(
                "breaks must be strictly increasing within 1..{curves} so every segment is nonempty, got {breaks:?}"
            )));
        }
        prev = b;
    }
    Ok(())
}

pub fn build_registry<S: Scalar>(panel: &CurvePanel<S>, breaks: &[usize]) -> Result<SegmentRegistry<S>> {
    if panel.is_empty() {
        return Err(invalid("cannot build segments from an empty panel"));
    }
    validate_breaks(breaks, panel.len())?;
    let mut bounds = vec![0];
    bounds.extend_from_slice(breaks);
    bounds.push(panel.len());
    let operators = bounds
        .par_windows(2)
        .map(|w| estimate_lagged_cov_fragments(panel.grid(), &[panel.data().slice_move(s![w[0]..w[1], ..])], 0))
        .collect::<Result<Vec<_>>>()?;
    SegmentRegistry::from_parts(panel.grid().clone(), panel.len(), breaks.to_vec(), operators)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDecision<S> {
    pub decision: Decision<S>,
    pub segment0: usize,
    pub segment1: usize,
    pub d: usize,
}

/// Nearest segment per group, then the decision rule on the discriminative basis
/// of the two chosen operators: `D_g = sum_ij (S_g,ij - <Y, nu_i><Y, nu_j>)^2`.
pub fn classify_with_segments<S: Scalar>(
    reg0: &SegmentRegistry<S>,
    reg1: &SegmentRegistry<S>,
    y: &Curve<S>,
    dim: DimRule<S>,
) -> Result<SegmentDecision<S>> {
    SegmentClassifier::new(reg0, reg1, dim)?.classify(y)
}

/// Basis and centroid scores for one pair of segments; `None` when they coincide.
#[derive(Debug, Clone)]
struct PairBasis<S> {
    weighted: Array2<S>,
    scores0: Array2<S>,
    scores1: Array2<S>,
}

/// [`classify_with_segments`] for many queries: the basis of each segment pair
/// is computed once.
#[derive(Debug)]
pub struct SegmentClassifier<'a, S> {
    reg0: &'a SegmentRegistry<S>,
    reg1: &'a SegmentRegistry<S>,
    dim: DimRule<S>,
    cache: HashMap<(usize, usize), Option<PairBasis<S>>>,
}

impl<'a, S: Scalar> SegmentClassifier<'a, S> {
    pub fn new(reg0: &'a SegmentRegistry<S>, reg1: &'a SegmentRegistry<S>, dim: DimRule<S>) -> Result<Self> {
        ensure_same_grid(reg0.grid(), reg1.grid())?;
        Ok(SegmentClassifier { reg0, reg1, dim, cache: HashMap::new() })
    }

    fn pair_basis(&self, segment0: usize, segment1: usize) -> Result<Option<PairBasis<S>>> {
        let c0 = self.reg0.operator(segment0);
        let c1 = self.reg1.operator(segment1);
        let diff = c0.sub(c1)?;
        let basis = basis_from_difference(&diff, 0, self.reg0.grid().len())?;
        let scale = c0.hs_norm() + c1.hs_norm();
        let tol = S::lit(S::ZERO_SPECTRUM_TOL) * scale * scale;
        let rank = basis.eigenvalues().iter().take_while(|v| **v > tol).count();
        if rank == 0 {
            log::warn!("nearest segment operators coincide; no discrepancy, tie goes to group 1");
            return Ok(None);
        }
        let d = match self.dim {
            DimRule::Ratio(r) => select_dim_from_spectrum(basis.eigenvalues(), r)?.min(rank),
            DimRule::Fixed(d) => {
                if d == 0 || d > rank {
                    return Err(invalid(format!("d = {d} outside the available rank 1..={rank}")));
                }
                d
            }
            DimRule::Full => rank,
        };
        let weighted = basis.truncated(d).weighted_functions();
        let scores0 = scores_in_basis(c0.kernel(), &weighted);
        let scores1 = scores_in_basis(c1.kernel(), &weighted);
        Ok(Some(PairBasis { weighted, scores0, scores1 }))
    }

    pub fn classify(&mut self, y: &Curve<S>) -> Result<SegmentDecision<S>> {
        let (segment0, _) = self.reg0.nearest(y)?;
        let (segment1, _) = self.reg1.nearest(y)?;
        let key = (segment0, segment1);
        if !self.cache.contains_key(&key) {
            let prepared = self.pair_basis(segment0, segment1)?;
            self.cache.insert(key, prepared);
        }
        let Some(pair) = &self.cache[&key] else {
            let decision = Decision { label: Group::One, d0: S::zero(), d1: S::zero() };
            return Ok(SegmentDecision { decision, segment0, segment1, d: 0 });
        };
        let xi = project_block(y.values().insert_axis(ndarray::Axis(0)), &pair.weighted);
        let query = xi.t().dot(&xi);
        let d0 = squared_distance(pair.scores0.view(), query.view());
        let d1 = squared_distance(pair.scores1.view(), query.view());
        Ok(SegmentDecision { decision: Decision::from_distances(d0, d1), segment0, segment1, d: pair.weighted.nrows() })
    }
}

/// Reads a 1-based break list (one index per line, the curve after which a new
/// segment begins). `#` starts a comment.
pub fn parse_break_list(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: usize = line
            .parse()
            .map_err(|_| VpcError::Parse { line: line_no + 1, message: format!("not a break index: {line:?}") })?;
        out.push(v);
    }
    Ok(out)
}

pub fn format_break_list(breaks: &[usize]) -> String {
    breaks.iter().map(|b| format!("{b}\n")).collect()
}
