//! Amplitude threshold applied before unit scaling: curves whose L2 norm exceeds
//! `tau` go straight to the high-variation group.

use crate::error::{invalid, Result, VpcError};
use crate::funcgrid::{l2_norm, scale_curve_to_unit, CurvePanel, Curve};
use crate::scalar::Scalar;

use super::model::{classify, Decision, Group, VpcModel};

pub fn amplitude_prefilter<S: Scalar>(model: &VpcModel<S>, y: &Curve<S>) -> Result<Option<Group>> {
    let (tau, high) = match (model.tau(), model.high_variation_group()) {
        (Some(t), Some(g)) => (t, g),
        _ => return Err(VpcError::PreconditionViolation("model has no amplitude threshold".into())),
    };
    Ok((l2_norm(y) > tau).then_some(high))
}

/// Threshold and high-variation group chosen on training norms.
///
/// The group with the larger median norm is the high-variation group. Candidates
/// are the pooled norms' quantiles at 1%..99%; the one maximising the balanced
/// accuracy of the rule "norm > tau means high group" wins, ties toward the larger
/// threshold.
pub fn select_tau<S: Scalar>(panel0: &CurvePanel<S>, panel1: &CurvePanel<S>) -> Result<(S, Group)> {
    if panel0.is_empty() || panel1.is_empty() {
        return Err(invalid("threshold selection needs curves from both groups"));
    }
    let mut n0 = panel0.norms();
    let mut n1 = panel1.norms();
    let cmp = |a: &S, b: &S| a.partial_cmp(b).expect("finite norms");
    n0.sort_by(cmp);
    n1.sort_by(cmp);
    let (low, high, group) = if median(&n1) > median(&n0) { (&n0, &n1, Group::One) } else { (&n1, &n0, Group::Zero) };
    let mut pooled: Vec<S> = n0.iter().chain(n1.iter()).copied().collect();
    pooled.sort_by(cmp);
    let mut best = (S::neg_infinity(), pooled[pooled.len() - 1]);
    for q in 1..100 {
        let tau = quantile(&pooled, q as f64 / 100.0);
        let above = |v: &Vec<S>| v.iter().filter(|x| **x > tau).count();
        let tpr = S::from_usize_lossy(above(high)) / S::from_usize_lossy(high.len());
        let tnr = S::one() - S::from_usize_lossy(above(low)) / S::from_usize_lossy(low.len());
        let score = (tpr + tnr) / S::lit(2.0);
        if score >= best.0 {
            best = (score, tau);
        }
    }
    Ok((best.1, group))
}

fn median<S: Scalar>(sorted: &[S]) -> S {
    quantile(sorted, 0.5)
}

fn quantile<S: Scalar>(sorted: &[S], q: f64) -> S {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = S::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Full pipeline for one block: threshold (if set), then unit scaling (if the
/// model was trained on scaled curves), then the decision rule. A prefiltered
/// block reports zero distances.
pub fn predict<S: Scalar>(model: &VpcModel<S>, ys: &[Curve<S>]) -> Result<Decision<S>> {
    if model.tau().is_some() {
        let mut hit = None;
        for y in ys {
            if let Some(g) = amplitude_prefilter(model, y)? {
                hit = Some(g);
                break;
            }
        }
        if let Some(label) = hit {
            return Ok(Decision { label, d0: S::zero(), d1: S::zero() });
        }
    }
    if model.scaled() {
        let scaled = ys.iter().map(scale_curve_to_unit).collect::<Result<Vec<_>>>()?;
        classify(model, &scaled)
    } else {
        classify(model, ys)
    }
}

/// Applies [`predict`] to consecutive blocks of `model.block_len()` rows.
pub fn predict_panel<S: Scalar>(model: &VpcModel<S>, panel: &CurvePanel<S>) -> Result<Vec<Decision<S>>> {
    let b = model.block_len();
    if panel.is_empty() || !panel.len().is_multiple_of(b) {
        return Err(invalid(format!(
            "{} curves do not split into blocks of {b} (max lag + 1)",
            panel.len()
        )));
    }
    (0..panel.len() / b).map(|k| predict(model, &panel.slice(k * b..(k + 1) * b).curves())).collect()
}
