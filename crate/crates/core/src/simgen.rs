//! Seeded generators for the simulation designs: functional moving averages of
//! order 3 on a Fourier basis, independent curves with B-spline or Fourier scores,
//! and a multichannel piecewise-stationary sequence with planted covariance breaks.
//!
//! Every generator is a pure function of its inputs and seed. Normal variates come
//! from [`crate::rng::standard_normal`].

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::funcgrid::{bspline_basis, fourier_basis, BasisKind, BasisSet, CurvePanel, GridRef};
use crate::rng::{standard_normal, stream, SimRng};
use crate::scalar::Scalar;

pub const FMA_BASIS_SIZE: usize = 21;
pub const FMA_ORDER: usize = 3;

/// Template scale vector of one group: `(1, 1_5 (x) pattern)`.
pub fn fma_sigma(group: usize) -> Vec<f64> {
    let pattern = if group == 0 { [0.8, 0.8, 1.0, 1.0] } else { [1.0, 1.0, 0.8, 0.8] };
    let mut s = vec![1.0];
    for _ in 0..5 {
        s.extend_from_slice(&pattern);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmaSpec {
    /// Moving-average multipliers `a_1..a_3`.
    pub ma: [f64; FMA_ORDER],
    pub sigma: [Vec<f64>; 2],
    /// Template coefficient matrices, one per group, `21 x 21`.
    pub templates: [Array2<f64>; 2],
    pub seed: u64,
}

/// Draws both templates with entries `K_ij ~ N(0, sigma_i sigma_j)`.
pub fn make_fma_spec(seed: u64) -> FmaSpec {
    make_fma_spec_with(seed, [0.4; FMA_ORDER])
}

pub fn make_fma_spec_with(seed: u64, ma: [f64; FMA_ORDER]) -> FmaSpec {
    let sigma = [fma_sigma(0), fma_sigma(1)];
    let templates = [0, 1].map(|g| {
        let mut rng = stream(seed, &[0, g as u64]);
        let s = &sigma[g];
        Array2::from_shape_fn((FMA_BASIS_SIZE, FMA_BASIS_SIZE), |(i, j)| {
            (s[i] * s[j]).sqrt() * standard_normal(&mut rng)
        })
    });
    FmaSpec { ma, sigma, templates, seed }
}

fn normal_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| standard_normal(rng))
}

/// `n` consecutive curves of group `group`: `X_k = e_k + sum_l a_l Psi_g(e_{k-l})`,
/// with `e_k = sum_j eta_kj F_j`, `eta_kj` standard normal and a burn-in of three
/// innovations. Computed in coefficient space, then evaluated on `grid`.
pub fn simulate_fma<S: Scalar>(spec: &FmaSpec, group: usize, n: usize, grid: &GridRef<S>) -> Result<CurvePanel<S>> {
    simulate_fma_stream(spec, group, n, grid, 0)
}

/// As [`simulate_fma`] with an extra stream index, for independent sequences
/// under the same templates.
pub fn simulate_fma_stream<S: Scalar>(
    spec: &FmaSpec,
    group: usize,
    n: usize,
    grid: &GridRef<S>,
    stream_index: u64,
) -> Result<CurvePanel<S>> {
    if n == 0 {
        return Err(invalid("simulate at least one curve"));
    }
    if group > 1 {
        return Err(invalid(format!("group must be 0 or 1, got {group}")));
    }
    let mut rng = stream(spec.seed, &[1, group as u64, stream_index]);
    let l = FMA_BASIS_SIZE;
    let eta = normal_matrix(&mut rng, n + FMA_ORDER, l);
    // row k of eta times K' gives K eta_k
    let mapped = eta.dot(&spec.templates[group].t());
    let mut coeffs = eta.slice(s![FMA_ORDER.., ..]).to_owned();
    for (lag, a) in spec.ma.iter().enumerate() {
        let lag = lag + 1;
        if *a != 0.0 {
            coeffs.scaled_add(*a, &mapped.slice(s![FMA_ORDER - lag..FMA_ORDER - lag + n, ..]));
        }
    }
    let basis = fourier_basis(grid, l)?;
    basis.synthesize(coeffs.mapv(S::lit).view())
}

/// Independent curves `sum_j sd_j z_kj B_j` with diagonal score covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModelSpec {
    pub basis: BasisKind,
    pub basis_size: usize,
    /// Per-group score standard deviations.
    pub sd: [Vec<f64>; 2],
    pub seed: u64,
}

impl ScoreModelSpec {
    fn basis<S: Scalar>(&self, grid: &GridRef<S>) -> Result<BasisSet<S>> {
        match self.basis {
            BasisKind::Fourier => fourier_basis(grid, self.basis_size),
            BasisKind::Bspline => bspline_basis(grid, self.basis_size, 3),
        }
    }

    pub fn simulate<S: Scalar>(&self, group: usize, n: usize, grid: &GridRef<S>, stream_index: u64) -> Result<CurvePanel<S>> {
        if group > 1 {
            return Err(invalid(format!("group must be 0 or 1, got {group}")));
        }
        let sd = &self.sd[group];
        if sd.len() != self.basis_size || sd.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("score standard deviations must be nonnegative, one per basis function"));
        }
        let mut rng = stream(self.seed, &[2, group as u64, stream_index]);
        let coeffs = Array2::from_shape_fn((n, self.basis_size), |(_, j)| S::lit(sd[j] * standard_normal(&mut rng)));
        self.basis(grid)?.synthesize(coeffs.view())
    }
}

/// 24 cubic B-splines; within each block of 8 coefficients the score with standard
/// deviation `a` sits at position 3 (group 0) or 6 (group 1), the rest have `b`,
/// where `a^2 + 7 b^2 = 100`.
pub fn bspline_score_spec(a2: f64, seed: u64) -> Result<ScoreModelSpec> {
    if !(a2 > 0.0 && a2 < 100.0) {
        return Err(invalid(format!("a^2 must lie in (0, 100), got {a2}")));
    }
    let a = a2.sqrt();
    let b = ((100.0 - a2) / 7.0).sqrt();
    let sd = [2usize, 5].map(|pos| (0..24).map(|j| if j % 8 == pos { a } else { b }).collect());
    Ok(ScoreModelSpec { basis: BasisKind::Bspline, basis_size: 24, sd, seed })
}

pub fn simulate_bspline_scores<S: Scalar>(
    a2: f64,
    n: usize,
    grid: &GridRef<S>,
    seed: u64,
) -> Result<(CurvePanel<S>, CurvePanel<S>)> {
    let spec = bspline_score_spec(a2, seed)?;
    Ok((spec.simulate(0, n, grid, 0)?, spec.simulate(1, n, grid, 0)?))
}

/// Score variances on 21 Fourier functions for setting 1 or 2.
pub fn fourier_setting_deltas(setting: u8) -> Result<[Vec<f64>; 2]> {
    let head: [&[f64]; 2] = match setting {
        1 => [&[1.0, 1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.0, 1.0]],
        2 => [&[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0], &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]],
        _ => return Err(invalid(format!("Fourier setting must be 1 or 2, got {setting}"))),
    };
    Ok(head.map(|h| {
        let mut d = h.to_vec();
        d.resize(FMA_BASIS_SIZE, 1.0);
        d
    }))
}

pub fn fourier_setting_spec(setting: u8, seed: u64) -> Result<ScoreModelSpec> {
    let deltas = fourier_setting_deltas(setting)?;
    let sd = deltas.map(|d| d.iter().map(|v| v.sqrt()).collect());
    Ok(ScoreModelSpec { basis: BasisKind::Fourier, basis_size: FMA_BASIS_SIZE, sd, seed })
}

pub fn simulate_fourier_settings<S: Scalar>(
    setting: u8,
    n: usize,
    grid: &GridRef<S>,
    seed: u64,
) -> Result<(CurvePanel<S>, CurvePanel<S>)> {
    let spec = fourier_setting_spec(setting, seed)?;
    Ok((spec.simulate(0, n, grid, 0)?, spec.simulate(1, n, grid, 0)?))
}

/// One stationary regime of the multichannel generator: Fourier score standard
/// deviations shared by every channel, times a per-channel gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub sd: Vec<f64>,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichannelSpec {
    pub channels: usize,
    pub gains: Vec<f64>,
    pub regimes: Vec<Regime>,
    pub seed: u64,
}

impl MultichannelSpec {
    /// 0-based indices of the first curve of every regime after the first.
    pub fn breaks(&self) -> Vec<usize> {
        let mut at = 0;
        let mut out = Vec::new();
        for r in &self.regimes[..self.regimes.len().saturating_sub(1)] {
            at += r.length;
            out.push(at);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.regimes.iter().map(|r| r.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One panel per channel, all with the same number of curves; independent across
/// curves and channels.
pub fn simulate_multichannel<S: Scalar>(spec: &MultichannelSpec, grid: &GridRef<S>, stream_index: u64) -> Result<Vec<CurvePanel<S>>> {
    if spec.channels == 0 || spec.gains.len() != spec.channels {
        return Err(invalid("need one gain per channel and at least one channel"));
    }
    let size = spec.regimes.iter().map(|r| r.sd.len()).max().unwrap_or(0);
    if size == 0 {
        return Err(invalid("regimes need at least one score"));
    }
    let basis = fourier_basis(grid, size)?;
    let n = spec.len();
    (0..spec.channels)
        .map(|c| {
            let mut rng = stream(spec.seed, &[3, stream_index, c as u64]);
            let mut coeffs = Array2::<S>::zeros((n, size));
            let mut row = 0;
            for r in &spec.regimes {
                for _ in 0..r.length {
                    for (j, sd) in r.sd.iter().enumerate() {
                        coeffs[[row, j]] = S::lit(spec.gains[c] * sd * standard_normal(&mut rng));
                    }
                    row += 1;
                }
            }
            basis.synthesize(coeffs.view())
        })
        .collect()
}
