//! Monte-Carlo reproduction of the simulation studies. Every repetition draws
//! its own seed with [`derive_seed`], so reports do not depend on the number of
//! worker threads.

use ndarray::{s, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::funcgrid::{CurvePanel, Grid, GridRef};
use crate::rng::derive_seed;
use crate::simgen::{bspline_score_spec, fourier_setting_spec, make_fma_spec, simulate_fma_stream};
use crate::vpc::model::{fit_lag, weight_from_amplitude, DimRule, GroupStats, LagComponent};

pub const DEFAULT_GRID_LEN: usize = 101;

/// Mean classification rate per group and the spread of the per-repetition rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcrSummary {
    pub reps: usize,
    pub mean: [f64; 2],
    /// Sample standard deviation of the per-repetition rates; `None` for one repetition.
    pub sd: [Option<f64>; 2],
}

impl AcrSummary {
    pub fn from_rates(rates: &[[f64; 2]]) -> Self {
        let reps = rates.len();
        let mean = [0, 1].map(|g| rates.iter().map(|r| r[g]).sum::<f64>() / reps as f64);
        let sd = [0, 1].map(|g| {
            (reps > 1).then(|| {
                let ss: f64 = rates.iter().map(|r| (r[g] - mean[g]).powi(2)).sum();
                (ss / (reps - 1) as f64).sqrt()
            })
        });
        AcrSummary { reps, mean, sd }
    }

    /// Mean over both groups.
    pub fn overall(&self) -> f64 {
        0.5 * (self.mean[0] + self.mean[1])
    }

    /// Monte-Carlo standard error of [`AcrSummary::overall`].
    pub fn overall_se(&self) -> Option<f64> {
        match self.sd {
            [Some(a), Some(b)] => Some(0.5 * (a * a + b * b).sqrt() / (self.reps as f64).sqrt()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    /// Training curves per group.
    pub n: usize,
    /// Maximal lag.
    pub p: usize,
    /// `a^2` for the B-spline design.
    pub param: Option<f64>,
    pub dim: DimRule<f64>,
    pub acr: AcrSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub design: String,
    pub reps: usize,
    pub seed: u64,
    pub grid_len: usize,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn find(&self, pred: impl Fn(&ExperimentRow) -> bool) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| pred(r))
    }

    /// CSV with one row per setting; cells as `mean0/mean1` like the published tables.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("design,n,p,param,dim,acr0,acr1,sd0,sd1,cell\n");
        let na = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.4},{:.4},{},{},{:.3}/{:.3}\n",
                self.design,
                r.n,
                r.p,
                r.param.map_or("NA".to_string(), |v| v.to_string()),
                dim_label(&r.dim),
                r.acr.mean[0],
                r.acr.mean[1],
                na(r.acr.sd[0]),
                na(r.acr.sd[1]),
                r.acr.mean[0],
                r.acr.mean[1],
            ));
        }
        out
    }
}

pub fn dim_label(dim: &DimRule<f64>) -> String {
    match dim {
        DimRule::Ratio(r) => format!("ratio:{r}"),
        DimRule::Fixed(d) => d.to_string(),
        DimRule::Full => "full".into(),
    }
}

fn check_common(reps: usize, grid_len: usize) -> Result<GridRef<f64>> {
    if reps == 0 {
        return Err(invalid("repetitions must be at least 1"));
    }
    Grid::uniform(grid_len)
}

fn correct(d0: f64, d1: f64, group: usize) -> bool {
    let zero = d0 - d1 < 0.0;
    zero == (group == 0)
}

/// Functional moving averages of order three; one table row per `(n, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmaExperiment {
    pub ns: Vec<usize>,
    pub max_p: usize,
    pub alpha: f64,
    pub ratio: f64,
    pub reps: usize,
    /// Test blocks per group.
    pub test_blocks: usize,
    /// Independent curves per group used to estimate `P(h)`.
    pub validation: usize,
    pub grid_len: usize,
    pub seed: u64,
}

impl Default for FmaExperiment {
    fn default() -> Self {
        FmaExperiment {
            ns: vec![50, 100, 600],
            max_p: 4,
            alpha: 10.0,
            ratio: 0.9,
            reps: 200,
            test_blocks: 100,
            validation: 100,
            grid_len: DEFAULT_GRID_LEN,
            seed: 1,
        }
    }
}

/// Lag-`h` hit rate of `comp` over every window of `m` consecutive curves.
fn lag_rate(comp: &LagComponent<f64>, valid: [&CurvePanel<f64>; 2], m: usize) -> f64 {
    let mut rate = 0.0;
    for (g, panel) in valid.iter().enumerate() {
        let windows = panel.len() - m + 1;
        let hits = (0..windows)
            .filter(|&k| {
                let (d0, d1) = comp.raw_distances(panel.data().slice(s![k..k + m, ..]));
                correct(d0, d1, g)
            })
            .count();
        rate += hits as f64 / windows as f64;
    }
    rate / 2.0
}

/// Rates per group for every `p = 0..=max_p` in one repetition.
fn fma_rep(cfg: &FmaExperiment, grid: &GridRef<f64>, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    let spec = make_fma_spec(derive_seed(seed, &[0]));
    let block = cfg.max_p + 1;
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for g in 0..2 {
        train.push(simulate_fma_stream(&spec, g, n, grid, 0)?);
        valid.push(simulate_fma_stream(&spec, g, cfg.validation, grid, 1)?);
        test.push(simulate_fma_stream(&spec, g, cfg.test_blocks * block, grid, 2)?);
    }
    let st0 = GroupStats::from_panel(&train[0], cfg.max_p)?;
    let st1 = GroupStats::from_panel(&train[1], cfg.max_p)?;
    let comps = (0..=cfg.max_p)
        .map(|h| fit_lag(grid, &st0, &st1, h, DimRule::Ratio(cfg.ratio), None))
        .collect::<Result<Vec<_>>>()?;
    let weights = comps
        .iter()
        .map(|c| {
            if c.is_dropped() {
                return Ok(0.0);
            }
            let rate = lag_rate(c, [&valid[0], &valid[1]], block.min(cfg.validation));
            weight_from_amplitude(c.amplitude(), cfg.alpha, rate, c.lag())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(block);
    for p in 0..=cfg.max_p {
        let mut rates = [0.0; 2];
        for g in 0..2 {
            let hits = (0..cfg.test_blocks)
                .filter(|&b| {
                    let ys: ArrayView2<'_, f64> = test[g].data().slice_move(s![b * block..b * block + p + 1, ..]);
                    let (mut d0, mut d1) = (0.0, 0.0);
                    for (c, w) in comps.iter().zip(&weights).take(p + 1) {
                        let (a, b) = c.raw_distances(ys);
                        d0 += w * a;
                        d1 += w * b;
                    }
                    correct(d0, d1, g)
                })
                .count();
            rates[g] = hits as f64 / cfg.test_blocks as f64;
        }
        out.push(rates);
    }
    Ok(out)
}

pub fn run_fma(cfg: &FmaExperiment) -> Result<ExperimentReport> {
    let grid = check_common(cfg.reps, cfg.grid_len)?;
    if cfg.ns.iter().any(|&n| n <= cfg.max_p + 1) || cfg.test_blocks == 0 || cfg.validation == 0 {
        return Err(invalid("FMA experiment needs n > max_p + 1 and nonzero test and validation sizes"));
    }
    let mut rows = Vec::new();
    for (ni, &n) in cfg.ns.iter().enumerate() {
        let per_rep = (0..cfg.reps)
            .into_par_iter()
            .map(|r| fma_rep(cfg, &grid, n, derive_seed(cfg.seed, &[ni as u64, r as u64])))
            .collect::<Result<Vec<_>>>()?;
        for p in 0..=cfg.max_p {
            let rates: Vec<[f64; 2]> = per_rep.iter().map(|v| v[p]).collect();
            rows.push(ExperimentRow {
                n,
                p,
                param: None,
                dim: DimRule::Ratio(cfg.ratio),
                acr: AcrSummary::from_rates(&rates),
            });
        }
    }
    Ok(ExperimentReport { design: "fma".into(), reps: cfg.reps, seed: cfg.seed, grid_len: cfg.grid_len, rows })
}

/// Independent curves, lag 0 only: B-spline scores over `a^2` values, or a
/// dimension sweep on one of the Fourier settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreExperiment {
    pub n_train: usize,
    pub n_test: usize,
    pub reps: usize,
    pub grid_len: usize,
    pub seed: u64,
}

fn score_rep(
    grid: &GridRef<f64>,
    spec: &crate::simgen::ScoreModelSpec,
    cfg: &ScoreExperiment,
    dims: &[DimRule<f64>],
) -> Result<Vec<[f64; 2]>> {
    let train = [spec.simulate(0, cfg.n_train, grid, 0)?, spec.simulate(1, cfg.n_train, grid, 0)?];
    let test = [spec.simulate(0, cfg.n_test, grid, 1)?, spec.simulate(1, cfg.n_test, grid, 1)?];
    let st0 = GroupStats::from_panel(&train[0], 0)?;
    let st1 = GroupStats::from_panel(&train[1], 0)?;
    dims.iter()
        .map(|&dim| {
            let comp = fit_lag(grid, &st0, &st1, 0, dim, None)?;
            Ok([0, 1].map(|g| {
                let hits = (0..cfg.n_test)
                    .filter(|&k| {
                        let (d0, d1) = comp.raw_distances(test[g].data().slice(s![k..k + 1, ..]));
                        correct(d0, d1, g)
                    })
                    .count();
                hits as f64 / cfg.n_test as f64
            }))
        })
        .collect()
}

fn check_score(cfg: &ScoreExperiment) -> Result<GridRef<f64>> {
    if cfg.n_train < 2 || cfg.n_test == 0 {
        return Err(invalid("need at least 2 training and 1 test curve per group"));
    }
    check_common(cfg.reps, cfg.grid_len)
}

/// One row per `a^2`, ratio-0.9 dimension.
pub fn run_bspline(cfg: &ScoreExperiment, a2_values: &[f64], ratio: f64) -> Result<ExperimentReport> {
    let grid = check_score(cfg)?;
    let mut rows = Vec::new();
    for (ai, &a2) in a2_values.iter().enumerate() {
        let rates = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let spec = bspline_score_spec(a2, derive_seed(cfg.seed, &[ai as u64, r as u64]))?;
                Ok(score_rep(&grid, &spec, cfg, &[DimRule::Ratio(ratio)])?[0])
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ExperimentRow {
            n: cfg.n_train,
            p: 0,
            param: Some(a2),
            dim: DimRule::Ratio(ratio),
            acr: AcrSummary::from_rates(&rates),
        });
    }
    Ok(ExperimentReport { design: "bspline".into(), reps: cfg.reps, seed: cfg.seed, grid_len: cfg.grid_len, rows })
}

/// One row per entry of `dims`; every dimension is evaluated on the same draws.
pub fn run_fourier_sweep(cfg: &ScoreExperiment, setting: u8, dims: &[DimRule<f64>]) -> Result<ExperimentReport> {
    let grid = check_score(cfg)?;
    let per_rep = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let spec = fourier_setting_spec(setting, derive_seed(cfg.seed, &[setting as u64, r as u64]))?;
            score_rep(&grid, &spec, cfg, dims)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = dims
        .iter()
        .enumerate()
        .map(|(i, &dim)| {
            let rates: Vec<[f64; 2]> = per_rep.iter().map(|v| v[i]).collect();
            ExperimentRow { n: cfg.n_train, p: 0, param: None, dim, acr: AcrSummary::from_rates(&rates) }
        })
        .collect();
    Ok(ExperimentReport { design: format!("fourier{setting}"), reps: cfg.reps, seed: cfg.seed, grid_len: cfg.grid_len, rows })
}

/// `d = 1..=9` followed by no reduction.
pub fn figure_dims() -> Vec<DimRule<f64>> {
    (1..=9).map(DimRule::Fixed).chain(std::iter::once(DimRule::Full)).collect()
}
