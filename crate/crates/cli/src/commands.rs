use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::Serialize;
use serde_json::json;

use vpc_core::experiments::{figure_dims, run_bspline, run_fma, run_fourier_sweep, ExperimentReport, FmaExperiment, ScoreExperiment};
use vpc_core::funcgrid::{concat_channels, concat_panels, scale_to_unit, CurvePanel, Grid};
use vpc_core::io::{
    model_to_json, multiclass_to_json, read_panel_csv, read_text, registry_from_json, registry_to_json, stored_model_from_json,
    write_panel_csv, write_text, RunManifest, StoredModel,
};
use vpc_core::segmented::{build_registry, detect_breaks_multichannel, format_break_list, parse_break_list, SegmentClassifier};
use vpc_core::simgen::{bspline_score_spec, fourier_setting_spec, make_fma_spec, simulate_fma};
use vpc_core::vpc::{
    classify_multiclass, predict, select_tau, single_lag_rates, train_multiclass, tune, PairRateConfig, Weighting,
};
use vpc_core::{train, DimRule, Group, TrainConfig, VpcError};

use crate::args::*;
use crate::config::UsageError;

type Panel = CurvePanel<f64>;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn manifest(command: &str, seed: Option<u64>, inputs: &[&Path]) -> RunManifest {
    let args = std::env::args().skip(1).collect();
    RunManifest::new(command, args, seed, inputs.iter().map(|p| p.display().to_string()).collect())
}

fn load(path: &Path) -> Result<Panel> {
    let panel = read_panel_csv(path)?;
    log::info!("{}: {} curves on {} grid points", path.display(), panel.len(), panel.grid().len());
    Ok(panel)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| VpcError::Io { path: dir.display().to_string(), source: e })?;
    Ok(())
}

fn dim_rule(d: &DimArgs) -> DimRule<f64> {
    match (d.full, d.dim) {
        (true, _) => DimRule::Full,
        (false, Some(k)) => DimRule::Fixed(k),
        (false, None) => DimRule::Ratio(d.ratio),
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let grid = Grid::<f64>::uniform(a.grid_len)?;
    let (panels, spec) = match a.design {
        Design::Fma => {
            let spec = make_fma_spec(a.seed);
            ([simulate_fma(&spec, 0, a.n, &grid)?, simulate_fma(&spec, 1, a.n, &grid)?], serde_json::to_value(&spec)?)
        }
        Design::Bspline | Design::Fourier1 | Design::Fourier2 => {
            let spec = match a.design {
                Design::Bspline => bspline_score_spec(a.a2, a.seed)?,
                Design::Fourier1 => fourier_setting_spec(1, a.seed)?,
                _ => fourier_setting_spec(2, a.seed)?,
            };
            ([spec.simulate(0, a.n, &grid, 0)?, spec.simulate(1, a.n, &grid, 0)?], serde_json::to_value(&spec)?)
        }
    };
    create_dir(&a.out_dir)?;
    for (g, p) in panels.iter().enumerate() {
        write_panel_csv(&a.out_dir.join(format!("group{g}.csv")), p)?;
    }
    let sidecar = json!({
        "design": a.design.name(),
        "n": a.n,
        "seed": a.seed,
        "grid_len": a.grid_len,
        "files": ["group0.csv", "group1.csv"],
        "spec": spec,
        "manifest": manifest("simulate", Some(a.seed), &[]),
    });
    write_text(&a.out_dir.join("simulate.json"), &pretty(&sidecar)?)?;
    eprintln!("wrote {} curves per group to {}", a.n, a.out_dir.display());
    Ok(())
}

fn cv_report_path(out: &Path) -> PathBuf {
    out.with_extension("cv.json")
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    if a.groups.len() < 2 {
        return Err(usage("train needs at least two --group files"));
    }
    let inputs: Vec<&Path> = a.groups.iter().map(PathBuf::as_path).collect();
    let panels = a.groups.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let weighting = if a.unit_weights { Weighting::Unit } else { Weighting::LagWeighted };
    let dim = dim_rule(&a.dim);
    let tuning = !a.p_grid.is_empty() || !a.alpha_grid.is_empty();
    let man = manifest("train", Some(a.seed), &inputs);

    if panels.len() > 2 {
        if tuning || a.scale || a.tau_cv {
            return Err(usage("--p-grid, --alpha-grid, --scale and --tau-cv need exactly two groups"));
        }
        let labelled: Vec<Panel> = panels.into_iter().enumerate().map(|(g, p)| p.with_label(g as i64)).collect();
        let config = TrainConfig::new(a.max_lag, a.alpha).with_dim(dim).with_weighting(weighting);
        let rates = PairRateConfig { reps: a.reps, ratio: a.dim.ratio, seed: a.seed };
        let model = train_multiclass(&labelled, &config, Some(rates))?;
        write_text(&a.out, &multiclass_to_json(&model, Some(man))?)?;
        eprintln!("trained {} groups, {} pairwise models", model.groups(), model.pairs().len());
        return Ok(());
    }

    let tau = if a.tau_cv { Some(select_tau(&panels[0], &panels[1])?) } else { None };
    let (p0, p1) = if a.scale {
        (scale_to_unit(&panels[0])?, scale_to_unit(&panels[1])?)
    } else {
        (panels[0].clone(), panels[1].clone())
    };
    let (max_lag, alpha, rates) = if tuning {
        let ps = if a.p_grid.is_empty() { vec![a.max_lag] } else { a.p_grid.clone() };
        let alphas = if a.alpha_grid.is_empty() { vec![a.alpha] } else { a.alpha_grid.clone() };
        let report = tune(&p0, &p1, &ps, &alphas, a.reps, a.dim.ratio, a.seed)?;
        let doc = json!({ "report": report, "manifest": man });
        write_text(&cv_report_path(&a.out), &pretty(&doc)?)?;
        eprintln!(
            "cross-validation picked p = {}, alpha = {} (rate {:.4})",
            report.chosen_p,
            report.chosen_alpha,
            report.best().rate
        );
        (report.chosen_p, report.chosen_alpha, Some(report.lag_rates[..=report.chosen_p].to_vec()))
    } else if weighting == Weighting::LagWeighted && a.alpha != 0.0 {
        let rates = single_lag_rates(&p0, &p1, a.max_lag, a.reps, a.max_lag + 1, a.dim.ratio, a.seed)?;
        (a.max_lag, a.alpha, Some(rates))
    } else {
        (a.max_lag, a.alpha, None)
    };
    let config = TrainConfig::new(max_lag, alpha).with_dim(dim).with_weighting(weighting);
    let mut model = train(&p0, &p1, &config, rates.as_deref())?.with_scaled(a.scale);
    if let Some((t, g)) = tau {
        model = model.with_tau(t, g);
    }
    write_text(&a.out, &model_to_json(&model, Some(man))?)?;
    for c in model.components() {
        eprintln!("lag {}: d = {}, weight = {:.6e}, P(h) = {:.4}", c.lag(), c.d(), c.weight(), c.single_lag_rate());
    }
    Ok(())
}

pub fn classify_cmd(a: &ClassifyArgs) -> Result<()> {
    let model = stored_model_from_json::<f64>(&read_text(&a.model)?)?;
    let curves = load(&a.curves)?;
    if curves.is_empty() {
        return Err(usage(format!("{} holds no curves", a.curves.display())));
    }
    let expected = match &model {
        StoredModel::Binary(m) => m.block_len(),
        StoredModel::Multiclass(m) => m.block_len(),
    };
    let block = a.block.unwrap_or(expected);
    if block != expected {
        return Err(usage(format!("--block {block} does not match the model: blocks must hold {expected} curves (max lag + 1)")));
    }
    if curves.len() % block != 0 {
        return Err(usage(format!(
            "{} curves leave a trailing remainder of {} for blocks of {block}",
            curves.len(),
            curves.len() % block
        )));
    }
    let mut out = String::new();
    match &model {
        StoredModel::Binary(m) => {
            out.push_str("block_index,label,d0,d1\n");
            for k in 0..curves.len() / block {
                let d = predict(m, &curves.slice(k * block..(k + 1) * block).curves())?;
                writeln!(out, "{k},{},{},{}", m.group_labels()[d.label.index()], d.d0, d.d1)?;
            }
        }
        StoredModel::Multiclass(m) => {
            out.push_str("block_index,label");
            for r in 1..m.groups() {
                write!(out, ",round{r}_incumbent,round{r}_challenger,round{r}_d0,round{r}_d1")?;
            }
            out.push('\n');
            for k in 0..curves.len() / block {
                let d = classify_multiclass(m, &curves.slice(k * block..(k + 1) * block).curves())?;
                write!(out, "{k},{}", d.label)?;
                for (i, j, r) in &d.rounds {
                    write!(out, ",{},{},{},{}", m.labels()[*i], m.labels()[*j], r.d0, r.d1)?;
                }
                out.push('\n');
            }
        }
    }
    emit(a.out.as_deref(), &out)
}

pub fn features(a: &FeaturesArgs) -> Result<()> {
    let StoredModel::Binary(model) = stored_model_from_json::<f64>(&read_text(&a.model)?)? else {
        return Err(usage("features needs a two-group model"));
    };
    if a.lag > model.max_lag() {
        return Err(usage(format!("lag {} is outside the model's lags 0..={}", a.lag, model.max_lag())));
    }
    let comp = &model.components()[a.lag];
    let basis = comp.basis();
    let d = basis.d();
    if d == 0 {
        log::warn!("lag {} was dropped (no discrepancy); the feature file has no function columns", a.lag);
        eprintln!("warning: lag {} has no discriminative features; output is empty", a.lag);
    }
    let grid = model.grid();
    let mut out = String::from("t");
    for j in 1..=d {
        write!(out, ",nu_{j}")?;
    }
    out.push_str("\neigenvalue");
    for v in &basis.eigenvalues()[..d] {
        write!(out, ",{v}")?;
    }
    out.push('\n');
    let f = basis.functions();
    for (i, t) in grid.points().iter().enumerate() {
        write!(out, "{t}")?;
        for j in 0..d {
            write!(out, ",{}", f[[j, i]])?;
        }
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)?;
    if a.verify {
        let w = grid.weights_view();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let ip: f64 = (&f.row(i) * &f.row(j) * w).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        eprintln!("orthonormality check: max |<nu_i, nu_j> - delta_ij| = {worst:.3e}");
        if worst > 1e-8 {
            bail!(VpcError::PreconditionViolation(format!("feature functions are not orthonormal (deviation {worst:.3e})")));
        }
    }
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    if a.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let report: ExperimentReport = match a.design {
        Design::Fma => {
            let cfg = FmaExperiment {
                ns: if a.n.is_empty() { vec![50, 100, 600] } else { a.n.clone() },
                max_p: a.max_p,
                alpha: a.alpha,
                ratio: a.ratio,
                reps: a.reps,
                test_blocks: a.n_test,
                validation: 100,
                grid_len: a.grid_len,
                seed: a.seed,
            };
            run_fma(&cfg)?
        }
        Design::Bspline => {
            let cfg = score_cfg(a, 100)?;
            run_bspline(&cfg, &a.a2, a.ratio)?
        }
        Design::Fourier1 | Design::Fourier2 => {
            let cfg = score_cfg(a, 200)?;
            let setting = if a.design == Design::Fourier1 { 1 } else { 2 };
            run_fourier_sweep(&cfg, setting, &figure_dims())?
        }
    };
    create_dir(&a.out_dir)?;
    let doc = json!({ "report": report, "manifest": manifest("evaluate", Some(a.seed), &[]) });
    write_text(&a.out_dir.join("report.json"), &pretty(&doc)?)?;
    let table = report.to_csv();
    write_text(&a.out_dir.join("table.csv"), &table)?;
    eprint!("{table}");
    Ok(())
}

fn score_cfg(a: &EvaluateArgs, default_n: usize) -> Result<ScoreExperiment> {
    let n_train = match a.n.as_slice() {
        [] => default_n,
        [n] => *n,
        _ => return Err(usage("this design takes a single --n")),
    };
    Ok(ScoreExperiment { n_train, n_test: a.n_test, reps: a.reps, grid_len: a.grid_len, seed: a.seed })
}

fn load_channels(paths: &[PathBuf]) -> Result<Vec<Panel>> {
    paths.iter().map(|p| load(p)).collect()
}

fn stacked(paths: &[PathBuf]) -> Result<Panel> {
    let channels = load_channels(paths)?;
    if channels.len() == 1 {
        Ok(channels.into_iter().next().expect("one channel"))
    } else {
        Ok(concat_panels(&channels)?)
    }
}

pub fn segments(cmd: &SegmentsCommand) -> Result<()> {
    match cmd {
        SegmentsCommand::Detect(a) => {
            let channels = load_channels(&a.curves)?;
            let report = detect_breaks_multichannel(&channels, a.level, a.min_seg, a.permutations, a.seed)?;
            write_text(&a.out, &format_break_list(&report.indices()))?;
            if let Some(path) = &a.report {
                let inputs: Vec<&Path> = a.curves.iter().map(PathBuf::as_path).collect();
                let doc = json!({ "report": report, "manifest": manifest("segments detect", Some(a.seed), &inputs) });
                write_text(path, &pretty(&doc)?)?;
            }
            eprintln!("{} break(s) at level {}", report.breaks.len(), a.level);
            Ok(())
        }
        SegmentsCommand::Build(a) => {
            let panel = stacked(&a.curves)?;
            let breaks = match &a.breaks {
                Some(p) => parse_break_list(&read_text(p)?)?,
                None => vec![],
            };
            let registry = build_registry(&panel, &breaks)?;
            let mut inputs: Vec<&Path> = a.curves.iter().map(PathBuf::as_path).collect();
            inputs.extend(a.breaks.as_deref());
            write_text(&a.out, &registry_to_json(&registry, Some(manifest("segments build", None, &inputs)))?)?;
            eprintln!("registry with {} segment(s)", registry.segments());
            Ok(())
        }
        SegmentsCommand::Classify(a) => {
            let reg0 = registry_from_json::<f64>(&read_text(&a.registry0)?)?;
            let reg1 = registry_from_json::<f64>(&read_text(&a.registry1)?)?;
            let channels = load_channels(&a.curves)?;
            let n = channels[0].len();
            if n == 0 {
                return Err(usage("no curves to classify"));
            }
            let mut classifier = SegmentClassifier::new(&reg0, &reg1, dim_rule(&a.dim))?;
            let mut out = String::from("index,label,d0,d1,segment0,segment1,d\n");
            for k in 0..n {
                let y = if channels.len() == 1 { channels[0].curve(k) } else { concat_channels(&channels, k)? };
                let s = classifier.classify(&y)?;
                let label = match s.decision.label {
                    Group::Zero => 0,
                    Group::One => 1,
                };
                writeln!(out, "{k},{label},{},{},{},{},{}", s.decision.d0, s.decision.d1, s.segment0, s.segment1, s.d)?;
            }
            emit(a.out.as_deref(), &out)
        }
    }
}
