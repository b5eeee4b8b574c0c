//! File formats: curve-panel CSV, kernel CSV with a grid sidecar, model and
//! segment-registry JSON, and the run manifest embedded in JSON outputs.
//!
//! Panel CSV: the first line lists the grid points `t_1,...,t_T` (an optional
//! leading non-numeric cell such as `curve_id` is skipped); each further line is
//! `curve_id,v_1,...,v_T`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, VpcError};
use crate::funcgrid::{CurvePanel, Grid, GridRef};
use crate::operators::KernelOperator;
use crate::scalar::Scalar;
use crate::segmented::SegmentRegistry;
use crate::vpc::basis::DiscriminativeBasis;
use crate::vpc::model::{Group, LagComponent, VpcModel};
use crate::vpc::multiclass::MulticlassModel;

pub const MODEL_FORMAT: &str = "vpc-model/1";
pub const REGISTRY_FORMAT: &str = "vpc-segments/1";
pub const MULTICLASS_FORMAT: &str = "vpc-multiclass/1";

fn io_err(path: &Path, source: std::io::Error) -> VpcError {
    VpcError::Io { path: path.display().to_string(), source }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_num<S: Scalar>(cell: &str, line: usize) -> Result<S> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| VpcError::Parse { line, message: format!("not a number: {:?}", cell.trim()) })?;
    if !v.is_finite() {
        return Err(VpcError::Parse { line, message: format!("non-finite value {v}") });
    }
    Ok(S::lit(v))
}

/// A uniform grid when the points are exactly uniform, otherwise trapezoid weights.
fn grid_from_points<S: Scalar>(points: Vec<S>) -> Result<GridRef<S>> {
    if let Ok(u) = Grid::<S>::uniform(points.len()) {
        if u.points() == points.as_slice() {
            return Ok(u);
        }
    }
    Grid::from_points(points)
}

/// Parses a panel CSV; returns the panel and the curve ids in file order.
pub fn parse_panel_csv<S: Scalar>(reader: impl Read) -> Result<(CurvePanel<S>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(VpcError::Parse { line: 1, message: "empty file: missing grid header".into() }),
        Some(r) => r.map_err(|e| csv_err(e, 1))?,
    };
    let cells: Vec<&str> = header.iter().collect();
    let skip = usize::from(cells.first().is_some_and(|c| c.parse::<f64>().is_err()));
    let points = cells[skip..].iter().map(|c| parse_num::<S>(c, 1)).collect::<Result<Vec<_>>>()?;
    let grid = grid_from_points(points).map_err(|e| VpcError::Parse { line: 1, message: format!("bad grid header: {e}") })?;
    let t = grid.len();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_err(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != t + 1 {
            return Err(VpcError::Parse { line, message: format!("expected curve id and {t} values, found {} cells", rec.len()) });
        }
        ids.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            values.push(parse_num::<S>(cell, line)?);
        }
    }
    if ids.is_empty() {
        return Err(VpcError::Parse { line: 2, message: "no curves after the grid header".into() });
    }
    let data = Array2::from_shape_vec((ids.len(), t), values).expect("row lengths checked");
    Ok((CurvePanel::from_rows(grid, data)?, ids))
}

fn csv_err(e: csv::Error, fallback_line: usize) -> VpcError {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    VpcError::Parse { line, message: e.to_string() }
}

pub fn read_panel_csv<S: Scalar>(path: &Path) -> Result<CurvePanel<S>> {
    let file = open(path)?;
    parse_panel_csv(file).map(|(p, _)| p).map_err(|e| match e {
        VpcError::Parse { line, message } => VpcError::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

pub fn format_panel_csv<S: Scalar>(panel: &CurvePanel<S>) -> String {
    let mut out = String::new();
    let join = |vals: &mut dyn Iterator<Item = String>| vals.collect::<Vec<_>>().join(",");
    out.push_str(&join(&mut panel.grid().points().iter().map(|p| p.to_string())));
    out.push('\n');
    for k in 0..panel.len() {
        out.push_str(&(k + 1).to_string());
        out.push(',');
        out.push_str(&join(&mut panel.row(k).iter().map(|v| v.to_string())));
        out.push('\n');
    }
    out
}

pub fn write_panel_csv<S: Scalar>(path: &Path, panel: &CurvePanel<S>) -> Result<()> {
    write_text(path, &format_panel_csv(panel))
}

/// Writes `T` rows of `T` kernel values to `path` and `t,w` rows to `grid_path`.
pub fn write_kernel_csv<S: Scalar>(path: &Path, grid_path: &Path, op: &KernelOperator<S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for row in op.kernel().rows() {
        let line = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    let mut g = String::from("t,w\n");
    for (t, wt) in op.grid().points().iter().zip(op.grid().weights()) {
        g.push_str(&format!("{t},{wt}\n"));
    }
    write_text(grid_path, &g)
}

pub fn read_kernel_csv<S: Scalar>(path: &Path, grid_path: &Path) -> Result<KernelOperator<S>> {
    let grid_text = read_text(grid_path)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in grid_text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let (Some(t), Some(w), None) = (it.next(), it.next(), it.next()) else {
            return Err(VpcError::Parse { line: i + 1, message: "expected t,w".into() });
        };
        points.push(parse_num::<S>(t, i + 1)?);
        weights.push(parse_num::<S>(w, i + 1)?);
    }
    let grid = Grid::from_parts(points, weights)?;
    let text = read_text(path)?;
    let t = grid.len();
    let mut values = Vec::with_capacity(t * t);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line.split(',').map(|c| parse_num::<S>(c, i + 1)).collect::<Result<Vec<_>>>()?;
        if row.len() != t {
            return Err(VpcError::Parse { line: i + 1, message: format!("expected {t} kernel values") });
        }
        values.extend(row);
        rows += 1;
    }
    if rows != t {
        return Err(invalid(format!("kernel has {rows} rows for a grid of {t} points")));
    }
    KernelOperator::new(grid, Array2::from_shape_vec((t, t), values).expect("checked"))
}

/// Inputs, flags and versions of the command that produced an output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, seed: Option<u64>, inputs: Vec<String>) -> Self {
        RunManifest {
            tool: "vpc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            seed,
            inputs,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridDoc<S> {
    pub points: Vec<S>,
    pub weights: Vec<S>,
}

impl<S: Scalar> GridDoc<S> {
    pub fn from_grid(grid: &GridRef<S>) -> Self {
        GridDoc { points: grid.points().to_vec(), weights: grid.weights().to_vec() }
    }

    pub fn to_grid(&self) -> Result<GridRef<S>> {
        Grid::from_parts(self.points.clone(), self.weights.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentDoc<S> {
    pub lag: usize,
    pub d: usize,
    pub eigenvalues: Vec<S>,
    /// `d` rows of `T` values.
    pub functions: Vec<Vec<S>>,
    pub scores0: Vec<Vec<S>>,
    pub scores1: Vec<Vec<S>>,
    pub weight: S,
    pub single_lag_rate: S,
    pub amplitude: S,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc<S> {
    pub format_version: String,
    pub grid: GridDoc<S>,
    pub max_lag: usize,
    pub alpha: S,
    pub tau: Option<S>,
    pub high_variation_group: Option<usize>,
    pub scaled: bool,
    pub group_labels: [i64; 2],
    pub components: Vec<ComponentDoc<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

fn rows<S: Scalar>(a: ndarray::ArrayView2<'_, S>) -> Vec<Vec<S>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix<S: Scalar>(rows: &[Vec<S>], ncols: usize, what: &str) -> Result<Array2<S>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(format!("{what}: every row must have {ncols} values")));
    }
    let flat: Vec<S> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), ncols), flat).expect("checked"))
}

impl<S: Scalar> ModelDoc<S> {
    pub fn from_model(model: &VpcModel<S>, manifest: Option<RunManifest>) -> Self {
        ModelDoc {
            format_version: MODEL_FORMAT.into(),
            grid: GridDoc::from_grid(model.grid()),
            max_lag: model.max_lag(),
            alpha: model.alpha(),
            tau: model.tau(),
            high_variation_group: model.high_variation_group().map(Group::index),
            scaled: model.scaled(),
            group_labels: model.group_labels(),
            components: model
                .components()
                .iter()
                .map(|c| ComponentDoc {
                    lag: c.lag(),
                    d: c.d(),
                    eigenvalues: c.basis().eigenvalues().to_vec(),
                    functions: rows(c.basis().functions()),
                    scores0: rows(c.scores0()),
                    scores1: rows(c.scores1()),
                    weight: c.weight(),
                    single_lag_rate: c.single_lag_rate(),
                    amplitude: c.amplitude(),
                })
                .collect(),
            manifest,
        }
    }

    pub fn to_model(&self) -> Result<VpcModel<S>> {
        if self.format_version != MODEL_FORMAT {
            return Err(invalid(format!("unsupported model format {:?}", self.format_version)));
        }
        let grid = self.grid.to_grid()?;
        if self.components.len() != self.max_lag + 1 {
            return Err(invalid("model must hold one component per lag 0..=max_lag"));
        }
        let t = grid.len();
        let components = self
            .components
            .iter()
            .map(|c| {
                if c.functions.len() != c.d {
                    return Err(invalid(format!("lag {}: d = {} but {} functions", c.lag, c.d, c.functions.len())));
                }
                let basis = DiscriminativeBasis::from_parts(grid.clone(), c.lag, c.eigenvalues.clone(), matrix(&c.functions, t, "functions")?)?;
                LagComponent::from_stored(
                    basis,
                    matrix(&c.scores0, c.d, "scores0")?,
                    matrix(&c.scores1, c.d, "scores1")?,
                    c.weight,
                    c.single_lag_rate,
                    c.amplitude,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = VpcModel::from_components(grid, components, self.alpha)?
            .with_scaled(self.scaled)
            .with_group_labels(self.group_labels);
        match (self.tau, self.high_variation_group) {
            (Some(t), Some(g)) if g < 2 => model = model.with_tau(t, Group::from_index(g)),
            (None, _) => {}
            _ => return Err(invalid("tau needs a high-variation group of 0 or 1")),
        }
        Ok(model)
    }
}

pub fn model_to_json<S: Scalar>(model: &VpcModel<S>, manifest: Option<RunManifest>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDoc::from_model(model, manifest))?)
}

pub fn model_from_json<S: Scalar>(text: &str) -> Result<VpcModel<S>> {
    serde_json::from_str::<ModelDoc<S>>(text)?.to_model()
}

pub fn save_model<S: Scalar>(path: &Path, model: &VpcModel<S>, manifest: Option<RunManifest>) -> Result<()> {
    write_text(path, &model_to_json(model, manifest)?)
}

pub fn load_model<S: Scalar>(path: &Path) -> Result<VpcModel<S>> {
    model_from_json(&read_text(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MulticlassDoc<S> {
    pub format_version: String,
    pub labels: Vec<i64>,
    pub max_lag: usize,
    /// Row-major upper-triangular pairs; `null` marks an indistinguishable pair.
    pub pairs: Vec<Option<ModelDoc<S>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

/// Either kind of trained classifier, as stored on disk.
#[derive(Debug, Clone)]
pub enum StoredModel<S> {
    Binary(VpcModel<S>),
    Multiclass(MulticlassModel<S>),
}

pub fn multiclass_to_json<S: Scalar>(model: &MulticlassModel<S>, manifest: Option<RunManifest>) -> Result<String> {
    let doc = MulticlassDoc {
        format_version: MULTICLASS_FORMAT.into(),
        labels: model.labels().to_vec(),
        max_lag: model.max_lag(),
        pairs: model.pairs().iter().map(|p| p.as_ref().map(|m| ModelDoc::from_model(m, None))).collect(),
        manifest,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Reads a binary or multi-class model, dispatching on `format_version`.
pub fn stored_model_from_json<S: Scalar>(text: &str) -> Result<StoredModel<S>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("format_version").and_then(|v| v.as_str()) {
        Some(MULTICLASS_FORMAT) => {
            let doc: MulticlassDoc<S> = serde_json::from_value(value)?;
            let pairs = doc.pairs.iter().map(|p| p.as_ref().map(ModelDoc::to_model).transpose()).collect::<Result<Vec<_>>>()?;
            Ok(StoredModel::Multiclass(MulticlassModel::from_parts(doc.labels, doc.max_lag, pairs)?))
        }
        _ => model_from_json(text).map(StoredModel::Binary),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryDoc<S> {
    pub format_version: String,
    pub grid: GridDoc<S>,
    pub curves: usize,
    /// 1-based index of the last curve before each break.
    pub breaks: Vec<usize>,
    /// One `T x T` kernel per segment.
    pub operators: Vec<Vec<Vec<S>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

pub fn registry_to_json<S: Scalar>(reg: &SegmentRegistry<S>, manifest: Option<RunManifest>) -> Result<String> {
    let doc = RegistryDoc {
        format_version: REGISTRY_FORMAT.into(),
        grid: GridDoc::from_grid(reg.grid()),
        curves: reg.curves(),
        breaks: reg.breaks().to_vec(),
        operators: reg.operators().iter().map(|o| rows(o.kernel())).collect(),
        manifest,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn registry_from_json<S: Scalar>(text: &str) -> Result<SegmentRegistry<S>> {
    let doc: RegistryDoc<S> = serde_json::from_str(text)?;
    if doc.format_version != REGISTRY_FORMAT {
        return Err(invalid(format!("unsupported registry format {:?}", doc.format_version)));
    }
    let grid = doc.grid.to_grid()?;
    let t = grid.len();
    let ops = doc
        .operators
        .iter()
        .map(|k| {
            if k.len() != t {
                return Err(invalid(format!("segment kernel must have {t} rows")));
            }
            KernelOperator::new(grid.clone(), matrix(k, t, "kernel")?)
        })
        .collect::<Result<Vec<_>>>()?;
    SegmentRegistry::from_parts(grid, doc.curves, doc.breaks, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcgrid::fourier_basis;
    use crate::vpc::model::{classify, train, TrainConfig};
    use ndarray::array;

    fn sample_panel(n: usize, seed: u64) -> CurvePanel<f64> {
        use rand::{Rng, SeedableRng};
        let grid = Grid::<f64>::uniform(17).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let basis = fourier_basis(&grid, 5).unwrap();
        let coeffs = Array2::from_shape_fn((n, 5), |(_, j)| (j as f64 + 1.0).recip() * rng.random_range(-1.0..1.0));
        basis.synthesize(coeffs.view()).unwrap()
    }

    #[test]
    fn panel_csv_round_trip_is_exact() {
        let p = sample_panel(6, 1);
        let text = format_panel_csv(&p);
        let (back, ids) = parse_panel_csv::<f64>(text.as_bytes()).unwrap();
        assert_eq!(ids, (1..=6).map(|i| i.to_string()).collect::<Vec<_>>());
        assert_eq!(back.data(), p.data());
        assert_eq!(back.grid().weights(), p.grid().weights());
        assert_eq!(format_panel_csv(&back), text);
    }

    #[test]
    fn panel_csv_header_forms_and_errors() {
        let with_id = "curve_id,0,0.5,1\na,1,2,3\nb,4,5,6\n";
        let (p, ids) = parse_panel_csv::<f64>(with_id.as_bytes()).unwrap();
        assert_eq!(p.data(), array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(ids, vec!["a", "b"]);
        let bad = "0,0.5,1\n1,1,2,3\n2,1,x,3\n";
        assert!(matches!(parse_panel_csv::<f64>(bad.as_bytes()), Err(VpcError::Parse { line: 3, .. })));
        let short = "0,0.5,1\n1,1,2\n";
        assert!(matches!(parse_panel_csv::<f64>(short.as_bytes()), Err(VpcError::Parse { line: 2, .. })));
        assert!(matches!(parse_panel_csv::<f64>("".as_bytes()), Err(VpcError::Parse { .. })));
        assert!(matches!(parse_panel_csv::<f64>("0,1\n".as_bytes()), Err(VpcError::Parse { .. })));
    }

    #[test]
    fn model_json_round_trip_is_bit_exact() {
        let p0 = sample_panel(30, 2);
        let p1 = sample_panel(30, 3).scaled(1.7);
        let model = train(&p0, &p1, &TrainConfig::new(1, 5.0), Some(&[0.8, 0.6])).unwrap().with_tau(3.5, Group::One);
        let json = model_to_json(&model, Some(RunManifest::new("train", vec![], Some(1), vec![]))).unwrap();
        let back: VpcModel<f64> = model_from_json(&json).unwrap();
        let queries = sample_panel(40, 4);
        for k in 0..20 {
            let ys = queries.slice(2 * k..2 * k + 2).curves();
            let a = classify(&model, &ys).unwrap();
            let b = classify(&back, &ys).unwrap();
            assert_eq!(a.d0.to_bits(), b.d0.to_bits());
            assert_eq!(a.d1.to_bits(), b.d1.to_bits());
            assert_eq!(a.label, b.label);
        }
        assert_eq!(back.tau(), Some(3.5));
        assert_eq!(model_to_json(&back, Some(RunManifest::new("train", vec![], Some(1), vec![]))).unwrap(), json);
    }

    #[test]
    fn multiclass_json_round_trip() {
        use crate::vpc::multiclass::{classify_multiclass, train_multiclass};
        let panels = vec![sample_panel(25, 7), sample_panel(25, 8).scaled(2.0), sample_panel(25, 7).with_label(5)];
        let model = train_multiclass(&panels, &TrainConfig::new(0, 0.0), None).unwrap();
        let json = multiclass_to_json(&model, None).unwrap();
        let StoredModel::Multiclass(back) = stored_model_from_json::<f64>(&json).unwrap() else { panic!("wrong kind") };
        assert_eq!(back.labels(), &[0, 1, 5]);
        assert!(back.pair(0, 2).is_none());
        let ys = sample_panel(1, 9).curves();
        assert_eq!(classify_multiclass(&model, &ys).unwrap(), classify_multiclass(&back, &ys).unwrap());
        assert!(matches!(stored_model_from_json::<f64>(&model_to_json(back.pair(0, 1).unwrap(), None).unwrap()), Ok(StoredModel::Binary(_))));
    }

    #[test]
    fn kernel_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = sample_panel(10, 5);
        let op = crate::operators::estimate_lagged_cov(&p, 0).unwrap().0;
        let (k, g) = (dir.path().join("k.csv"), dir.path().join("k.grid.csv"));
        write_kernel_csv(&k, &g, &op).unwrap();
        let back: KernelOperator<f64> = read_kernel_csv(&k, &g).unwrap();
        assert_eq!(back.kernel(), op.kernel());
    }

    #[test]
    fn registry_json_round_trip() {
        let p = sample_panel(30, 6);
        let reg = crate::segmented::build_registry(&p, &[10, 20]).unwrap();
        let json = registry_to_json(&reg, None).unwrap();
        let back: SegmentRegistry<f64> = registry_from_json(&json).unwrap();
        assert_eq!(back.breaks(), reg.breaks());
        for (a, b) in back.operators().iter().zip(reg.operators()) {
            assert_eq!(a.kernel(), b.kernel());
        }
        assert_eq!(registry_to_json(&back, None).unwrap(), json);
    }
}
