use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use vpc_core::funcgrid::{fourier_basis, Grid};

fn vpc<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_vpc")).args(args).output().expect("spawn vpc")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "vpc failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, design: &str, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let n = n.to_string();
    let seed = seed.to_string();
    ok(vpc(["simulate", "--design", design, "--n", &n, "--seed", &seed, "--out-dir", p(dir)]));
    (dir.join("group0.csv"), dir.join("group1.csv"))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "fma", 20, 9);
    let first = std::fs::read(a.join("simulate.json")).unwrap();
    simulate(&a, "fma", 20, 9);
    assert_eq!(first, std::fs::read(a.join("simulate.json")).unwrap());
    simulate(&b, "fma", 20, 9);
    for f in ["group0.csv", "group1.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert!(json(&a.join("simulate.json"))["manifest"]["seed"] == 9);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = vpc(["simulate", "--design", "nope", "--out-dir", p(tmp.path())]);
    assert_eq!(code(&out), 2);
    let missing = tmp.path().join("missing.csv");
    let out = vpc(["train", "--group", p(&missing), "--group", p(&missing), "--out", p(&tmp.path().join("m.json"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.csv"));
}

#[test]
fn lag_zero_training_gives_one_component_with_manifest() {
    let tmp = TempDir::new().unwrap();
    let (g0, g1) = simulate(tmp.path(), "fourier1", 60, 1);
    let model = tmp.path().join("m.json");
    ok(vpc(["train", "--group", p(&g0), "--group", p(&g1), "--max-lag", "0", "--alpha", "0", "--out", p(&model)]));
    let doc = json(&model);
    assert_eq!(doc["components"].as_array().unwrap().len(), 1);
    assert_eq!(doc["manifest"]["command"], "train");
    assert_eq!(doc["manifest"]["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn fourier_setting_one_model_keeps_four_directions() {
    let tmp = TempDir::new().unwrap();
    let (g0, g1) = simulate(tmp.path(), "fourier1", 2000, 1);
    let model = tmp.path().join("m.json");
    ok(vpc(["train", "--group", p(&g0), "--group", p(&g1), "--max-lag", "0", "--out", p(&model)]));
    assert_eq!(json(&model)["components"][0]["d"], 4);
}

#[test]
fn classify_rejects_empty_input_and_wrong_blocks() {
    let tmp = TempDir::new().unwrap();
    let (g0, g1) = simulate(tmp.path(), "fma", 40, 2);
    let model = tmp.path().join("m.json");
    ok(vpc(["train", "--group", p(&g0), "--group", p(&g1), "--max-lag", "2", "--alpha", "0", "--out", p(&model)]));

    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&vpc(["classify", "--model", p(&model), "--curves", p(&empty)])), 2);

    let out = vpc(["classify", "--model", p(&model), "--curves", p(&g0), "--block", "2"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("blocks must hold 3 curves"), "{}", stderr(&out));

    let out = vpc(["classify", "--model", p(&model), "--curves", p(&g0)]);
    assert_eq!(code(&out), 2, "40 curves leave a remainder for blocks of 3");
    assert!(stderr(&out).contains("remainder of 1"));
}

#[test]
fn fma_resubstitution_accuracy() {
    let tmp = TempDir::new().unwrap();
    let (g0, g1) = simulate(tmp.path(), "fma", 600, 3);
    let model = tmp.path().join("m.json");
    ok(vpc(["train", "--group", p(&g0), "--group", p(&g1), "--max-lag", "3", "--alpha", "10", "--reps", "30", "--out", p(&model)]));
    let out = ok(vpc(["classify", "--model", p(&model), "--curves", p(&g0), "--block", "4"]));
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 150);
    let hits = rows.iter().filter(|r| r[1] == "0").count() as f64 / rows.len() as f64;
    assert!(hits >= 0.9, "resubstitution accuracy {hits}");
}

#[test]
fn features_are_orthonormal_and_supported_on_discriminating_coordinates() {
    let tmp = TempDir::new().unwrap();
    let (g0, g1) = simulate(tmp.path(), "fourier1", 600, 4);
    let model = tmp.path().join("m.json");
    ok(vpc(["train", "--group", p(&g0), "--group", p(&g1), "--max-lag", "0", "--out", p(&model)]));
    let feats = tmp.path().join("f.csv");
    let out = ok(vpc(["features", "--model", p(&model), "--lag", "0", "--verify", "--out", p(&feats)]));
    assert!(stderr(&out).contains("orthonormality check"));

    let text = std::fs::read_to_string(&feats).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    assert!(lines.next().unwrap().starts_with("eigenvalue,"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    let grid = Grid::<f64>::from_points(rows.iter().map(|r| r[0]).collect()).unwrap();
    let basis = fourier_basis(&grid, 21).unwrap();
    let w = grid.weights();
    for j in 1..=4 {
        let nu: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let norm_sq: f64 = nu.iter().zip(w).map(|(v, w)| v * v * w).sum();
        // coordinates 2..=5 are basis rows 1..=4
        let in_span: f64 = (1..=4)
            .map(|k| basis.evaluations().row(k).iter().zip(&nu).zip(w).map(|((b, v), w)| b * v * w).sum::<f64>().powi(2))
            .sum();
        assert!(in_span / norm_sq >= 0.8, "feature {j}: energy share {}", in_span / norm_sq);
    }

    assert_eq!(code(&vpc(["features", "--model", p(&model), "--lag", "1"])), 2);
}

#[test]
fn single_rep_evaluation_reports_missing_spread() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("eval");
    ok(vpc(["evaluate", "--design", "bspline", "--n", "30", "--n-test", "10", "--reps", "1", "--a2", "60", "--out-dir", p(&dir)]));
    let table = std::fs::read_to_string(dir.join("table.csv")).unwrap();
    assert!(table.starts_with("design,n,p,param,dim,acr0,acr1,sd0,sd1,cell"));
    let rows = csv_rows(&table);
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0][7].as_str(), rows[0][8].as_str()), ("NA", "NA"));
    assert_eq!(json(&dir.join("report.json"))["manifest"]["command"], "evaluate");
}

#[test]
fn evaluation_table_is_independent_of_thread_count() {
    let tmp = TempDir::new().unwrap();
    let run = |threads: &str| {
        let dir = tmp.path().join(format!("t{threads}"));
        ok(vpc([
            "--threads", threads, "evaluate", "--design", "fma", "--n", "30,60", "--max-p", "1", "--reps", "3", "--n-test", "10",
            "--grid-len", "51", "--out-dir", p(&dir),
        ]));
        std::fs::read_to_string(dir.join("table.csv")).unwrap()
    };
    let one = run("1");
    // two sample sizes times lags 0 and 1
    assert_eq!(csv_rows(&one).len(), 4);
    assert_eq!(one, run("2"));
}

#[test]
fn config_file_supplies_flags_and_explicit_flags_win() {
    let tmp = TempDir::new().unwrap();
    let (g0, g1) = simulate(tmp.path(), "fma", 60, 5);
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, format!(r#"{{"group": ["{}", "{}"], "max_lag": 2, "alpha": 0}}"#, p(&g0), p(&g1))).unwrap();
    let model = tmp.path().join("m.json");
    ok(vpc(["--config", p(&cfg), "train", "--out", p(&model)]));
    assert_eq!(json(&model)["components"].as_array().unwrap().len(), 3);
    ok(vpc(["--config", p(&cfg), "train", "--max-lag", "1", "--out", p(&model)]));
    assert_eq!(json(&model)["components"].as_array().unwrap().len(), 2);
}

#[test]
fn domain_errors_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    let (g0, g1) = simulate(tmp.path(), "fma", 40, 6);
    let out = vpc(["train", "--group", p(&g0), "--group", p(&g0), "--out", p(&tmp.path().join("x.json"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    let model = tmp.path().join("m.json");
    ok(vpc(["train", "--group", p(&g0), "--group", p(&g1), "--out", p(&model)]));
    let other = tmp.path().join("other");
    ok(vpc(["simulate", "--design", "fma", "--n", "4", "--grid-len", "51", "--out-dir", p(&other)]));
    let out = vpc(["classify", "--model", p(&model), "--curves", p(&other.join("group0.csv"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn segments_detect_build_and_classify() {
    let tmp = TempDir::new().unwrap();
    let (g0, g1) = simulate(tmp.path(), "fma", 120, 7);

    // i.i.d. curves: the break list should be empty in at least 90% of seeds
    let mut nonempty = 0;
    for seed in 1..=10u64 {
        let (null, _) = simulate(&tmp.path().join(format!("null{seed}")), "fourier1", 100, seed);
        let breaks = tmp.path().join(format!("b{seed}.txt"));
        let report = tmp.path().join(format!("r{seed}.json"));
        ok(vpc([
            "segments", "detect", "--curves", p(&null), "--seed", &seed.to_string(), "--out", p(&breaks), "--report", p(&report),
        ]));
        nonempty += usize::from(!std::fs::read_to_string(&breaks).unwrap().trim().is_empty());
        assert!(json(&report)["manifest"]["seed"] == seed);
    }
    assert!(nonempty <= 1, "{nonempty} of 10 null runs reported breaks");

    let breaks = tmp.path().join("breaks.txt");
    std::fs::write(&breaks, "40\n80\n").unwrap();
    let reg = tmp.path().join("reg.json");
    ok(vpc(["segments", "build", "--curves", p(&g0), "--breaks", p(&breaks), "--out", p(&reg)]));
    let doc = json(&reg);
    assert_eq!(doc["breaks"], serde_json::json!([40, 80]));
    assert_eq!(doc["operators"].as_array().unwrap().len(), 3);
    assert_eq!(doc["manifest"]["command"], "segments build");

    // one segment per group reduces to the lag-0 block classifier with unit weights
    let (r0, r1) = (tmp.path().join("r0.json"), tmp.path().join("r1.json"));
    ok(vpc(["segments", "build", "--curves", p(&g0), "--out", p(&r0)]));
    ok(vpc(["segments", "build", "--curves", p(&g1), "--out", p(&r1)]));
    let seg = ok(vpc(["segments", "classify", "--registry0", p(&r0), "--registry1", p(&r1), "--curves", p(&g1)]));
    let model = tmp.path().join("m.json");
    ok(vpc(["train", "--group", p(&g0), "--group", p(&g1), "--max-lag", "0", "--unit-weights", "--out", p(&model)]));
    let blk = ok(vpc(["classify", "--model", p(&model), "--curves", p(&g1)]));
    let seg = csv_rows(&String::from_utf8(seg.stdout).unwrap());
    let blk = csv_rows(&String::from_utf8(blk.stdout).unwrap());
    assert_eq!(seg.len(), 120);
    for (s, b) in seg.iter().zip(&blk) {
        assert_eq!(s[1], b[1]);
        for c in [2, 3] {
            let (sv, bv): (f64, f64) = (s[c].parse().unwrap(), b[c].parse().unwrap());
            assert!((bv / 4.0 - sv).abs() <= 1e-8 * bv.max(1.0), "{sv} vs {bv}");
        }
    }
}
