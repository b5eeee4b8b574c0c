//! `--config FILE`: a JSON object whose keys are flag names (`max_lag` or
//! `max-lag`). Its entries are spliced into the command line right after the
//! subcommand, skipping any flag the user also passed explicitly.

use std::ffi::OsString;
use std::fmt;
use std::path::Path;

use serde_json::Value;

/// Bad flags, config files or input paths; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const GLOBAL_WITH_VALUE: [&str; 2] = ["--threads", "--config"];

fn config_path(argv: &[OsString]) -> Option<OsString> {
    argv.iter().enumerate().find_map(|(i, a)| {
        let s = a.to_string_lossy();
        if s == "--config" {
            argv.get(i + 1).cloned()
        } else {
            s.strip_prefix("--config=").map(OsString::from)
        }
    })
}

/// Index just past the subcommand (and `segments` action) names.
fn insertion_point(argv: &[OsString]) -> usize {
    let mut i = 1;
    let mut names = 0;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if GLOBAL_WITH_VALUE.contains(&s.as_ref()) {
            i += 2;
            continue;
        }
        if s.starts_with('-') {
            i += 1;
            continue;
        }
        names += 1;
        i += 1;
        if names == 2 || s != "segments" {
            break;
        }
    }
    i.min(argv.len())
}

fn scalar(key: &str, v: &Value) -> anyhow::Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(usage(format!("config key {key:?}: expected a string, number or list of them"))),
    }
}

fn tokens(key: &str, value: &Value) -> anyhow::Result<Vec<String>> {
    let flag = format!("--{}", key.replace('_', "-"));
    Ok(match value {
        Value::Null | Value::Bool(false) => vec![],
        Value::Bool(true) => vec![flag],
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                out.push(flag.clone());
                out.push(scalar(key, item)?);
            }
            out
        }
        other => vec![flag, scalar(key, other)?],
    })
}

fn explicit(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

pub fn expand(argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(usage(format!("config {} must hold a JSON object", path.display())));
    };
    let mut injected = Vec::new();
    for (key, value) in &map {
        if key == "config" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if explicit(&argv, &flag) {
            continue;
        }
        injected.extend(tokens(key, value)?.into_iter().map(OsString::from));
    }
    let at = insertion_point(&argv);
    let mut out = argv[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn splices_after_subcommand_and_respects_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"max_lag": 2, "alpha": 5, "scale": true, "tau_cv": false, "group": ["a.csv", "b.csv"]}"#).unwrap();
        let argv = os(&["vpc", "--config", cfg.to_str().unwrap(), "train", "--alpha", "1", "--out", "m.json"]);
        let out: Vec<String> = expand(argv).unwrap().iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(
            out[4..],
            ["--group", "a.csv", "--group", "b.csv", "--max-lag", "2", "--scale", "--alpha", "1", "--out", "m.json"]
        );
    }

    #[test]
    fn segments_actions_keep_both_names() {
        let argv = os(&["vpc", "--threads", "2", "segments", "detect", "--out", "x"]);
        assert_eq!(insertion_point(&argv), 5);
        assert_eq!(insertion_point(&os(&["vpc", "train"])), 2);
    }

    #[test]
    fn bad_config_is_usage_error() {
        let argv = os(&["vpc", "--config", "/nonexistent/c.json", "train"]);
        assert!(expand(argv).unwrap_err().downcast_ref::<UsageError>().is_some());
    }
}
