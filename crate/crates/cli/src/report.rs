//! Experiment outcomes and the files written for them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Comparison a declared assertion makes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Greater,
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub statistic: Value,
    pub relation: Relation,
    pub threshold: Value,
    pub pass: bool,
}

impl Assertion {
    pub fn new(name: impl Into<String>, statistic: f64, relation: Relation, threshold: f64) -> Self {
        let pass = match relation {
            Relation::Less => statistic < threshold,
            Relation::AtMost => statistic <= threshold,
            Relation::Greater => statistic > threshold,
        };
        Self {
            name: name.into(),
            statistic: num(statistic),
            relation,
            threshold: num(threshold),
            pass,
        }
    }

    /// A yes/no condition reported as `1 > 0` or `0 > 0`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Relation::Greater, 0.0)
    }

    pub fn describe(&self) -> String {
        let rel = match self.relation {
            Relation::Less => "<",
            Relation::AtMost => "<=",
            Relation::Greater => ">",
        };
        format!("{}: {} {rel} {}", self.name, self.statistic, self.threshold)
    }
}

/// A plot-ready table; the first columns name the intended axes.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Series {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// What an experiment produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Value,
    pub assertions: Vec<Assertion>,
    pub series: Vec<Series>,
    /// Binary artifacts, written as-is.
    pub blobs: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

/// A number as JSON, with non-finite values spelled out.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// A number for CSV cells.
pub fn cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// The report body; it depends only on the config and seed.
pub fn report_json(run: &RunConfig, outcome: &Outcome) -> Result<String> {
    let report = json!({
        "experiment": run.experiment.name,
        "seed": run.seed,
        "params": run.resolved,
        "passed": outcome.passed(),
        "assertions": outcome.assertions,
        "results": outcome.results,
    });
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Writes the report, the series, the blobs and the manifest; returns the
/// paths written.
pub fn write_all(run: &RunConfig, outcome: &Outcome, started: SystemTime) -> Result<Vec<PathBuf>> {
    let dir = &run.output;
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut files = Vec::new();
    let mut write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        files.push(path);
        Ok(())
    };
    write("report.json", report_json(run, outcome)?.as_bytes())?;
    for s in &outcome.series {
        write(&format!("{}.csv", s.name), s.to_csv().as_bytes())?;
    }
    for (name, bytes) in &outcome.blobs {
        write(name, bytes)?;
    }
    let finished = SystemTime::now();
    let names: Vec<String> = files.iter().map(|p| file_name(p)).collect();
    let mut config: BTreeMap<String, String> = run.resolved.clone();
    config.insert("experiment".into(), run.experiment.name.into());
    config.insert("seed".into(), run.seed.to_string());
    config.insert("output".into(), run.output.display().to_string());
    config.insert("threads".into(), run.threads.to_string());
    let manifest = json!({
        "tool": "mlab",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": run.experiment.name,
        "seed": run.seed,
        "seed_source": run.seed_origin,
        "output": run.output.display().to_string(),
        "threads": rayon::current_num_threads(),
        "config": config,
        "files": names,
        "passed": outcome.passed(),
        "started_unix": unix_seconds(started),
        "finished_unix": unix_seconds(finished),
        "elapsed_seconds": finished.duration_since(started).map(|d| d.as_secs_f64()).unwrap_or(0.0),
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    files.push(path);
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
