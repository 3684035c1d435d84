//! Cartesian parameter sweeps over a base scenario, run in parallel.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;
use crate::nde_cmd::analyze_scenario;
use crate::output::write_atomic;
use crate::run::run;
use crate::scenario::{load_value, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCommand {
    #[default]
    Simulate,
    Nde,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Scenario path, relative to the sweep file, or a bundled name.
    pub base: String,
    #[serde(default)]
    pub command: SweepCommand,
    /// Windows per NDE run.
    #[serde(default = "default_windows")]
    pub windows: usize,
    pub axes: Vec<Axis>,
}

fn default_windows() -> usize {
    30
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Dotted key such as `controller.rho_tilde`.
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointResult {
    pub index: usize,
    pub assignment: Vec<(String, Value)>,
    pub status: Status,
    pub exit_code: i32,
    pub metrics: Value,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ChecksFailed,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub points: usize,
    pub ok: usize,
    pub checks_failed: usize,
    pub errors: usize,
    pub workers: usize,
}

pub fn load_spec(path: &Path) -> Result<SweepSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let spec: SweepSpec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Input(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| CliError::Input(e.to_string()))?
    };
    if spec.axes.is_empty() || spec.axes.iter().any(|a| a.values.is_empty()) {
        return Err(CliError::Input("every axis needs at least one value".into()));
    }
    if spec.windows < 2 {
        return Err(CliError::Input("windows must be at least 2".into()));
    }
    Ok(spec)
}

/// Sets `path` in a nested object tree, creating intermediate tables.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Input(format!("bad axis path {path:?}")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Input(format!("{path}: {key} is not inside a table")))?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::Input(format!("{path}: parent is not a table")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Row-major Cartesian product; the last axis varies fastest.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<(String, Value)>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.path.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

fn worker_count(requested: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = requested {
        return Ok(n.max(1));
    }
    match std::env::var("HYPERREG_WORKERS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map(|n| n.max(1))
            .map_err(|_| CliError::Input(format!("HYPERREG_WORKERS={s:?} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn evaluate_point(spec: &SweepSpec, base: &Value, index: usize, assignment: Vec<(String, Value)>) -> PointResult {
    let outcome = (|| -> Result<(bool, Value), CliError> {
        let mut doc = base.clone();
        for (path, value) in &assignment {
            set_path(&mut doc, path, value.clone())?;
        }
        let scenario = Scenario::from_value(doc)?;
        match spec.command {
            SweepCommand::Simulate => {
                let out = run(&scenario)?;
                let r = &out.report;
                let metrics = serde_json::json!({
                    "final_abs_y": r.summary.final_abs_y,
                    "sup_abs_y": r.summary.sup_abs_y,
                    "final_norm": r.summary.final_norm,
                    "sup_norm": r.summary.sup_norm,
                    "final_obs_err": r.summary.final_obs_err,
                    "k_i": r.summary.k_i,
                    "epsilon": r.summary.epsilon,
                    "checks": r.checks,
                });
                Ok((r.passed, metrics))
            }
            SweepCommand::Nde => {
                let out = analyze_scenario(&scenario, spec.windows)?;
                let r = &out.report;
                let metrics = serde_json::json!({
                    "k1": r.gains.k1,
                    "k2": r.gains.k2,
                    "tau": r.gains.tau,
                    "tau0": r.stability.tau0,
                    "stable": r.stability.stable,
                    "ratio": r.ratio,
                    "trend": r.trend,
                });
                Ok((true, metrics))
            }
        }
    })();
    match outcome {
        Ok((passed, metrics)) => PointResult {
            index,
            assignment,
            status: if passed { Status::Ok } else { Status::ChecksFailed },
            exit_code: if passed { 0 } else { 1 },
            metrics,
            message: String::new(),
        },
        Err(e) => PointResult {
            index,
            assignment,
            status: Status::Error,
            exit_code: e.exit_code(),
            metrics: Value::Null,
            message: e.to_string(),
        },
    }
}

fn base_source(spec: &SweepSpec, sweep_path: &Path) -> String {
    let rel = sweep_path.parent().unwrap_or(Path::new(".")).join(&spec.base);
    if rel.exists() {
        rel.to_string_lossy().into_owned()
    } else {
        spec.base.clone()
    }
}

/// Runs every point, writing `points/<index>.json` as each finishes, then
/// `sweep.csv` and `aggregate.json`.
pub fn run_sweep(
    sweep_path: &Path,
    out: &Path,
    workers: Option<usize>,
) -> Result<(Aggregate, Vec<PointResult>), CliError> {
    let spec = load_spec(sweep_path)?;
    let base = load_value(&base_source(&spec, sweep_path))?;
    let workers = worker_count(workers)?;
    let points_dir: PathBuf = out.join("points");
    std::fs::create_dir_all(&points_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let points = grid_points(&spec.axes);
    let mut results: Vec<PointResult> = pool.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(i, a)| {
                let r = evaluate_point(&spec, &base, i, a);
                let bytes = serde_json::to_vec_pretty(&r).expect("point results serialize");
                // A failed per-point write is reported but does not abort the sweep.
                if let Err(e) = write_atomic(&points_dir.join(format!("{i:05}.json")), &bytes) {
                    eprintln!("point {i}: {e}");
                }
                r
            })
            .collect()
    });
    results.sort_by_key(|r| r.index);
    write_atomic(&out.join("sweep.csv"), &sweep_csv(&spec, &results)?)?;
    let agg = Aggregate {
        points: results.len(),
        ok: results.iter().filter(|r| r.status == Status::Ok).count(),
        checks_failed: results.iter().filter(|r| r.status == Status::ChecksFailed).count(),
        errors: results.iter().filter(|r| r.status == Status::Error).count(),
        workers,
    };
    let json = serde_json::to_vec_pretty(&serde_json::json!({ "aggregate": agg, "points": results }))
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&out.join("aggregate.json"), &json)?;
    Ok((agg, results))
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn sweep_csv(spec: &SweepSpec, results: &[PointResult]) -> Result<Vec<u8>, CliError> {
    let metric_keys: Vec<String> = results
        .iter()
        .find_map(|r| r.metrics.as_object())
        .map(|m| m.keys().filter(|k| *k != "checks").cloned().collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    let mut header = vec!["index".to_string()];
    header.extend(spec.axes.iter().map(|a| a.path.clone()));
    header.extend(["status".into(), "exit_code".into()]);
    header.extend(metric_keys.iter().cloned());
    header.push("message".into());
    w.write_record(&header).map_err(err)?;
    for r in results {
        let mut rec = vec![r.index.to_string()];
        rec.extend(r.assignment.iter().map(|(_, v)| cell(v)));
        rec.push(cell(&serde_json::to_value(r.status).unwrap_or(Value::Null)));
        rec.push(r.exit_code.to_string());
        rec.extend(
            metric_keys
                .iter()
                .map(|k| r.metrics.get(k).map(cell).unwrap_or_default()),
        );
        rec.push(r.message.clone());
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}
