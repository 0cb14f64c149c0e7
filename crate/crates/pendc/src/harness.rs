//! Benchmark harness: plan files, run records, and table assembly.
//!
//! A plan lists (instance, algorithm, schedule, repetitions) entries. Each
//! repetition runs with seed `seed_base + index`, persists one record file
//! atomically, and the results reduce single-threaded into a table. A cell
//! whose repetitions did not all return feasible solutions prints `/`.

use crate::algorithms::{
    cvar_baseline, dca_baseline, enumeration_oracle, pendc_lifted, pendc_primal, AlgoStatus,
    PenaltySchedule, SolveReport,
};
use crate::model::{
    generate_instance, instance_from_file, reference_example1, reference_t1, FamilyParams,
    InstanceFamily, ModelError, ProblemInstance,
};
use crate::rankops::DualPoint;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const ALGORITHMS: [&str; 5] = ["pendc-p", "pendc-l", "dca", "cvar", "oracle"];
const ORACLE_SUBSET_CAP: usize = 200_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("plan error: {0}")]
    Plan(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Text,
    Csv,
    Structured,
}

/// One benchmark entry: an instance source (builtin name, file path, or
/// generated family), an algorithm, optional schedule overrides, and a
/// repetition count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub id: String,
    pub algorithm: String,
    /// Builtin name (`t1`, `example1`) or a path to an instance file.
    #[serde(default)]
    pub instance: Option<String>,
    /// Generator family name; mutually exclusive with `instance`.
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub params: Option<FamilyParams>,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Seed base; falls back to `CCP_PENDC_SEED`, then 0.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sigma0: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub outer_max: Option<usize>,
    #[serde(default)]
    pub inner_max: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPlan {
    pub entries: Vec<PlanEntry>,
    pub output: PathBuf,
    pub format: TableFormat,
}

impl BenchmarkPlan {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let plan: BenchmarkPlan =
            serde_json::from_str(&text).map_err(|e| HarnessError::Plan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        for entry in &self.entries {
            if entry.repetitions == 0 {
                return Err(HarnessError::Plan(format!(
                    "entry {}: repetitions must be at least 1",
                    entry.id
                )));
            }
            if !ALGORITHMS.contains(&entry.algorithm.as_str()) {
                return Err(HarnessError::Plan(format!(
                    "entry {}: unknown algorithm {}",
                    entry.id, entry.algorithm
                )));
            }
            match (&entry.instance, &entry.family) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(HarnessError::Plan(format!(
                        "entry {}: exactly one of instance or family required",
                        entry.id
                    )))
                }
            }
            if let Some(f) = &entry.family {
                f.parse::<InstanceFamily>().map_err(HarnessError::Plan)?;
            }
        }
        Ok(())
    }
}

/// Persisted result of one repetition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub entry_id: String,
    pub algorithm: String,
    pub repetition: usize,
    pub seed: u64,
    pub instance_name: String,
    pub instance_hash: String,
    pub scenario_count: usize,
    pub alpha: f64,
    pub version: String,
    pub timestamp_unix_s: u64,
    pub status: String,
    pub fval: Option<f64>,
    pub empirical_prob: Option<f64>,
    pub penalty_residual: Option<f64>,
    pub inner_iterations: Option<usize>,
    pub wall_time_s: f64,
    pub x: Vec<f64>,
    /// Failure diagnostic when the run did not produce a feasible solution.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn solved(&self) -> bool {
        self.error.is_none()
            && matches!(self.status.as_str(), "feasible" | "feasible_stationary" | "optimal")
    }
}

fn resolve_instance(entry: &PlanEntry, seed: u64) -> Result<ProblemInstance, HarnessError> {
    if let Some(src) = &entry.instance {
        return Ok(builtin_or_file(src)?);
    }
    let family: InstanceFamily = entry
        .family
        .as_ref()
        .expect("validated")
        .parse()
        .map_err(HarnessError::Plan)?;
    let params = entry.params.unwrap_or_default();
    Ok(generate_instance(family, &params, seed)?)
}

/// Resolves `t1`/`example1` to the builtin fixtures, anything else to a file.
pub fn builtin_or_file(src: &str) -> Result<ProblemInstance, ModelError> {
    match src {
        "t1" => Ok(reference_t1()),
        "example1" => Ok(reference_example1()),
        path => instance_from_file(Path::new(path)),
    }
}

fn schedule_for(entry: &PlanEntry, instance: &ProblemInstance) -> PenaltySchedule {
    let mut sched = if entry.algorithm == "pendc-p" {
        PenaltySchedule::primal_default(instance)
    } else {
        PenaltySchedule::default()
    };
    if let Some(v) = entry.sigma0 {
        sched.sigma0 = v;
    }
    if let Some(v) = entry.beta {
        sched.beta = v;
    }
    if let Some(v) = entry.rho {
        sched.rho = v;
    }
    if let Some(v) = entry.outer_max {
        sched.outer_max = v;
    }
    if let Some(v) = entry.inner_max {
        sched.inner_max = v;
    }
    sched
}

/// Default starting point: the region's box midpoint (finite sides) projected
/// through the equality/inequality rows by the solvers themselves.
fn default_start(instance: &ProblemInstance) -> Vec<f64> {
    let region = instance.region();
    (0..instance.dim())
        .map(|i| {
            let (l, u) = (region.lower[i], region.upper[i]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l,
                (false, true) => u,
                _ => 0.0,
            }
        })
        .collect()
}

/// Runs one algorithm on one instance. `Err` carries a diagnostic for the
/// table's `/` marker.
pub fn run_algorithm(
    algorithm: &str,
    instance: &ProblemInstance,
    sched: &PenaltySchedule,
) -> Result<SolveReport, String> {
    match algorithm {
        "pendc-p" => {
            let report = pendc_primal(instance, sched, &default_start(instance));
            feasible_or_err(report)
        }
        "pendc-l" => {
            let z0 = DualPoint {
                z: vec![1.0; instance.scenario_count()],
            };
            let report = pendc_lifted(instance, sched, &z0);
            feasible_or_err(report)
        }
        "cvar" => cvar_baseline(instance).map_err(|e| e.to_string()),
        "dca" => {
            // start from the CVaR point, which is feasible whenever it exists
            let warm = cvar_baseline(instance).map_err(|e| format!("cvar start: {e}"))?;
            dca_baseline(instance, warm.x_best.as_slice(), 200, 1e-9).map_err(|e| e.to_string())
        }
        "oracle" => {
            let started = std::time::Instant::now();
            let (x, fval, _) =
                enumeration_oracle(instance, ORACLE_SUBSET_CAP).map_err(|e| e.to_string())?;
            let empirical_prob =
                crate::rankops::empirical_probability(instance, x.as_slice(), 1e-6);
            Ok(SolveReport {
                fval,
                empirical_prob,
                status: AlgoStatus::Feasible,
                sigma_trace: Vec::new(),
                penalty_residual: 0.0,
                wall_time: started.elapsed(),
                certificates: None,
                instance_hash: instance.canonical_hash(),
                inner_trace: Vec::new(),
                x_best: x,
            })
        }
        other => Err(format!("unknown algorithm {other}")),
    }
}

fn feasible_or_err(report: SolveReport) -> Result<SolveReport, String> {
    if report.status.is_feasible() {
        Ok(report)
    } else {
        Err(format!("terminated {}", report.status.as_str()))
    }
}

fn now_unix_s() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn record_for(
    entry: &PlanEntry,
    repetition: usize,
    seed: u64,
    instance: &ProblemInstance,
    outcome: Result<SolveReport, String>,
    wall_time_s: f64,
) -> RunRecord {
    let base = RunRecord {
        entry_id: entry.id.clone(),
        algorithm: entry.algorithm.clone(),
        repetition,
        seed,
        instance_name: instance.name().to_string(),
        instance_hash: instance.canonical_hash(),
        scenario_count: instance.scenario_count(),
        alpha: instance.risk().alpha,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix_s: now_unix_s(),
        status: "failed".into(),
        fval: None,
        empirical_prob: None,
        penalty_residual: None,
        inner_iterations: None,
        wall_time_s,
        x: Vec::new(),
        error: None,
    };
    match outcome {
        Ok(report) => {
            // re-verify the report invariant before persisting
            let alpha = instance.risk().alpha;
            if report.status.is_feasible() && report.empirical_prob < 1.0 - alpha {
                return RunRecord {
                    error: Some(format!(
                        "feasible status with probability {:.6} below {:.6}",
                        report.empirical_prob,
                        1.0 - alpha
                    )),
                    ..base
                };
            }
            RunRecord {
                status: report.status.as_str().to_string(),
                fval: Some(report.fval),
                empirical_prob: Some(report.empirical_prob),
                penalty_residual: Some(report.penalty_residual),
                inner_iterations: Some(
                    report.sigma_trace.iter().map(|t| t.inner_iterations).sum(),
                ),
                wall_time_s: report.wall_time.as_secs_f64(),
                x: report.x_best.as_slice().to_vec(),
                ..base
            }
        }
        Err(message) => RunRecord {
            error: Some(message),
            ..base
        },
    }
}

/// Writes `record` as JSON under `dir`, atomically via a temp file rename.
fn persist_record(dir: &Path, record: &RunRecord) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let name = format!("{}-rep{}.json", record.entry_id, record.repetition);
    let tmp = dir.join(format!(".{name}.tmp"));
    let final_path = dir.join(name);
    let body = serde_json::to_string_pretty(record).expect("record serializes");
    std::fs::write(&tmp, body)?;
    std::fs::rename(&tmp, &final_path)?;
    Ok(())
}

fn default_seed_base() -> u64 {
    std::env::var("CCP_PENDC_SEED")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn run_entry(entry: &PlanEntry, output: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let seed_base = entry.seed.unwrap_or_else(default_seed_base);
    let mut records = Vec::with_capacity(entry.repetitions);
    for rep in 0..entry.repetitions {
        let seed = seed_base + rep as u64;
        let started = std::time::Instant::now();
        let record = match resolve_instance(entry, seed) {
            Ok(instance) => {
                let sched = schedule_for(entry, &instance);
                let outcome = run_algorithm(&entry.algorithm, &instance, &sched);
                record_for(
                    entry,
                    rep,
                    seed,
                    &instance,
                    outcome,
                    started.elapsed().as_secs_f64(),
                )
            }
            Err(e) => RunRecord {
                entry_id: entry.id.clone(),
                algorithm: entry.algorithm.clone(),
                repetition: rep,
                seed,
                instance_name: String::new(),
                instance_hash: String::new(),
                scenario_count: 0,
                alpha: f64::NAN,
                version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp_unix_s: now_unix_s(),
                status: "failed".into(),
                fval: None,
                empirical_prob: None,
                penalty_residual: None,
                inner_iterations: None,
                wall_time_s: started.elapsed().as_secs_f64(),
                x: Vec::new(),
                error: Some(e.to_string()),
            },
        };
        persist_record(output, &record)?;
        records.push(record);
    }
    Ok(records)
}

/// Executes the plan with at most `jobs` entries in flight and returns all
/// records plus the rendered table. Entry order is preserved in the table
/// regardless of completion order.
pub fn run_benchmark(
    plan: &BenchmarkPlan,
    jobs: usize,
) -> Result<(Vec<RunRecord>, String), HarnessError> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Plan(e.to_string()))?;
    let results: Vec<Result<Vec<RunRecord>, HarnessError>> = pool.install(|| {
        use rayon::prelude::*;
        plan.entries
            .par_iter()
            .map(|entry| run_entry(entry, &plan.output))
            .collect()
    });
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    let table = render_table(plan, &records);
    Ok((records, table))
}

struct Cell {
    entry_id: String,
    instance_name: String,
    scenario_count: usize,
    alpha: f64,
    algorithm: String,
    fval_mean: Option<f64>,
    time_mean_s: f64,
    prob_mean: Option<f64>,
    solved: usize,
    total: usize,
}

fn aggregate(plan: &BenchmarkPlan, records: &[RunRecord]) -> Vec<Cell> {
    plan.entries
        .iter()
        .map(|entry| {
            let reps: Vec<&RunRecord> =
                records.iter().filter(|r| r.entry_id == entry.id).collect();
            let total = reps.len();
            let solved = reps.iter().filter(|r| r.solved()).count();
            let all_solved = total > 0 && solved == total;
            let mean = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Option<f64> {
                if !all_solved {
                    return None;
                }
                let vals: Vec<f64> = reps.iter().filter_map(|r| f(r)).collect();
                (vals.len() == total).then(|| vals.iter().sum::<f64>() / total as f64)
            };
            let first = reps.first();
            Cell {
                entry_id: entry.id.clone(),
                instance_name: first
                    .map(|r| r.instance_name.clone())
                    .unwrap_or_default(),
                scenario_count: first.map(|r| r.scenario_count).unwrap_or(0),
                alpha: first.map(|r| r.alpha).unwrap_or(f64::NAN),
                algorithm: entry.algorithm.clone(),
                fval_mean: mean(&|r| r.fval),
                time_mean_s: reps.iter().map(|r| r.wall_time_s).sum::<f64>()
                    / total.max(1) as f64,
                prob_mean: mean(&|r| r.empirical_prob),
                solved,
                total,
            }
        })
        .collect()
}

/// Renders the plan's results in its configured format. Failed cells print
/// `/` in the value columns.
pub fn render_table(plan: &BenchmarkPlan, records: &[RunRecord]) -> String {
    match plan.format {
        TableFormat::Structured => {
            serde_json::to_string_pretty(records).expect("records serialize")
        }
        TableFormat::Csv => {
            let mut out =
                String::from("family,S,alpha,algorithm,fval_mean,time_mean_s,prob_mean,solved\n");
            for c in aggregate(plan, records) {
                out.push_str(&format!(
                    "{},{},{},{},{},{:.4},{},{}/{}\n",
                    c.instance_name,
                    c.scenario_count,
                    c.alpha,
                    c.algorithm,
                    c.fval_mean
                        .map_or_else(|| "/".into(), |v| format!("{v:.6e}")),
                    c.time_mean_s,
                    c.prob_mean
                        .map_or_else(|| "/".into(), |v| format!("{v:.4}")),
                    c.solved,
                    c.total
                ));
            }
            out
        }
        TableFormat::Text => {
            let cells = aggregate(plan, records);
            let mut out = format!(
                "{:<16} {:<18} {:>5} {:>6} {:<8} {:>14} {:>10} {:>8} {:>7}\n",
                "entry", "instance", "S", "alpha", "alg", "fval", "time(s)", "prob", "solved"
            );
            for c in &cells {
                out.push_str(&format!(
                    "{:<16} {:<18} {:>5} {:>6} {:<8} {:>14} {:>10.4} {:>8} {:>6}/{}\n",
                    c.entry_id,
                    c.instance_name,
                    c.scenario_count,
                    format!("{:.3}", c.alpha),
                    c.algorithm,
                    c.fval_mean
                        .map_or_else(|| "/".into(), |v| format!("{v:.6e}")),
                    c.time_mean_s,
                    c.prob_mean
                        .map_or_else(|| "/".into(), |v| format!("{v:.4}")),
                    c.solved,
                    c.total
                ));
            }
            out
        }
    }
}
