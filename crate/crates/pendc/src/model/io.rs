//! Instance file serialization, canonical hashing, and CSV import.
//!
//! The on-disk format is a JSON document with top-level keys `name`, `d`,
//! `objective{Q,c}`, `region{ineq{A,b}, eq{E,e}, bounds{l,u}}`,
//! `scenarios{S,I,pieces}`, `risk{alpha}`. Matrices are dense row-major
//! nested arrays. A missing `Q` means zero and a missing `eq`/`ineq` block
//! means no such constraints. Bounds additionally accept the string tokens
//! `"inf"` and `"-inf"`, which the validator then rejects with a field path.

use super::{
    ConstraintPiece, FeasibleRegion, ModelError, Objective, ProblemInstance, ScenarioSet,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// A scalar that also accepts infinity tokens, which JSON numbers cannot
/// encode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    F(f64),
    S(String),
}

impl Num {
    fn to_f64(&self) -> Result<f64, String> {
        match self {
            Num::F(v) => Ok(*v),
            Num::S(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => other
                    .parse::<f64>()
                    .map_err(|_| format!("not a number: {s:?}")),
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectiveFile {
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<Vec<f64>>>,
    c: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IneqFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EqFile {
    #[serde(rename = "E")]
    e: Vec<Vec<f64>>,
    #[serde(rename = "e")]
    rhs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundsFile {
    l: Vec<Num>,
    u: Vec<Num>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ineq: Option<IneqFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eq: Option<EqFile>,
    bounds: BoundsFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenariosFile {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "I")]
    i: usize,
    pieces: Vec<Vec<ConstraintPiece>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RiskFile {
    alpha: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    name: String,
    d: usize,
    objective: ObjectiveFile,
    region: RegionFile,
    scenarios: ScenariosFile,
    risk: RiskFile,
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ModelError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err(ModelError::Parse(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

fn to_file(instance: &ProblemInstance) -> InstanceFile {
    let region = instance.region();
    let q = &instance.objective().q_matrix;
    InstanceFile {
        name: instance.name().to_string(),
        d: instance.dim(),
        objective: ObjectiveFile {
            q: if q.iter().all(|&v| v == 0.0) {
                None
            } else {
                Some(matrix_to_rows(q))
            },
            c: instance.objective().c.iter().copied().collect(),
        },
        region: RegionFile {
            ineq: region.ineq.as_ref().map(|(a, b)| IneqFile {
                a: matrix_to_rows(a),
                b: b.iter().copied().collect(),
            }),
            eq: region.eq.as_ref().map(|(e, rhs)| EqFile {
                e: matrix_to_rows(e),
                rhs: rhs.iter().copied().collect(),
            }),
            bounds: BoundsFile {
                l: region.lower.iter().map(|&v| Num::F(v)).collect(),
                u: region.upper.iter().map(|&v| Num::F(v)).collect(),
            },
        },
        scenarios: ScenariosFile {
            s: instance.scenario_count(),
            i: instance.scenarios().pieces_per_scenario(),
            pieces: instance.scenarios().pieces.clone(),
        },
        risk: RiskFile {
            alpha: instance.risk().alpha,
        },
    }
}

fn from_file(file: InstanceFile) -> Result<ProblemInstance, ModelError> {
    let d = file.d;
    let q_matrix = match &file.objective.q {
        Some(rows) => rows_to_matrix(rows, "objective.Q")?,
        None => DMatrix::zeros(d, d),
    };
    let objective = Objective {
        q_matrix,
        c: DVector::from_vec(file.objective.c),
    };
    let nums = |v: &[Num], what: &str| -> Result<DVector<f64>, ModelError> {
        v.iter()
            .map(|n| n.to_f64())
            .collect::<Result<Vec<_>, _>>()
            .map(DVector::from_vec)
            .map_err(|e| ModelError::Parse(format!("{what}: {e}")))
    };
    let region = FeasibleRegion {
        ineq: file
            .region
            .ineq
            .map(|i| Ok::<_, ModelError>((rows_to_matrix(&i.a, "region.ineq.A")?, DVector::from_vec(i.b))))
            .transpose()?,
        eq: file
            .region
            .eq
            .map(|e| Ok::<_, ModelError>((rows_to_matrix(&e.e, "region.eq.E")?, DVector::from_vec(e.rhs))))
            .transpose()?,
        lower: nums(&file.region.bounds.l, "region.bounds.l")?,
        upper: nums(&file.region.bounds.u, "region.bounds.u")?,
    };
    if region.dim() != d {
        return Err(ModelError::Parse(format!(
            "region.bounds: expected length {d}"
        )));
    }
    if file.scenarios.pieces.len() != file.scenarios.s {
        return Err(ModelError::Parse(format!(
            "scenarios.pieces: expected {} scenarios, found {}",
            file.scenarios.s,
            file.scenarios.pieces.len()
        )));
    }
    if file
        .scenarios
        .pieces
        .iter()
        .any(|p| p.len() != file.scenarios.i)
    {
        return Err(ModelError::Parse(format!(
            "scenarios.pieces: expected {} pieces per scenario",
            file.scenarios.i
        )));
    }
    let scenarios = ScenarioSet {
        pieces: file.scenarios.pieces,
    };
    ProblemInstance::new(file.name, objective, region, scenarios, file.risk.alpha)
        .map_err(ModelError::Invalid)
}

/// Parses an instance from its JSON text.
pub fn instance_from_json(text: &str) -> Result<ProblemInstance, ModelError> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    from_file(file)
}

/// Serializes an instance to pretty-printed JSON.
pub fn instance_to_json(instance: &ProblemInstance) -> String {
    serde_json::to_string_pretty(&to_file(instance)).expect("instance serializes")
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance, ModelError> {
    let text = std::fs::read_to_string(path)?;
    instance_from_json(&text)
}

pub fn save_instance(instance: &ProblemInstance, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, instance_to_json(instance))?;
    Ok(())
}

/// Alias kept for call sites that read from an already-opened path.
pub fn instance_from_file(path: impl AsRef<Path>) -> Result<ProblemInstance, ModelError> {
    load_instance(path)
}

/// Hex digest of the canonical (compact, fixed key order) serialized form.
pub fn canonical_hash(instance: &ProblemInstance) -> String {
    let canonical = serde_json::to_string(&to_file(instance)).expect("instance serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    hex::encode(hasher.finalize())
}

/// Reads a scenario matrix from CSV: one row per scenario, one column per
/// coefficient. A non-numeric first line is treated as a header.
pub fn import_scenario_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) if rows.is_empty() && ln == 0 => {
                // header line
                let _ = e;
            }
            Err(e) => {
                return Err(ModelError::Parse(format!("csv line {}: {e}", ln + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(ModelError::Parse("csv contains no data rows".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(ModelError::Parse("csv rows have unequal width".into()));
    }
    Ok(rows)
}

/// Builds a mean-variance portfolio instance from a scenario return matrix
/// (rows = scenarios, columns = assets). The objective is
/// `gamma x' Cov x - mean' x`, the region is the simplex intersected with
/// `0 <= x_i <= u_cap`, and each scenario contributes the affine piece
/// `r_target - xi_s' x`.
pub fn portfolio_instance_from_returns(
    name: impl Into<String>,
    returns: &[Vec<f64>],
    gamma: f64,
    r_target: f64,
    u_cap: f64,
    alpha: f64,
) -> Result<ProblemInstance, ModelError> {
    let s = returns.len();
    let d = returns.first().map_or(0, |r| r.len());
    if s == 0 || d == 0 {
        return Err(ModelError::Parse("empty return matrix".into()));
    }
    if returns.iter().any(|r| r.len() != d) {
        return Err(ModelError::Parse("return rows have unequal width".into()));
    }
    let mut mean = vec![0.0; d];
    for row in returns {
        for i in 0..d {
            mean[i] += row[i];
        }
    }
    for v in &mut mean {
        *v /= s as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for row in returns {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    cov /= (s as f64 - 1.0).max(1.0);
    let objective = Objective {
        q_matrix: cov * gamma,
        c: DVector::from_iterator(d, mean.iter().map(|&m| -m)),
    };
    let region = FeasibleRegion {
        ineq: None,
        eq: Some((
            DMatrix::from_element(1, d, 1.0),
            DVector::from_element(1, 1.0),
        )),
        lower: DVector::zeros(d),
        upper: DVector::from_element(d, u_cap),
    };
    let pieces = returns
        .iter()
        .map(|xi| {
            vec![ConstraintPiece::affine(
                xi.iter().map(|&v| -v).collect(),
                r_target,
            )]
        })
        .collect();
    ProblemInstance::new(name, objective, region, ScenarioSet { pieces }, alpha)
        .map_err(ModelError::Invalid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_t1;

    #[test]
    fn round_trip_is_value_identical() {
        let t1 = reference_t1();
        let json = instance_to_json(&t1);
        let back = instance_from_json(&json).unwrap();
        assert_eq!(t1, back);
        assert_eq!(t1.canonical_hash(), back.canonical_hash());
        assert_eq!(json, instance_to_json(&back));
    }

    #[test]
    fn minimal_handwritten_file_parses() {
        let text = r#"{
            "name": "mini",
            "d": 1,
            "objective": { "c": [-1.0] },
            "region": { "bounds": { "l": [0.0], "u": [1.0] } },
            "scenarios": {
                "S": 5, "I": 1,
                "pieces": [
                    [{"quad": [0.0], "lin": [1.0], "offset": -0.1}],
                    [{"quad": [0.0], "lin": [1.0], "offset": -0.2}],
                    [{"quad": [0.0], "lin": [1.0], "offset": -0.3}],
                    [{"quad": [0.0], "lin": [1.0], "offset": -0.9}],
                    [{"quad": [0.0], "lin": [1.0], "offset": -1.0}]
                ]
            },
            "risk": { "alpha": 0.2 }
        }"#;
        let inst = instance_from_json(text).unwrap();
        assert_eq!(inst.dim(), 1);
        assert_eq!(inst.scenario_count(), 5);
        assert_eq!(inst.risk().m, 1);
    }

    #[test]
    fn non_psd_q_is_rejected_with_field_path() {
        let text = r#"{
            "name": "bad", "d": 1,
            "objective": { "Q": [[-0.1]], "c": [0.0] },
            "region": { "bounds": { "l": [0.0], "u": [1.0] } },
            "scenarios": { "S": 1, "I": 1,
                "pieces": [[{"quad": [0.0], "lin": [1.0], "offset": 0.0}]] },
            "risk": { "alpha": 0.5 }
        }"#;
        match instance_from_json(text) {
            Err(ModelError::Invalid(report)) => {
                assert!(report
                    .findings
                    .iter()
                    .any(|f| f.path == "objective.Q" && f.message.contains("PSD")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn infinite_upper_bound_is_rejected_with_coordinate() {
        let text = r#"{
            "name": "bad", "d": 1,
            "objective": { "c": [0.0] },
            "region": { "bounds": { "l": [0.0], "u": ["inf"] } },
            "scenarios": { "S": 1, "I": 1,
                "pieces": [[{"quad": [0.0], "lin": [1.0], "offset": 0.0}]] },
            "risk": { "alpha": 0.5 }
        }"#;
        match instance_from_json(text) {
            Err(ModelError::Invalid(report)) => {
                assert!(report
                    .findings
                    .iter()
                    .any(|f| f.path == "region.bounds[0]" && f.message.contains("finite")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn csv_import_and_portfolio_build() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("returns.csv");
        std::fs::write(&path, "a,b\n0.01,0.02\n0.03,-0.01\n0.00,0.01\n").unwrap();
        let rows = import_scenario_csv(&path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], vec![0.01, 0.02]);
        let inst =
            portfolio_instance_from_returns("pf", &rows, 1.0, 0.0, 1.0, 0.34).unwrap();
        assert_eq!(inst.dim(), 2);
        assert_eq!(inst.scenario_count(), 3);
        assert_eq!(inst.risk().m, 1);
        assert!(inst.region().eq.is_some());
    }
}
