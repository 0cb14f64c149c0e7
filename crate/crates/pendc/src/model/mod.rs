//! Problem instances: objective, feasible region, scenario constraint pieces.
//!
//! An instance describes
//! `min f(x) s.t. x in X, (1/S) * #{s : g_s(x) <= 0} >= 1 - alpha`
//! with `f(x) = x'Qx + c'x`, `X` a bounded polyhedron, and
//! `g_s(x) = max_i h_{s,i}(x)` where each piece `h` is affine plus a
//! diagonal quadratic with nonnegative coefficients.

mod generate;
mod io;

pub use generate::{generate_instance, FamilyParams, InstanceFamily};
pub use io::{
    import_scenario_csv, instance_from_file, instance_from_json, instance_to_json, load_instance,
    portfolio_instance_from_returns, save_instance,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One convex piece `h(x) = sum_i quad_i x_i^2 + lin'x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintPiece {
    /// Diagonal quadratic coefficients, all nonnegative.
    pub quad: Vec<f64>,
    pub lin: Vec<f64>,
    pub offset: f64,
}

impl ConstraintPiece {
    pub fn affine(lin: Vec<f64>, offset: f64) -> Self {
        let quad = vec![0.0; lin.len()];
        ConstraintPiece { quad, lin, offset }
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn is_affine(&self) -> bool {
        self.quad.iter().all(|&q| q == 0.0)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.offset;
        for i in 0..x.len() {
            v += self.quad[i] * x[i] * x[i] + self.lin[i] * x[i];
        }
        v
    }

    /// Gradient `2 diag(quad) x + lin`.
    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| 2.0 * self.quad[i] * x[i] + self.lin[i])
    }
}

/// The scenario constraint data: `S` scenarios, each with exactly `I` pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub pieces: Vec<Vec<ConstraintPiece>>,
}

impl ScenarioSet {
    pub fn scenario_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces_per_scenario(&self) -> usize {
        self.pieces.first().map_or(0, |p| p.len())
    }

    pub fn all_affine(&self) -> bool {
        self.pieces.iter().flatten().all(|p| p.is_affine())
    }
}

/// Bounded polyhedral feasible region `{x : Ax <= b, Ex = e, l <= x <= u}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    pub ineq: Option<(DMatrix<f64>, DVector<f64>)>,
    pub eq: Option<(DMatrix<f64>, DVector<f64>)>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl FeasibleRegion {
    /// Box-only region.
    pub fn bounds(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        FeasibleRegion {
            ineq: None,
            eq: None,
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Pointwise membership check up to `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let xv = DVector::from_column_slice(x);
        for i in 0..x.len() {
            if x[i] < self.lower[i] - tol || x[i] > self.upper[i] + tol {
                return false;
            }
        }
        if let Some((a, b)) = &self.ineq {
            let r = a * &xv - b;
            if r.iter().any(|&v| v > tol) {
                return false;
            }
        }
        if let Some((e, rhs)) = &self.eq {
            let r = e * &xv - rhs;
            if r.iter().any(|&v| v.abs() > tol) {
                return false;
            }
        }
        true
    }
}

/// Convex quadratic objective `f(x) = x'Qx + c'x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub q_matrix: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl Objective {
    pub fn linear(c: Vec<f64>) -> Self {
        let d = c.len();
        Objective {
            q_matrix: DMatrix::zeros(d, d),
            c: DVector::from_vec(c),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        (xv.transpose() * &self.q_matrix * &xv)[(0, 0)] + self.c.dot(&xv)
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let xv = DVector::from_column_slice(x);
        (&self.q_matrix + self.q_matrix.transpose()) * &xv + &self.c
    }
}

/// Violation level and the derived scenario budget `m = floor(alpha * S)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub alpha: f64,
    pub m: usize,
}

impl RiskSpec {
    /// `m` is always recomputed from `alpha` and `S`, never stored separately.
    pub fn new(alpha: f64, scenario_count: usize) -> Self {
        let m = ((alpha * scenario_count as f64) + 1e-9).floor().max(0.0) as usize;
        RiskSpec { alpha, m }
    }
}

/// A validated, immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    name: String,
    objective: Objective,
    region: FeasibleRegion,
    scenarios: ScenarioSet,
    risk: RiskSpec,
}

/// One violated invariant, with the field path it concerns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Outcome of structural and feasibility validation. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.findings.push(Finding {
            path: path.to_string(),
            message: message.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to parse instance file: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance validation failed:\n{0}")]
    Invalid(ValidationReport),
}

impl ProblemInstance {
    /// Builds an instance, checking every structural invariant. The phase-one
    /// interior check is done separately by [`validate_instance`].
    pub fn new(
        name: impl Into<String>,
        objective: Objective,
        region: FeasibleRegion,
        scenarios: ScenarioSet,
        alpha: f64,
    ) -> Result<Self, ValidationReport> {
        let instance = ProblemInstance {
            name: name.into(),
            risk: RiskSpec::new(alpha, scenarios.scenario_count()),
            objective,
            region,
            scenarios,
        };
        let report = instance.structural_report();
        if report.is_empty() {
            Ok(instance)
        } else {
            Err(report)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn region(&self) -> &FeasibleRegion {
        &self.region
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn risk(&self) -> RiskSpec {
        self.risk
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn scenario_count(&self) -> usize {
        self.scenarios.scenario_count()
    }

    /// Hex digest of the canonical serialized form, recorded in solve reports.
    pub fn canonical_hash(&self) -> String {
        io::canonical_hash(self)
    }

    fn structural_report(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let d = self.region.dim();

        // Objective: symmetric PSD Q, consistent dimension.
        let q = &self.objective.q_matrix;
        if q.nrows() != d || q.ncols() != d {
            report.push("objective.Q", format!("expected {d}x{d} matrix"));
        } else {
            let scale = q.iter().fold(1.0_f64, |a, &v| a.max(v.abs()));
            let asym = (q - q.transpose()).iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
            if asym > 1e-10 * scale {
                report.push("objective.Q", "not symmetric");
            } else {
                let shifted = q + DMatrix::identity(d, d) * (1e-10 * scale);
                if shifted.cholesky().is_none() {
                    report.push("objective.Q", "not PSD");
                }
            }
        }
        if self.objective.c.len() != d {
            report.push("objective.c", format!("expected length {d}"));
        }
        if self
            .objective
            .c
            .iter()
            .chain(self.objective.q_matrix.iter())
            .any(|v| !v.is_finite())
        {
            report.push("objective", "non-finite coefficient");
        }

        // Region: finite bounds in the right order, consistent row shapes.
        for i in 0..d {
            let (l, u) = (self.region.lower[i], self.region.upper[i]);
            if !l.is_finite() || !u.is_finite() {
                report.push(
                    &format!("region.bounds[{i}]"),
                    "bound not finite (compactness requires finite bounds)",
                );
            } else if l > u {
                report.push(&format!("region.bounds[{i}]"), "bounds inverted");
            }
        }
        if let Some((a, b)) = &self.region.ineq {
            if a.ncols() != d || a.nrows() != b.len() {
                report.push("region.ineq", "inconsistent dimensions");
            }
            if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                report.push("region.ineq", "non-finite coefficient");
            }
        }
        if let Some((e, rhs)) = &self.region.eq {
            if e.ncols() != d || e.nrows() != rhs.len() {
                report.push("region.eq", "inconsistent dimensions");
            }
            if e.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
                report.push("region.eq", "non-finite coefficient");
            }
        }

        // Scenarios: rectangular, convex pieces, consistent dimension.
        let s_count = self.scenarios.scenario_count();
        if s_count == 0 {
            report.push("scenarios.S", "at least one scenario required");
        }
        let i_count = self.scenarios.pieces_per_scenario();
        if s_count > 0 && i_count == 0 {
            report.push("scenarios.I", "at least one piece per scenario required");
        }
        for (s, pieces) in self.scenarios.pieces.iter().enumerate() {
            if pieces.len() != i_count {
                report.push(
                    &format!("scenarios.pieces[{s}]"),
                    format!("expected {i_count} pieces (rectangular array)"),
                );
            }
            for (i, piece) in pieces.iter().enumerate() {
                let path = format!("scenarios.pieces[{s}][{i}]");
                if piece.quad.len() != d || piece.lin.len() != d {
                    report.push(&path, format!("expected coefficient length {d}"));
                }
                if let Some(j) = piece.quad.iter().position(|&v| v < 0.0) {
                    report.push(&path, format!("quad[{j}] negative (piece not convex)"));
                }
                if piece
                    .quad
                    .iter()
                    .chain(piece.lin.iter())
                    .chain(std::iter::once(&piece.offset))
                    .any(|v| !v.is_finite())
                {
                    report.push(&path, "non-finite coefficient");
                }
            }
        }

        // Risk.
        if !(self.risk.alpha > 0.0 && self.risk.alpha < 1.0) {
            report.push("risk.alpha", "alpha must lie in (0, 1)");
        }
        if s_count > 0 && self.risk.m >= s_count {
            report.push("risk.alpha", format!("budget m={} must be < S={s_count}", self.risk.m));
        }
        report
    }
}

/// Full validation: structural invariants plus a phase-one solve certifying a
/// strictly interior feasible point of the region.
pub fn validate_instance(instance: &ProblemInstance) -> ValidationReport {
    let mut report = instance.structural_report();
    if !report.is_empty() {
        return report;
    }
    match phase_one_margin(instance.region()) {
        Ok(margin) if margin > 1e-8 => {}
        Ok(_) => report.push("region", "region infeasible or has empty interior"),
        Err(msg) => report.push("region", format!("phase-one solve failed: {msg}")),
    }
    report
}

/// Maximizes the margin `t` such that `l + t <= x <= u - t`, `Ax + t <= b`,
/// `Ex = e` is feasible. A positive optimum certifies a nonempty interior
/// (relative to the equality constraints).
pub fn phase_one_margin(region: &FeasibleRegion) -> Result<f64, String> {
    use crate::convex::{solve_subproblem, SolveStatus, SubproblemSpec};

    let d = region.dim();
    let n = d + 1; // variables (x, t)
    let box_span = (0..d)
        .map(|i| region.upper[i] - region.lower[i])
        .fold(f64::INFINITY, f64::min)
        .max(0.0);

    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    for i in 0..d {
        lower[i] = region.lower[i];
        upper[i] = region.upper[i];
    }
    lower[d] = -1.0;
    upper[d] = 0.5 * box_span + 1.0;

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    // x_i + t <= u_i  and  -x_i + t <= -l_i
    for i in 0..d {
        let mut r = vec![0.0; n];
        r[i] = 1.0;
        r[d] = 1.0;
        rows.push((r.clone(), region.upper[i]));
        let mut r = vec![0.0; n];
        r[i] = -1.0;
        r[d] = 1.0;
        rows.push((r, -region.lower[i]));
    }
    if let Some((a, b)) = &region.ineq {
        for k in 0..a.nrows() {
            let mut r = vec![0.0; n];
            for i in 0..d {
                r[i] = a[(k, i)];
            }
            r[d] = 1.0;
            rows.push((r, b[k]));
        }
    }
    let a_mat = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
    let b_vec = DVector::from_fn(rows.len(), |r, _| rows[r].1);

    let eq = region.eq.as_ref().map(|(e, rhs)| {
        let mut em = DMatrix::zeros(e.nrows(), n);
        em.view_mut((0, 0), (e.nrows(), d)).copy_from(e);
        (em, rhs.clone())
    });

    let mut q = DVector::zeros(n);
    q[d] = -1.0; // maximize t
    let spec = SubproblemSpec {
        p: DMatrix::zeros(n, n),
        q,
        constant: 0.0,
        ineq: Some((a_mat, b_vec)),
        eq,
        lower,
        upper,
        composite: Vec::new(),
    };
    let sol = solve_subproblem(&spec, 1e-9, None);
    match sol.status {
        SolveStatus::Optimal | SolveStatus::MaxIter => Ok(sol.x[d]),
        SolveStatus::Infeasible => Ok(f64::NEG_INFINITY),
    }
}

/// The 1-D reference instance used across the test suite: `f(x) = -x` on
/// `[0, 1]` with five affine scenarios `x - b_s` and `alpha = 0.2`.
pub fn reference_t1() -> ProblemInstance {
    let pieces = [0.1, 0.2, 0.3, 0.9, 1.0]
        .iter()
        .map(|&b| vec![ConstraintPiece::affine(vec![1.0], -b)])
        .collect();
    ProblemInstance::new(
        "t1",
        Objective::linear(vec![-1.0]),
        FeasibleRegion::bounds(vec![0.0], vec![1.0]),
        ScenarioSet { pieces },
        0.2,
    )
    .expect("t1 is valid")
}

/// The two-scenario pathology fixture: `g_1 = [x]_+`, `g_2 = [-x]_+` encoded
/// with two affine pieces each, `f(x) = x` on `[-1, 1]`, `m = 1`.
pub fn reference_example1() -> ProblemInstance {
    let pieces = vec![
        vec![
            ConstraintPiece::affine(vec![1.0], 0.0),
            ConstraintPiece::affine(vec![0.0], 0.0),
        ],
        vec![
            ConstraintPiece::affine(vec![-1.0], 0.0),
            ConstraintPiece::affine(vec![0.0], 0.0),
        ],
    ];
    ProblemInstance::new(
        "example1",
        Objective::linear(vec![1.0]),
        FeasibleRegion::bounds(vec![-1.0], vec![1.0]),
        ScenarioSet { pieces },
        0.5,
    )
    .expect("example1 is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t1_has_expected_shape() {
        let t1 = reference_t1();
        assert_eq!(t1.dim(), 1);
        assert_eq!(t1.scenario_count(), 5);
        assert_eq!(t1.risk().m, 1);
        assert!(validate_instance(&t1).is_empty());
    }

    #[test]
    fn inverted_bounds_are_reported() {
        let err = ProblemInstance::new(
            "bad",
            Objective::linear(vec![-1.0]),
            FeasibleRegion::bounds(vec![0.0], vec![-1.0]),
            ScenarioSet {
                pieces: vec![vec![ConstraintPiece::affine(vec![1.0], 0.0)]],
            },
            0.5,
        )
        .unwrap_err();
        assert!(err.findings.iter().any(|f| f.path == "region.bounds[0]"));
    }

    #[test]
    fn non_psd_objective_is_reported() {
        let mut obj = Objective::linear(vec![0.0]);
        obj.q_matrix[(0, 0)] = -0.1;
        let err = ProblemInstance::new(
            "bad",
            obj,
            FeasibleRegion::bounds(vec![0.0], vec![1.0]),
            ScenarioSet {
                pieces: vec![vec![ConstraintPiece::affine(vec![1.0], 0.0)]],
            },
            0.5,
        )
        .unwrap_err();
        assert!(err
            .findings
            .iter()
            .any(|f| f.path == "objective.Q" && f.message.contains("PSD")));
    }

    #[test]
    fn infeasible_region_fails_phase_one() {
        let mut region = FeasibleRegion::bounds(vec![0.0], vec![0.0]);
        region.ineq = Some((
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![-1.0]),
        ));
        let instance = ProblemInstance::new(
            "empty",
            Objective::linear(vec![-1.0]),
            region,
            ScenarioSet {
                pieces: vec![vec![ConstraintPiece::affine(vec![1.0], 0.0)]],
            },
            0.5,
        )
        .unwrap();
        let report = validate_instance(&instance);
        assert!(report.findings.iter().any(|f| f.path == "region"));
    }

    #[test]
    fn negative_quad_coefficient_is_reported() {
        let err = ProblemInstance::new(
            "bad",
            Objective::linear(vec![-1.0]),
            FeasibleRegion::bounds(vec![0.0], vec![1.0]),
            ScenarioSet {
                pieces: vec![vec![ConstraintPiece {
                    quad: vec![-1.0],
                    lin: vec![0.0],
                    offset: 0.0,
                }]],
            },
            0.5,
        )
        .unwrap_err();
        assert!(err.findings.iter().any(|f| f.message.contains("not convex")));
    }
}
