//! Solver algorithms: the two penalty-based proximal DC methods, DCA and
//! CVaR baselines, the subset-enumeration oracle, and stationarity
//! certificates.

mod baselines;
mod certify;
mod oracle;
mod penalty;

pub use baselines::{cvar_baseline, dca_baseline};
pub use certify::{check_strict_gap, check_strong_stationarity, lift_point, CertificateResult};
pub use oracle::enumeration_oracle;
pub use penalty::{inner_xy_solve, pendc_lifted, pendc_primal};

use crate::convex::{solve_subproblem, CompositeTerm, SolveStatus, SubproblemSpec};
use crate::model::ProblemInstance;
use crate::rankops::{self, DualPoint};
use nalgebra::{DMatrix, DVector};
use std::time::Duration;
use thiserror::Error;

pub const DEFAULT_STRICT_TOL: f64 = 1e-9;

/// Penalty continuation parameters shared by both penalty algorithms.
#[derive(Debug, Clone, Copy)]
pub struct PenaltySchedule {
    pub sigma0: f64,
    pub beta: f64,
    pub rho: f64,
    pub inner_rel_tol: f64,
    pub outer_max: usize,
    pub inner_max: usize,
    /// Inner iteration limits for the first two outer rounds.
    pub warmstart_caps: (usize, usize),
    pub feas_tol: f64,
    pub subproblem_tol: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule {
            sigma0: 5e-3,
            beta: 4.0,
            rho: 1e-4,
            inner_rel_tol: 1e-6,
            outer_max: 30,
            inner_max: 500,
            warmstart_caps: (1, 2),
            feas_tol: 1e-6,
            subproblem_tol: 1e-8,
        }
    }
}

impl PenaltySchedule {
    pub fn new(sigma0: f64, beta: f64, rho: f64) -> Self {
        assert!(sigma0 > 0.0 && beta > 1.0 && rho >= 0.0);
        PenaltySchedule {
            sigma0,
            beta,
            rho,
            ..Default::default()
        }
    }

    /// Primal-space defaults: no proximal term on polyhedral instances.
    pub fn primal_default(instance: &ProblemInstance) -> Self {
        if instance.scenarios().all_affine() {
            PenaltySchedule::new(3e-3, 1.5, 0.0)
        } else {
            PenaltySchedule::new(3e-3, 1.5, 1e-3)
        }
    }

    pub(crate) fn inner_cap(&self, outer_round: usize) -> usize {
        match outer_round {
            0 => self.warmstart_caps.0.min(self.inner_max),
            1 => self.warmstart_caps.1.min(self.inner_max),
            _ => self.inner_max,
        }
    }
}

/// A point of the lifted space: `x` with violation variables `y` and the
/// scenario selector `z`.
#[derive(Debug, Clone)]
pub struct LiftedPoint {
    pub x: DVector<f64>,
    pub y: Vec<f64>,
    pub z: DualPoint,
}

impl LiftedPoint {
    /// Complementarity residual `V(y, z) = sum_s y_s z_s`.
    pub fn v(&self) -> f64 {
        self.y.iter().zip(&self.z.z).map(|(y, z)| y * z).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoStatus {
    FeasibleStationary,
    Feasible,
    Infeasible,
    BudgetExhausted,
}

impl AlgoStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, AlgoStatus::FeasibleStationary | AlgoStatus::Feasible)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoStatus::FeasibleStationary => "feasible_stationary",
            AlgoStatus::Feasible => "feasible",
            AlgoStatus::Infeasible => "infeasible",
            AlgoStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SigmaTraceEntry {
    pub sigma: f64,
    pub inner_iterations: usize,
    pub objective: f64,
}

/// Logged iterates of one outer round, kept so tests can recompute the
/// penalized objective independently. For the lifted algorithm `zs` holds the
/// selector paired with each logged `x`; for the primal algorithm it is
/// empty.
#[derive(Debug, Clone, Default)]
pub struct OuterRound {
    pub sigma: f64,
    pub xs: Vec<DVector<f64>>,
    pub zs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Certificates {
    pub strong: Option<CertificateResult>,
    pub strict_gap: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x_best: DVector<f64>,
    pub fval: f64,
    pub empirical_prob: f64,
    pub status: AlgoStatus,
    pub sigma_trace: Vec<SigmaTraceEntry>,
    /// Final `V(y,z)` for the lifted algorithm, final `[phi(x)]_+` otherwise.
    pub penalty_residual: f64,
    pub wall_time: Duration,
    pub certificates: Option<Certificates>,
    pub instance_hash: String,
    pub inner_trace: Vec<OuterRound>,
}

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("starting point violates the chance constraint (phi = {0:.3e})")]
    InfeasibleStart(f64),
    #[error("convex subproblem infeasible: {0}")]
    SubproblemInfeasible(String),
    #[error("subset budget exceeded: {0}")]
    Budget(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("subproblem engine failed: {0}")]
    Engine(String),
}

/// Base subproblem over the instance's region with objective `f`:
/// `P = 2Q`, `q = c`, region rows and bounds, no composite terms.
pub(crate) fn region_spec(instance: &ProblemInstance) -> SubproblemSpec {
    let region = instance.region();
    SubproblemSpec {
        p: instance.objective().q_matrix.clone() * 2.0,
        q: instance.objective().c.clone(),
        constant: 0.0,
        ineq: region.ineq.clone(),
        eq: region.eq.clone(),
        lower: region.lower.clone(),
        upper: region.upper.clone(),
        composite: Vec::new(),
    }
}

/// Widens `spec` (built over `d` variables) to `d + extra` variables, placing
/// the original blocks in the leading coordinates. New variables are free and
/// absent from all existing rows.
pub(crate) fn widen_spec(spec: &SubproblemSpec, extra: usize) -> SubproblemSpec {
    let n = spec.dim();
    let nt = n + extra;
    let mut p = DMatrix::zeros(nt, nt);
    p.view_mut((0, 0), (n, n)).copy_from(&spec.p);
    let mut q = DVector::zeros(nt);
    q.rows_mut(0, n).copy_from(&spec.q);
    let widen_rows = |rows: &Option<(DMatrix<f64>, DVector<f64>)>| {
        rows.as_ref().map(|(a, b)| {
            let mut aw = DMatrix::zeros(a.nrows(), nt);
            aw.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
            (aw, b.clone())
        })
    };
    let mut lower = DVector::from_element(nt, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(nt, f64::INFINITY);
    lower.rows_mut(0, n).copy_from(&spec.lower);
    upper.rows_mut(0, n).copy_from(&spec.upper);
    SubproblemSpec {
        p,
        q,
        constant: spec.constant,
        ineq: widen_rows(&spec.ineq),
        eq: widen_rows(&spec.eq),
        lower,
        upper,
        composite: Vec::new(),
    }
}

/// Appends inequality rows to a spec.
pub(crate) fn push_rows(spec: &mut SubproblemSpec, rows: Vec<(Vec<f64>, f64)>) {
    if rows.is_empty() {
        return;
    }
    let n = spec.dim();
    let extra = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
    let rhs = DVector::from_fn(rows.len(), |r, _| rows[r].1);
    match &mut spec.ineq {
        Some((a, b)) => {
            let mut stacked = DMatrix::zeros(a.nrows() + rows.len(), n);
            stacked.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
            stacked
                .view_mut((a.nrows(), 0), (rows.len(), n))
                .copy_from(&extra);
            let mut brhs = DVector::zeros(b.len() + rows.len());
            brhs.rows_mut(0, b.len()).copy_from(b);
            brhs.rows_mut(b.len(), rows.len()).copy_from(&rhs);
            *a = stacked;
            *b = brhs;
        }
        None => spec.ineq = Some((extra, rhs)),
    }
}

/// Minimizes `f` over the region subject to `g_s(x) <= 0` for every scenario
/// in `kept`. Affine instances add the piece rows directly; instances with
/// quadratic pieces run the composite fallback with an escalating penalty
/// weight until the constraints hold. Returns the solution and its objective
/// value, or `None` when the constrained program is infeasible (certified for
/// affine instances, penalty-divergent for quadratic ones).
pub(crate) fn solve_scenario_constrained(
    instance: &ProblemInstance,
    kept: &[usize],
    tol: f64,
) -> Option<(DVector<f64>, f64)> {
    let d = instance.dim();
    let pieces = &instance.scenarios().pieces;
    if instance.scenarios().all_affine() {
        let mut spec = region_spec(instance);
        let mut rows = Vec::new();
        for &s in kept {
            for piece in &pieces[s] {
                rows.push((piece.lin.clone(), -piece.offset));
            }
        }
        push_rows(&mut spec, rows);
        let sol = solve_subproblem(&spec, tol, None);
        if sol.status == SolveStatus::Infeasible {
            return None;
        }
        let x = sol.x.rows(0, d).clone_owned();
        let feas_ok = instance.region().contains(x.as_slice(), 1e-6)
            && kept.iter().all(|&s| {
                pieces[s]
                    .iter()
                    .all(|p| p.value(x.as_slice()) <= 1e-6)
            });
        if !feas_ok {
            return None;
        }
        let fval = instance.objective().value(x.as_slice());
        return Some((x, fval));
    }
    // quadratic pieces: escalate the exact-penalty weight
    let base = region_spec(instance);
    let mut mu = 10.0;
    let mut warm = None;
    while mu <= 1e8 {
        let mut spec = base.clone();
        spec.composite = kept
            .iter()
            .map(|&s| CompositeTerm {
                weight: mu,
                pieces: pieces[s].clone(),
            })
            .collect();
        let sol = solve_subproblem(&spec, tol.max(1e-9), warm.as_ref());
        let x = sol.x.rows(0, d).clone_owned();
        let violation = kept
            .iter()
            .map(|&s| {
                pieces[s]
                    .iter()
                    .map(|p| p.value(x.as_slice()))
                    .fold(f64::NEG_INFINITY, f64::max)
                    .max(0.0)
            })
            .fold(0.0, f64::max);
        if violation <= 1e-7 {
            return Some((x.clone(), instance.objective().value(x.as_slice())));
        }
        warm = Some(sol);
        mu *= 10.0;
    }
    None
}

/// `[phi(x)]_+` for the instance's risk level.
pub(crate) fn phi_plus(instance: &ProblemInstance, x: &[f64]) -> f64 {
    let vals = rankops::scenario_values(instance, x);
    rankops::rank_functionals(&vals, instance.risk()).phi.max(0.0)
}
