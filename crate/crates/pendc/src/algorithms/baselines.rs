//! Baseline methods: plain DCA on the chance constraint and the convex CVaR
//! inner approximation.

use super::{
    phi_plus, push_rows, region_spec, solve_scenario_constrained, widen_spec, AlgoStatus,
    AlgorithmError, OuterRound, SolveReport,
};
use crate::convex::{solve_subproblem, QpEngine, SolveStatus, SubproblemSolution};
use crate::model::ProblemInstance;
use crate::rankops::{self, scenario_values, subgradient_g2};
use nalgebra::DVector;
use std::time::Instant;

/// DCA applied to the DC constraint `G1(x) - G2(x) <= 0`. Each step keeps
/// `G1` and linearizes `G2` at the current point, so every iterate stays
/// feasible; the starting point must already satisfy the chance constraint.
pub fn dca_baseline(
    instance: &ProblemInstance,
    x0: &[f64],
    max_iter: usize,
    rel_tol: f64,
) -> Result<SolveReport, AlgorithmError> {
    let start = Instant::now();
    let d = instance.dim();
    assert_eq!(x0.len(), d, "dimension mismatch");
    let phi0 = phi_plus(instance, x0);
    if phi0 > 1e-9 || !instance.region().contains(x0, 1e-8) {
        return Err(AlgorithmError::InfeasibleStart(phi0));
    }
    let mut x = DVector::from_column_slice(x0);
    let mut f_cur = instance.objective().value(x.as_slice());
    let mut engine = QpEngine::new();
    let mut warm: Option<SubproblemSolution> = None;
    let mut round = OuterRound {
        sigma: 0.0,
        ..Default::default()
    };
    round.xs.push(x.clone());
    for _ in 0..max_iter {
        let x_next = if instance.scenarios().all_affine() {
            dca_step_qp(instance, &x, &mut engine, &mut warm)?
        } else {
            dca_step_fallback(instance, &x)?
        };
        let f_next = instance.objective().value(x_next.as_slice());
        round.xs.push(x_next.clone());
        let rel = (f_cur - f_next).abs() / f_next.abs().max(1.0);
        x = x_next;
        f_cur = f_next;
        if rel <= rel_tol {
            break;
        }
    }
    let empirical_prob = rankops::empirical_probability(instance, x.as_slice(), 1e-6);
    Ok(SolveReport {
        fval: f_cur,
        empirical_prob,
        status: AlgoStatus::FeasibleStationary,
        sigma_trace: Vec::new(),
        penalty_residual: phi_plus(instance, x.as_slice()),
        wall_time: start.elapsed(),
        certificates: None,
        instance_hash: instance.canonical_hash(),
        inner_trace: vec![round],
        x_best: x,
    })
}

/// One DCA step for affine pieces: minimize `f(x)` subject to the region and
/// `G1(x) - G2(x_k) - <n, x - x_k> <= 0` via the epigraph of `G1` with
/// variables `(x, eta, u)` and a linking row tying the epigraph value to the
/// linearized budget.
fn dca_step_qp(
    instance: &ProblemInstance,
    x_k: &DVector<f64>,
    engine: &mut QpEngine,
    warm: &mut Option<SubproblemSolution>,
) -> Result<DVector<f64>, AlgorithmError> {
    let d = instance.dim();
    let s = instance.scenario_count();
    let m = instance.risk().m;
    let vals = scenario_values(instance, x_k.as_slice());
    let rf = rankops::rank_functionals(&vals, instance.risk());
    let n = subgradient_g2(instance, x_k.as_slice());
    // budget: G1(x') <= G2(x_k) + <n, x' - x_k>
    let budget_const = rf.g2 - n.dot(x_k);
    let base = region_spec(instance);
    let ie = d;
    let iu = d + 1;
    let nt = d + 1 + s;
    let mut spec = widen_spec(&base, 1 + s);
    for j in 0..s {
        spec.lower[iu + j] = 0.0;
    }
    let mut rows = Vec::new();
    // (m+1) eta + sum u - <n, x> <= budget_const
    let mut r = vec![0.0; nt];
    for (i, ni) in n.iter().enumerate() {
        r[i] = -ni;
    }
    r[ie] = (m + 1) as f64;
    for j in 0..s {
        r[iu + j] = 1.0;
    }
    rows.push((r, budget_const));
    for (si, pieces) in instance.scenarios().pieces.iter().enumerate() {
        for piece in pieces {
            let mut r = vec![0.0; nt];
            r[..d].copy_from_slice(&piece.lin);
            r[ie] = -1.0;
            r[iu + si] = -1.0;
            rows.push((r, -piece.offset));
        }
    }
    push_rows(&mut spec, rows);
    let sol = engine.solve(&spec, 1e-9, warm.as_ref());
    if sol.status == SolveStatus::Infeasible {
        return Err(AlgorithmError::SubproblemInfeasible(
            "DCA linearized constraint".into(),
        ));
    }
    let x = sol.x.rows(0, d).clone_owned();
    *warm = Some(sol);
    Ok(x)
}

/// One DCA step for quadratic pieces. The linearized feasible set keeps the
/// scenarios currently holding with slack, which for a DCA iterate is exactly
/// the complement of the `m` largest values; minimizing `f` over them can only
/// keep the iterate feasible.
fn dca_step_fallback(
    instance: &ProblemInstance,
    x_k: &DVector<f64>,
) -> Result<DVector<f64>, AlgorithmError> {
    let s = instance.scenario_count();
    let m = instance.risk().m;
    let vals = scenario_values(instance, x_k.as_slice());
    let dropped = rankops::top_m_indices(&vals.values, m);
    let kept: Vec<usize> = (0..s).filter(|i| !dropped.contains(i)).collect();
    match solve_scenario_constrained(instance, &kept, 1e-9) {
        Some((x, _)) => Ok(x),
        None => Err(AlgorithmError::SubproblemInfeasible(
            "DCA scenario-constrained step".into(),
        )),
    }
}

/// CVaR inner approximation: replace the chance constraint by the convex
/// sufficient condition `G1(x) <= 0`, i.e. `(m+1) eta + sum_s [g_s - eta]_+
/// <= 0` minimized over `eta`. Affine pieces give one QP; quadratic pieces
/// fall back to the scenario-constrained solve with all scenarios kept (the
/// CVaR set then coincides with full scenario feasibility only when the
/// epigraph is not available, so the affine path is the normative one).
pub fn cvar_baseline(instance: &ProblemInstance) -> Result<SolveReport, AlgorithmError> {
    let start = Instant::now();
    let d = instance.dim();
    let s = instance.scenario_count();
    let m = instance.risk().m;
    let x = if instance.scenarios().all_affine() {
        let base = region_spec(instance);
        let ie = d;
        let iu = d + 1;
        let nt = d + 1 + s;
        let mut spec = widen_spec(&base, 1 + s);
        for j in 0..s {
            spec.lower[iu + j] = 0.0;
        }
        let mut rows = Vec::new();
        let mut r = vec![0.0; nt];
        r[ie] = (m + 1) as f64;
        for j in 0..s {
            r[iu + j] = 1.0;
        }
        rows.push((r, 0.0));
        for (si, pieces) in instance.scenarios().pieces.iter().enumerate() {
            for piece in pieces {
                let mut r = vec![0.0; nt];
                r[..d].copy_from_slice(&piece.lin);
                r[ie] = -1.0;
                r[iu + si] = -1.0;
                rows.push((r, -piece.offset));
            }
        }
        push_rows(&mut spec, rows);
        let sol = solve_subproblem(&spec, 1e-9, None);
        if sol.status == SolveStatus::Infeasible {
            return Err(AlgorithmError::SubproblemInfeasible(
                "CVaR approximation".into(),
            ));
        }
        sol.x.rows(0, d).clone_owned()
    } else {
        let kept: Vec<usize> = (0..s).collect();
        match solve_scenario_constrained(instance, &kept, 1e-9) {
            Some((x, _)) => x,
            None => {
                return Err(AlgorithmError::SubproblemInfeasible(
                    "CVaR approximation".into(),
                ))
            }
        }
    };
    let fval = instance.objective().value(x.as_slice());
    let empirical_prob = rankops::empirical_probability(instance, x.as_slice(), 1e-6);
    Ok(SolveReport {
        fval,
        empirical_prob,
        status: AlgoStatus::Feasible,
        sigma_trace: Vec::new(),
        penalty_residual: phi_plus(instance, x.as_slice()),
        wall_time: start.elapsed(),
        certificates: None,
        instance_hash: instance.canonical_hash(),
        inner_trace: Vec::new(),
        x_best: x,
    })
}
