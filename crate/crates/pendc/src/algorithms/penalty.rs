//! The two penalty-based proximal DC algorithms.
//!
//! Both treat the chance constraint through the exact penalty `[phi(x)]_+`
//! with `phi = G1 - G2` and raise the penalty weight `sigma` geometrically.
//! The primal variant linearizes `G2` and solves an epigraph subproblem per
//! inner step. The lifted variant alternates a convex `(x, y)` solve at fixed
//! selector `z` with a projected selector update, driving the complementarity
//! residual `V(y, z)` to zero.

use super::{
    phi_plus, region_spec, widen_spec, AlgoStatus, OuterRound, PenaltySchedule,
    SigmaTraceEntry, SolveReport,
};
use crate::convex::{
    minimize_subgradient, CompositeTerm, ConvexOracle, Projector, QpEngine,
    SubproblemSolution, SubproblemSpec,
};
use crate::model::ProblemInstance;
use crate::rankops::{
    self, project_onto_c, rank_functionals, scenario_values, subgradient_g2, top_m_indices,
    DualPoint,
};
use nalgebra::DVector;
use std::time::Instant;

/// Exact penalized objective of the primal algorithm,
/// `F(x) = f(x) + sigma [phi(x)]_+`, recomputed from scratch.
pub(crate) fn primal_penalized_objective(
    instance: &ProblemInstance,
    sigma: f64,
    x: &[f64],
) -> f64 {
    instance.objective().value(x) + sigma * phi_plus(instance, x)
}

/// Penalty method in the primal space. Each inner step linearizes `G2` at the
/// current point and minimizes
/// `f(x) + sigma max{G1, G2}(x) - sigma <n, x> + (rho/2) ||x - x_k||^2`
/// over the region, through the epigraph reformulation for affine pieces or
/// a direct subgradient solve otherwise.
pub fn pendc_primal(
    instance: &ProblemInstance,
    sched: &PenaltySchedule,
    x0: &[f64],
) -> SolveReport {
    let start = Instant::now();
    let d = instance.dim();
    assert_eq!(x0.len(), d, "dimension mismatch");
    let base = region_spec(instance);
    let projector = Projector::from_spec(&base);
    let mut x = projector.project(&DVector::from_column_slice(x0));
    let affine = instance.scenarios().all_affine();
    let mut engine = QpEngine::new();
    let mut warm: Option<SubproblemSolution> = None;

    let alpha = instance.risk().alpha;
    let mut sigma_trace = Vec::new();
    let mut inner_trace = Vec::new();
    let mut best_feasible: Option<(DVector<f64>, f64)> = None;
    let mut last_inner_converged = false;

    let mut sigma = sched.sigma0;
    for outer in 0..sched.outer_max {
        let cap = sched.inner_cap(outer);
        let mut round = OuterRound {
            sigma,
            ..Default::default()
        };
        let mut f_cur = primal_penalized_objective(instance, sigma, x.as_slice());
        round.xs.push(x.clone());
        let mut inner_iterations = 0;
        last_inner_converged = false;
        for _ in 0..cap {
            inner_iterations += 1;
            let x_next = if affine {
                primal_inner_qp(instance, &base, sigma, sched, &x, &mut engine, &mut warm)
            } else {
                primal_inner_fallback(instance, sigma, sched, &x, &projector)
            };
            let f_next = primal_penalized_objective(instance, sigma, x_next.as_slice());
            let rel = (f_cur - f_next).abs() / f_next.abs().max(1.0);
            // the majorization step cannot increase the penalized objective
            // when the subproblem is solved exactly, so a non-decrease means
            // the subproblem accuracy floor is reached: keep the incumbent
            if f_next >= f_cur {
                last_inner_converged = rel <= sched.inner_rel_tol;
                break;
            }
            round.xs.push(x_next.clone());
            x = x_next;
            f_cur = f_next;
            if rel <= sched.inner_rel_tol {
                last_inner_converged = true;
                break;
            }
        }
        sigma_trace.push(SigmaTraceEntry {
            sigma,
            inner_iterations,
            objective: f_cur,
        });
        inner_trace.push(round);

        let prob = rankops::empirical_probability(instance, x.as_slice(), sched.feas_tol);
        let residual = phi_plus(instance, x.as_slice());
        if prob >= 1.0 - alpha && residual <= sched.feas_tol {
            let fval = instance.objective().value(x.as_slice());
            if best_feasible.as_ref().map_or(true, |(_, f)| fval < *f) {
                best_feasible = Some((x.clone(), fval));
            }
            if last_inner_converged {
                break;
            }
        }
        sigma *= sched.beta;
    }

    finish_report(
        instance,
        sched,
        start,
        x,
        best_feasible,
        last_inner_converged,
        sigma_trace,
        inner_trace,
        None,
    )
}

/// Epigraph QP of the primal inner step for affine pieces. Variables
/// `(x, t, eta1, eta2, u, v)` with `t` bounding both CVaR forms:
/// `t >= (m+1) eta1 + sum u`, `u_s >= g_s(x) - eta1`, `u >= 0`, and the same
/// with `(m, eta2, v)`, so `t >= max{G1, G2}(x)` at the optimum.
fn primal_inner_qp(
    instance: &ProblemInstance,
    base: &SubproblemSpec,
    sigma: f64,
    sched: &PenaltySchedule,
    x_k: &DVector<f64>,
    engine: &mut QpEngine,
    warm: &mut Option<SubproblemSolution>,
) -> DVector<f64> {
    let d = instance.dim();
    let s = instance.scenario_count();
    let m = instance.risk().m;
    let n = subgradient_g2(instance, x_k.as_slice());
    // layout: x(d), t, eta1, eta2, u(s), v(s)
    let it = d;
    let ie1 = d + 1;
    let ie2 = d + 2;
    let iu = d + 3;
    let iv = d + 3 + s;
    let nt = d + 3 + 2 * s;
    let mut spec = widen_spec(base, 3 + 2 * s);
    for i in 0..d {
        spec.p[(i, i)] += sched.rho;
        spec.q[i] += -sigma * n[i] - sched.rho * x_k[i];
    }
    spec.constant += 0.5 * sched.rho * x_k.norm_squared();
    spec.q[it] = sigma;
    for j in 0..2 * s {
        spec.lower[iu + j] = 0.0;
    }
    let mut rows = Vec::new();
    // t >= (m+1) eta1 + sum u  and  t >= m eta2 + sum v
    let mut r1 = vec![0.0; nt];
    r1[it] = -1.0;
    r1[ie1] = (m + 1) as f64;
    for j in 0..s {
        r1[iu + j] = 1.0;
    }
    rows.push((r1, 0.0));
    let mut r2 = vec![0.0; nt];
    r2[it] = -1.0;
    r2[ie2] = m as f64;
    for j in 0..s {
        r2[iv + j] = 1.0;
    }
    rows.push((r2, 0.0));
    // per piece: h(x) - eta - u_s <= 0
    for (si, pieces) in instance.scenarios().pieces.iter().enumerate() {
        for piece in pieces {
            for (slack, eta) in [(iu + si, ie1), (iv + si, ie2)] {
                let mut r = vec![0.0; nt];
                r[..d].copy_from_slice(&piece.lin);
                r[eta] = -1.0;
                r[slack] = -1.0;
                rows.push((r, -piece.offset));
            }
        }
    }
    super::push_rows(&mut spec, rows);
    let sol = engine.solve(&spec, sched.subproblem_tol, warm.as_ref());
    let x = sol.x.rows(0, d).clone_owned();
    *warm = Some(sol);
    x
}

struct PrimalOracle<'a> {
    instance: &'a ProblemInstance,
    sigma: f64,
    rho: f64,
    n: DVector<f64>,
    x_k: DVector<f64>,
}

impl ConvexOracle for PrimalOracle<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let vals = scenario_values(self.instance, x.as_slice());
        let rf = rank_functionals(&vals, self.instance.risk());
        self.instance.objective().value(x.as_slice()) + self.sigma * rf.g1.max(rf.g2)
            - self.sigma * self.n.dot(x)
            + 0.5 * self.rho * (x - &self.x_k).norm_squared()
    }

    fn value_and_subgrad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let inst = self.instance;
        let vals = scenario_values(inst, x.as_slice());
        let rf = rank_functionals(&vals, inst.risk());
        let m = inst.risk().m;
        let v = inst.objective().value(x.as_slice()) + self.sigma * rf.g1.max(rf.g2)
            - self.sigma * self.n.dot(x)
            + 0.5 * self.rho * (x - &self.x_k).norm_squared();
        // subgradient of max{G1, G2}: the larger branch's top-sum selector
        let k = if rf.phi > 0.0 { m + 1 } else { m };
        let mut grad = inst.objective().gradient(x.as_slice());
        for s in top_m_indices(&vals.values, k) {
            grad +=
                inst.scenarios().pieces[s][vals.argmax_piece[s]].gradient(x.as_slice()) * self.sigma;
        }
        grad -= &self.n * self.sigma;
        grad += (x - &self.x_k) * self.rho;
        (v, grad)
    }
}

fn primal_inner_fallback(
    instance: &ProblemInstance,
    sigma: f64,
    sched: &PenaltySchedule,
    x_k: &DVector<f64>,
    projector: &Projector,
) -> DVector<f64> {
    let oracle = PrimalOracle {
        instance,
        sigma,
        rho: sched.rho,
        n: subgradient_g2(instance, x_k.as_slice()),
        x_k: x_k.clone(),
    };
    let result = minimize_subgradient(&oracle, projector, x_k, sched.subproblem_tol, None);
    result.x
}

/// Convex `(x, y)` solve of the lifted algorithm at fixed selector `z`:
/// `min f(x) + sigma sum_s z_s y_s` over `x` in the region, `y >= 0`,
/// `g_s(x) <= y_s`. Returns `(x, y)` with `y` pinned to `[g_s(x)]_+` (the
/// objective is nondecreasing in `y`, so pinning never increases it); the
/// Danskin subgradient of the value function in `z` is `-sigma * y`.
pub fn inner_xy_solve(
    instance: &ProblemInstance,
    z: &DualPoint,
    sigma: f64,
    warm: Option<&SubproblemSolution>,
) -> (DVector<f64>, Vec<f64>, SubproblemSolution) {
    let mut engine = QpEngine::new();
    inner_xy_solve_with(instance, z, sigma, warm, &mut engine, 1e-9)
}

pub(crate) fn inner_xy_solve_with(
    instance: &ProblemInstance,
    z: &DualPoint,
    sigma: f64,
    warm: Option<&SubproblemSolution>,
    engine: &mut QpEngine,
    tol: f64,
) -> (DVector<f64>, Vec<f64>, SubproblemSolution) {
    assert!(sigma > 0.0);
    let d = instance.dim();
    let s = instance.scenario_count();
    let base = region_spec(instance);
    let sol = if instance.scenarios().all_affine() {
        let mut spec = widen_spec(&base, s);
        for j in 0..s {
            spec.q[d + j] = sigma * z.z[j];
            spec.lower[d + j] = 0.0;
        }
        let mut rows = Vec::new();
        for (si, pieces) in instance.scenarios().pieces.iter().enumerate() {
            for piece in pieces {
                let mut r = vec![0.0; d + s];
                r[..d].copy_from_slice(&piece.lin);
                r[d + si] = -1.0;
                rows.push((r, -piece.offset));
            }
        }
        super::push_rows(&mut spec, rows);
        engine.solve(&spec, tol, warm)
    } else {
        let mut spec = base;
        spec.composite = instance
            .scenarios()
            .pieces
            .iter()
            .enumerate()
            .map(|(si, pieces)| CompositeTerm {
                weight: sigma * z.z[si],
                pieces: pieces.clone(),
            })
            .collect();
        engine.solve(&spec, tol, warm)
    };
    let x = sol.x.rows(0, d).clone_owned();
    let vals = scenario_values(instance, x.as_slice());
    let y: Vec<f64> = vals.values.iter().map(|&g| g.max(0.0)).collect();
    (x, y, sol)
}

/// Penalized lifted objective `F_sigma = f(x) + sigma V(y, z)` with `y`
/// implied by `x`.
pub(crate) fn lifted_penalized_objective(
    instance: &ProblemInstance,
    sigma: f64,
    x: &[f64],
    z: &[f64],
) -> f64 {
    let vals = scenario_values(instance, x);
    let v: f64 = vals
        .values
        .iter()
        .zip(z)
        .map(|(&g, &zs)| g.max(0.0) * zs)
        .sum();
    instance.objective().value(x) + sigma * v
}

/// Penalty method in the lifted space (selector `z` over scenarios).
pub fn pendc_lifted(
    instance: &ProblemInstance,
    sched: &PenaltySchedule,
    z0: &DualPoint,
) -> SolveReport {
    let start = Instant::now();
    let s = instance.scenario_count();
    let m = instance.risk().m;
    let alpha = instance.risk().alpha;
    assert_eq!(z0.z.len(), s, "selector length mismatch");
    let mut z = project_onto_c(&z0.z, m);
    let mut engine = QpEngine::new();
    let mut warm: Option<SubproblemSolution> = None;

    let mut sigma_trace = Vec::new();
    let mut inner_trace = Vec::new();
    let mut best_feasible: Option<(DVector<f64>, f64)> = None;
    let mut last_inner_converged = false;
    let mut x = DVector::zeros(instance.dim());
    let mut y = vec![0.0; s];

    let mut sigma = sched.sigma0;
    for outer in 0..sched.outer_max {
        let cap = sched.inner_cap(outer);
        let mut round = OuterRound {
            sigma,
            ..Default::default()
        };
        let mut f_prev = f64::INFINITY;
        let mut inner_iterations = 0;
        last_inner_converged = false;
        for _ in 0..cap {
            inner_iterations += 1;
            let (x_new, y_new, sol) =
                inner_xy_solve_with(instance, &z, sigma, warm.as_ref(), &mut engine, sched.subproblem_tol);
            // the x-step minimizes at fixed z, so failing to decrease means
            // the subproblem accuracy floor is reached: keep the incumbent
            let f_mid = lifted_penalized_objective(instance, sigma, x_new.as_slice(), &z.z);
            if f_mid > f_prev {
                last_inner_converged =
                    (f_mid - f_prev).abs() / f_mid.abs().max(1.0) <= sched.inner_rel_tol;
                break;
            }
            x = x_new;
            y = y_new;
            warm = Some(sol);
            round.xs.push(x.clone());
            round.zs.push(z.z.clone());

            let z_prev = z.z.clone();
            if sched.rho > 0.0 {
                let target: Vec<f64> = z
                    .z
                    .iter()
                    .zip(&y)
                    .map(|(&zs, &ys)| zs - (sigma / sched.rho) * ys)
                    .collect();
                z = project_onto_c(&target, m);
            } else {
                // vertex solution of min_z <sigma y, z> over C
                let mut zv = vec![1.0; s];
                for i in top_m_indices(&y, m) {
                    zv[i] = 0.0;
                }
                z = DualPoint { z: zv };
            }
            round.xs.push(x.clone());
            round.zs.push(z.z.clone());

            let f_cur = lifted_penalized_objective(instance, sigma, x.as_slice(), &z.z);
            let rel = (f_prev - f_cur).abs() / f_cur.abs().max(1.0);
            let stalled = sched.rho == 0.0 && z.z == z_prev;
            f_prev = f_cur;
            if rel <= sched.inner_rel_tol || stalled {
                last_inner_converged = true;
                break;
            }
        }
        sigma_trace.push(SigmaTraceEntry {
            sigma,
            inner_iterations,
            objective: f_prev,
        });
        inner_trace.push(round);

        let prob = rankops::empirical_probability(instance, x.as_slice(), sched.feas_tol);
        let residual: f64 = y.iter().zip(&z.z).map(|(ys, zs)| ys * zs).sum();
        if prob >= 1.0 - alpha && residual <= sched.feas_tol {
            let fval = instance.objective().value(x.as_slice());
            if best_feasible.as_ref().map_or(true, |(_, f)| fval < *f) {
                best_feasible = Some((x.clone(), fval));
            }
            if last_inner_converged {
                break;
            }
        }
        sigma *= sched.beta;
    }

    let v_final: f64 = y.iter().zip(&z.z).map(|(ys, zs)| ys * zs).sum();
    finish_report(
        instance,
        sched,
        start,
        x,
        best_feasible,
        last_inner_converged,
        sigma_trace,
        inner_trace,
        Some(v_final),
    )
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    instance: &ProblemInstance,
    sched: &PenaltySchedule,
    start: Instant,
    x_final: DVector<f64>,
    best_feasible: Option<(DVector<f64>, f64)>,
    last_inner_converged: bool,
    sigma_trace: Vec<SigmaTraceEntry>,
    inner_trace: Vec<OuterRound>,
    lifted_residual: Option<f64>,
) -> SolveReport {
    let (x_best, status) = match best_feasible {
        Some((xb, _)) => {
            let st = if last_inner_converged {
                AlgoStatus::FeasibleStationary
            } else {
                AlgoStatus::Feasible
            };
            (xb, st)
        }
        None => (x_final, AlgoStatus::BudgetExhausted),
    };
    let fval = instance.objective().value(x_best.as_slice());
    let empirical_prob =
        rankops::empirical_probability(instance, x_best.as_slice(), sched.feas_tol);
    let penalty_residual =
        lifted_residual.unwrap_or_else(|| phi_plus(instance, x_best.as_slice()));
    SolveReport {
        fval,
        empirical_prob,
        status,
        sigma_trace,
        penalty_residual,
        wall_time: start.elapsed(),
        certificates: None,
        instance_hash: instance.canonical_hash(),
        inner_trace,
        x_best,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_t1, ConstraintPiece, FeasibleRegion, Objective, ScenarioSet};

    #[test]
    fn inner_xy_all_ones_t1() {
        let t1 = reference_t1();
        let z = DualPoint { z: vec![1.0; 5] };
        let (x, y, _) = inner_xy_solve(&t1, &z, 10.0, None);
        assert!((x[0] - 0.1).abs() < 1e-6, "x = {}", x[0]);
        for v in &y {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn inner_xy_first_scenario_free_t1() {
        let t1 = reference_t1();
        let z = DualPoint {
            z: vec![0.0, 1.0, 1.0, 1.0, 1.0],
        };
        let (x, y, sol) = inner_xy_solve(&t1, &z, 10.0, None);
        assert!((x[0] - 0.2).abs() < 1e-6, "x = {}", x[0]);
        assert!((y[0] - 0.1).abs() < 1e-6);
        for v in &y[1..] {
            assert!(v.abs() < 1e-6);
        }
        assert!((sol.objective_value + 0.2).abs() < 1e-5);
    }

    #[test]
    fn lifted_t1_reaches_oracle_value() {
        let t1 = reference_t1();
        let sched = PenaltySchedule::new(5e-3, 4.0, 1e-4);
        let report = pendc_lifted(&t1, &sched, &DualPoint { z: vec![1.0; 5] });
        assert!(report.status.is_feasible(), "status {:?}", report.status);
        assert!((report.fval + 0.2).abs() < 1e-4, "fval {}", report.fval);
        assert!(report.penalty_residual <= 1e-8);
        assert!((report.empirical_prob - 0.8).abs() < 1e-12);
    }

    #[test]
    fn lifted_t1_rho_zero_first_z_update() {
        // sigma = 10 directly: the x-solve at z = ones gives x = 0.1 with all
        // y at 0; ties then zero the first scenario and keep four ones
        let t1 = reference_t1();
        let sched = PenaltySchedule {
            sigma0: 10.0,
            beta: 4.0,
            rho: 0.0,
            warmstart_caps: (1, 2),
            ..Default::default()
        };
        let report = pendc_lifted(&t1, &sched, &DualPoint { z: vec![1.0; 5] });
        let first = &report.inner_trace[0];
        assert_eq!(first.zs[0], vec![1.0; 5]);
        let z1 = &first.zs[1];
        assert_eq!(z1.iter().filter(|&&v| v == 0.0).count(), 1);
        assert_eq!(z1[0], 0.0);
    }

    #[test]
    fn primal_t1_from_infeasible_start() {
        let t1 = reference_t1();
        let sched = PenaltySchedule::new(0.003, 1.5, 0.0);
        let report = pendc_primal(&t1, &sched, &[1.0]);
        assert!(report.status.is_feasible(), "status {:?}", report.status);
        assert!((report.fval + 0.2).abs() < 1e-4, "fval {}", report.fval);
        assert!((report.empirical_prob - 0.8).abs() < 1e-12);
    }

    #[test]
    fn primal_m_zero_variant() {
        let pieces = [0.1, 0.2, 0.3, 0.9, 1.0]
            .iter()
            .map(|&b| vec![ConstraintPiece::affine(vec![1.0], -b)])
            .collect();
        let inst = crate::model::ProblemInstance::new(
            "t1-m0",
            Objective::linear(vec![-1.0]),
            FeasibleRegion::bounds(vec![0.0], vec![1.0]),
            ScenarioSet { pieces },
            0.1,
        )
        .unwrap();
        assert_eq!(inst.risk().m, 0);
        let sched = PenaltySchedule::new(0.003, 1.5, 0.0);
        let report = pendc_primal(&inst, &sched, &[1.0]);
        assert!(report.status.is_feasible());
        assert!((report.fval + 0.1).abs() < 1e-4, "fval {}", report.fval);
    }

    #[test]
    fn primal_inner_objective_nonincreasing() {
        let t1 = reference_t1();
        let sched = PenaltySchedule::new(0.003, 1.5, 0.0);
        let report = pendc_primal(&t1, &sched, &[1.0]);
        for round in &report.inner_trace {
            let fs: Vec<f64> = round
                .xs
                .iter()
                .map(|x| primal_penalized_objective(&t1, round.sigma, x.as_slice()))
                .collect();
            for w in fs.windows(2) {
                assert!(w[1] <= w[0] + 1e-8 + sched.subproblem_tol, "{fs:?}");
            }
        }
    }
}
