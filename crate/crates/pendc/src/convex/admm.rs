//! Dense operator-splitting QP engine.
//!
//! Solves `min 1/2 x'Px + q'x` over stacked two-sided rows `rl <= Ax <= ru`
//! built from the spec's inequality rows, equality rows, and finite variable
//! bounds. The splitting iteration follows the standard ADMM scheme with
//! over-relaxation, per-row step sizes, adaptive rebalancing of the primal and
//! dual residuals, and an active-set polish step that solves a regularized KKT
//! system once the iteration has localized the active rows. Divergence of the
//! row multipliers yields a primal infeasibility certificate.

use super::{SolveStatus, SubproblemSolution, SubproblemSpec};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const RHO_EQ_BOOST: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const MAX_ITER: usize = 200_000;
const CHECK_INTERVAL: usize = 25;
const RHO_INTERVAL: usize = 100;
const POLISH_INTERVAL: usize = 250;
const STALL_WINDOW: usize = 10_000;
const EPS_INFEAS: f64 = 1e-6;
const POLISH_DELTA: f64 = 1e-9;

/// Row structure of the stacked constraints for a spec.
struct Stacked {
    a: DMatrix<f64>,
    rl: DVector<f64>,
    ru: DVector<f64>,
    n_ineq: usize,
    n_eq: usize,
    /// Variable index for each bound row, in order.
    bound_vars: Vec<usize>,
}

fn stack_rows(spec: &SubproblemSpec) -> Stacked {
    let n = spec.dim();
    let n_ineq = spec.ineq.as_ref().map_or(0, |(a, _)| a.nrows());
    let n_eq = spec.eq.as_ref().map_or(0, |(e, _)| e.nrows());
    let bound_vars: Vec<usize> = (0..n)
        .filter(|&i| spec.lower[i].is_finite() || spec.upper[i].is_finite())
        .collect();
    let m = n_ineq + n_eq + bound_vars.len();
    let mut a = DMatrix::zeros(m, n);
    let mut rl = DVector::from_element(m, f64::NEG_INFINITY);
    let mut ru = DVector::from_element(m, f64::INFINITY);
    if let Some((ai, b)) = &spec.ineq {
        a.view_mut((0, 0), (n_ineq, n)).copy_from(ai);
        ru.rows_mut(0, n_ineq).copy_from(b);
    }
    if let Some((e, rhs)) = &spec.eq {
        a.view_mut((n_ineq, 0), (n_eq, n)).copy_from(e);
        rl.rows_mut(n_ineq, n_eq).copy_from(rhs);
        ru.rows_mut(n_ineq, n_eq).copy_from(rhs);
    }
    for (k, &i) in bound_vars.iter().enumerate() {
        let r = n_ineq + n_eq + k;
        a[(r, i)] = 1.0;
        rl[r] = spec.lower[i];
        ru[r] = spec.upper[i];
    }
    Stacked {
        a,
        rl,
        ru,
        n_ineq,
        n_eq,
        bound_vars,
    }
}

fn matrix_fingerprint(p: &DMatrix<f64>, a: &DMatrix<f64>, rho: &DVector<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    p.nrows().hash(&mut h);
    a.nrows().hash(&mut h);
    a.ncols().hash(&mut h);
    for v in p.iter().chain(a.iter()).chain(rho.iter()) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

struct Factor {
    fingerprint: u64,
    chol: Cholesky<f64, Dyn>,
}

/// Splitting engine with a cached factorization, so repeated solves of specs
/// that differ only in their linear term and bounds skip the Cholesky.
pub struct QpEngine {
    factor: Option<Factor>,
}

impl Default for QpEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl QpEngine {
    pub fn new() -> Self {
        QpEngine { factor: None }
    }

    /// Solves `spec` to KKT residual `tol`, optionally warm-starting from a
    /// previous solution of a spec with the same constraint structure.
    pub fn solve(
        &mut self,
        spec: &SubproblemSpec,
        tol: f64,
        warm: Option<&SubproblemSolution>,
    ) -> SubproblemSolution {
        if spec.composite.is_empty() {
            return self.solve_qp(spec, tol, warm);
        }
        if spec.composite.iter().all(|term| term.is_affine()) {
            return self.solve_epigraph(spec, tol, warm);
        }
        super::subgrad::solve_composite(spec, tol, warm)
    }

    /// Rewrites affine composite terms `w_t [max_i (lin_i' x + off_i)]_+`
    /// through epigraph variables `u_t >= 0`, `u_t >= lin_i' x + off_i` and
    /// solves the resulting QP, reporting the solution in the original
    /// variables.
    fn solve_epigraph(
        &mut self,
        spec: &SubproblemSpec,
        tol: f64,
        warm: Option<&SubproblemSolution>,
    ) -> SubproblemSolution {
        let n = spec.dim();
        let s = spec.composite.len();
        let nt = n + s;
        let mut p = DMatrix::zeros(nt, nt);
        p.view_mut((0, 0), (n, n)).copy_from(&spec.p);
        let mut q = DVector::zeros(nt);
        q.rows_mut(0, n).copy_from(&spec.q);
        for (k, term) in spec.composite.iter().enumerate() {
            q[n + k] = term.weight;
        }
        let extra: usize = spec.composite.iter().map(|t| t.pieces.len()).sum();
        let base = spec.ineq.as_ref().map_or(0, |(a, _)| a.nrows());
        let mut a = DMatrix::zeros(base + extra, nt);
        let mut b = DVector::zeros(base + extra);
        if let Some((ai, bi)) = &spec.ineq {
            a.view_mut((0, 0), (base, n)).copy_from(ai);
            b.rows_mut(0, base).copy_from(bi);
        }
        let mut row = base;
        for (k, term) in spec.composite.iter().enumerate() {
            for piece in &term.pieces {
                for j in 0..n {
                    a[(row, j)] = piece.lin[j];
                }
                a[(row, n + k)] = -1.0;
                b[row] = -piece.offset;
                row += 1;
            }
        }
        let mut lower = DVector::from_element(nt, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(nt, f64::INFINITY);
        lower.rows_mut(0, n).copy_from(&spec.lower);
        upper.rows_mut(0, n).copy_from(&spec.upper);
        for k in 0..s {
            lower[n + k] = 0.0;
        }
        let lifted = SubproblemSpec {
            p,
            q,
            constant: spec.constant,
            ineq: Some((a, b)),
            eq: spec.eq.clone(),
            lower,
            upper,
            composite: Vec::new(),
        };
        let warm_lifted = warm.and_then(|w| {
            if w.x.len() != n {
                return None;
            }
            let mut x = DVector::zeros(nt);
            x.rows_mut(0, n).copy_from(&w.x);
            for (k, term) in spec.composite.iter().enumerate() {
                x[n + k] = term.max_value(w.x.as_slice()).0.max(0.0);
            }
            Some(SubproblemSolution {
                x,
                objective_value: 0.0,
                dual_ineq: DVector::zeros(0),
                dual_eq: DVector::zeros(0),
                status: SolveStatus::MaxIter,
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                iterations: 0,
            })
        });
        let sol = self.solve_qp(&lifted, tol, warm_lifted.as_ref());
        let x = DVector::from_iterator(n, sol.x.iter().take(n).copied());
        let objective_value = spec.objective_value(&x);
        SubproblemSolution {
            x,
            objective_value,
            dual_ineq: DVector::zeros(0),
            dual_eq: DVector::zeros(0),
            status: sol.status,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            iterations: sol.iterations,
        }
    }

    fn solve_qp(
        &mut self,
        spec: &SubproblemSpec,
        tol: f64,
        warm: Option<&SubproblemSolution>,
    ) -> SubproblemSolution {
        let n = spec.dim();
        let stacked = stack_rows(spec);
        let m = stacked.a.nrows();
        if m == 0 {
            return solve_unconstrained(spec);
        }
        let a = &stacked.a;
        let at = a.transpose();

        let mut rho = DVector::from_element(m, RHO_INIT);
        for r in 0..m {
            if stacked.rl[r] == stacked.ru[r] {
                rho[r] *= RHO_EQ_BOOST;
            }
        }

        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(m);
        if let Some(w) = warm {
            if w.x.len() == n {
                x.copy_from(&w.x);
                if w.dual_ineq.len() == stacked.n_ineq + stacked.bound_vars.len()
                    && w.dual_eq.len() == stacked.n_eq
                {
                    for r in 0..stacked.n_ineq {
                        y[r] = w.dual_ineq[r];
                    }
                    for r in 0..stacked.n_eq {
                        y[stacked.n_ineq + r] = w.dual_eq[r];
                    }
                    for k in 0..stacked.bound_vars.len() {
                        y[stacked.n_ineq + stacked.n_eq + k] = w.dual_ineq[stacked.n_ineq + k];
                    }
                }
            }
        }
        let mut z = clamp_rows(&(a * &x), &stacked.rl, &stacked.ru);

        // Converged warm starts return without factorizing.
        let (rp0, rd0) = residuals(spec, &stacked, &x, &z, &y);
        if rp0.max(rd0) <= tol {
            return build_solution(spec, &stacked, x, y, SolveStatus::Optimal, rp0, rd0, 0);
        }

        let mut chol = self.factorize(spec, a, &at, &rho);

        let mut y_check = y.clone();
        let mut best_polish: Option<(DVector<f64>, DVector<f64>, f64, f64)> = None;
        let mut iter = 0usize;
        let mut status = SolveStatus::MaxIter;
        let mut rp = rp0;
        let mut rd = rd0;
        let coarse = tol.max(1e-6);
        let mut best_res = f64::INFINITY;
        let mut last_improvement = 0usize;

        while iter < MAX_ITER {
            iter += 1;
            // x-update: (P + sigma I + A' diag(rho) A) x~ = sigma x - q + A'(rho z - y)
            let rz: DVector<f64> =
                DVector::from_iterator(m, (0..m).map(|r| rho[r] * z[r] - y[r]));
            let rhs = SIGMA * &x - &spec.q + &at * rz;
            let xt = chol.solve(&rhs);
            let axt = a * &xt;
            x = ALPHA * &xt + (1.0 - ALPHA) * &x;
            let z_hat = ALPHA * &axt + (1.0 - ALPHA) * &z;
            let mut z_new = DVector::zeros(m);
            for r in 0..m {
                z_new[r] = (z_hat[r] + y[r] / rho[r]).clamp(stacked.rl[r], stacked.ru[r]);
                y[r] += rho[r] * (z_hat[r] - z_new[r]);
            }
            z = z_new;

            if iter % CHECK_INTERVAL == 0 {
                let (p_now, d_now) = residuals(spec, &stacked, &x, &z, &y);
                rp = p_now;
                rd = d_now;
                if rp.max(rd) <= tol {
                    status = SolveStatus::Optimal;
                    break;
                }
                // the polish verifies exact KKT before acceptance, so probing
                // it periodically is safe and exits degenerate slow tails
                if rp.max(rd) <= coarse || iter % POLISH_INTERVAL == 0 {
                    for active in [
                        active_from_duals(&stacked, &y),
                        active_from_primal(&stacked, &z, 1e-7),
                    ] {
                        if let Some((px, py, prp, prd)) = polish(spec, &stacked, a, &active) {
                            let good = best_polish
                                .as_ref()
                                .map_or(true, |(_, _, bp, bd)| prp.max(prd) < bp.max(*bd));
                            if good {
                                best_polish = Some((px, py, prp, prd));
                            }
                        }
                    }
                    if let Some((_, _, bp, bd)) = &best_polish {
                        if bp.max(*bd) <= tol {
                            status = SolveStatus::Optimal;
                            break;
                        }
                    }
                }
                // infeasibility certificate from the drift of the multipliers
                let dy = &y - &y_check;
                let dy_norm = dy.amax();
                if dy_norm > 1e-10 && infeasibility_certificate(&stacked, &at, &dy, dy_norm) {
                    status = SolveStatus::Infeasible;
                    break;
                }
                y_check.copy_from(&y);

                // on degenerate problems the residuals flatline far above the
                // tolerance; once they stop moving, more sweeps are wasted and
                // the polished candidate is the best answer available
                let res = rp.max(rd);
                if res < 0.9 * best_res {
                    best_res = res;
                    last_improvement = iter;
                } else if iter - last_improvement >= STALL_WINDOW {
                    break;
                }

                if iter % RHO_INTERVAL == 0 {
                    if let Some(new_rho) =
                        rebalanced_rho(spec, &stacked, &x, &z, &y, &rho)
                    {
                        rho = new_rho;
                        chol = self.factorize(spec, a, &at, &rho);
                    }
                }
            }
        }

        if status == SolveStatus::Infeasible {
            return build_solution(spec, &stacked, x, y, status, rp, rd, iter);
        }
        // Prefer the polished point when it beats the iterate.
        if best_polish.is_none() {
            for active in [
                active_from_duals(&stacked, &y),
                active_from_primal(&stacked, &z, 1e-7),
            ] {
                if let Some(p) = polish(spec, &stacked, a, &active) {
                    let better = best_polish
                        .as_ref()
                        .map_or(true, |(_, _, bp, bd)| p.2.max(p.3) < bp.max(*bd));
                    if better {
                        best_polish = Some(p);
                    }
                }
            }
        }
        if let Some((px, py, prp, prd)) = best_polish {
            if prp.max(prd) < rp.max(rd) {
                let st = if prp.max(prd) <= tol {
                    SolveStatus::Optimal
                } else {
                    status
                };
                return build_solution(spec, &stacked, px, py, st, prp, prd, iter);
            }
        }
        build_solution(spec, &stacked, x, y, status, rp, rd, iter)
    }

    fn factorize(
        &mut self,
        spec: &SubproblemSpec,
        a: &DMatrix<f64>,
        at: &DMatrix<f64>,
        rho: &DVector<f64>,
    ) -> Cholesky<f64, Dyn> {
        let fp = matrix_fingerprint(&spec.p, a, rho);
        if let Some(f) = &self.factor {
            if f.fingerprint == fp {
                return f.chol.clone();
            }
        }
        let n = spec.dim();
        let mut k = spec.p.clone();
        for i in 0..n {
            k[(i, i)] += SIGMA;
        }
        let mut ar = a.clone();
        for r in 0..a.nrows() {
            let w = rho[r];
            for c in 0..a.ncols() {
                ar[(r, c)] *= w;
            }
        }
        k += at * ar;
        let chol = Cholesky::new(k).expect("splitting matrix is positive definite");
        self.factor = Some(Factor {
            fingerprint: fp,
            chol: chol.clone(),
        });
        chol
    }
}

fn solve_unconstrained(spec: &SubproblemSpec) -> SubproblemSolution {
    let n = spec.dim();
    let mut k = spec.p.clone();
    for i in 0..n {
        k[(i, i)] += 1e-12;
    }
    let x = Cholesky::new(k)
        .map(|c| c.solve(&(-&spec.q)))
        .unwrap_or_else(|| DVector::zeros(n));
    let objective_value = spec.quadratic_value(&x);
    let rd = (&spec.p * &x + &spec.q).amax();
    SubproblemSolution {
        x,
        objective_value,
        dual_ineq: DVector::zeros(0),
        dual_eq: DVector::zeros(0),
        status: SolveStatus::Optimal,
        primal_residual: 0.0,
        dual_residual: rd,
        iterations: 0,
    }
}

fn clamp_rows(v: &DVector<f64>, rl: &DVector<f64>, ru: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), (0..v.len()).map(|r| v[r].clamp(rl[r], ru[r])))
}

/// `(primal, dual)` residuals in the max norm.
fn residuals(
    spec: &SubproblemSpec,
    stacked: &Stacked,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> (f64, f64) {
    let ax = &stacked.a * x;
    let rp = (&ax - z).amax().max(violation(&ax, stacked));
    let rd = (&spec.p * x + &spec.q + stacked.a.transpose() * y).amax();
    (rp, rd)
}

fn violation(ax: &DVector<f64>, stacked: &Stacked) -> f64 {
    let mut v = 0.0_f64;
    for r in 0..ax.len() {
        v = v.max(stacked.rl[r] - ax[r]).max(ax[r] - stacked.ru[r]);
    }
    v
}

fn rebalanced_rho(
    spec: &SubproblemSpec,
    stacked: &Stacked,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
    rho: &DVector<f64>,
) -> Option<DVector<f64>> {
    let ax = &stacked.a * x;
    let rp = (&ax - z).amax();
    let rd = (&spec.p * x + &spec.q + stacked.a.transpose() * y).amax();
    let p_scale = ax.amax().max(z.amax()).max(1.0);
    let d_scale = (&spec.p * x)
        .amax()
        .max(spec.q.amax())
        .max((stacked.a.transpose() * y).amax())
        .max(1.0);
    let rp_rel = rp / p_scale;
    let rd_rel = rd / d_scale;
    if rd_rel <= 0.0 || rp_rel <= 0.0 {
        return None;
    }
    let ratio = rp_rel / rd_rel;
    if !(0.1..=10.0).contains(&ratio) {
        let scale = ratio.sqrt().clamp(1e-3, 1e3);
        let mut new_rho = rho.clone();
        for r in 0..new_rho.len() {
            new_rho[r] = (new_rho[r] * scale).clamp(RHO_MIN, RHO_MAX);
        }
        return Some(new_rho);
    }
    None
}

fn infeasibility_certificate(
    stacked: &Stacked,
    at: &DMatrix<f64>,
    dy: &DVector<f64>,
    dy_norm: f64,
) -> bool {
    if (at * dy).amax() > EPS_INFEAS * dy_norm {
        return false;
    }
    let mut support = 0.0;
    for r in 0..dy.len() {
        if dy[r] > 0.0 {
            if !stacked.ru[r].is_finite() {
                return false;
            }
            support += stacked.ru[r] * dy[r];
        } else if dy[r] < 0.0 {
            if !stacked.rl[r].is_finite() {
                return false;
            }
            support += stacked.rl[r] * dy[r];
        }
    }
    support <= -EPS_INFEAS * dy_norm
}

/// Rows marked active by the sign of their multipliers; equality rows are
/// always active. Reliable once the duals have settled.
fn active_from_duals(stacked: &Stacked, y: &DVector<f64>) -> Vec<(usize, f64, i8)> {
    let mut active = Vec::new();
    for r in 0..y.len() {
        if stacked.rl[r] == stacked.ru[r] {
            active.push((r, stacked.rl[r], 0));
        } else if y[r] > 0.0 {
            active.push((r, stacked.ru[r], 1));
        } else if y[r] < 0.0 {
            active.push((r, stacked.rl[r], -1));
        }
    }
    active
}

/// Rows marked active by the projected iterate sitting at a bound. More
/// robust than the dual signs on degenerate problems where the multipliers
/// oscillate.
fn active_from_primal(
    stacked: &Stacked,
    z: &DVector<f64>,
    width: f64,
) -> Vec<(usize, f64, i8)> {
    let mut active = Vec::new();
    for r in 0..z.len() {
        if stacked.rl[r] == stacked.ru[r] {
            active.push((r, stacked.rl[r], 0));
            continue;
        }
        let tol_u = width * (1.0 + stacked.ru[r].abs());
        let tol_l = width * (1.0 + stacked.rl[r].abs());
        if stacked.ru[r].is_finite() && stacked.ru[r] - z[r] <= tol_u {
            active.push((r, stacked.ru[r], 1));
        } else if stacked.rl[r].is_finite() && z[r] - stacked.rl[r] <= tol_l {
            active.push((r, stacked.rl[r], -1));
        }
    }
    active
}

/// Active-set polish: fixes the rows of `active` at their bounds, solves the
/// reduced KKT system with a small regularization and iterative refinement,
/// and reports the refined point with its residuals. Returns `None` when the
/// reduced system misbehaves numerically.
fn polish(
    spec: &SubproblemSpec,
    stacked: &Stacked,
    a: &DMatrix<f64>,
    active: &[(usize, f64, i8)],
) -> Option<(DVector<f64>, DVector<f64>, f64, f64)> {
    let n = spec.dim();
    let m = a.nrows();
    let na = active.len();
    let dim = n + na;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&spec.p);
    for i in 0..n {
        kkt[(i, i)] += POLISH_DELTA;
    }
    for (k, &(r, _, _)) in active.iter().enumerate() {
        for c in 0..n {
            kkt[(n + k, c)] = a[(r, c)];
            kkt[(c, n + k)] = a[(r, c)];
        }
        kkt[(n + k, n + k)] = -POLISH_DELTA;
    }
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        rhs[i] = -spec.q[i];
    }
    for (k, &(_, bound, _)) in active.iter().enumerate() {
        rhs[n + k] = bound;
    }
    let lu = kkt.clone().full_piv_lu();
    let mut sol = lu.solve(&rhs)?;
    // refine against the unregularized system
    for _ in 0..3 {
        let mut resid = rhs.clone();
        let xv = sol.rows(0, n).clone_owned();
        let nv = sol.rows(n, na).clone_owned();
        let px = &spec.p * &xv;
        for i in 0..n {
            resid[i] -= px[i];
            for (k, &(r, _, _)) in active.iter().enumerate() {
                resid[i] -= a[(r, i)] * nv[k];
            }
        }
        for (k, &(r, _, _)) in active.iter().enumerate() {
            for c in 0..n {
                resid[n + k] -= a[(r, c)] * xv[c];
            }
        }
        let d = lu.solve(&resid)?;
        sol += d;
    }
    let px = sol.rows(0, n).clone_owned();
    let mut py = DVector::zeros(m);
    for (k, &(r, _, side)) in active.iter().enumerate() {
        let v = sol[n + k];
        py[r] = match side {
            1 => v.max(0.0),
            -1 => v.min(0.0),
            _ => v,
        };
    }
    let apx = a * &px;
    let rp = violation(&apx, stacked);
    let rd = (&spec.p * &px + &spec.q + a.transpose() * &py).amax();
    if px.iter().chain(py.iter()).any(|v| !v.is_finite()) || !rp.is_finite() || !rd.is_finite() {
        return None;
    }
    Some((px, py, rp, rd))
}

fn build_solution(
    spec: &SubproblemSpec,
    stacked: &Stacked,
    x: DVector<f64>,
    y: DVector<f64>,
    status: SolveStatus,
    rp: f64,
    rd: f64,
    iterations: usize,
) -> SubproblemSolution {
    let nb = stacked.bound_vars.len();
    let mut dual_ineq = DVector::zeros(stacked.n_ineq + nb);
    for r in 0..stacked.n_ineq {
        dual_ineq[r] = y[r];
    }
    for k in 0..nb {
        dual_ineq[stacked.n_ineq + k] = y[stacked.n_ineq + stacked.n_eq + k];
    }
    let mut dual_eq = DVector::zeros(stacked.n_eq);
    for r in 0..stacked.n_eq {
        dual_eq[r] = y[stacked.n_ineq + r];
    }
    let objective_value = spec.quadratic_value(&x);
    SubproblemSolution {
        x,
        objective_value,
        dual_ineq,
        dual_eq,
        status,
        primal_residual: rp,
        dual_residual: rd,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warm_start_returns_immediately() {
        // min (x-2)^2, x in [0,1]; optimum x = 1
        let spec = SubproblemSpec::boxed(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -4.0),
            DVector::from_element(1, 0.0),
            DVector::from_element(1, 1.0),
        );
        let mut engine = QpEngine::new();
        let cold = engine.solve(&spec, 1e-8, None);
        assert_eq!(cold.status, SolveStatus::Optimal);
        assert!((cold.x[0] - 1.0).abs() < 1e-7);
        let rewarm = engine.solve(&spec, 1e-8, Some(&cold));
        assert_eq!(rewarm.status, SolveStatus::Optimal);
        assert!(rewarm.iterations <= 2 * cold.iterations.max(1));
    }

    #[test]
    fn equality_constrained_qp() {
        // min x1^2 + x2^2 s.t. x1 + x2 = 1; optimum (0.5, 0.5)
        let spec = SubproblemSpec {
            p: DMatrix::from_diagonal_element(2, 2, 2.0),
            q: DVector::zeros(2),
            constant: 0.0,
            ineq: None,
            eq: Some((
                DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                DVector::from_element(1, 1.0),
            )),
            lower: DVector::from_element(2, f64::NEG_INFINITY),
            upper: DVector::from_element(2, f64::INFINITY),
            composite: Vec::new(),
        };
        let sol = QpEngine::new().solve(&spec, 1e-9, None);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-7);
        assert!((sol.x[1] - 0.5).abs() < 1e-7);
        // stationarity gives the multiplier: 2x + nu*1 = 0 => nu = -1
        assert!((sol.dual_eq[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn affine_composite_matches_breakpoint_oracle() {
        // min -x + 3[x - 0.4]_+ on [0,1]: slopes -1 then 2, kink at 0.4
        let spec = SubproblemSpec {
            p: DMatrix::zeros(1, 1),
            q: DVector::from_element(1, -1.0),
            constant: 0.0,
            ineq: None,
            eq: None,
            lower: DVector::from_element(1, 0.0),
            upper: DVector::from_element(1, 1.0),
            composite: vec![super::super::CompositeTerm {
                weight: 3.0,
                pieces: vec![crate::model::ConstraintPiece {
                    quad: vec![0.0],
                    lin: vec![1.0],
                    offset: -0.4,
                }],
            }],
        };
        let sol = QpEngine::new().solve(&spec, 1e-9, None);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 0.4).abs() < 1e-6);
        assert!((sol.objective_value + 0.4).abs() < 1e-6);
    }
}
