//! Convex subproblem engines behind a single interface.
//!
//! Two engines live here. An operator-splitting (ADMM) engine handles every
//! linearly constrained quadratic program the outer algorithms emit, with a
//! cached factorization and active-set polishing. A projected-subgradient
//! fallback handles composite objectives `f(x) + sum_s w_s [g_s(x)]_+` whose
//! pieces carry diagonal quadratic terms, where the epigraph reformulation
//! would stop being a QP.

mod admm;
mod subgrad;

pub use admm::QpEngine;
pub use subgrad::{minimize_subgradient, ConvexOracle, FallbackResult, Projector};

use crate::model::ConstraintPiece;
use nalgebra::{DMatrix, DVector};

/// One nonsmooth objective term `weight * [max_i piece_i(x)]_+`.
#[derive(Debug, Clone)]
pub struct CompositeTerm {
    pub weight: f64,
    pub pieces: Vec<ConstraintPiece>,
}

impl CompositeTerm {
    pub fn is_affine(&self) -> bool {
        self.pieces.iter().all(|p| p.is_affine())
    }

    /// `max_i piece_i(x)` and the attaining piece index (smallest on ties).
    pub fn max_value(&self, x: &[f64]) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0;
        for (i, piece) in self.pieces.iter().enumerate() {
            let v = piece.value(x);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        (best, best_i)
    }
}

/// A convex subproblem `min 1/2 x'Px + q'x + constant + sum_t w_t [g_t(x)]_+`
/// subject to `Ax <= b`, `Ex = e`, `l <= x <= u`, where each `g_t` is a max of
/// convex pieces. Bounds may be infinite for auxiliary variables; composite
/// terms are optional.
#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub constant: f64,
    pub ineq: Option<(DMatrix<f64>, DVector<f64>)>,
    pub eq: Option<(DMatrix<f64>, DVector<f64>)>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub composite: Vec<CompositeTerm>,
}

impl SubproblemSpec {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Box-constrained quadratic program without side constraints.
    pub fn boxed(p: DMatrix<f64>, q: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        SubproblemSpec {
            p,
            q,
            constant: 0.0,
            ineq: None,
            eq: None,
            lower,
            upper,
            composite: Vec::new(),
        }
    }

    /// Smooth part of the objective (excludes composite terms).
    pub fn quadratic_value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.p * x)[(0, 0)] + self.q.dot(x) + self.constant
    }

    /// Full objective including composite positive parts.
    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.quadratic_value(x);
        for term in &self.composite {
            v += term.weight * term.max_value(x.as_slice()).0.max(0.0);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    /// A separating certificate of primal infeasibility was found.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub x: DVector<f64>,
    pub objective_value: f64,
    /// Multipliers for the stacked `[ineq; bounds]` rows (sign convention:
    /// positive pushes against the upper limit, negative against the lower).
    pub dual_ineq: DVector<f64>,
    pub dual_eq: DVector<f64>,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

/// Solves a subproblem, routing by structure: plain or affine-composite specs
/// go to the splitting engine (composite terms via epigraph variables),
/// quadratic-piece composites go to the subgradient fallback.
pub fn solve_subproblem(
    spec: &SubproblemSpec,
    tol: f64,
    warm: Option<&SubproblemSolution>,
) -> SubproblemSolution {
    let mut engine = QpEngine::new();
    engine.solve(spec, tol, warm)
}

/// Maximum KKT violation of `sol` for `spec`: primal feasibility, dual
/// feasibility, stationarity, and complementary slackness. Zero at exact
/// optima. Composite terms are not supported here.
pub fn kkt_residual(spec: &SubproblemSpec, sol: &SubproblemSolution) -> f64 {
    debug_assert!(spec.composite.is_empty());
    let x = &sol.x;
    let n = spec.dim();
    let mut stationarity = &spec.p * x + &spec.q;
    let mut worst = 0.0_f64;

    let mut k = 0usize;
    if let Some((a, b)) = &spec.ineq {
        let ax = a * x;
        for r in 0..a.nrows() {
            let y = sol.dual_ineq[k];
            // one-sided row: multiplier must be nonnegative
            worst = worst.max(-y).max(ax[r] - b[r]).max((y * (b[r] - ax[r])).abs());
            for c in 0..n {
                stationarity[c] += a[(r, c)] * y;
            }
            k += 1;
        }
    }
    for i in 0..n {
        let (l, u) = (spec.lower[i], spec.upper[i]);
        if l.is_finite() || u.is_finite() {
            let y = sol.dual_ineq[k];
            if u.is_finite() {
                worst = worst.max(x[i] - u);
            } else {
                worst = worst.max(y.max(0.0));
            }
            if l.is_finite() {
                worst = worst.max(l - x[i]);
            } else {
                worst = worst.max((-y).max(0.0));
            }
            if y > 0.0 && u.is_finite() {
                worst = worst.max((y * (u - x[i])).abs());
            }
            if y < 0.0 && l.is_finite() {
                worst = worst.max((y * (x[i] - l)).abs());
            }
            stationarity[i] += y;
            k += 1;
        }
    }
    if let Some((e, rhs)) = &spec.eq {
        let ex = e * x;
        for r in 0..e.nrows() {
            let y = sol.dual_eq[r];
            worst = worst.max((ex[r] - rhs[r]).abs());
            for c in 0..n {
                stationarity[c] += e[(r, c)] * y;
            }
        }
    }
    worst.max(stationarity.amax())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_spec(p: f64, q: f64, l: f64, u: f64) -> SubproblemSpec {
        SubproblemSpec::boxed(
            DMatrix::from_element(1, 1, p),
            DVector::from_element(1, q),
            DVector::from_element(1, l),
            DVector::from_element(1, u),
        )
    }

    #[test]
    fn quadratic_with_lower_bound() {
        // min x^2 s.t. x >= 1
        let spec = scalar_spec(2.0, 0.0, 1.0, f64::INFINITY);
        let sol = solve_subproblem(&spec, 1e-9, None);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
        assert!((sol.objective_value - 1.0).abs() < 1e-7);
    }

    #[test]
    fn lp_corner() {
        // min -x s.t. 0 <= x <= 1
        let spec = scalar_spec(0.0, -1.0, 0.0, 1.0);
        let sol = solve_subproblem(&spec, 1e-9, None);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn t1_inner_subproblem_all_ones() {
        // min -x + 10*sum y_s, y_s >= x - b_s, y >= 0, x in [0,1]
        // breakpoint oracle: optimum at x = 0.1, objective -0.1.
        let b = [0.1, 0.2, 0.3, 0.9, 1.0];
        let n = 1 + b.len();
        let mut q = DVector::zeros(n);
        q[0] = -1.0;
        for s in 0..b.len() {
            q[1 + s] = 10.0;
        }
        let mut lower = DVector::from_element(n, 0.0);
        let mut upper = DVector::from_element(n, f64::INFINITY);
        lower[0] = 0.0;
        upper[0] = 1.0;
        let mut a = DMatrix::zeros(b.len(), n);
        let mut rhs = DVector::zeros(b.len());
        for s in 0..b.len() {
            a[(s, 0)] = 1.0;
            a[(s, 1 + s)] = -1.0;
            rhs[s] = b[s];
        }
        let spec = SubproblemSpec {
            p: DMatrix::zeros(n, n),
            q,
            constant: 0.0,
            ineq: Some((a, rhs)),
            eq: None,
            lower,
            upper,
            composite: Vec::new(),
        };
        let sol = solve_subproblem(&spec, 1e-9, None);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 0.1).abs() < 1e-6, "x = {}", sol.x[0]);
        assert!((sol.objective_value + 0.1).abs() < 1e-6);
        for s in 0..b.len() {
            assert!(sol.x[1 + s].abs() < 1e-6);
        }
    }

    #[test]
    fn kkt_residual_small_at_optimum_and_detects_perturbation() {
        let spec = scalar_spec(2.0, 0.0, 1.0, f64::INFINITY);
        let mut sol = solve_subproblem(&spec, 1e-10, None);
        assert!(kkt_residual(&spec, &sol) <= 1e-10);

        sol.x[0] += 0.1;
        assert!(kkt_residual(&spec, &sol) >= 0.05);
    }

    #[test]
    fn kkt_residual_flags_negative_inequality_multiplier() {
        // min -x s.t. x <= 1 (as explicit ineq row), x free otherwise
        let spec = SubproblemSpec {
            p: DMatrix::zeros(1, 1),
            q: DVector::from_element(1, -1.0),
            constant: 0.0,
            ineq: Some((
                DMatrix::from_element(1, 1, 1.0),
                DVector::from_element(1, 1.0),
            )),
            eq: None,
            lower: DVector::from_element(1, f64::NEG_INFINITY),
            upper: DVector::from_element(1, f64::INFINITY),
            composite: Vec::new(),
        };
        let mut sol = solve_subproblem(&spec, 1e-9, None);
        assert!(kkt_residual(&spec, &sol) <= 1e-7);
        sol.dual_ineq[0] = -sol.dual_ineq[0];
        assert!(kkt_residual(&spec, &sol) > 0.5);
    }

    #[test]
    fn infeasible_certificate() {
        // x <= -1 conflicts with x >= 0
        let spec = SubproblemSpec {
            p: DMatrix::zeros(1, 1),
            q: DVector::from_element(1, 1.0),
            constant: 0.0,
            ineq: Some((
                DMatrix::from_element(1, 1, 1.0),
                DVector::from_element(1, -1.0),
            )),
            eq: None,
            lower: DVector::from_element(1, 0.0),
            upper: DVector::from_element(1, 1.0),
            composite: Vec::new(),
        };
        let sol = solve_subproblem(&spec, 1e-8, None);
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }
}
