//! Rank-based functionals of scenario values.
//!
//! For a point `x`, each scenario contributes `g_s(x) = max_i h_{s,i}(x)`.
//! With `m = floor(alpha S)`, `G1` sums the `m+1` largest values, `G2` the
//! `m` largest, and `phi = G1 - G2` equals the `(S-m)`-th smallest value.
//! The chance constraint holds at `x` exactly when `phi(x) <= 0`. This module
//! also provides the `G2` subgradient selector, the projection onto the
//! polyhedron `C = {z : 0 <= z <= 1, sum z >= S - m}`, and the empirical
//! satisfaction probability. Ties are always broken by the smallest index.

use crate::model::{ProblemInstance, RiskSpec};
use nalgebra::DVector;

/// Scenario values `g_s(x)` together with the attaining piece index per
/// scenario (smallest index on ties).
#[derive(Debug, Clone)]
pub struct ScenarioValues {
    pub values: Vec<f64>,
    pub argmax_piece: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct RankFunctionals {
    pub g1: f64,
    pub g2: f64,
    pub phi: f64,
}

/// A point of the polyhedron `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub z: Vec<f64>,
}

/// Evaluates every scenario constraint at `x`.
pub fn scenario_values(instance: &ProblemInstance, x: &[f64]) -> ScenarioValues {
    assert_eq!(x.len(), instance.dim(), "dimension mismatch");
    let mut values = Vec::with_capacity(instance.scenario_count());
    let mut argmax_piece = Vec::with_capacity(instance.scenario_count());
    for pieces in &instance.scenarios().pieces {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0;
        for (i, piece) in pieces.iter().enumerate() {
            let v = piece.value(x);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        values.push(best);
        argmax_piece.push(best_i);
    }
    ScenarioValues {
        values,
        argmax_piece,
    }
}

/// Indices of the `m` largest entries of `values`, ties to the smaller index.
/// The returned list is ordered by decreasing value (index ascending within
/// ties).
pub fn top_m_indices(values: &[f64], m: usize) -> Vec<usize> {
    assert!(m <= values.len(), "m out of range");
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("scenario values are not NaN")
            .then(a.cmp(&b))
    });
    idx.truncate(m);
    idx
}

/// Sum of the `m` largest entries; `T_0 = 0`.
pub fn top_m_sum(y: &[f64], m: usize) -> f64 {
    top_m_indices(y, m).iter().map(|&s| y[s]).sum()
}

/// `G1`, `G2`, and `phi`, with `phi` taken from the order statistic directly.
pub fn rank_functionals(values: &ScenarioValues, risk: RiskSpec) -> RankFunctionals {
    let s = values.values.len();
    let m = risk.m;
    assert!(m < s, "risk budget m must be smaller than S");
    let mut sorted = values.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scenario values are not NaN"));
    // phi = (S-m)-th smallest value
    let phi = sorted[s - m - 1];
    let g2: f64 = sorted[s - m..].iter().sum();
    RankFunctionals {
        g1: g2 + phi,
        g2,
        phi,
    }
}

/// One element of the subdifferential of `G2` at `x`: the `m` scenarios with
/// largest value each contribute the gradient of their attaining piece.
pub fn subgradient_g2(instance: &ProblemInstance, x: &[f64]) -> DVector<f64> {
    let vals = scenario_values(instance, x);
    let mut grad = DVector::zeros(instance.dim());
    for s in top_m_indices(&vals.values, instance.risk().m) {
        grad += instance.scenarios().pieces[s][vals.argmax_piece[s]].gradient(x);
    }
    grad
}

/// Euclidean projection onto `C = {0 <= z <= 1, sum z >= S - m}`.
///
/// Clipping to the box either already meets the sum constraint, or the
/// constraint is tight at the optimum and the KKT conditions give
/// `z = clip(v + lambda)` for the multiplier `lambda >= 0` solving
/// `sum clip(v + lambda) = S - m`. That equation is piecewise linear in
/// `lambda` with breakpoints `{-v_s, 1 - v_s}`, so sorting them and walking
/// the segments solves it exactly.
pub fn project_onto_c(v: &[f64], m: usize) -> DualPoint {
    let s = v.len();
    assert!(s >= 1 && m < s, "need 0 <= m < S");
    let target = (s - m) as f64;
    let clipped: Vec<f64> = v.iter().map(|&t| t.clamp(0.0, 1.0)).collect();
    if clipped.iter().sum::<f64>() >= target - 1e-12 {
        return DualPoint { z: clipped };
    }
    let mut breakpoints: Vec<f64> = Vec::with_capacity(2 * s);
    for &t in v {
        breakpoints.push(-t);
        breakpoints.push(1.0 - t);
    }
    breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    let sum_at = |lambda: f64| -> f64 {
        v.iter().map(|&t| (t + lambda).clamp(0.0, 1.0)).sum()
    };
    // locate the segment [b_k, b_{k+1}] whose endpoint sums bracket the target
    let mut lo = 0.0_f64;
    let mut lo_sum = sum_at(0.0);
    for &b in &breakpoints {
        if b <= 0.0 {
            continue;
        }
        let hi_sum = sum_at(b);
        if hi_sum >= target {
            // linear on [lo, b]: slope = number of entries strictly inside (0,1)
            let slope = (hi_sum - lo_sum) / (b - lo);
            let lambda = if slope > 0.0 {
                lo + (target - lo_sum) / slope
            } else {
                b
            };
            return DualPoint {
                z: v.iter().map(|&t| (t + lambda).clamp(0.0, 1.0)).collect(),
            };
        }
        lo = b;
        lo_sum = hi_sum;
    }
    // all entries at 1: z = ones, the largest point of the box
    DualPoint { z: vec![1.0; s] }
}

impl DualPoint {
    /// Membership check used by invariants and debug assertions.
    pub fn in_c(&self, m: usize, tol: f64) -> bool {
        self.z.iter().all(|&z| (-tol..=1.0 + tol).contains(&z))
            && self.z.iter().sum::<f64>() >= (self.z.len() - m) as f64 - tol
    }
}

/// `(1/S) * #{s : g_s(x) <= feas_tol}`.
pub fn empirical_probability(instance: &ProblemInstance, x: &[f64], feas_tol: f64) -> f64 {
    let vals = scenario_values(instance, x);
    let satisfied = vals.values.iter().filter(|&&v| v <= feas_tol).count();
    satisfied as f64 / vals.values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_example1, reference_t1, ConstraintPiece};

    #[test]
    fn t1_values_at_half() {
        let t1 = reference_t1();
        let v = scenario_values(&t1, &[0.5]);
        let expected = [0.4, 0.3, 0.2, -0.4, -0.5];
        for (a, b) in v.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn example1_values_at_zero() {
        let e1 = reference_example1();
        let v = scenario_values(&e1, &[0.0]);
        assert_eq!(v.values, vec![0.0, 0.0]);
        // both pieces attain 0; tie rule picks the first
        assert_eq!(v.argmax_piece, vec![0, 0]);
    }

    #[test]
    fn rank_functionals_t1() {
        let t1 = reference_t1();
        let v = scenario_values(&t1, &[0.5]);
        let rf = rank_functionals(&v, t1.risk());
        assert!((rf.g1 - 0.7).abs() < 1e-12);
        assert!((rf.g2 - 0.4).abs() < 1e-12);
        assert!((rf.phi - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rank_functionals_m_zero() {
        let t1 = reference_t1();
        let v = scenario_values(&t1, &[0.2]);
        let rf = rank_functionals(&v, RiskSpec::new(0.1, 5));
        assert_eq!(rf.g2, 0.0);
        assert!((rf.phi - 0.1).abs() < 1e-12);
    }

    #[test]
    fn top_m_sum_examples() {
        assert_eq!(top_m_sum(&[1.0, 3.0, 2.0], 2), 5.0);
        assert_eq!(top_m_sum(&[-1.0, -2.0], 1), -1.0);
        assert_eq!(top_m_sum(&[4.0, 5.0], 0), 0.0);
        assert_eq!(top_m_sum(&[1.0, 2.0, 3.0], 3), 6.0);
    }

    #[test]
    fn subgradient_t1() {
        let t1 = reference_t1();
        let g = subgradient_g2(&t1, &[0.5]);
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subgradient_tie_picks_smaller_scenario() {
        use crate::model::{FeasibleRegion, Objective, ProblemInstance, ScenarioSet};
        let inst = ProblemInstance::new(
            "dup",
            Objective::linear(vec![-1.0]),
            FeasibleRegion::bounds(vec![0.0], vec![1.0]),
            ScenarioSet {
                pieces: vec![
                    vec![ConstraintPiece::affine(vec![1.0], -0.1)],
                    vec![ConstraintPiece::affine(vec![2.0], -0.1 - 0.5)],
                ],
            },
            0.5,
        )
        .unwrap();
        // at x = 0.5 both scenarios evaluate to 0.4; the tie rule must pick
        // scenario 0, whose slope is 1, not 2
        let g = subgradient_g2(&inst, &[0.5]);
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subgradient_quadratic_piece() {
        use crate::model::{FeasibleRegion, Objective, ProblemInstance, ScenarioSet};
        let inst = ProblemInstance::new(
            "quad",
            Objective::linear(vec![0.0]),
            FeasibleRegion::bounds(vec![-5.0], vec![5.0]),
            ScenarioSet {
                pieces: vec![
                    vec![ConstraintPiece {
                        quad: vec![1.0],
                        lin: vec![0.0],
                        offset: 0.0,
                    }],
                    vec![ConstraintPiece::affine(vec![0.0], -100.0)],
                ],
            },
            0.5,
        )
        .unwrap();
        let g = subgradient_g2(&inst, &[3.0]);
        assert!((g[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn projection_symmetric_case() {
        let p = project_onto_c(&[0.5, 0.5, 0.5], 1);
        for z in &p.z {
            assert!((z - 2.0 / 3.0).abs() < 1e-10);
        }
        assert!(p.in_c(1, 1e-10));
    }

    #[test]
    fn projection_identity_inside_c() {
        let p = project_onto_c(&[1.0, 1.0, 0.5], 1);
        assert_eq!(p.z, vec![1.0, 1.0, 0.5]);
    }

    #[test]
    fn projection_mixed_case() {
        let p = project_onto_c(&[1.2, 0.7, -0.3], 1);
        assert!((p.z[0] - 1.0).abs() < 1e-10);
        assert!((p.z[1] - 1.0).abs() < 1e-10);
        assert!(p.z[2].abs() < 1e-10);
    }

    #[test]
    fn empirical_probability_t1() {
        let t1 = reference_t1();
        assert!((empirical_probability(&t1, &[0.2], 1e-9) - 0.8).abs() < 1e-12);
        assert!((empirical_probability(&t1, &[0.05], 0.0) - 1.0).abs() < 1e-12);
        // g(1.0) = (0.9, 0.8, 0.7, 0.1, 0.0): only the last scenario counts
        assert!((empirical_probability(&t1, &[1.0], 0.0) - 0.2).abs() < 1e-12);
    }
}
