//! Global reference oracle by exhaustive subset enumeration.

use super::{solve_scenario_constrained, AlgorithmError};
use crate::model::ProblemInstance;
use nalgebra::DVector;
use rayon::prelude::*;

/// Result of one enumerated drop set.
#[derive(Debug, Clone)]
struct Candidate {
    dropped: Vec<usize>,
    x: DVector<f64>,
    fval: f64,
}

fn subset_count(s: usize, m: usize) -> Option<u128> {
    let mut c: u128 = 1;
    for i in 0..m {
        c = c.checked_mul((s - i) as u128)?;
        c /= (i + 1) as u128;
    }
    Some(c)
}

/// All `m`-subsets of `0..s` in lexicographic order.
fn lex_subsets(s: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..m).collect();
    if m == 0 {
        return vec![Vec::new()];
    }
    if m > s {
        return out;
    }
    loop {
        out.push(cur.clone());
        // advance to the next lexicographic subset
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < s - (m - i) {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..m {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Solves the chance constrained program exactly by enumerating every set of
/// `m` dropped scenarios, solving the convex program that enforces the rest,
/// and keeping the best value. Ties within `1e-12` resolve to the
/// lexicographically smallest drop set. Returns the minimizer, its value, and
/// the winning drop set; errs when the subset count exceeds `max_subsets` or
/// every subset is infeasible.
pub fn enumeration_oracle(
    instance: &ProblemInstance,
    max_subsets: usize,
) -> Result<(DVector<f64>, f64, Vec<usize>), AlgorithmError> {
    let s = instance.scenario_count();
    let m = instance.risk().m;
    match subset_count(s, m) {
        Some(c) if c <= max_subsets as u128 => {}
        _ => {
            return Err(AlgorithmError::Budget(format!(
                "C({s},{m}) subsets exceed the limit of {max_subsets}"
            )))
        }
    }
    let subsets = lex_subsets(s, m);
    let best = subsets
        .into_par_iter()
        .filter_map(|dropped| {
            let kept: Vec<usize> = (0..s).filter(|i| !dropped.contains(i)).collect();
            solve_scenario_constrained(instance, &kept, 1e-9)
                .map(|(x, fval)| Candidate { dropped, x, fval })
        })
        .reduce_with(|a, b| {
            if b.fval < a.fval - 1e-12 || (b.fval <= a.fval + 1e-12 && b.dropped < a.dropped) {
                b
            } else {
                a
            }
        });
    match best {
        Some(c) => Ok((c.x, c.fval, c.dropped)),
        None => Err(AlgorithmError::SubproblemInfeasible(
            "every scenario subset is infeasible".into(),
        )),
    }
}
