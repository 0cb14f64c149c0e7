//! Seeded instance generators for the three benchmark families.

use super::{
    portfolio_instance_from_returns, ConstraintPiece, FeasibleRegion, ModelError, Objective,
    ProblemInstance, ScenarioSet,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceFamily {
    /// Linear objective with joint diagonal-quadratic pieces
    /// `sum_i xi_{ij}^2 x_i^2 - theta` over the box `[0, sqrt(theta)]^d`.
    Norm,
    /// Supplier-to-customer shipping LP with random customer demands.
    Transport,
    /// Mean-variance portfolio with a return-target chance constraint.
    Portfolio,
}

impl std::str::FromStr for InstanceFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "norm" => Ok(InstanceFamily::Norm),
            "transport" => Ok(InstanceFamily::Transport),
            "portfolio" => Ok(InstanceFamily::Portfolio),
            other => Err(format!("unknown family: {other}")),
        }
    }
}

/// Parameters shared across families; each family reads the fields it needs.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyParams {
    /// Decision dimension (norm) or number of assets (portfolio).
    pub d: usize,
    /// Constraint rows per scenario (norm family).
    pub mcons: usize,
    /// Quadratic constraint level (norm) and supplier capacity scale
    /// (transport).
    pub theta: f64,
    /// Supplier count (transport).
    pub suppliers: usize,
    /// Customer count (transport).
    pub customers: usize,
    pub scenarios: usize,
    pub alpha: f64,
    /// Risk-aversion weight on the covariance term (portfolio).
    pub gamma: f64,
    /// Return target in the scenario pieces (portfolio).
    pub r_target: f64,
    /// Per-asset weight cap (portfolio).
    pub u_cap: f64,
    /// Lognormal demand location and scale (transport).
    pub log_mean: f64,
    pub log_sd: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            d: 20,
            mcons: 20,
            theta: 100.0,
            suppliers: 2,
            customers: 2,
            scenarios: 50,
            alpha: 0.05,
            gamma: 1.0,
            r_target: 0.005,
            u_cap: 1.0,
            log_mean: 0.0,
            log_sd: 0.25,
        }
    }
}

/// Builds a seeded instance of the requested family. Deterministic: the same
/// `(family, params, seed)` triple always produces an identical instance.
pub fn generate_instance(
    family: InstanceFamily,
    params: &FamilyParams,
    seed: u64,
) -> Result<ProblemInstance, ModelError> {
    if params.scenarios == 0 {
        return Err(ModelError::Parse("scenarios must be positive".into()));
    }
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(ModelError::Parse("alpha must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match family {
        InstanceFamily::Norm => norm_instance(params, seed, &mut rng),
        InstanceFamily::Transport => transport_instance(params, seed, &mut rng),
        InstanceFamily::Portfolio => portfolio_instance(params, seed, &mut rng),
    }
}

/// Gaussian coefficient draws for the norm family, `scenarios x mcons x d`.
/// Within a row `j` the entries share mean `j/d`, unit variance, and pairwise
/// correlation 0.5, realized through a common row factor; rows are
/// independent.
pub(crate) fn norm_family_samples(
    d: usize,
    mcons: usize,
    scenarios: usize,
    rng: &mut ChaCha20Rng,
) -> Vec<Vec<Vec<f64>>> {
    let w = 0.5_f64.sqrt();
    (0..scenarios)
        .map(|_| {
            (0..mcons)
                .map(|j| {
                    let mean = (j + 1) as f64 / d as f64;
                    let shared: f64 = rng.sample(StandardNormal);
                    (0..d)
                        .map(|_| {
                            let own: f64 = rng.sample(StandardNormal);
                            mean + w * (own + shared)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn norm_instance(
    params: &FamilyParams,
    seed: u64,
    rng: &mut ChaCha20Rng,
) -> Result<ProblemInstance, ModelError> {
    let (d, mcons) = (params.d, params.mcons);
    if d == 0 || mcons == 0 || params.theta <= 0.0 {
        return Err(ModelError::Parse(
            "norm family needs d > 0, mcons > 0, theta > 0".into(),
        ));
    }
    let xi = norm_family_samples(d, mcons, params.scenarios, rng);
    let pieces = xi
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|row| ConstraintPiece {
                    quad: row.iter().map(|&v| v * v).collect(),
                    lin: vec![0.0; d],
                    offset: -params.theta,
                })
                .collect()
        })
        .collect();
    let bound = params.theta.sqrt();
    ProblemInstance::new(
        format!("norm-d{d}-m{mcons}-s{}-seed{seed}", params.scenarios),
        Objective::linear(vec![-1.0; d]),
        FeasibleRegion::bounds(vec![0.0; d], vec![bound; d]),
        ScenarioSet { pieces },
        params.alpha,
    )
    .map_err(ModelError::Invalid)
}

fn transport_instance(
    params: &FamilyParams,
    seed: u64,
    rng: &mut ChaCha20Rng,
) -> Result<ProblemInstance, ModelError> {
    let (n, mc) = (params.suppliers, params.customers);
    if n == 0 || mc == 0 {
        return Err(ModelError::Parse(
            "transport family needs suppliers > 0 and customers > 0".into(),
        ));
    }
    let d = n * mc;
    let demand = LogNormal::new(params.log_mean, params.log_sd)
        .map_err(|e| ModelError::Parse(format!("bad lognormal parameters: {e}")))?;
    // unit shipping costs, then per-scenario demand vectors
    let costs: Vec<f64> = (0..d).map(|_| 1.0 + rng.gen::<f64>()).collect();
    let mean_demand = (params.log_mean + 0.5 * params.log_sd * params.log_sd).exp();
    // capacity sized so total supply comfortably covers expected total demand
    let capacity = 2.0 * mean_demand * mc as f64 / n as f64;
    let pieces = (0..params.scenarios)
        .map(|_| {
            (0..mc)
                .map(|j| {
                    // xi_j - sum_i x_{ij} <= 0
                    let mut lin = vec![0.0; d];
                    for i in 0..n {
                        lin[i * mc + j] = -1.0;
                    }
                    ConstraintPiece::affine(lin, demand.sample(rng))
                })
                .collect()
        })
        .collect();
    let mut a = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..mc {
            a[(i, i * mc + j)] = 1.0;
        }
    }
    let region = FeasibleRegion {
        ineq: Some((a, DVector::from_element(n, capacity))),
        eq: None,
        lower: DVector::zeros(d),
        upper: DVector::from_element(d, capacity),
    };
    ProblemInstance::new(
        format!("transport-n{n}-m{mc}-s{}-seed{seed}", params.scenarios),
        Objective::linear(costs),
        region,
        ScenarioSet { pieces },
        params.alpha,
    )
    .map_err(ModelError::Invalid)
}

fn portfolio_instance(
    params: &FamilyParams,
    seed: u64,
    rng: &mut ChaCha20Rng,
) -> Result<ProblemInstance, ModelError> {
    let d = params.d;
    if d == 0 || params.gamma < 0.0 || params.u_cap <= 0.0 {
        return Err(ModelError::Parse(
            "portfolio family needs d > 0, gamma >= 0, u_cap > 0".into(),
        ));
    }
    if params.u_cap * (d as f64) < 1.0 {
        return Err(ModelError::Parse(
            "portfolio caps too tight to form a full-budget portfolio".into(),
        ));
    }
    // synthetic one-factor return model: higher-index assets earn more in
    // expectation; half the variance is a market factor shared across assets
    let w = 0.5_f64.sqrt();
    let vol = 0.05;
    let returns: Vec<Vec<f64>> = (0..params.scenarios)
        .map(|_| {
            let market: f64 = rng.sample(StandardNormal);
            (0..d)
                .map(|i| {
                    let own: f64 = rng.sample(StandardNormal);
                    let mean = 0.02 * (i + 1) as f64 / d as f64;
                    mean + vol * w * (own + market)
                })
                .collect()
        })
        .collect();
    portfolio_instance_from_returns(
        format!("portfolio-d{d}-s{}-seed{seed}", params.scenarios),
        &returns,
        params.gamma,
        params.r_target,
        params.u_cap,
        params.alpha,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{instance_to_json, validate_instance};

    #[test]
    fn norm_shapes_and_convexity() {
        let params = FamilyParams {
            d: 20,
            mcons: 20,
            theta: 100.0,
            scenarios: 50,
            alpha: 0.05,
            ..Default::default()
        };
        let inst = generate_instance(InstanceFamily::Norm, &params, 1).unwrap();
        assert_eq!(inst.dim(), 20);
        assert_eq!(inst.scenario_count(), 50);
        assert_eq!(inst.scenarios().pieces_per_scenario(), 20);
        assert!(inst
            .scenarios()
            .pieces
            .iter()
            .flatten()
            .all(|p| p.quad.iter().all(|&q| q >= 0.0)));
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn transport_shapes() {
        let params = FamilyParams {
            suppliers: 2,
            customers: 2,
            scenarios: 4,
            alpha: 0.25,
            ..Default::default()
        };
        let inst = generate_instance(InstanceFamily::Transport, &params, 7).unwrap();
        assert_eq!(inst.dim(), 4);
        assert_eq!(inst.scenario_count(), 4);
        assert_eq!(inst.scenarios().pieces_per_scenario(), 2);
        assert!(inst.scenarios().all_affine());
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn portfolio_shapes() {
        let params = FamilyParams {
            d: 5,
            scenarios: 30,
            alpha: 0.1,
            ..Default::default()
        };
        let inst = generate_instance(InstanceFamily::Portfolio, &params, 3).unwrap();
        assert_eq!(inst.dim(), 5);
        assert_eq!(inst.scenario_count(), 30);
        assert!(inst.region().eq.is_some());
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn same_seed_gives_identical_instances() {
        let params = FamilyParams {
            suppliers: 2,
            customers: 2,
            scenarios: 4,
            alpha: 0.25,
            ..Default::default()
        };
        let a = generate_instance(InstanceFamily::Transport, &params, 7).unwrap();
        let b = generate_instance(InstanceFamily::Transport, &params, 7).unwrap();
        assert_eq!(instance_to_json(&a), instance_to_json(&b));
        let c = generate_instance(InstanceFamily::Transport, &params, 8).unwrap();
        assert_ne!(instance_to_json(&a), instance_to_json(&c));
    }

    #[test]
    fn norm_family_moments() {
        use rand::SeedableRng;
        let (d, mcons, s) = (4, 3, 20_000);
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let xi = norm_family_samples(d, mcons, s, &mut rng);
        for j in 0..mcons {
            let target = (j + 1) as f64 / d as f64;
            for i in 0..d {
                let mean: f64 = xi.iter().map(|sc| sc[j][i]).sum::<f64>() / s as f64;
                let se = 1.0 / (s as f64).sqrt();
                assert!(
                    (mean - target).abs() < 4.0 * se,
                    "mean {mean} vs {target} at (i={i}, j={j})"
                );
            }
            // within-row correlation between the first two coordinates
            let m0: f64 = xi.iter().map(|sc| sc[j][0]).sum::<f64>() / s as f64;
            let m1: f64 = xi.iter().map(|sc| sc[j][1]).sum::<f64>() / s as f64;
            let mut cov = 0.0;
            let mut v0 = 0.0;
            let mut v1 = 0.0;
            for sc in &xi {
                cov += (sc[j][0] - m0) * (sc[j][1] - m1);
                v0 += (sc[j][0] - m0).powi(2);
                v1 += (sc[j][1] - m1).powi(2);
            }
            let corr = cov / (v0.sqrt() * v1.sqrt());
            assert!((corr - 0.5).abs() < 0.03, "corr {corr} at row {j}");
        }
    }
}
