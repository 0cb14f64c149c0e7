//! Command line front end: instance generation, solving, the enumeration
//! oracle, point checking, and benchmark plans.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible or budget
//! outcome, 3 internal failure.

use clap::{Parser, Subcommand};
use pendc::algorithms::{
    check_strict_gap, check_strong_stationarity, enumeration_oracle, lift_point, LiftedPoint,
    SolveReport, DEFAULT_STRICT_TOL,
};
use pendc::harness::{builtin_or_file, run_algorithm, BenchmarkPlan, TableFormat};
use pendc::model::{
    generate_instance, save_instance, validate_instance, FamilyParams, InstanceFamily,
    ProblemInstance,
};
use pendc::rankops::{empirical_probability, DualPoint};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_OUTCOME: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "pendc", version, about = "Scenario chance-constraint solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded benchmark instance file.
    Gen {
        #[arg(long)]
        family: String,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        mcons: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        suppliers: Option<usize>,
        #[arg(long)]
        customers: Option<usize>,
        #[arg(long = "S")]
        scenarios: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        r_target: Option<f64>,
        #[arg(long)]
        u_cap: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an instance with one algorithm and print the report.
    Solve {
        /// Builtin name (t1, example1) or instance file path.
        #[arg(long)]
        instance: String,
        #[arg(long, value_parser = ["pendc-p", "pendc-l", "dca", "cvar"])]
        alg: String,
        #[arg(long)]
        sigma0: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        outer_max: Option<usize>,
        #[arg(long)]
        inner_max: Option<usize>,
        /// Starting point for dca, comma separated.
        #[arg(long, value_delimiter = ',')]
        x0: Option<Vec<f64>>,
        /// Write the report as JSON here in addition to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact global solve by scenario-subset enumeration.
    Oracle {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 200_000)]
        cap: usize,
    },
    /// Validate an instance and certify a candidate point.
    Check {
        #[arg(long)]
        instance: String,
        /// JSON file with {"x": [...]} and optional "y", "z" arrays.
        #[arg(long)]
        point: PathBuf,
    },
    /// Run a benchmark plan file.
    Bench {
        plan: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Deserialize)]
struct PointFile {
    x: Vec<f64>,
    #[serde(default)]
    y: Option<Vec<f64>>,
    #[serde(default)]
    z: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's rendered help/version on stdout with success codes
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn load(instance: &str) -> Result<ProblemInstance, String> {
    builtin_or_file(instance).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Gen {
            family,
            d,
            mcons,
            theta,
            suppliers,
            customers,
            scenarios,
            alpha,
            gamma,
            r_target,
            u_cap,
            seed,
            out,
        } => {
            let family: InstanceFamily = match family.parse() {
                Ok(f) => f,
                Err(e) => return usage(e),
            };
            let mut params = FamilyParams::default();
            set(&mut params.d, d);
            set(&mut params.mcons, mcons);
            set(&mut params.theta, theta);
            set(&mut params.suppliers, suppliers);
            set(&mut params.customers, customers);
            set(&mut params.scenarios, scenarios);
            set(&mut params.alpha, alpha);
            set(&mut params.gamma, gamma);
            set(&mut params.r_target, r_target);
            set(&mut params.u_cap, u_cap);
            let instance = match generate_instance(family, &params, seed) {
                Ok(i) => i,
                Err(e) => return usage(e.to_string()),
            };
            save_instance(&instance, &out).map_err(|e| e.to_string())?;
            println!(
                "wrote {} ({} scenarios, d={}) to {}",
                instance.name(),
                instance.scenario_count(),
                instance.dim(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve {
            instance,
            alg,
            sigma0,
            beta,
            rho,
            outer_max,
            inner_max,
            x0,
            out,
        } => {
            let inst = match load(&instance) {
                Ok(i) => i,
                Err(e) => return usage(e),
            };
            let mut sched = if alg == "pendc-p" {
                pendc::algorithms::PenaltySchedule::primal_default(&inst)
            } else {
                pendc::algorithms::PenaltySchedule::default()
            };
            set(&mut sched.sigma0, sigma0);
            set(&mut sched.beta, beta);
            set(&mut sched.rho, rho);
            set(&mut sched.outer_max, outer_max);
            set(&mut sched.inner_max, inner_max);
            let outcome = match (alg.as_str(), &x0) {
                ("dca", Some(x0)) => {
                    pendc::algorithms::dca_baseline(&inst, x0, 200, 1e-9).map_err(|e| e.to_string())
                }
                ("pendc-p", Some(x0)) => {
                    Ok(pendc::algorithms::pendc_primal(&inst, &sched, x0))
                }
                _ => run_algorithm(&alg, &inst, &sched),
            };
            match outcome {
                Ok(report) => {
                    print_report(&inst, &alg, &report);
                    if let Some(path) = out {
                        let body = report_json(&inst, &alg, &report);
                        std::fs::write(path, body).map_err(|e| e.to_string())?;
                    }
                    if report.status.is_feasible() {
                        Ok(ExitCode::SUCCESS)
                    } else {
                        Ok(ExitCode::from(EXIT_OUTCOME))
                    }
                }
                Err(message) => {
                    eprintln!("solve failed: {message}");
                    Ok(ExitCode::from(EXIT_OUTCOME))
                }
            }
        }
        Command::Oracle { instance, cap } => {
            let inst = match load(&instance) {
                Ok(i) => i,
                Err(e) => return usage(e),
            };
            match enumeration_oracle(&inst, cap) {
                Ok((x, fval, dropped)) => {
                    println!("fval     {fval:.9e}");
                    println!("x        {:?}", x.as_slice());
                    println!("dropped  {dropped:?}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("oracle: {e}");
                    Ok(ExitCode::from(EXIT_OUTCOME))
                }
            }
        }
        Command::Check { instance, point } => {
            let inst = match load(&instance) {
                Ok(i) => i,
                Err(e) => return usage(e),
            };
            let body = std::fs::read_to_string(&point).map_err(|e| e.to_string())?;
            let pf: PointFile = match serde_json::from_str(&body) {
                Ok(p) => p,
                Err(e) => return usage(format!("point file: {e}")),
            };
            if pf.x.len() != inst.dim() {
                return usage(format!(
                    "point has dimension {}, instance needs {}",
                    pf.x.len(),
                    inst.dim()
                ));
            }
            let report = validate_instance(&inst);
            if report.is_empty() {
                println!("instance: ok ({})", inst.canonical_hash());
            } else {
                println!("instance: {} finding(s)", report.findings.len());
                for f in &report.findings {
                    println!("  {f}");
                }
            }
            let lifted = match (pf.y, pf.z) {
                (Some(y), Some(z)) => {
                    if y.len() != inst.scenario_count() || z.len() != inst.scenario_count() {
                        return usage("y/z length must equal the scenario count".into());
                    }
                    LiftedPoint {
                        x: nalgebra::DVector::from_column_slice(&pf.x),
                        y,
                        z: DualPoint { z },
                    }
                }
                _ => lift_point(&inst, &pf.x),
            };
            let alpha = inst.risk().alpha;
            let prob = empirical_probability(&inst, &pf.x, 1e-6);
            let in_region = inst.region().contains(&pf.x, 1e-8);
            let strong = check_strong_stationarity(&inst, &lifted, 1e-7);
            let strict = check_strict_gap(&inst, &pf.x, DEFAULT_STRICT_TOL);
            println!("in region            {in_region}");
            println!("empirical prob       {prob:.4} (target {:.4})", 1.0 - alpha);
            println!("complementarity V    {:.3e}", lifted.v());
            println!(
                "strong stationarity  {} (point {:.6e}, relaxed {:.6e})",
                strong.positive, strong.point_value, strong.relaxed_value
            );
            println!("strict gap           {strict}");
            let feasible = in_region && prob >= 1.0 - alpha;
            Ok(if feasible {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_OUTCOME)
            })
        }
        Command::Bench { plan, jobs } => {
            let plan = match BenchmarkPlan::from_file(&plan) {
                Ok(p) => p,
                Err(e) => return usage(e.to_string()),
            };
            let (records, table) =
                pendc::harness::run_benchmark(&plan, jobs).map_err(|e| e.to_string())?;
            print!("{table}");
            if plan.format != TableFormat::Structured {
                let failed = records.iter().filter(|r| !r.solved()).count();
                if failed > 0 {
                    eprintln!("{failed} run(s) failed; see records in {}", plan.output.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn usage(message: String) -> Result<ExitCode, String> {
    eprintln!("error: {message}");
    Ok(ExitCode::from(EXIT_USAGE))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn print_report(inst: &ProblemInstance, alg: &str, report: &SolveReport) {
    println!("algorithm        {alg}");
    println!("instance         {} ({})", inst.name(), report.instance_hash);
    println!("status           {}", report.status.as_str());
    println!("fval             {:.9e}", report.fval);
    println!("empirical prob   {:.4}", report.empirical_prob);
    println!("penalty residual {:.3e}", report.penalty_residual);
    println!("wall time        {:.4}s", report.wall_time.as_secs_f64());
    if !report.sigma_trace.is_empty() {
        println!("sigma trace      (sigma, inner iters, objective)");
        for t in &report.sigma_trace {
            println!("  {:>12.4e} {:>6} {:>16.9e}", t.sigma, t.inner_iterations, t.objective);
        }
    }
    println!("x                {:?}", report.x_best.as_slice());
}

fn report_json(inst: &ProblemInstance, alg: &str, report: &SolveReport) -> String {
    serde_json::json!({
        "algorithm": alg,
        "instance": inst.name(),
        "instance_hash": report.instance_hash,
        "status": report.status.as_str(),
        "fval": report.fval,
        "empirical_prob": report.empirical_prob,
        "penalty_residual": report.penalty_residual,
        "wall_time_s": report.wall_time.as_secs_f64(),
        "x": report.x_best.as_slice(),
        "sigma_trace": report.sigma_trace.iter().map(|t| {
            serde_json::json!({
                "sigma": t.sigma,
                "inner_iterations": t.inner_iterations,
                "objective": t.objective,
            })
        }).collect::<Vec<_>>(),
    })
    .to_string()
}
