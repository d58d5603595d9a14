//! Running one solver over a suite of problems and aggregating the results.

use ndarray::Array1;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::oracle::Problem;
use crate::qp::BoxRegion;
use crate::solvers::{
    rsn_solve, zo_rsn_solve, zo_rsn_sqp_solve, zoha_gauss_dc_solve, RunTrace, SolverConfig,
    SolverId,
};
use crate::{Error, Result};

/// Query counters at which sub-optimality snapshots are taken.
pub const DEFAULT_CHECKPOINTS: [u64; 3] = [2_000, 4_000, 6_000];

/// Aggregate statistics over a campaign's runs.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignSummary {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_queries: f64,
    pub mean_queries: f64,
    pub max_queries: u64,
    /// Mean objective held at each query checkpoint, across runs.
    pub checkpoint_means: BTreeMap<u64, f64>,
}

/// Traces plus their summary, in input order.
#[derive(Debug, Clone)]
pub struct CampaignReport {
    pub traces: Vec<RunTrace>,
    pub summary: CampaignSummary,
}

/// Pick the starting point a problem kind implies: the natural input for
/// attacks, the all-ones vector for the reference problems.
pub fn start_point(problem: &Problem) -> Array1<f64> {
    match problem.as_attack() {
        Some(attack) => attack.x_nat().to_owned(),
        None => Array1::ones(problem.dim()),
    }
}

/// Fill in the problem-derived parts of a config: the known optimum as the
/// convergence target for reference problems, the attack margin and a
/// zero-slack target for attack runs.
fn effective_config(problem: &Problem, cfg: &SolverConfig) -> SolverConfig {
    let mut eff = cfg.clone();
    match problem.as_attack() {
        Some(attack) => {
            eff.omega = attack.omega();
            eff.f_target = Some(-attack.omega());
            eff.f_tol = 0.0;
        }
        None => {
            if eff.f_target.is_none() {
                eff.f_target = problem.as_smooth().map(|p| p.optimum_value());
            }
        }
    }
    eff
}

/// Run one solver on one problem with the conventions above.
pub fn solve_problem(problem: &Problem, cfg: &SolverConfig, solver: SolverId) -> Result<RunTrace> {
    let eff = effective_config(problem, cfg);
    let x0 = start_point(problem);
    match solver {
        SolverId::Rsn => {
            let smooth = problem.as_smooth().ok_or_else(|| {
                Error::ContractViolation(
                    "the exact method needs derivative access, which a black-box attack problem \
                     does not offer"
                        .into(),
                )
            })?;
            rsn_solve(smooth, x0.view(), &eff)
        }
        SolverId::ZoRsn => {
            let mut oracle = problem.oracle();
            zo_rsn_solve(&mut oracle, x0.view(), &eff)
        }
        SolverId::ZoRsnSqp => {
            let attack = problem.as_attack().ok_or_else(|| {
                Error::InvalidProblem(
                    "the box-constrained method needs an attack problem with a feasibility box"
                        .into(),
                )
            })?;
            let region = BoxRegion::new(attack.x_nat().to_owned(), attack.epsilon())?;
            let mut oracle = problem.oracle();
            zo_rsn_sqp_solve(&mut oracle, &region, &eff)
        }
        SolverId::ZohaGaussDc => {
            let region = match problem.as_attack() {
                Some(attack) => Some(BoxRegion::new(
                    attack.x_nat().to_owned(),
                    attack.epsilon(),
                )?),
                None => None,
            };
            let mut oracle = problem.oracle();
            zoha_gauss_dc_solve(&mut oracle, x0.view(), &eff, region.as_ref())
        }
    }
}

fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Summarize finished traces: success rate, query statistics, and the mean
/// objective at each checkpoint.
pub fn summarize(traces: &[RunTrace], checkpoints: &[u64]) -> CampaignSummary {
    let runs = traces.len();
    let successes = traces.iter().filter(|t| t.success()).count();
    let mut queries: Vec<u64> = traces.iter().map(|t| t.total_queries()).collect();
    queries.sort_unstable();
    let mut checkpoint_means = BTreeMap::new();
    for &q in checkpoints {
        let mean = traces
            .iter()
            .map(|t| t.value_at_query_budget(q))
            .sum::<f64>()
            / runs as f64;
        checkpoint_means.insert(q, mean);
    }
    CampaignSummary {
        runs,
        successes,
        success_rate: successes as f64 / runs as f64,
        median_queries: median(&queries),
        mean_queries: queries.iter().sum::<u64>() as f64 / runs as f64,
        max_queries: *queries.last().expect("campaigns are nonempty"),
        checkpoint_means,
    }
}

/// Run `solver` over every problem in the suite. Run `i` gets seed
/// `cfg.seed + i` so otherwise identical instances draw independent
/// sketches. With `jobs > 1` the independent runs execute on a rayon pool
/// of that width; each run owns its oracle and trace, and results are
/// merged back in input order, so the outcome is identical to a
/// sequential pass.
pub fn run_campaign(
    problems: &[Problem],
    cfg: &SolverConfig,
    solver: SolverId,
    jobs: usize,
) -> Result<CampaignReport> {
    if problems.is_empty() {
        return Err(Error::InvalidProblem("empty problem suite".into()));
    }
    let run_one = |(i, problem): (usize, &Problem)| -> Result<RunTrace> {
        let run_cfg = SolverConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        solve_problem(problem, &run_cfg, solver)
    };
    let traces: Vec<RunTrace> = if jobs <= 1 {
        problems
            .iter()
            .enumerate()
            .map(run_one)
            .collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot build a {jobs}-thread pool: {e}")))?;
        pool.install(|| {
            problems
                .par_iter()
                .enumerate()
                .map(|(i, p)| run_one((i, p)))
                .collect::<Result<_>>()
        })?
    };
    let summary = summarize(&traces, &DEFAULT_CHECKPOINTS);
    Ok(CampaignReport { traces, summary })
}
