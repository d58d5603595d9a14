//! Query-only sketched Newton: the reference update with both the sketched
//! gradient and Hessian replaced by finite-difference estimates.
//!
//! Each iteration draws a fresh sketch, probes the oracle
//! `1 + m + m(m+1)/2` times to build the model, solves the estimated
//! system, and steps. There is no descent check; the theory covers the raw
//! iteration on strongly convex problems.

use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::estimators::build_model;
use crate::linalg::{solve_spd_detail, SolveRoute};
use crate::oracle::CountedOracle;
use crate::sketch::{draw_sketch, Sketch};
use crate::solvers::{RunTrace, SolverConfig, SolverOutcome, TraceRecord};
use crate::{Error, Result};

/// One query-only sketched Newton update.
#[derive(Debug, Clone)]
pub struct ZoRsnStep {
    pub x_next: Array1<f64>,
    /// Solution of the estimated system.
    pub lambda: Array1<f64>,
    /// Oracle value at the starting point, a byproduct of the model build.
    pub f_x: f64,
    /// Oracle queries this step consumed: `1 + m + m(m+1)/2`.
    pub queries: u64,
}

/// Take one query-only sketched Newton step from `x`.
pub fn zo_rsn_step(
    oracle: &mut CountedOracle,
    x: ArrayView1<f64>,
    s: &Sketch,
    cfg: &SolverConfig,
) -> Result<ZoRsnStep> {
    let model = build_model(oracle, x, s, cfg.alpha)?;
    let (lambda, route) = solve_spd_detail(
        model.h_tilde().view(),
        (-&model.g_tilde().to_owned()).view(),
        None,
    )?;
    if let SolveRoute::Pseudo { kept: 0 } = route {
        // Every estimated curvature direction fell below the numerical
        // floor; there is no usable step at this probe length.
        return Err(Error::StepRejected(format!(
            "estimated curvature is numerically zero at alpha = {}",
            cfg.alpha
        )));
    }
    let x_next = &x + &(cfg.gamma * s.matrix().dot(&lambda));
    Ok(ZoRsnStep {
        x_next,
        lambda,
        f_x: model.f_x(),
        queries: model.queries_used(),
    })
}

/// Run query-only sketched Newton until the target value, the query
/// budget, or the iteration cap.
///
/// Budget semantics: an iteration starts whenever the counter is still
/// below the budget, so the final iteration may overshoot it. When the run
/// ends on budget or the iteration cap, one extra query evaluates the last
/// iterate so the trace stays self-contained.
pub fn zo_rsn_solve(
    oracle: &mut CountedOracle,
    x0: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<RunTrace> {
    let n = oracle.dim();
    cfg.validate_for_dim(n)?;
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.to_owned();
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut pending_step_norm = 0.0;

    let outcome = loop {
        let k = records.len();
        if oracle.queries() >= cfg.query_budget {
            break SolverOutcome::BudgetExhausted;
        }
        if k >= cfg.k_max {
            break SolverOutcome::IterCap;
        }
        let s = draw_sketch(cfg.sketch_strategy, n, cfg.m, &mut rng)?;
        let step = zo_rsn_step(oracle, x.view(), &s, cfg)?;
        // The model's base probe is f at the current iterate; record the
        // iterate now that its value is known.
        records.push(TraceRecord {
            k,
            f_value: step.f_x,
            queries_cumulative: oracle.queries(),
            sketch_size_used: if k == 0 { 0 } else { cfg.m },
            accepted: true,
            step_norm: pending_step_norm,
        });
        if let Some(target) = cfg.f_target {
            if step.f_x - target <= cfg.f_tol {
                break SolverOutcome::Converged;
            }
        }
        pending_step_norm = (&step.x_next - &x).mapv(|v| v * v).sum().sqrt();
        x = step.x_next;
    };

    if outcome != SolverOutcome::Converged {
        // The loop stopped after stepping to x without measuring it.
        let k = records.len();
        let f = oracle.eval(x.view())?;
        records.push(TraceRecord {
            k,
            f_value: f,
            queries_cumulative: oracle.queries(),
            sketch_size_used: if k == 0 { 0 } else { cfg.m },
            accepted: true,
            step_norm: pending_step_norm,
        });
    }

    Ok(RunTrace {
        records,
        outcome,
        final_x: x,
        max_box_violation: None,
    })
}
