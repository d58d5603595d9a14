//! Box-constrained query-only sketched Newton with descent checking and
//! sketch growth, the attack-oriented variant.
//!
//! Per iteration: draw a coordinate sketch, estimate the sketched gradient
//! and Hessian, project the Hessian's spectrum onto
//! `[lambda_min, lambda_max]`, solve the box QP that keeps the trial inside
//! the sup-norm ball around the natural input, and evaluate the trial.
//! While the trial fails to improve and the sketch is below `m_max`, grow
//! the sketch one column at a time (extending the model incrementally, at
//! `m + 2` extra queries per column) and re-solve. The trial is accepted
//! only if it does not increase f, so accepted values are nonincreasing; a
//! run succeeds once f reaches `-omega`.
//!
//! Ties trigger growth first (the growth condition is `f_trial >= f(x_k)`)
//! and are accepted once the sketch is exhausted (acceptance is
//! `f_trial <= f(x_k)`), matching the reference listing.

use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::estimators::{build_model, extend_model, SketchedModel};
use crate::linalg::project_eigenvalues;
use crate::oracle::CountedOracle;
use crate::qp::{reduce_constraints, solve_box_qp, BoxQP, BoxRegion, DEFAULT_TOL};
use crate::sketch::{draw_sketch, grow_sketch, Sketch, SketchStrategy};
use crate::solvers::{RunTrace, SolverConfig, SolverOutcome, TraceRecord};
use crate::{Error, Result};

fn propose(
    model: &SketchedModel,
    sketch: &Sketch,
    region: &BoxRegion,
    x: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<Array1<f64>> {
    let h_hat = project_eigenvalues(model.h_tilde(), cfg.lambda_min, cfg.lambda_max)?;
    let (lower, upper) = reduce_constraints(x, region, sketch, cfg.gamma)?;
    let qp = BoxQP::new(model.g_tilde().to_owned(), h_hat, cfg.gamma, lower, upper)?;
    let lambda = solve_box_qp(&qp, DEFAULT_TOL)?;
    Ok(&x + &(cfg.gamma * sketch.matrix().dot(&lambda)))
}

/// Run the box-constrained attack method from the center of `region` (the
/// natural input) until f reaches `-omega`, the query budget, or the
/// iteration cap.
pub fn zo_rsn_sqp_solve(
    oracle: &mut CountedOracle,
    region: &BoxRegion,
    cfg: &SolverConfig,
) -> Result<RunTrace> {
    let n = oracle.dim();
    cfg.validate_for_dim(n)?;
    if region.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: region.dim(),
        });
    }
    if cfg.sketch_strategy != SketchStrategy::Coordinate {
        return Err(Error::UnsupportedSketch(format!(
            "the box-constrained method needs coordinate sketches, got {}",
            cfg.sketch_strategy
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = region.center().to_owned();
    let mut f_curr = oracle.eval(x.view())?;
    let mut violation = 0.0f64;
    let mut records = vec![TraceRecord {
        k: 0,
        f_value: f_curr,
        queries_cumulative: oracle.queries(),
        sketch_size_used: 0,
        accepted: true,
        step_norm: 0.0,
    }];

    let outcome = loop {
        if f_curr <= -cfg.omega {
            break SolverOutcome::Converged;
        }
        if oracle.queries() >= cfg.query_budget {
            break SolverOutcome::BudgetExhausted;
        }
        let k = records.len();
        if k - 1 >= cfg.k_max {
            break SolverOutcome::IterCap;
        }

        let mut sketch = draw_sketch(SketchStrategy::Coordinate, n, cfg.m, &mut rng)?;
        let mut model = build_model(oracle, x.view(), &sketch, cfg.alpha)?;
        let mut trial = propose(&model, &sketch, region, x.view(), cfg)?;
        let mut f_trial = oracle.eval(trial.view())?;
        while f_trial >= f_curr && sketch.m() < cfg.m_max {
            let grown = grow_sketch(&sketch, &mut rng)?;
            model = extend_model(oracle, x.view(), &model, &grown)?;
            sketch = grown;
            trial = propose(&model, &sketch, region, x.view(), cfg)?;
            f_trial = oracle.eval(trial.view())?;
        }

        let accepted = f_trial <= f_curr;
        let mut step_norm = 0.0;
        if accepted {
            step_norm = (&trial - &x).mapv(|v| v * v).sum().sqrt();
            x = trial;
            f_curr = f_trial;
            violation = violation.max(region.distance(x.view()) - region.radius());
        }
        records.push(TraceRecord {
            k,
            f_value: f_curr,
            queries_cumulative: oracle.queries(),
            sketch_size_used: sketch.m(),
            accepted,
            step_norm,
        });
    };

    Ok(RunTrace {
        records,
        outcome,
        final_x: x,
        max_box_violation: Some(violation.max(0.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{Objective, ToyAttackProblem};
    use ndarray::Array1;

    fn attack_setup(n: usize, seed: u64) -> (CountedOracle, BoxRegion) {
        let p = ToyAttackProblem::with_runner_up_label(n, seed, seed ^ 0x5eed, 0.3, 1.0).unwrap();
        let region = BoxRegion::new(p.x_nat().to_owned(), p.epsilon()).unwrap();
        (CountedOracle::new(p), region)
    }

    fn attack_cfg(seed: u64, m_max: usize) -> SolverConfig {
        SolverConfig {
            alpha: 0.1,
            gamma: 1.0,
            m: 3,
            m_max,
            query_budget: 50_000,
            omega: 1.0,
            seed,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn drives_the_margin_loss_to_its_floor() {
        let (mut oracle, region) = attack_setup(32, 7);
        let trace = zo_rsn_sqp_solve(&mut oracle, &region, &attack_cfg(7, 20)).unwrap();
        assert_eq!(trace.outcome, SolverOutcome::Converged);
        assert!(trace.final_f() <= -1.0);
        assert!(trace.total_queries() < 50_000);
    }

    #[test]
    fn accepted_values_never_increase() {
        let (mut oracle, region) = attack_setup(16, 3);
        let trace = zo_rsn_sqp_solve(&mut oracle, &region, &attack_cfg(3, 16)).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].f_value <= w[0].f_value, "{:?} -> {:?}", w[0], w[1]);
            if !w[1].accepted {
                assert_eq!(w[1].f_value, w[0].f_value);
                assert_eq!(w[1].step_norm, 0.0);
            }
        }
    }

    #[test]
    fn iterates_stay_inside_the_box() {
        for seed in [1, 2, 9] {
            let (mut oracle, region) = attack_setup(12, seed);
            let trace = zo_rsn_sqp_solve(&mut oracle, &region, &attack_cfg(seed, 12)).unwrap();
            assert!(trace.max_box_violation.unwrap() <= 1e-9);
            assert!(region.contains(trace.final_x.view(), 1e-9));
        }
    }

    #[test]
    fn trace_counters_match_the_oracle_and_sketch_sizes_stay_bounded() {
        let (mut oracle, region) = attack_setup(16, 11);
        let cfg = attack_cfg(11, 16);
        let trace = zo_rsn_sqp_solve(&mut oracle, &region, &cfg).unwrap();
        assert_eq!(trace.total_queries(), oracle.queries());
        let mut last = 0;
        for r in &trace.records {
            assert!(r.queries_cumulative >= last);
            last = r.queries_cumulative;
            if r.k > 0 {
                assert!((cfg.m..=cfg.m_max).contains(&r.sketch_size_used));
            }
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let (mut oracle, region) = attack_setup(16, 5);
            zo_rsn_sqp_solve(&mut oracle, &region, &attack_cfg(5, 16)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.f_value.to_bits(), rb.f_value.to_bits());
            assert_eq!(ra.queries_cumulative, rb.queries_cumulative);
            assert_eq!(ra.sketch_size_used, rb.sketch_size_used);
        }
        for (xa, xb) in a.final_x.iter().zip(&b.final_x) {
            assert_eq!(xa.to_bits(), xb.to_bits());
        }
    }

    #[test]
    fn rejects_non_coordinate_sketches() {
        let (mut oracle, region) = attack_setup(8, 1);
        let cfg = SolverConfig {
            sketch_strategy: SketchStrategy::Gaussian,
            ..attack_cfg(1, 8)
        };
        let r = zo_rsn_sqp_solve(&mut oracle, &region, &cfg);
        assert!(matches!(r, Err(Error::UnsupportedSketch(_))), "{r:?}");
    }

    /// Flat objective: every trial ties, so growth must run to the cap and
    /// the tie must then be accepted with a zero step.
    #[derive(Debug)]
    struct Flat {
        n: usize,
    }

    impl Objective for Flat {
        fn dim(&self) -> usize {
            self.n
        }

        fn value(&self, _x: ArrayView1<f64>) -> f64 {
            5.0
        }
    }

    #[test]
    fn ties_grow_to_the_cap_then_accept_in_place() {
        let mut oracle = CountedOracle::new(Flat { n: 8 });
        let region = BoxRegion::new(Array1::zeros(8), 0.5).unwrap();
        let cfg = SolverConfig {
            m: 2,
            m_max: 5,
            k_max: 2,
            ..attack_cfg(0, 8)
        };
        let trace = zo_rsn_sqp_solve(&mut oracle, &region, &cfg).unwrap();
        assert_eq!(trace.outcome, SolverOutcome::IterCap);
        for r in &trace.records[1..] {
            assert!(r.accepted, "ties are accepted once growth is exhausted");
            assert_eq!(r.step_norm, 0.0);
            assert_eq!(r.sketch_size_used, 5);
            assert_eq!(r.f_value, 5.0);
        }
        assert_eq!(trace.records.len(), 3);
    }

    #[test]
    fn tight_budget_reports_exhaustion() {
        let (mut oracle, region) = attack_setup(16, 21);
        let cfg = SolverConfig {
            query_budget: 30,
            ..attack_cfg(21, 16)
        };
        let trace = zo_rsn_sqp_solve(&mut oracle, &region, &cfg).unwrap();
        assert_eq!(trace.outcome, SolverOutcome::BudgetExhausted);
        assert_eq!(trace.total_queries(), oracle.queries());
    }
}
