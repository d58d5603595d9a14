//! Gaussian Hessian-aware baseline with descent checking.
//!
//! Each iteration draws `b` Gaussian directions, probes the oracle twice
//! per direction, assembles a damped absolute-curvature model
//!
//! ```text
//! H = (2 a^2 b)^-1 sum_i |f(x+a u_i) - 2 f(x) + f(x-a u_i)| u_i u_i' + damping I
//! ```
//!
//! (the bracketed combination is the second central difference along u_i),
//! estimates the gradient from the same probes by averaged forward
//! differences, and takes the damped Newton step `-gamma H^-1 g`, clipped
//! into the feasible box when one is given. The step is kept only if it
//! does not increase f.
//!
//! The gradient estimator and the step rule are our own completion of the
//! published sketch: forward differences reuse the existing probes, so an
//! iteration costs exactly `2b + 1` queries (two per direction plus the
//! descent-check evaluation; f(x) is carried over from the previous
//! decision).

use ndarray::{Array1, Array2, ArrayView1};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::solve_spd;
use crate::oracle::CountedOracle;
use crate::qp::BoxRegion;
use crate::solvers::{RunTrace, SolverConfig, SolverOutcome, TraceRecord};
use crate::{Error, Result};

/// Damped absolute-curvature model from paired probes along `directions`.
pub fn zoha_hessian(
    alpha: f64,
    directions: &[Array1<f64>],
    f_x: f64,
    f_plus: &[f64],
    f_minus: &[f64],
    damping: f64,
) -> Result<Array2<f64>> {
    let b = directions.len();
    if b == 0 || f_plus.len() != b || f_minus.len() != b {
        return Err(Error::InvalidProblem(format!(
            "need matching probe lists for {b} directions, got {} and {}",
            f_plus.len(),
            f_minus.len()
        )));
    }
    if !(alpha > 0.0) || !(damping > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "probe length and damping must be positive, got {alpha} and {damping}"
        )));
    }
    let n = directions[0].len();
    let mut h = Array2::<f64>::eye(n) * damping;
    let scale = 1.0 / (2.0 * alpha * alpha * b as f64);
    for (i, u) in directions.iter().enumerate() {
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let curvature = (f_plus[i] - 2.0 * f_x + f_minus[i]).abs() * scale;
        for r in 0..n {
            for c in 0..n {
                h[[r, c]] += curvature * u[r] * u[c];
            }
        }
    }
    Ok(h)
}

/// Averaged forward-difference gradient over the same directions.
pub fn zoha_gradient(
    alpha: f64,
    directions: &[Array1<f64>],
    f_x: f64,
    f_plus: &[f64],
) -> Result<Array1<f64>> {
    let b = directions.len();
    if b == 0 || f_plus.len() != b {
        return Err(Error::InvalidProblem(format!(
            "need one forward probe per direction, got {} for {b}",
            f_plus.len()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "probe length must be positive, got {alpha}"
        )));
    }
    let n = directions[0].len();
    let mut g = Array1::<f64>::zeros(n);
    for (i, u) in directions.iter().enumerate() {
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let slope = (f_plus[i] - f_x) / alpha;
        g = &g + &(slope * u);
    }
    Ok(g / b as f64)
}

/// Run the Gaussian baseline from `x0`; pass a region to clip every trial
/// into the attack box.
pub fn zoha_gauss_dc_solve(
    oracle: &mut CountedOracle,
    x0: ArrayView1<f64>,
    cfg: &SolverConfig,
    region: Option<&BoxRegion>,
) -> Result<RunTrace> {
    let n = oracle.dim();
    cfg.validate()?;
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if let Some(r) = region {
        if r.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.dim(),
            });
        }
    }
    let b = cfg.zoha_directions;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.to_owned();
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
        if let Some(target) = cfg.f_target {
            if f_curr - target <= cfg.f_tol {
                break SolverOutcome::Converged;
            }
        }
        if oracle.queries() >= cfg.query_budget {
            break SolverOutcome::BudgetExhausted;
        }
        let k = records.len();
        if k - 1 >= cfg.k_max {
            break SolverOutcome::IterCap;
        }

        let mut directions = Vec::with_capacity(b);
        let mut f_plus = Vec::with_capacity(b);
        let mut f_minus = Vec::with_capacity(b);
        for _ in 0..b {
            let u = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
            f_plus.push(oracle.eval((&x + &(cfg.alpha * &u)).view())?);
            f_minus.push(oracle.eval((&x - &(cfg.alpha * &u)).view())?);
            directions.push(u);
        }
        let h = zoha_hessian(
            cfg.alpha,
            &directions,
            f_curr,
            &f_plus,
            &f_minus,
            cfg.zoha_damping,
        )?;
        let g = zoha_gradient(cfg.alpha, &directions, f_curr, &f_plus)?;
        let step = solve_spd(h.view(), (-&g).view(), None)?;
        let mut trial = &x + &(cfg.gamma * &step);
        if let Some(r) = region {
            let center = r.center();
            for i in 0..n {
                trial[i] = trial[i].clamp(center[i] - r.radius(), center[i] + r.radius());
            }
        }
        let f_trial = oracle.eval(trial.view())?;

        let accepted = f_trial <= f_curr;
        let mut step_norm = 0.0;
        if accepted {
            step_norm = (&trial - &x).mapv(|v| v * v).sum().sqrt();
            x = trial;
            f_curr = f_trial;
            if let Some(r) = region {
                violation = violation.max(r.distance(x.view()) - r.radius());
            }
        }
        records.push(TraceRecord {
            k,
            f_value: f_curr,
            queries_cumulative: oracle.queries(),
            sketch_size_used: b,
            accepted,
            step_norm,
        });
    };

    Ok(RunTrace {
        records,
        outcome,
        final_x: x,
        max_box_violation: region.map(|_| violation.max(0.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{Objective, QuadraticProblem, SmoothObjective, ToyAttackProblem};
    use ndarray::array;

    #[test]
    fn curvature_model_matches_the_hand_computation() {
        // Unit quadratic at the origin, one axis direction: the absolute
        // second difference is 1, scaled by 1/2, plus 0.1 damping.
        let u = vec![array![1.0, 0.0]];
        let p = QuadraticProblem::identity(2);
        let f0 = p.value(array![0.0, 0.0].view());
        let fp = p.value(array![1.0, 0.0].view());
        let fm = p.value(array![-1.0, 0.0].view());
        let h = zoha_hessian(1.0, &u, f0, &[fp], &[fm], 0.1).unwrap();
        assert!((h[[0, 0]] - 0.6).abs() <= 1e-15);
        assert!((h[[1, 1]] - 0.1).abs() <= 1e-15);
        assert_eq!(h[[0, 1]], 0.0);
        assert_eq!(h[[1, 0]], 0.0);

        let g = zoha_gradient(1.0, &u, f0, &[fp]).unwrap();
        assert!((g[0] - 0.5).abs() <= 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn heavy_damping_reduces_to_scaled_gradient_descent() {
        let u = vec![array![0.7, -0.4], array![-0.2, 1.1]];
        let p = QuadraticProblem::diagonal(&[1.0, 3.0]).unwrap();
        let x = array![0.5, -0.25];
        let f0 = p.value(x.view());
        let alpha = 1e-3;
        let fp: Vec<f64> = u
            .iter()
            .map(|ui| p.value((&x + &(alpha * ui)).view()))
            .collect();
        let fm: Vec<f64> = u
            .iter()
            .map(|ui| p.value((&x - &(alpha * ui)).view()))
            .collect();
        let damping = 1e6;
        let h = zoha_hessian(alpha, &u, f0, &fp, &fm, damping).unwrap();
        let g = zoha_gradient(alpha, &u, f0, &fp).unwrap();
        let step = solve_spd(h.view(), (-&g).view(), None).unwrap();
        for i in 0..2 {
            let expected = -g[i] / damping;
            assert!(
                (step[i] - expected).abs() <= 1e-4 * expected.abs().max(1e-12),
                "axis {i}: {} vs {expected}",
                step[i]
            );
        }
    }

    #[test]
    fn descent_check_keeps_values_nonincreasing() {
        let p = QuadraticProblem::diagonal(&[1.0, 2.0, 4.0, 8.0]).unwrap();
        let mut oracle = CountedOracle::new(p);
        let cfg = SolverConfig {
            alpha: 1e-4,
            zoha_directions: 5,
            k_max: 60,
            query_budget: 10_000,
            seed: 3,
            ..SolverConfig::default()
        };
        let trace = zoha_gauss_dc_solve(&mut oracle, array![1.0, -1.0, 0.5, 2.0].view(), &cfg, None)
            .unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].f_value <= w[0].f_value);
        }
        assert!(trace.final_f() < trace.records[0].f_value);
    }

    #[test]
    fn converges_on_a_well_conditioned_quadratic() {
        let p = QuadraticProblem::identity(4);
        let mut oracle = CountedOracle::new(p.clone());
        let cfg = SolverConfig {
            alpha: 1e-4,
            zoha_directions: 10,
            k_max: 500,
            query_budget: 100_000,
            f_target: Some(p.optimum_value()),
            f_tol: 1e-8,
            seed: 1,
            ..SolverConfig::default()
        };
        let trace = zoha_gauss_dc_solve(&mut oracle, Array1::ones(4).view(), &cfg, None).unwrap();
        assert_eq!(trace.outcome, SolverOutcome::Converged);
    }

    #[test]
    fn queries_are_one_plus_a_fixed_cost_per_iteration() {
        let p = QuadraticProblem::identity(6);
        let mut oracle = CountedOracle::new(p);
        let cfg = SolverConfig {
            zoha_directions: 4,
            k_max: 7,
            query_budget: 10_000,
            ..SolverConfig::default()
        };
        let trace = zoha_gauss_dc_solve(&mut oracle, Array1::ones(6).view(), &cfg, None).unwrap();
        assert_eq!(trace.outcome, SolverOutcome::IterCap);
        let per_iteration = (2 * 4 + 1) as u64;
        for (i, r) in trace.records.iter().enumerate() {
            assert_eq!(r.queries_cumulative, 1 + i as u64 * per_iteration);
        }
        assert_eq!(oracle.queries(), 1 + 7 * per_iteration);
    }

    #[test]
    fn attack_runs_stay_in_the_clipped_box() {
        let p = ToyAttackProblem::with_runner_up_label(10, 4, 44, 0.3, 1.0).unwrap();
        let region = BoxRegion::new(p.x_nat().to_owned(), p.epsilon()).unwrap();
        let mut oracle = CountedOracle::new(p);
        let cfg = SolverConfig {
            alpha: 0.1,
            zoha_directions: 10,
            k_max: 200,
            query_budget: 20_000,
            f_target: Some(-1.0),
            f_tol: 0.0,
            seed: 4,
            ..SolverConfig::default()
        };
        let trace =
            zoha_gauss_dc_solve(&mut oracle, region.center().to_owned().view(), &cfg, Some(&region))
                .unwrap();
        assert!(trace.max_box_violation.unwrap() <= 1e-12);
        assert!(region.contains(trace.final_x.view(), 1e-12));
    }

    #[test]
    fn identical_seeds_reproduce_the_run() {
        let run = || {
            let p = QuadraticProblem::diagonal(&[1.0, 5.0, 9.0]).unwrap();
            let mut oracle = CountedOracle::new(p);
            let cfg = SolverConfig {
                alpha: 1e-3,
                zoha_directions: 3,
                k_max: 25,
                seed: 12,
                ..SolverConfig::default()
            };
            zoha_gauss_dc_solve(&mut oracle, array![1.0, 1.0, 1.0].view(), &cfg, None).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.f_value.to_bits(), rb.f_value.to_bits());
        }
    }
}
