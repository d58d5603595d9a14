//! Browser bindings for the sketched Newton toolkit.
//!
//! Three operations back the static page in `www/`: run one solver on a
//! seeded quadratic and hand back its trace, race the two attack-capable
//! methods on one toy classifier instance, and compare the sampled
//! projection constant rho against its enumerated value. Each returns a
//! JSON string so the page stays plain JavaScript.
//!
//! Everything here is deterministic in the seeds, so the page reproduces
//! exactly what the CLI would report for the same parameters.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use zorsn::oracle::ProblemSpec;
use zorsn::sketch::SketchStrategy;
use zorsn::solvers::{solve_problem, RunTrace, SolverConfig, SolverId};
use zorsn::theory::{rho_exact, rho_mc};
use zorsn::{Error, Result};

/// Query budgets past this stall the page thread for too long.
const BUDGET_CAP: u64 = 200_000;

/// One plotted point: cumulative queries against the quantity the panel
/// tracks (gap to the optimum, or the attack margin).
#[derive(Serialize)]
struct TracePoint {
    k: usize,
    queries: u64,
    value: f64,
}

#[derive(Serialize)]
struct SolverRun {
    solver: String,
    outcome: String,
    queries: u64,
    final_value: f64,
    success: bool,
    series: Vec<TracePoint>,
}

fn spectrum(n: usize) -> Vec<f64> {
    // condition number 10, evenly spread, same flavor as the CLI configs
    (0..n)
        .map(|i| 1.0 + 9.0 * i as f64 / (n.max(2) - 1) as f64)
        .collect()
}

fn check_budget(budget: u64) -> Result<()> {
    if budget == 0 || budget > BUDGET_CAP {
        return Err(Error::Config(format!(
            "budget must be in 1..={BUDGET_CAP} (got {budget})"
        )));
    }
    Ok(())
}

fn solver_run(trace: &RunTrace, solver: SolverId, shift: f64) -> SolverRun {
    let series = trace
        .records
        .iter()
        .map(|r| TracePoint {
            k: r.k,
            queries: r.queries_cumulative,
            value: r.f_value - shift,
        })
        .collect();
    SolverRun {
        solver: solver.to_string(),
        outcome: trace.outcome.to_string(),
        queries: trace.total_queries(),
        final_value: trace.final_f() - shift,
        success: trace.success(),
        series,
    }
}

/// Run one solver on a seeded condition-10 quadratic; the series holds the
/// gap to the known optimum.
pub fn convergence_trace_json(
    n: usize,
    solver: &str,
    m: usize,
    alpha: f64,
    seed: u64,
    budget: u64,
) -> Result<String> {
    check_budget(budget)?;
    let solver: SolverId = solver.parse()?;
    if solver == SolverId::ZoRsnSqp {
        return Err(Error::Config(
            "zo-rsn-sqp is box-constrained; race it on the attack panel instead".into(),
        ));
    }
    let problem = ProblemSpec::Quadratic {
        n,
        seed,
        spectrum: spectrum(n),
    }
    .build()?;
    let cfg = SolverConfig {
        m,
        m_max: n.min(20),
        alpha,
        seed,
        query_budget: budget,
        ..SolverConfig::default()
    };
    let trace = solve_problem(&problem, &cfg, solver)?;
    let f_star = problem
        .as_smooth()
        .expect("quadratics have derivatives")
        .optimum_value();
    let run = solver_run(&trace, solver, f_star);
    serde_json::to_string(&run).map_err(|e| Error::Config(format!("cannot serialize: {e}")))
}

#[derive(Serialize)]
struct AttackRace {
    start_margin: f64,
    epsilon: f64,
    omega: f64,
    runs: Vec<AttackRun>,
}

#[derive(Serialize)]
struct AttackRun {
    #[serde(flatten)]
    run: SolverRun,
    perturbation_linf: f64,
}

/// Race both attack-capable methods on one toy classifier instance; the
/// series holds the raw margin objective, success means it reached
/// `-omega`.
pub fn attack_race_json(
    n: usize,
    label: usize,
    epsilon: f64,
    seed: u64,
    budget: u64,
) -> Result<String> {
    check_budget(budget)?;
    let omega = 1.0;
    let problem = ProblemSpec::ToyAttack {
        n,
        seed,
        weights_seed: seed.wrapping_add(1_000),
        epsilon,
        omega,
        label,
    }
    .build()?;
    let attack = problem.as_attack().expect("built as an attack");
    let start_margin = {
        let mut oracle = problem.oracle();
        oracle.eval(attack.x_nat())?
    };
    let mut runs = Vec::new();
    for solver in [SolverId::ZoRsnSqp, SolverId::ZohaGaussDc] {
        let cfg = SolverConfig {
            m: 3,
            m_max: n.min(20),
            alpha: 0.1,
            seed,
            query_budget: budget,
            ..SolverConfig::default()
        };
        let trace = solve_problem(&problem, &cfg, solver)?;
        let perturbation_linf = (&trace.final_x - &attack.x_nat())
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        runs.push(AttackRun {
            run: solver_run(&trace, solver, 0.0),
            perturbation_linf,
        });
    }
    let race = AttackRace {
        start_margin,
        epsilon,
        omega,
        runs,
    };
    serde_json::to_string(&race).map_err(|e| Error::Config(format!("cannot serialize: {e}")))
}

#[derive(Serialize)]
struct RhoReport {
    n: usize,
    m: usize,
    strategy: String,
    /// `m / n`, the eigenvector-sketch value and the general ceiling.
    ratio: f64,
    /// Enumerated value; absent when the strategy or size rules it out.
    exact: Option<f64>,
    estimate: f64,
    stderr: f64,
}

/// Sample rho for a sketch family on a seeded condition-10 quadratic and
/// set it against the enumerated value where one exists.
pub fn rho_explorer_json(
    n: usize,
    m: usize,
    strategy: &str,
    samples: u64,
    seed: u64,
) -> Result<String> {
    if samples > 200_000 {
        return Err(Error::Config(format!(
            "samples must be at most 200000 (got {samples})"
        )));
    }
    let strategy = match strategy {
        "coordinate" => SketchStrategy::Coordinate,
        "gaussian" => SketchStrategy::Gaussian,
        "eigen" => SketchStrategy::Eigen,
        other => {
            return Err(Error::Config(format!(
                "unknown strategy {other:?}; expected coordinate, gaussian, or eigen"
            )))
        }
    };
    let problem = ProblemSpec::Quadratic {
        n,
        seed,
        spectrum: spectrum(n),
    }
    .build()?;
    let smooth = problem.as_smooth().expect("quadratics have derivatives");
    let h = smooth.hessian(smooth.optimum());
    let mc = rho_mc(h.view(), strategy, m, samples, seed)?;
    let exact = match rho_exact(h.view(), strategy, m) {
        Ok(v) => Some(v),
        Err(Error::UnsupportedSketch(_)) | Err(Error::EnumerationTooLarge { .. }) => None,
        Err(e) => return Err(e),
    };
    let report = RhoReport {
        n,
        m,
        strategy: strategy.to_string(),
        ratio: m as f64 / n as f64,
        exact,
        estimate: mc.estimate,
        stderr: mc.stderr,
    };
    serde_json::to_string(&report).map_err(|e| Error::Config(format!("cannot serialize: {e}")))
}

fn to_js<T>(result: Result<T>) -> std::result::Result<T, JsValue> {
    result.map_err(|e| JsValue::from_str(&e.to_string()))
}

/// See [`convergence_trace_json`].
#[wasm_bindgen]
pub fn convergence_trace(
    n: usize,
    solver: &str,
    m: usize,
    alpha: f64,
    seed: u64,
    budget: u64,
) -> std::result::Result<String, JsValue> {
    to_js(convergence_trace_json(n, solver, m, alpha, seed, budget))
}

/// See [`attack_race_json`].
#[wasm_bindgen]
pub fn attack_race(
    n: usize,
    label: usize,
    epsilon: f64,
    seed: u64,
    budget: u64,
) -> std::result::Result<String, JsValue> {
    to_js(attack_race_json(n, label, epsilon, seed, budget))
}

/// See [`rho_explorer_json`].
#[wasm_bindgen]
pub fn rho_explorer(
    n: usize,
    m: usize,
    strategy: &str,
    samples: u64,
    seed: u64,
) -> std::result::Result<String, JsValue> {
    to_js(rho_explorer_json(n, m, strategy, samples, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_trace_reports_a_shrinking_gap() {
        let json = convergence_trace_json(8, "zo-rsn", 3, 1e-6, 0, 20_000).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["solver"], "zo-rsn");
        assert_eq!(v["outcome"], "converged");
        let series = v["series"].as_array().unwrap();
        assert!(series.len() > 2);
        let first = series[0]["value"].as_f64().unwrap();
        let last = series[series.len() - 1]["value"].as_f64().unwrap();
        assert!(last < first);
        assert!(last <= 1e-7, "gap should reach the tolerance: {last}");
    }

    #[test]
    fn convergence_trace_rejects_the_box_constrained_solver() {
        let err = convergence_trace_json(8, "zo-rsn-sqp", 3, 0.1, 0, 1_000)
            .unwrap_err()
            .to_string();
        assert!(err.contains("attack panel"), "{err}");
        let err = convergence_trace_json(8, "zo-rsn", 3, 0.1, 0, 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("budget"), "{err}");
    }

    #[test]
    fn attack_race_reports_both_methods_inside_the_box() {
        let json = attack_race_json(16, 4, 0.3, 0, 30_000).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["omega"], 1.0);
        let runs = v["runs"].as_array().unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0]["solver"], "zo-rsn-sqp");
        assert_eq!(runs[1]["solver"], "zoha-gauss-dc");
        let p = runs[0]["perturbation_linf"].as_f64().unwrap();
        assert!(p <= 0.3 + 1e-9, "box violated: {p}");
    }

    #[test]
    fn rho_explorer_pins_the_eigen_value_to_the_ratio() {
        let json = rho_explorer_json(6, 2, "eigen", 2_000, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let exact = v["exact"].as_f64().unwrap();
        assert!((exact - 1.0 / 3.0).abs() <= 1e-12);
        let est = v["estimate"].as_f64().unwrap();
        let stderr = v["stderr"].as_f64().unwrap();
        assert!((est - exact).abs() <= 3.0 * stderr + 1e-3);
    }

    #[test]
    fn rho_explorer_leaves_exact_empty_for_gaussian_sketches() {
        let json = rho_explorer_json(6, 2, "gaussian", 500, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["exact"].is_null());
        assert!(v["estimate"].as_f64().unwrap() > 0.0);
        let err = rho_explorer_json(6, 2, "spectral", 500, 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("spectral"), "{err}");
    }
}
