//! The four iterative methods and their shared plumbing.
//!
//! [`rsn::rsn_step`] is the derivative-based reference update, [`zo_rsn`]
//! its query-only counterpart, [`sqp`] the box-constrained attack variant
//! with sketch growth and descent checking, and [`zoha`] the Gaussian
//! Hessian-aware baseline. [`campaign`] runs suites of problems and
//! aggregates success rates and query statistics.
//!
//! Every solver returns a [`RunTrace`]: one record per iterate, with the
//! oracle's own query counter sampled at the moment the record is written,
//! so traces can be audited against the oracle after the fact.

pub mod campaign;
pub mod rsn;
pub mod sqp;
pub mod zo_rsn;
pub mod zoha;

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::sketch::SketchStrategy;
use crate::{Error, Result};

pub use campaign::{run_campaign, solve_problem, CampaignReport, CampaignSummary};
pub use rsn::{rsn_solve, rsn_step, RsnStep};
pub use sqp::zo_rsn_sqp_solve;
pub use zo_rsn::{zo_rsn_solve, zo_rsn_step, ZoRsnStep};
pub use zoha::{zoha_gauss_dc_solve, zoha_gradient, zoha_hessian};

/// Which method to run; the string forms are the CLI names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverId {
    Rsn,
    ZoRsn,
    ZoRsnSqp,
    ZohaGaussDc,
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverId::Rsn => "rsn",
            SolverId::ZoRsn => "zo-rsn",
            SolverId::ZoRsnSqp => "zo-rsn-sqp",
            SolverId::ZohaGaussDc => "zoha-gauss-dc",
        })
    }
}

impl FromStr for SolverId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rsn" => Ok(SolverId::Rsn),
            "zo-rsn" => Ok(SolverId::ZoRsn),
            "zo-rsn-sqp" => Ok(SolverId::ZoRsnSqp),
            "zoha-gauss-dc" => Ok(SolverId::ZohaGaussDc),
            other => Err(Error::Config(format!(
                "unknown solver {other:?}; expected rsn, zo-rsn, zo-rsn-sqp, or zoha-gauss-dc"
            ))),
        }
    }
}

fn default_gamma() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.1
}
fn default_m() -> usize {
    3
}
fn default_m_max() -> usize {
    20
}
fn default_k_max() -> usize {
    10_000
}
fn default_query_budget() -> u64 {
    50_000
}
fn default_lambda_min() -> f64 {
    0.01
}
fn default_lambda_max() -> f64 {
    100.0
}
fn default_omega() -> f64 {
    1.0
}
fn default_f_tol() -> f64 {
    1e-8
}
fn default_zoha_directions() -> usize {
    10
}
fn default_zoha_damping() -> f64 {
    0.01
}

/// Full parameter set shared by all solvers. Fields a given method does not
/// use are ignored by it (e.g. `zoha_*` outside the baseline, `omega`
/// outside attack runs).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Step size applied to the sketched direction.
    pub gamma: f64,
    /// Finite-difference probe length.
    pub alpha: f64,
    /// Initial sketch size.
    pub m: usize,
    /// Sketch growth cap for the descent-checked attack method.
    pub m_max: usize,
    /// Iteration cap.
    pub k_max: usize,
    /// Oracle query budget; exceeding it ends the run.
    pub query_budget: u64,
    /// Eigenvalue projection interval for the attack method's model Hessian.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Attack confidence margin: a run succeeds once f drops to -omega.
    pub omega: f64,
    pub seed: u64,
    pub sketch_strategy: SketchStrategy,
    /// Known optimal value; convex runs stop once `f - f_target <= f_tol`.
    pub f_target: Option<f64>,
    pub f_tol: f64,
    /// Directions per iteration (b) for the Gaussian baseline.
    pub zoha_directions: usize,
    /// Curvature damping (lambda) for the Gaussian baseline.
    pub zoha_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            alpha: default_alpha(),
            m: default_m(),
            m_max: default_m_max(),
            k_max: default_k_max(),
            query_budget: default_query_budget(),
            lambda_min: default_lambda_min(),
            lambda_max: default_lambda_max(),
            omega: default_omega(),
            seed: 0,
            sketch_strategy: SketchStrategy::Coordinate,
            f_target: None,
            f_tol: default_f_tol(),
            zoha_directions: default_zoha_directions(),
            zoha_damping: default_zoha_damping(),
        }
    }
}

impl SolverConfig {
    /// Checks the invariants that do not need the problem dimension.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.m == 0 || self.m > self.m_max {
            return Err(Error::Config(format!(
                "need 0 < m <= m-max, got m = {}, m-max = {}",
                self.m, self.m_max
            )));
        }
        if self.query_budget == 0 {
            return Err(Error::Config("query-budget must be positive".into()));
        }
        if !(self.lambda_min > 0.0) || !(self.lambda_min <= self.lambda_max) {
            return Err(Error::Config(format!(
                "need 0 < lambda-min <= lambda-max, got [{}, {}]",
                self.lambda_min, self.lambda_max
            )));
        }
        if !(self.f_tol >= 0.0) {
            return Err(Error::Config(format!(
                "f-tol must be nonnegative, got {}",
                self.f_tol
            )));
        }
        if self.zoha_directions == 0 {
            return Err(Error::Config("zoha-directions must be positive".into()));
        }
        if !(self.zoha_damping > 0.0) {
            return Err(Error::Config(format!(
                "zoha-damping must be positive, got {}",
                self.zoha_damping
            )));
        }
        Ok(())
    }

    /// Checks the invariants tied to the problem dimension.
    pub fn validate_for_dim(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.m_max > n {
            return Err(Error::Config(format!(
                "m-max = {} exceeds the problem dimension {n}",
                self.m_max
            )));
        }
        Ok(())
    }
}

/// One row of a run trace. Row `k` describes the iterate after `k` update
/// decisions; row 0 is the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Objective at the iterate, after the accept/reject decision.
    pub f_value: f64,
    /// Oracle counter sampled when the record was written.
    pub queries_cumulative: u64,
    /// Sketch columns (or probe directions) the iteration ended up using.
    pub sketch_size_used: usize,
    pub accepted: bool,
    /// Euclidean length of the accepted step; 0 for rejections.
    pub step_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverOutcome {
    /// Reached the target value (attack margin or known optimum).
    Converged,
    BudgetExhausted,
    IterCap,
}

impl fmt::Display for SolverOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverOutcome::Converged => "converged",
            SolverOutcome::BudgetExhausted => "budget-exhausted",
            SolverOutcome::IterCap => "iter-cap",
        })
    }
}

/// Complete record of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub outcome: SolverOutcome,
    pub final_x: Array1<f64>,
    /// Worst sup-norm excursion of any accepted iterate outside the
    /// feasible box; `None` for unconstrained runs.
    pub max_box_violation: Option<f64>,
}

impl RunTrace {
    pub fn success(&self) -> bool {
        self.outcome == SolverOutcome::Converged
    }

    /// Objective at the final iterate.
    pub fn final_f(&self) -> f64 {
        self.records
            .last()
            .expect("traces always hold the starting record")
            .f_value
    }

    /// Oracle queries consumed by the whole run.
    pub fn total_queries(&self) -> u64 {
        self.records
            .last()
            .expect("traces always hold the starting record")
            .queries_cumulative
    }

    /// Objective held when the query counter last sat at or below `budget`:
    /// the value of the last record before the counter crosses it. Records
    /// carry post-decision values, so this is the best accepted value known
    /// within the budget.
    pub fn value_at_query_budget(&self, budget: u64) -> f64 {
        let mut value = self.records[0].f_value;
        for r in &self.records {
            if r.queries_cumulative > budget {
                break;
            }
            value = r.f_value;
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn record(k: usize, f: f64, q: u64) -> TraceRecord {
        TraceRecord {
            k,
            f_value: f,
            queries_cumulative: q,
            sketch_size_used: 3,
            accepted: true,
            step_norm: 0.1,
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for id in [
            SolverId::Rsn,
            SolverId::ZoRsn,
            SolverId::ZoRsnSqp,
            SolverId::ZohaGaussDc,
        ] {
            assert_eq!(id.to_string().parse::<SolverId>().unwrap(), id);
        }
        assert!("newton".parse::<SolverId>().is_err());
    }

    #[test]
    fn config_defaults_validate() {
        SolverConfig::default().validate().unwrap();
        SolverConfig::default().validate_for_dim(32).unwrap();
    }

    #[test]
    fn config_rejects_inverted_fields() {
        let mut c = SolverConfig {
            m: 5,
            m_max: 3,
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
        c.m_max = 5;
        c.validate().unwrap();
        assert!(c.validate_for_dim(4).is_err());

        let c = SolverConfig {
            lambda_min: 0.0,
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_toml_round_trip_uses_kebab_keys() {
        let text = "gamma = 0.5\nquery-budget = 123\nsketch-strategy = \"gaussian\"\n";
        let c: SolverConfig = toml::from_str(text).unwrap();
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.query_budget, 123);
        assert_eq!(c.sketch_strategy, SketchStrategy::Gaussian);
        assert_eq!(c.m, 3);
        let back = toml::to_string(&c).unwrap();
        assert!(back.contains("query-budget"), "{back}");

        let bad: std::result::Result<SolverConfig, _> = toml::from_str("stepsize = 2.0\n");
        assert!(bad.is_err(), "unknown keys must be rejected");
    }

    #[test]
    fn budget_snapshot_takes_last_record_before_crossing() {
        let trace = RunTrace {
            records: vec![record(0, 5.0, 1), record(1, 3.0, 40), record(2, 2.0, 90)],
            outcome: SolverOutcome::BudgetExhausted,
            final_x: array![0.0],
            max_box_violation: None,
        };
        assert_eq!(trace.value_at_query_budget(39), 5.0);
        assert_eq!(trace.value_at_query_budget(40), 3.0);
        assert_eq!(trace.value_at_query_budget(89), 3.0);
        assert_eq!(trace.value_at_query_budget(1_000), 2.0);
        assert_eq!(trace.final_f(), 2.0);
        assert_eq!(trace.total_queries(), 90);
    }
}
