//! Black-box objectives behind an exact query counter.
//!
//! Solvers in this crate see a function through [`CountedOracle::eval`] and
//! nothing else: no gradients, no Hessians, no structure. The counter is the
//! budget currency every benchmark is priced in, so its contract is strict:
//! one successful `eval` call is exactly one query, and nothing else ever
//! touches the count.
//!
//! Three built-in problem families cover the test surface:
//!
//! * [`QuadraticProblem`]: spectrum and basis are explicit, so curvature
//!   constants and the optimum are exact. The Hessian is constant, which
//!   makes finite-difference error terms vanish in theory checks.
//! * [`SmoothConvexProblem`]: a soft-plus sum with a genuinely nonzero
//!   third derivative, for exercising the curvature-drift terms.
//! * [`ToyAttackProblem`]: a margin loss over a small fixed classifier,
//!   piecewise affine and nonsmooth at the margin clamp, for exercising
//!   descent-checked solvers on terrain the smooth theory does not cover.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// A deterministic scalar-valued function of an n-vector.
///
/// Implementations must be pure: the same `x` yields the same value for the
/// lifetime of the instance. All solver-visible access goes through
/// [`CountedOracle`], which enforces the query accounting.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    /// Value at `x`. Callers must pass a vector of length `dim()`.
    fn value(&self, x: ArrayView1<f64>) -> f64;
}

/// An objective with analytic derivatives and known curvature constants,
/// used by the theory checks to compare estimates against ground truth.
/// Solvers never see this interface.
pub trait SmoothObjective: Objective {
    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64>;
    fn hessian(&self, x: ArrayView1<f64>) -> Array2<f64>;
    /// Lipschitz constant of the gradient (largest curvature).
    fn grad_lipschitz(&self) -> f64;
    /// Strong convexity constant (smallest curvature).
    fn strong_convexity(&self) -> f64;
    /// Lipschitz constant of the Hessian; zero exactly for quadratics.
    fn hess_lipschitz(&self) -> f64;
    fn optimum_value(&self) -> f64;
    fn optimum(&self) -> ArrayView1<'_, f64>;
    /// Orthonormal eigenbasis of the Hessian, when the Hessian is constant
    /// and the basis is known. Columns are eigenvectors.
    fn eigenbasis(&self) -> Option<&Array2<f64>> {
        None
    }
}

/// Query-counting wrapper around an [`Objective`].
///
/// The counter is private and moves only in [`eval`](Self::eval), by exactly
/// one per successful call. A dimension mismatch is rejected before the
/// underlying function runs and leaves the count untouched.
///
/// Each instance is single-owner mutable state: move it between threads
/// freely, but never share one across concurrent solvers.
pub struct CountedOracle {
    objective: Box<dyn Objective>,
    queries: u64,
}

impl CountedOracle {
    pub fn new(objective: impl Objective + 'static) -> Self {
        Self {
            objective: Box::new(objective),
            queries: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Cumulative number of successful evaluations.
    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Evaluate the objective at `x`, spending one query.
    pub fn eval(&mut self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let v = self.objective.value(x);
        self.queries += 1;
        Ok(v)
    }
}

/// Margin loss over class log-probabilities: how far class `label` is from
/// dominating every other class by `omega`.
///
/// Returns `max(max_{i != label} lp_i - lp_label, -omega)`. The value floors
/// at `-omega` exactly when the margin is met, and drops below zero as soon
/// as `label` is the top class. Differences of log-probabilities equal
/// differences of logits, so the loss is piecewise affine in the logits.
pub fn cw_loss(log_probs: ArrayView1<f64>, label: usize, omega: f64) -> Result<f64> {
    let c = log_probs.len();
    if c < 2 {
        return Err(Error::InvalidProblem(format!(
            "margin loss needs at least 2 classes, got {c}"
        )));
    }
    if label >= c {
        return Err(Error::InvalidProblem(format!(
            "label {label} out of range for {c} classes"
        )));
    }
    let best_other = log_probs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((best_other - log_probs[label]).max(-omega))
}

/// Numerically stable log-softmax: shifts by the max logit before
/// exponentiating, so huge logits cannot overflow.
fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    logits.mapv(|v| v - lse)
}

fn seeded_orthonormal_basis(n: usize, seed: u64) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Orthonormalizing n i.i.d. Gaussian columns gives a Haar-ish rotation;
    // collapse has probability zero, the retry cap only catches RNG misuse.
    for _ in 0..8u32 {
        let mut q = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
        if linalg::mgs_orthonormalize(&mut q, 0).is_ok() {
            return Ok(q);
        }
    }
    Err(Error::RankDeficientSketch { retries: 8 })
}

/// Convex quadratic `f(x) = x'Hx/2 + b.x` with the spectrum and eigenbasis
/// stored explicitly, so every curvature constant is exact by construction.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    /// Ascending is not required; `grad_lipschitz`/`strong_convexity` scan.
    eigenvalues: Array1<f64>,
    /// Columns are orthonormal eigenvectors; `H = basis diag(eig) basis'`.
    basis: Array2<f64>,
    linear: Array1<f64>,
    x_star: Array1<f64>,
    f_star: f64,
}

impl QuadraticProblem {
    /// Assemble from an explicit spectrum, eigenbasis, and linear term.
    ///
    /// Validates positivity of the spectrum, orthonormality of the basis
    /// (within `1e-10`), and that the computed optimum actually flattens the
    /// gradient.
    pub fn from_parts(
        eigenvalues: Array1<f64>,
        basis: Array2<f64>,
        linear: Array1<f64>,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(Error::InvalidProblem("empty spectrum".into()));
        }
        if basis.nrows() != n || basis.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: basis.nrows().max(basis.ncols()),
            });
        }
        if linear.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: linear.len(),
            });
        }
        for &l in eigenvalues.iter() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "spectrum must be positive and finite, got eigenvalue {l}"
                )));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let dot = basis.column(i).dot(&basis.column(j));
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-10 {
                    return Err(Error::InvalidProblem(format!(
                        "basis columns {i},{j} not orthonormal: dot {dot}"
                    )));
                }
            }
        }
        // x* = -H^{-1} b, cheap in the eigenbasis.
        let coeffs = basis.t().dot(&linear);
        let mut x_star = Array1::<f64>::zeros(n);
        for i in 0..n {
            x_star.scaled_add(-coeffs[i] / eigenvalues[i], &basis.column(i));
        }
        let mut p = Self {
            eigenvalues,
            basis,
            linear,
            x_star,
            f_star: 0.0,
        };
        p.f_star = p.value(p.x_star.view());
        let g = p.gradient(p.x_star.view());
        let worst = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = 1.0
            + p.grad_lipschitz() * p.x_star.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + p.linear.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst > 1e-10 * scale {
            return Err(Error::ContractViolation(format!(
                "gradient at computed optimum is {worst:e}, expected zero"
            )));
        }
        Ok(p)
    }

    /// `f(x) = ||x||^2 / 2`: identity Hessian, zero linear term.
    pub fn identity(n: usize) -> Self {
        Self::from_parts(Array1::ones(n), Array2::eye(n), Array1::zeros(n))
            .expect("identity quadratic is always valid")
    }

    /// Diagonal Hessian with the given positive entries, zero linear term.
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::from_parts(
            Array1::from_vec(entries.to_vec()),
            Array2::eye(entries.len()),
            Array1::zeros(entries.len()),
        )
    }

    /// Dense Hessian reconstructed from the stored spectrum and basis.
    pub fn hessian_matrix(&self) -> Array2<f64> {
        let n = self.dim();
        let mut h = Array2::<f64>::zeros((n, n));
        for k in 0..n {
            let v = self.basis.column(k);
            let l = self.eigenvalues[k];
            for r in 0..n {
                let lr = l * v[r];
                for c in 0..n {
                    h[[r, c]] += lr * v[c];
                }
            }
        }
        h
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let y = self.basis.t().dot(&x);
        let mut f = self.linear.dot(&x);
        for i in 0..y.len() {
            f += 0.5 * self.eigenvalues[i] * y[i] * y[i];
        }
        f
    }
}

impl SmoothObjective for QuadraticProblem {
    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let y = self.basis.t().dot(&x);
        let mut g = self.linear.clone();
        for i in 0..y.len() {
            g.scaled_add(self.eigenvalues[i] * y[i], &self.basis.column(i));
        }
        g
    }

    fn hessian(&self, _x: ArrayView1<f64>) -> Array2<f64> {
        self.hessian_matrix()
    }

    fn grad_lipschitz(&self) -> f64 {
        self.eigenvalues.fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    fn strong_convexity(&self) -> f64 {
        self.eigenvalues.fold(f64::INFINITY, |a, &b| a.min(b))
    }

    fn hess_lipschitz(&self) -> f64 {
        0.0
    }

    fn optimum_value(&self) -> f64 {
        self.f_star
    }

    fn optimum(&self) -> ArrayView1<'_, f64> {
        self.x_star.view()
    }

    fn eigenbasis(&self) -> Option<&Array2<f64>> {
        Some(&self.basis)
    }
}

/// Convex quadratic with a seeded random eigenbasis and a chosen spectrum.
///
/// The linear term is zero, so the optimum is the origin with value zero.
pub fn make_quadratic(n: usize, spectrum: &[f64], seed: u64) -> Result<QuadraticProblem> {
    if spectrum.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: spectrum.len(),
        });
    }
    let basis = seeded_orthonormal_basis(n, seed)?;
    QuadraticProblem::from_parts(Array1::from_vec(spectrum.to_vec()), basis, Array1::zeros(n))
}

/// Strongly convex soft-plus sum with a genuinely varying Hessian:
///
/// ```text
/// f(x) = sum_i log(1 + exp(a_i . x)) + ||x||^2 / 2
/// ```
///
/// with `2n` seeded rows `a_i` scaled to unit-ish norm. The curvature
/// constants are derived from the rows:
///
/// * Strong convexity is exactly 1: each soft-plus term has nonnegative
///   curvature `s''(t) = sigma(t)(1 - sigma(t)) >= 0` on top of the
///   quadratic's identity Hessian.
/// * Gradient Lipschitz constant: `s'' <= 1/4`, so the Hessian is bounded
///   by `I + (1/4) sum_i a_i a_i'`; we take `1 + lambda_max(A'A)/4` with
///   the Gram eigenvalue computed exactly from the rows.
/// * Hessian Lipschitz constant: `|s'''(t)| <= 1/(6 sqrt(3))` (maximize
///   `u(1-u)(1-2u)` over `u = sigma(t)` in `[0,1]`), and each term's
///   Hessian moves at rate `|s'''| ||a_i|| ||a_i a_i'||`, giving
///   `L2 = sum_i ||a_i||^3 / (6 sqrt(3))`, finite and positive.
///
/// The optimum has no closed form; the constructor runs a guarded exact
/// Newton iteration to `1e-12` gradient sup-norm and caches the result.
#[derive(Debug, Clone)]
pub struct SmoothConvexProblem {
    rows: Array2<f64>,
    l1: f64,
    l2: f64,
    x_star: Array1<f64>,
    f_star: f64,
}

/// Stable `log(1 + exp(t))`.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl SmoothConvexProblem {
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        let k = 2 * n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (n as f64).sqrt();
        let rows =
            Array2::from_shape_fn((k, n), |_| scale * rng.sample::<f64, _>(StandardNormal));

        let gram = rows.t().dot(&rows);
        let top = linalg::sym_eig(gram.view())?
            .values
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let l1 = 1.0 + 0.25 * top;
        let l2 = rows
            .rows()
            .into_iter()
            .map(|a| a.dot(&a).sqrt().powi(3))
            .sum::<f64>()
            / (6.0 * 3.0f64.sqrt());

        let mut p = Self {
            rows,
            l1,
            l2,
            x_star: Array1::zeros(n),
            f_star: 0.0,
        };
        p.locate_optimum()?;
        Ok(p)
    }

    /// Exact Newton with a halving backtrack, from the origin. The
    /// backtrack accepts on gradient-norm decrease rather than function
    /// decrease: near the optimum, function differences sink under float
    /// noise long before the gradient target of 1e-12 does.
    fn locate_optimum(&mut self) -> Result<()> {
        let mut x = Array1::<f64>::zeros(self.dim());
        let mut g = self.gradient(x.view());
        let mut g_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..100 {
            if g_norm <= 1e-12 {
                self.x_star = x;
                self.f_star = self.value(self.x_star.view());
                return Ok(());
            }
            let h = self.hessian(x.view());
            let d = linalg::solve_spd(h.view(), (-&g).view(), None)?;
            let mut t = 1.0;
            loop {
                let trial = &x + &(&d * t);
                let gt = self.gradient(trial.view());
                let gt_norm = gt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if gt_norm < g_norm {
                    x = trial;
                    g = gt;
                    g_norm = gt_norm;
                    break;
                }
                t *= 0.5;
                if t < 1e-8 {
                    return Err(Error::NoConvergence { sweeps: 100 });
                }
            }
        }
        Err(Error::NoConvergence { sweeps: 100 })
    }
}

impl Objective for SmoothConvexProblem {
    fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut f = 0.5 * x.dot(&x);
        for a in self.rows.rows() {
            f += softplus(a.dot(&x));
        }
        f
    }
}

impl SmoothObjective for SmoothConvexProblem {
    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut g = x.to_owned();
        for a in self.rows.rows() {
            g.scaled_add(sigmoid(a.dot(&x)), &a);
        }
        g
    }

    fn hessian(&self, x: ArrayView1<f64>) -> Array2<f64> {
        let n = self.dim();
        let mut h = Array2::<f64>::eye(n);
        for a in self.rows.rows() {
            let s = sigmoid(a.dot(&x));
            let w = s * (1.0 - s);
            for r in 0..n {
                let wr = w * a[r];
                for c in 0..n {
                    h[[r, c]] += wr * a[c];
                }
            }
        }
        h
    }

    fn grad_lipschitz(&self) -> f64 {
        self.l1
    }

    fn strong_convexity(&self) -> f64 {
        1.0
    }

    fn hess_lipschitz(&self) -> f64 {
        self.l2
    }

    fn optimum_value(&self) -> f64 {
        self.f_star
    }

    fn optimum(&self) -> ArrayView1<'_, f64> {
        self.x_star.view()
    }
}

/// Number of classes in the toy classifier.
pub const TOY_CLASSES: usize = 10;

/// Margin loss of a fixed softmax classifier inside an l-infinity ball.
///
/// The classifier is a single affine layer: seeded standard-normal weights
/// (c = 10 rows) and bias, followed by softmax. The natural example has
/// entries uniform on `[0, 1)` from its own seed, so one classifier
/// (`weights_seed`) serves many instances (`seed`). The objective is
/// [`cw_loss`] over the log-probabilities at `x`, which is piecewise affine
/// in `x` and floors at `-omega` exactly when class `label` dominates every
/// other class by the margin.
#[derive(Debug, Clone)]
pub struct ToyAttackProblem {
    weights: Array2<f64>,
    bias: Array1<f64>,
    x_nat: Array1<f64>,
    label: usize,
    epsilon: f64,
    omega: f64,
}

impl ToyAttackProblem {
    pub fn new(
        n: usize,
        seed: u64,
        weights_seed: u64,
        epsilon: f64,
        omega: f64,
        label: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        if label >= TOY_CLASSES {
            return Err(Error::InvalidProblem(format!(
                "label {label} out of range for {TOY_CLASSES} classes"
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "perturbation radius must be positive, got {epsilon}"
            )));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "margin must be positive, got {omega}"
            )));
        }
        let mut wrng = ChaCha8Rng::seed_from_u64(weights_seed);
        let weights =
            Array2::from_shape_fn((TOY_CLASSES, n), |_| wrng.sample::<f64, _>(StandardNormal));
        let bias = Array1::from_shape_fn(TOY_CLASSES, |_| wrng.sample::<f64, _>(StandardNormal));
        let mut xrng = ChaCha8Rng::seed_from_u64(seed);
        let x_nat = Array1::from_shape_fn(n, |_| xrng.random_range(0.0..1.0));
        Ok(Self {
            weights,
            bias,
            x_nat,
            label,
            epsilon,
            omega,
        })
    }

    /// Build an instance whose target label is the runner-up class at the
    /// natural example: close enough to the decision boundary that the
    /// margin is reachable, but never met at the start.
    pub fn with_runner_up_label(
        n: usize,
        seed: u64,
        weights_seed: u64,
        epsilon: f64,
        omega: f64,
    ) -> Result<Self> {
        let mut p = Self::new(n, seed, weights_seed, epsilon, omega, 0)?;
        let lp = p.log_probabilities(p.x_nat.view());
        let mut order: Vec<usize> = (0..TOY_CLASSES).collect();
        order.sort_by(|&i, &j| lp[j].partial_cmp(&lp[i]).expect("finite log-probs"));
        p.label = order[1];
        Ok(p)
    }

    pub fn x_nat(&self) -> ArrayView1<'_, f64> {
        self.x_nat.view()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn log_probabilities(&self, x: ArrayView1<f64>) -> Array1<f64> {
        log_softmax((self.weights.dot(&x) + &self.bias).view())
    }

    /// Softmax output: nonnegative entries summing to one.
    pub fn probabilities(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.log_probabilities(x).mapv(f64::exp)
    }

    pub fn predicted_class(&self, x: ArrayView1<f64>) -> usize {
        let lp = self.log_probabilities(x);
        (0..lp.len())
            .max_by(|&i, &j| lp[i].partial_cmp(&lp[j]).expect("finite log-probs"))
            .expect("at least one class")
    }
}

impl Objective for ToyAttackProblem {
    fn dim(&self) -> usize {
        self.x_nat.len()
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let lp = self.log_probabilities(x);
        cw_loss(lp.view(), self.label, self.omega).expect("validated at construction")
    }
}

/// Serializable description of a benchmark problem. Building the same
/// descriptor always yields the same function, so a descriptor plus solver
/// seeds pins down a run completely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Seeded-basis quadratic; see [`make_quadratic`].
    #[serde(rename = "quadratic")]
    Quadratic {
        n: usize,
        seed: u64,
        spectrum: Vec<f64>,
    },
    /// Soft-plus sum; see [`SmoothConvexProblem`].
    #[serde(rename = "smooth-convex")]
    SmoothConvex { n: usize, seed: u64 },
    /// Classifier margin attack; see [`ToyAttackProblem`].
    #[serde(rename = "toy-attack")]
    ToyAttack {
        n: usize,
        seed: u64,
        #[serde(rename = "weights-seed")]
        weights_seed: u64,
        epsilon: f64,
        omega: f64,
        label: usize,
    },
}

/// A problem built from a [`ProblemSpec`], ready to hand to solvers.
#[derive(Debug, Clone)]
pub enum Problem {
    Quadratic(QuadraticProblem),
    SmoothConvex(SmoothConvexProblem),
    ToyAttack(ToyAttackProblem),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match self {
            Self::Quadratic { n, seed, spectrum } => {
                Ok(Problem::Quadratic(make_quadratic(*n, spectrum, *seed)?))
            }
            Self::SmoothConvex { n, seed } => {
                Ok(Problem::SmoothConvex(SmoothConvexProblem::new(*n, *seed)?))
            }
            Self::ToyAttack {
                n,
                seed,
                weights_seed,
                epsilon,
                omega,
                label,
            } => Ok(Problem::ToyAttack(ToyAttackProblem::new(
                *n,
                *seed,
                *weights_seed,
                *epsilon,
                *omega,
                *label,
            )?)),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Quadratic { .. } => "quadratic",
            Self::SmoothConvex { .. } => "smooth-convex",
            Self::ToyAttack { .. } => "toy-attack",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { n, .. } | Self::SmoothConvex { n, .. } | Self::ToyAttack { n, .. } => {
                *n
            }
        }
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(p) => p.dim(),
            Self::SmoothConvex(p) => p.dim(),
            Self::ToyAttack(p) => p.dim(),
        }
    }

    /// Fresh oracle with a zero query count over a copy of the objective.
    pub fn oracle(&self) -> CountedOracle {
        match self {
            Self::Quadratic(p) => CountedOracle::new(p.clone()),
            Self::SmoothConvex(p) => CountedOracle::new(p.clone()),
            Self::ToyAttack(p) => CountedOracle::new(p.clone()),
        }
    }

    /// The smooth view, when the problem has analytic derivatives.
    pub fn as_smooth(&self) -> Option<&dyn SmoothObjective> {
        match self {
            Self::Quadratic(p) => Some(p),
            Self::SmoothConvex(p) => Some(p),
            Self::ToyAttack(_) => None,
        }
    }

    pub fn as_attack(&self) -> Option<&ToyAttackProblem> {
        match self {
            Self::ToyAttack(p) => Some(p),
            _ => None,
        }
    }
}

/// Rotation by `theta` in the (i, j) coordinate plane: handy orthonormal
/// bases for tests that need something other than the identity.
pub fn plane_rotation(n: usize, i: usize, j: usize, theta: f64) -> Array2<f64> {
    assert!(i < n && j < n && i != j);
    let mut q = Array2::<f64>::eye(n);
    let (s, c) = theta.sin_cos();
    q[[i, i]] = c;
    q[[j, j]] = c;
    q[[i, j]] = -s;
    q[[j, i]] = s;
    q
}

/// Deterministic nontrivial rotation used by a few fixtures.
pub fn fixture_rotation(n: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::eye(n);
    for i in 0..n.saturating_sub(1) {
        q = q.dot(&plane_rotation(n, i, i + 1, PI / (3.0 + i as f64)));
    }
    q
}
