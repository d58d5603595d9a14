//! Closed-form rate machinery for the sketched Newton family.
//!
//! The solvers in this crate come with a contraction analysis built from a
//! handful of problem constants. This module computes those closed forms
//! (one-step contraction constants, iteration-count bounds, the
//! bias-balancing finite-difference step, speedup ratios against the
//! Gaussian-smoothing baseline), evaluates the subspace spectral quantity
//! `rho` the rates depend on, and produces pass/fail reports that compare
//! the bounds against exact derivatives and sampled sketches.
//!
//! Everything here is deterministic: pure arithmetic on [`TheoryInputs`],
//! or seeded sampling with sequential accumulation.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::estimators::{build_model, model_error};
use crate::linalg::sym_eig;
use crate::oracle::Problem;
use crate::sketch::{
    coordinate_sketch, draw_sketch, eigen_sketch_with_indices, eigenvector_sketch, SketchStrategy,
};
use crate::{Error, Result};

/// Eigenvalues of an averaged projector below this fraction of the largest
/// one are treated as exactly zero when taking the smallest nonzero
/// eigenvalue.
pub const EIGENVALUE_CUTOFF: f64 = 1e-10;

/// Largest subset count [`rho_exact`] will enumerate before directing the
/// caller to [`rho_mc`].
pub const ENUMERATION_CAP: u128 = 100_000;

/// Problem and solver constants the closed-form bounds are built from.
///
/// `mu`, `l1`, `l2` are the strong-convexity, gradient-Lipschitz, and
/// Hessian-Lipschitz constants of the objective. `mu_hat` and `l_hat`
/// bound the relative convexity and smoothness of the objective against
/// its own Hessian metric. `rho` is the smallest nonzero eigenvalue of the
/// sketch distribution's averaged projector (see [`rho_exact`]). `sigma`
/// splits the per-step contraction between progress and estimation bias,
/// `delta` splits the target accuracy `epsilon` the same way, `lambda_s1`
/// is the spectral tail bound entering the baseline's rate, `f0_gap` is
/// the starting suboptimality, and `omega` is the attack margin carried
/// alongside for benchmark bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TheoryInputs {
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub l1: f64,
    pub l2: f64,
    pub mu_hat: f64,
    pub l_hat: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub rho: f64,
    pub delta: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub lambda_s1: f64,
    pub f0_gap: f64,
    pub omega: f64,
}

impl TheoryInputs {
    /// Reference configuration for an identity-spectrum quadratic sketched
    /// in its own eigenbasis: unit problem constants, exact relative
    /// conditioning, `rho = m/n`, and an even progress/accuracy split.
    pub fn quadratic_reference(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            mu: 1.0,
            l1: 1.0,
            l2: 0.0,
            mu_hat: 1.0,
            l_hat: 1.0,
            gamma: 1.0,
            alpha: 0.0,
            rho: m as f64 / n as f64,
            delta: 0.5,
            sigma: 0.5,
            epsilon: 1e-6,
            lambda_s1: 1.0,
            f0_gap: 1.0,
            omega: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |ineq: String| Err(Error::InfeasibleParameters(ineq));
        if self.n == 0 || self.m == 0 || self.m > self.n {
            return fail(format!("1 <= m <= n (got m = {}, n = {})", self.m, self.n));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return fail(format!("mu > 0 (got {})", self.mu));
        }
        for (name, v) in [("l1", self.l1), ("l2", self.l2), ("lambda-s1", self.lambda_s1)] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} >= 0 and finite (got {v})"));
            }
        }
        if !(self.mu_hat > 0.0) || !self.mu_hat.is_finite() {
            return fail(format!("mu-hat > 0 (got {})", self.mu_hat));
        }
        if !(self.l_hat >= self.mu_hat) || !self.l_hat.is_finite() {
            return fail(format!(
                "mu-hat <= l-hat (got mu-hat = {}, l-hat = {})",
                self.mu_hat, self.l_hat
            ));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return fail(format!("gamma > 0 (got {})", self.gamma));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return fail(format!("alpha >= 0 and finite (got {})", self.alpha));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return fail(format!("rho in (0, 1] (got {})", self.rho));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta in (0, 1) (got {})", self.delta));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return fail(format!("sigma in (0, 1) (got {})", self.sigma));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return fail(format!("epsilon > 0 (got {})", self.epsilon));
        }
        if !(self.f0_gap > 0.0) || !self.f0_gap.is_finite() {
            return fail(format!("f0-gap > 0 (got {})", self.f0_gap));
        }
        if !self.omega.is_finite() {
            return fail(format!("omega finite (got {})", self.omega));
        }
        Ok(())
    }

    /// `rho * mu_hat * gamma`: the contraction available per step before
    /// finite-difference bias eats into it.
    fn drive(&self) -> f64 {
        self.rho * self.mu_hat * self.gamma
    }

    /// `log(f0_gap / ((1 - delta) epsilon))`, the shared factor of every
    /// iteration bound; nonpositive when the start is already good enough.
    fn log_gap(&self) -> f64 {
        (self.f0_gap / ((1.0 - self.delta) * self.epsilon)).ln()
    }
}

/// One-step contraction constants of the finite-difference sketched Newton
/// analysis. `b` collects the Hessian-estimation term; `c1` scales the bias
/// linear in the probe step, `c2` and `c3` the quadratic terms (`c2` enters
/// the accuracy floor, `c3` the rate denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

pub fn rate_constants(t: &TheoryInputs) -> RateConstants {
    let m = t.m as f64;
    let rm = m.sqrt();
    let b = 10.0 * m * t.l2 / (3.0 * t.mu);
    let c1 = t.gamma * (rm * t.l1 + b) / (2.0 * t.mu);
    let c2 = t.gamma * t.l1 * t.l1 * (m + rm * (1.0 + b)) / (2.0 * t.mu * t.mu);
    let c3 = t.gamma * t.l1 * (rm * t.l1 * (1.0 + b) + b * (2.0 + b)) / (2.0 * t.mu * t.mu);
    RateConstants { b, c1, c2, c3 }
}

/// Iteration count sufficient to reach `(1 - delta) epsilon` suboptimality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationBound {
    /// Ceiling of `log(gap) / log(1 / factor)`, the exact geometric count.
    pub exact: u64,
    /// Ceiling of `beta1 * log(gap)`; upper bounds `exact` because
    /// `log(1/(1-x)) >= x`.
    pub linearized: u64,
    /// `1 / (rho mu_hat gamma - alpha C1 - alpha^2 C3)`.
    pub beta1: f64,
    /// Per-step contraction factor `1 - rho mu_hat gamma + alpha C1 + alpha^2 C3`.
    pub factor: f64,
}

/// Both forms of the sketched-Newton iteration bound at the configured
/// finite-difference step.
///
/// Errors name the violated inequality when `alpha` is too large for the
/// contraction to survive, exceeds the cap `0.3 mu / (m L2)` that the
/// Hessian-estimation analysis needs, or leaves an accuracy floor above
/// `delta * epsilon`.
pub fn iteration_bound(t: &TheoryInputs) -> Result<IterationBound> {
    t.validate()?;
    let c = rate_constants(t);
    let drive = t.drive();
    let bias = t.alpha * c.c1 + t.alpha * t.alpha * c.c3;
    if bias >= drive {
        return Err(Error::InfeasibleParameters(format!(
            "alpha C1 + alpha^2 C3 < rho mu-hat gamma (got {bias} vs {drive})"
        )));
    }
    if t.l2 > 0.0 {
        let cap = 0.3 * t.mu / (t.m as f64 * t.l2);
        if t.alpha > cap {
            return Err(Error::InfeasibleParameters(format!(
                "alpha <= 0.3 mu / (m L2) (got {} vs cap {cap})",
                t.alpha
            )));
        }
    }
    let denom = drive - bias;
    let floor = t.alpha * (c.c1 + c.c2 * t.alpha) / denom;
    if floor > t.delta * t.epsilon {
        return Err(Error::InfeasibleParameters(format!(
            "alpha (C1 + C2 alpha) / (rho mu-hat gamma - alpha C1 - alpha^2 C3) <= delta epsilon \
             (got {floor} vs {})",
            t.delta * t.epsilon
        )));
    }
    let log_gap = t.log_gap();
    let factor = 1.0 - denom;
    let beta1 = 1.0 / denom;
    let (exact, linearized) = if log_gap <= 0.0 {
        (0, 0)
    } else if factor <= 0.0 {
        (1, (beta1 * log_gap).ceil() as u64)
    } else {
        (
            (log_gap / (1.0 / factor).ln()).ceil() as u64,
            (beta1 * log_gap).ceil() as u64,
        )
    };
    Ok(IterationBound {
        exact,
        linearized,
        beta1,
        factor,
    })
}

/// Iteration count for the eigenvector-sketch setting in closed form:
/// `ceil((n l_hat / (sigma m mu_hat)) log(f0_gap / ((1 - delta) epsilon)))`.
///
/// This is [`iteration_bound`] specialized to `rho = m/n`, `gamma = 1/l_hat`,
/// with the rate denominator collapsed to `sigma rho mu_hat gamma`; that
/// collapse is exact for the `solved_alpha` of [`alpha_identity`] in its
/// `C2` form, and conservative for the stated step on quadratics.
pub fn eigen_sketch_bound(t: &TheoryInputs) -> u64 {
    let log_gap = t.log_gap();
    if log_gap <= 0.0 {
        return 0;
    }
    let beta = t.n as f64 * t.l_hat / (t.sigma * t.m as f64 * t.mu_hat);
    (beta * log_gap).ceil() as u64
}

/// The finite-difference step that spends exactly a `(1 - sigma)` fraction
/// of the available contraction on estimation bias:
/// `alpha = (sqrt(C1^2/4 + (1 - sigma) rho mu_hat gamma) - C1/2) / C2`.
///
/// Positive for every `sigma` in (0, 1); vanishes as `sigma -> 1`.
pub fn balanced_alpha(t: &TheoryInputs) -> Result<f64> {
    t.validate()?;
    let c = rate_constants(t);
    if c.c2 <= 0.0 {
        return Err(Error::InvalidProblem(format!(
            "degenerate curvature: C2 = 0 because L1 = {}; no bias to balance",
            t.l1
        )));
    }
    Ok(((c.c1 * c.c1 / 4.0 + (1.0 - t.sigma) * t.drive()).sqrt() - c.c1 / 2.0) / c.c2)
}

/// Residuals of the contraction identity that the balanced step is meant
/// to satisfy: `rho mu_hat gamma - alpha C1 - alpha^2 C = sigma rho mu_hat
/// gamma`, with `C` either of the two quadratic constants.
///
/// The stated step [`balanced_alpha`] is the root of
/// `C2^2 alpha^2 + C1 C2 alpha = (1 - sigma) rho mu_hat gamma` (its radical
/// carries no factor of `C2`), so it leaves the identity with a residual of
/// `(1 - sigma) rho mu_hat gamma (1 - 1/C2)` in the `C2` form; the residual
/// vanishes only at `C2 = 1`. Restoring the factor gives `solved_alpha`,
/// the root of `C2 alpha^2 + C1 alpha = (1 - sigma) rho mu_hat gamma`,
/// which satisfies the `C2` form exactly; its `C3` form still misses by
/// `alpha^2 |C2 - C3|` because the rate denominator uses the other
/// constant. All three residuals are reported rather than assumed away.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaIdentity {
    /// The stated step, exactly as [`balanced_alpha`] returns it.
    pub alpha: f64,
    /// Root of `C2 alpha^2 + C1 alpha = (1 - sigma) rho mu_hat gamma`.
    pub solved_alpha: f64,
    /// `sigma rho mu_hat gamma`; equals `sigma m mu_hat / (n l_hat)` in the
    /// eigenvector-sketch setting at `gamma = 1/l_hat`.
    pub target: f64,
    /// `drive - a C1 - a^2 C2` at `solved_alpha`; matches `target` to
    /// rounding.
    pub c2_form: f64,
    /// `drive - a C1 - a^2 C3` at `solved_alpha`.
    pub c3_form: f64,
    /// The `C2` form at the stated `alpha`.
    pub printed_form: f64,
    pub c2_residual: f64,
    pub c3_residual: f64,
    pub printed_residual: f64,
}

pub fn alpha_identity(t: &TheoryInputs) -> Result<AlphaIdentity> {
    let c = rate_constants(t);
    let alpha = balanced_alpha(t)?;
    let drive = t.drive();
    let target = t.sigma * drive;
    let solved_alpha =
        ((c.c1 * c.c1 / 4.0 + c.c2 * (1.0 - t.sigma) * drive).sqrt() - c.c1 / 2.0) / c.c2;
    let left = |a: f64, cq: f64| drive - a * c.c1 - a * a * cq;
    let c2_form = left(solved_alpha, c.c2);
    let c3_form = left(solved_alpha, c.c3);
    let printed_form = left(alpha, c.c2);
    Ok(AlphaIdentity {
        alpha,
        solved_alpha,
        target,
        c2_form,
        c3_form,
        printed_form,
        c2_residual: (c2_form - target).abs(),
        c3_residual: (c3_form - target).abs(),
        printed_residual: (printed_form - target).abs(),
    })
}

/// Iteration bound of the Gaussian-smoothing power-iteration baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineBound {
    /// `64 (n + 2)(mu + 10 lambda_s1) / (mu m)`.
    pub beta2: f64,
    pub iterations: u64,
}

pub fn zoha_pw_bound(t: &TheoryInputs) -> BaselineBound {
    let n = t.n as f64;
    let m = t.m as f64;
    let beta2 = 64.0 * (n + 2.0) * (t.mu + 10.0 * t.lambda_s1) / (t.mu * m);
    let log_gap = t.log_gap();
    let iterations = if log_gap <= 0.0 {
        0
    } else {
        (beta2 * log_gap).ceil() as u64
    };
    BaselineBound { beta2, iterations }
}

/// Closed-form advantage of the sketched method over the baseline, as the
/// ratio of the two iteration bounds and of the two query bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupFactors {
    /// `32 (1 + 2/n)(1 + 10 lambda_s1 / mu)`.
    pub iteration: f64,
    /// `128 (1 + 2/n)(1 + 10 lambda_s1 / mu) / (m + 1)`; equals
    /// `4 * iteration / (m + 1)`.
    pub query: f64,
    /// Whether the query bound still favors the sketched method, i.e.
    /// `m < 128 (1 + 10 lambda_s1 / mu) - 1`.
    pub query_advantage: bool,
}

pub fn speedup_factors(t: &TheoryInputs) -> SpeedupFactors {
    let n = t.n as f64;
    let m = t.m as f64;
    let tail = 1.0 + 10.0 * t.lambda_s1 / t.mu;
    let shared = (1.0 + 2.0 / n) * tail;
    SpeedupFactors {
        iteration: 32.0 * shared,
        query: 128.0 * shared / (m + 1.0),
        query_advantage: m < 128.0 * tail - 1.0,
    }
}

/// `C(n, m)` with saturation at `u128::MAX`.
fn subset_count(n: usize, m: usize) -> u128 {
    let m = m.min(n - m);
    let mut c: u128 = 1;
    for i in 0..m {
        // c * (n - i) / (i + 1) stays integral at every step
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// Visit every m-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, m: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        f(&idx)?;
        let mut i = m;
        while i > 0 && idx[i - 1] == n - m + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return Ok(());
        }
        idx[i - 1] += 1;
        for j in i..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Symmetric square root of a positive semidefinite matrix.
fn psd_sqrt(h: ArrayView2<f64>) -> Result<Array2<f64>> {
    let eig = sym_eig(h)?;
    let lmax = eig.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let n = h.nrows();
    let mut root = Array2::<f64>::zeros((n, n));
    for (i, &l) in eig.values.iter().enumerate() {
        if l < -EIGENVALUE_CUTOFF * lmax {
            return Err(Error::InvalidProblem(format!(
                "needs a positive semidefinite matrix, found eigenvalue {l}"
            )));
        }
        let w = l.max(0.0).sqrt();
        if w == 0.0 {
            continue;
        }
        let v = eig.vectors.column(i);
        for r in 0..n {
            let vr = w * v[r];
            for c in 0..n {
                root[[r, c]] += vr * v[c];
            }
        }
    }
    Ok(root)
}

/// Pseudo-inverse of a symmetric matrix, zeroing eigenvalues below
/// `EIGENVALUE_CUTOFF` times the largest magnitude.
fn sym_pinv(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let eig = sym_eig(a)?;
    let lmax = eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cut = EIGENVALUE_CUTOFF * lmax;
    let n = a.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for (i, &l) in eig.values.iter().enumerate() {
        if l.abs() <= cut || lmax == 0.0 {
            continue;
        }
        let v = eig.vectors.column(i);
        let w = 1.0 / l;
        for r in 0..n {
            let vr = w * v[r];
            for c in 0..n {
                inv[[r, c]] += vr * v[c];
            }
        }
    }
    Ok(inv)
}

/// The metric projector of one sketch:
/// `H^{1/2} S (S' H S)^+ S' H^{1/2}`.
fn projector(h_half: &Array2<f64>, h: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array2<f64>> {
    let hs = h.dot(&s);
    let shs = s.t().dot(&hs);
    let pinv = sym_pinv(shs.view())?;
    let hhs = h_half.dot(&s);
    Ok(hhs.dot(&pinv).dot(&hhs.t()))
}

/// Smallest eigenvalue above `EIGENVALUE_CUTOFF` times the largest.
fn lambda_plus_min(a: ArrayView2<f64>) -> Result<f64> {
    let eig = sym_eig(a)?;
    let lmax = eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cut = EIGENVALUE_CUTOFF * lmax;
    eig.values
        .iter()
        .copied()
        .filter(|&l| l > cut)
        .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.min(l))))
        .ok_or_else(|| {
            Error::InvalidProblem("averaged projector is numerically zero".into())
        })
}

fn check_rho_shape(h: &ArrayView2<f64>, m: usize) -> Result<usize> {
    let n = h.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidSketch(format!(
            "need 1 <= m <= n = {n}, got m = {m}"
        )));
    }
    Ok(n)
}

/// Smallest nonzero eigenvalue of the averaged metric projector, by exact
/// enumeration of every size-m subset the strategy can draw.
///
/// Coordinate sketches enumerate index subsets; eigenvector sketches
/// enumerate subsets of the matrix's own eigenbasis (for which the
/// averaged projector is `(m/n) I`, so the result is `m/n`). Gaussian
/// sketches have no finite enumeration.
pub fn rho_exact(h: ArrayView2<f64>, strategy: SketchStrategy, m: usize) -> Result<f64> {
    let n = check_rho_shape(&h, m)?;
    let subsets = subset_count(n, m);
    if subsets > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            subsets,
            cap: ENUMERATION_CAP,
        });
    }
    let basis = match strategy {
        SketchStrategy::Coordinate => None,
        SketchStrategy::Eigen => Some(sym_eig(h)?.vectors),
        SketchStrategy::Gaussian => {
            return Err(Error::UnsupportedSketch(
                "a Gaussian sketch draws from a continuum; use the Monte Carlo estimator".into(),
            ))
        }
    };
    let h_half = psd_sqrt(h)?;
    let mut total = Array2::<f64>::zeros((n, n));
    for_each_subset(n, m, |idx| {
        let s = match &basis {
            None => coordinate_sketch(n, idx)?,
            Some(b) => eigen_sketch_with_indices(b.view(), idx)?,
        };
        total += &projector(&h_half, h, s.matrix())?;
        Ok(())
    })?;
    total /= subsets as f64;
    lambda_plus_min(total.view())
}

/// Monte Carlo estimate of the same quantity as [`rho_exact`], with a
/// delete-one-group jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Estimate the smallest nonzero eigenvalue of the averaged metric
/// projector from `samples` seeded sketch draws (the same distributions
/// the solvers draw from). Accumulation is sequential, so a seed pins the
/// result down exactly.
///
/// The standard error comes from a delete-one-group jackknife over up to
/// 200 round-robin groups; with few samples each group is a single draw.
pub fn rho_mc(
    h: ArrayView2<f64>,
    strategy: SketchStrategy,
    m: usize,
    samples: u64,
    seed: u64,
) -> Result<RhoEstimate> {
    let n = check_rho_shape(&h, m)?;
    if samples < 100 {
        return Err(Error::InfeasibleParameters(format!(
            "samples >= 100 (got {samples})"
        )));
    }
    let basis = match strategy {
        SketchStrategy::Eigen => Some(sym_eig(h)?.vectors),
        _ => None,
    };
    let h_half = psd_sqrt(h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = samples.min(200) as usize;
    let mut total = Array2::<f64>::zeros((n, n));
    let mut group_total = vec![Array2::<f64>::zeros((n, n)); groups];
    let mut group_size = vec![0u64; groups];
    for i in 0..samples {
        let s = match &basis {
            Some(b) => eigenvector_sketch(b.view(), m, &mut rng)?,
            None => draw_sketch(strategy, n, m, &mut rng)?,
        };
        let p = projector(&h_half, h, s.matrix())?;
        total += &p;
        let g = (i % groups as u64) as usize;
        group_total[g] += &p;
        group_size[g] += 1;
    }
    let mean = &total / samples as f64;
    let estimate = lambda_plus_min(mean.view())?;
    let mut thetas = Vec::with_capacity(groups);
    for g in 0..groups {
        let left = samples - group_size[g];
        if left == 0 {
            continue;
        }
        let rest = (&total - &group_total[g]) / left as f64;
        thetas.push(lambda_plus_min(rest.view())?);
    }
    let g = thetas.len() as f64;
    let mean_theta = thetas.iter().sum::<f64>() / g;
    let var = thetas
        .iter()
        .map(|t| (t - mean_theta).powi(2))
        .sum::<f64>()
        * (g - 1.0)
        / g;
    Ok(RhoEstimate {
        estimate,
        stderr: var.sqrt(),
    })
}

/// One named check with its draw count and worst bound utilization.
/// `max_ratio` is the largest observed error/bound ratio (0 when every
/// bound in the check was vacuously exact).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub trials: u64,
    pub max_ratio: f64,
    pub passed: bool,
}

/// Result of [`verify_fd_bounds`]: one report per estimator bound, plus a
/// description of the first violating draw if any bound failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdBoundsReport {
    pub gradient: CheckReport,
    pub hessian: CheckReport,
    pub counterexample: Option<String>,
}

/// Check the finite-difference estimator error bounds against exact
/// derivatives over seeded random draws of the point, the sketch, and the
/// probe step (cycled through `alpha_grid`).
///
/// The gradient estimate must sit within `sqrt(m) alpha L1 / 2` of the
/// sketched gradient and the Hessian estimate within `5 m alpha L2 / 3` of
/// the sketched Hessian (spectral norm), both with absolute slack 1e-9.
/// `L2 = 0` makes the Hessian bound exact and its ratio vacuous.
pub fn verify_fd_bounds(
    problem: &Problem,
    trials: u64,
    alpha_grid: &[f64],
    seed: u64,
) -> Result<FdBoundsReport> {
    let smooth = problem.as_smooth().ok_or_else(|| {
        Error::InvalidProblem("bound checks need a problem with exact derivative access".into())
    })?;
    if trials == 0 {
        return Err(Error::InfeasibleParameters("trials >= 1 (got 0)".into()));
    }
    if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::InfeasibleParameters(format!(
            "alpha grid entries positive and finite (got {alpha_grid:?})"
        )));
    }
    let n = problem.dim();
    let l1 = smooth.grad_lipschitz();
    let l2 = smooth.hess_lipschitz();
    const SLACK: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle = problem.oracle();
    let m_cap = n.min(8);
    let mut max_g_ratio = 0.0f64;
    let mut max_h_ratio = 0.0f64;
    let mut g_passed = true;
    let mut h_passed = true;
    let mut counterexample = None;
    for i in 0..trials {
        let m = rng.random_range(1..=m_cap);
        let alpha = alpha_grid[(i as usize) % alpha_grid.len()];
        let x = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let strategy = if i % 2 == 0 {
            SketchStrategy::Coordinate
        } else {
            SketchStrategy::Gaussian
        };
        let s = draw_sketch(strategy, n, m, &mut rng)?;
        let model = build_model(&mut oracle, x.view(), &s, alpha)?;
        let sm = s.matrix();
        let sg = sm.t().dot(&smooth.gradient(x.view()));
        let shs = sm.t().dot(&smooth.hessian(x.view()).dot(&sm));
        let (g_err, h_err) = model_error(&model, sg.view(), shs.view())?;
        let g_bound = (m as f64).sqrt() * alpha * l1 / 2.0;
        let h_bound = 5.0 * m as f64 * alpha * l2 / 3.0;
        if g_bound > 0.0 {
            max_g_ratio = max_g_ratio.max(g_err / g_bound);
        }
        if h_bound > 0.0 {
            max_h_ratio = max_h_ratio.max(h_err / h_bound);
        }
        let g_ok = g_err <= g_bound + SLACK;
        let h_ok = h_err <= h_bound + SLACK;
        g_passed &= g_ok;
        h_passed &= h_ok;
        if !(g_ok && h_ok) && counterexample.is_none() {
            counterexample = Some(format!(
                "trial {i}: strategy = {strategy}, m = {m}, alpha = {alpha}, \
                 gradient error {g_err} vs bound {g_bound}, \
                 hessian error {h_err} vs bound {h_bound}"
            ));
        }
    }
    let hessian_name = if l2 == 0.0 {
        "fd-hessian: exact (L2 = 0)".to_string()
    } else {
        "fd-hessian".to_string()
    };
    Ok(FdBoundsReport {
        gradient: CheckReport {
            check_name: "fd-gradient".into(),
            trials,
            max_ratio: max_g_ratio,
            passed: g_passed,
        },
        hessian: CheckReport {
            check_name: hessian_name,
            trials,
            max_ratio: max_h_ratio,
            passed: h_passed,
        },
        counterexample,
    })
}

/// Relative conditioning window implied by standard conditioning: a
/// mu-strongly-convex function with L1-Lipschitz gradients is
/// `(L1/mu)`-stable against its own Hessian metric, giving `l_hat <= c`
/// and `mu_hat >= 1/c`. Quadratics are exactly relatively 1-smooth and
/// 1-convex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub c: f64,
    pub mu_hat_lb: f64,
    pub l_hat_ub: f64,
}

pub fn stability_constants(problem: &Problem) -> Result<StabilityConstants> {
    let smooth = problem.as_smooth().ok_or_else(|| {
        Error::InvalidProblem(
            "conditioning constants need a problem with exact derivative access".into(),
        )
    })?;
    let c = smooth.grad_lipschitz() / smooth.strong_convexity();
    match problem {
        Problem::Quadratic(_) => Ok(StabilityConstants {
            c,
            mu_hat_lb: 1.0,
            l_hat_ub: 1.0,
        }),
        _ => Ok(StabilityConstants {
            c,
            mu_hat_lb: 1.0 / c,
            l_hat_ub: c,
        }),
    }
}
