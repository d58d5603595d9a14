//! Exact solver for the small box-constrained quadratic subproblem.
//!
//! The sketched step with constraints is chosen by minimizing
//!
//! ```text
//! q(lambda) = gamma g.lambda + (gamma/2) lambda' H lambda
//! ```
//!
//! over an axis-aligned box. H is strictly positive definite (the caller
//! projects its spectrum first), `lambda = 0` is always feasible (it is the
//! current iterate), and m stays small, so an active-set refinement of the
//! clamped Newton step solves the problem exactly: fix the coordinates that
//! sit on their bounds, solve the free subsystem, re-clamp, and repeat until
//! the KKT conditions hold. A projected Gauss-Seidel pass backstops the rare
//! degenerate cycle; for a strictly convex box QP it converges from any
//! starting point.

use ndarray::{Array1, Array2, ArrayView1};

use crate::linalg::{solve_spd_detail, SolveRoute};
use crate::sketch::{Sketch, SketchStrategy};
use crate::{Error, Result};

/// KKT residual the solver drives to by default.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Slack allowed when checking that the current iterate is feasible.
const FEASIBILITY_SLACK: f64 = 1e-12;

/// An axis-aligned ball in the sup norm: `|x - center|_inf <= radius`.
#[derive(Debug, Clone)]
pub struct BoxRegion {
    center: Array1<f64>,
    radius: f64,
}

impl BoxRegion {
    pub fn new(center: Array1<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "box radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> ArrayView1<'_, f64> {
        self.center.view()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Sup-norm distance from the center, for feasibility checks.
    pub fn distance(&self, x: ArrayView1<f64>) -> f64 {
        x.iter()
            .zip(self.center.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn contains(&self, x: ArrayView1<f64>, slack: f64) -> bool {
        self.distance(x) <= self.radius + slack
    }
}

/// The box QP data: minimize `gamma g.lambda + (gamma/2) lambda'H lambda`
/// subject to `lower <= lambda <= upper`.
#[derive(Debug, Clone)]
pub struct BoxQP {
    g: Array1<f64>,
    h: Array2<f64>,
    gamma: f64,
    lower: Array1<f64>,
    upper: Array1<f64>,
}

impl BoxQP {
    /// Validates shapes, `gamma > 0`, symmetry of H, and that the box is
    /// nonempty with 0 inside it (the current iterate is always feasible,
    /// so a box excluding 0 means the caller reduced constraints wrong).
    pub fn new(
        g: Array1<f64>,
        h: Array2<f64>,
        gamma: f64,
        lower: Array1<f64>,
        upper: Array1<f64>,
    ) -> Result<Self> {
        let m = g.len();
        if m == 0 {
            return Err(Error::InvalidProblem("empty subproblem".into()));
        }
        if h.nrows() != m || h.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: h.nrows().max(h.ncols()),
            });
        }
        if lower.len() != m || upper.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: lower.len().min(upper.len()),
            });
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "step size must be positive and finite, got {gamma}"
            )));
        }
        let mut asym = 0.0f64;
        for i in 0..m {
            for j in (i + 1)..m {
                asym = asym.max((h[[i, j]] - h[[j, i]]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(Error::NotSymmetric { max_asym: asym });
        }
        for i in 0..m {
            if !(lower[i] <= upper[i]) {
                return Err(Error::InvalidInterval {
                    lo: lower[i],
                    hi: upper[i],
                });
            }
            if lower[i] > 0.0 || upper[i] < 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "zero step infeasible on axis {i}: bounds [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self {
            g,
            h,
            gamma,
            lower,
            upper,
        })
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> ArrayView1<'_, f64> {
        self.g.view()
    }

    pub fn h(&self) -> ndarray::ArrayView2<'_, f64> {
        self.h.view()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lower(&self) -> ArrayView1<'_, f64> {
        self.lower.view()
    }

    pub fn upper(&self) -> ArrayView1<'_, f64> {
        self.upper.view()
    }

    /// Model objective at `lambda` (without the constant f term).
    pub fn objective(&self, lambda: ArrayView1<f64>) -> f64 {
        self.gamma * (self.g.dot(&lambda) + 0.5 * lambda.dot(&self.h.dot(&lambda)))
    }

    fn clamp(&self, lambda: &mut Array1<f64>) {
        for i in 0..self.m() {
            lambda[i] = lambda[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// Worst KKT violation of `lambda` for the box QP: gradient magnitude on
/// free coordinates, wrong-signed gradient on active bounds, and any
/// distance outside the box itself. Zero (up to tolerance) exactly at the
/// unique minimizer. Gamma scales the objective without moving it, so the
/// residual is measured on `g + H lambda`.
pub fn kkt_residual(p: &BoxQP, lambda: ArrayView1<f64>) -> f64 {
    let r = &p.g + &p.h.dot(&lambda);
    let mut worst = 0.0f64;
    for i in 0..p.m() {
        worst = worst.max(p.lower[i] - lambda[i]).max(lambda[i] - p.upper[i]);
        let at_lower = lambda[i] <= p.lower[i];
        let at_upper = lambda[i] >= p.upper[i];
        if at_lower && at_upper {
            // Pinched axis: any gradient is fine.
        } else if at_lower {
            worst = worst.max(-r[i]);
        } else if at_upper {
            worst = worst.max(r[i]);
        } else {
            worst = worst.max(r[i].abs());
        }
    }
    worst
}

/// Sign pattern of the active set, the cycle-detection fingerprint.
fn active_signature(p: &BoxQP, lambda: &Array1<f64>) -> Vec<i8> {
    (0..p.m())
        .map(|i| {
            if lambda[i] <= p.lower[i] {
                -1
            } else if lambda[i] >= p.upper[i] {
                1
            } else {
                0
            }
        })
        .collect()
}

fn solve_pd(h: &Array2<f64>, rhs: &Array1<f64>) -> Result<Array1<f64>> {
    let (x, route) = solve_spd_detail(h.view(), rhs.view(), None)?;
    match route {
        SolveRoute::Factorized => Ok(x),
        // A full-rank pseudo-solve is just an ill-conditioned but usable
        // system; dropped directions mean the matrix was not PD.
        SolveRoute::Pseudo { kept } if kept == h.nrows() => Ok(x),
        SolveRoute::Pseudo { kept } => Err(Error::ContractViolation(format!(
            "subproblem Hessian is not positive definite ({kept} of {} directions usable)",
            h.nrows()
        ))),
    }
}

/// Minimize the box QP exactly.
///
/// Active-set refinement of the clamped Newton step, with a projected
/// Gauss-Seidel backstop if the active set ever cycles. Returns the unique
/// minimizer with KKT residual at most `tol` (use [`DEFAULT_TOL`] unless
/// there is a reason not to).
pub fn solve_box_qp(p: &BoxQP, tol: f64) -> Result<Array1<f64>> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    let m = p.m();
    let mut lambda = solve_pd(&p.h, &(-&p.g))?;
    p.clamp(&mut lambda);

    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..(3 * m).max(4) {
        if kkt_residual(p, lambda.view()) <= tol {
            return Ok(lambda);
        }
        let signature = active_signature(p, &lambda);
        if !seen.insert(signature.clone()) {
            break;
        }
        let free: Vec<usize> = (0..m).filter(|&i| signature[i] == 0).collect();
        if free.is_empty() {
            // Fully clamped but KKT failed: some bound wants to release.
            // Gauss-Seidel handles the release order robustly.
            break;
        }
        // Solve the free block with the clamped block folded into the rhs.
        let k = free.len();
        let mut hff = Array2::<f64>::zeros((k, k));
        let mut rhs = Array1::<f64>::zeros(k);
        for (a, &i) in free.iter().enumerate() {
            let mut v = -p.g[i];
            for j in 0..m {
                if signature[j] != 0 {
                    v -= p.h[[i, j]] * lambda[j];
                }
            }
            rhs[a] = v;
            for (b, &j) in free.iter().enumerate() {
                hff[[a, b]] = p.h[[i, j]];
            }
        }
        let sol = solve_pd(&hff, &rhs)?;
        for (a, &i) in free.iter().enumerate() {
            lambda[i] = sol[a];
        }
        p.clamp(&mut lambda);
    }

    // Projected Gauss-Seidel: strictly convex diagonal updates converge to
    // the minimizer from anywhere; used only when the active-set loop
    // cycled or ran out of iterations.
    for _ in 0..100_000 {
        for i in 0..m {
            let mut v = -p.g[i];
            for j in 0..m {
                if j != i {
                    v -= p.h[[i, j]] * lambda[j];
                }
            }
            lambda[i] = (v / p.h[[i, i]]).clamp(p.lower[i], p.upper[i]);
        }
        if kkt_residual(p, lambda.view()) <= tol {
            return Ok(lambda);
        }
    }
    Err(Error::NoConvergence { sweeps: 100_000 })
}

/// Translate the trust region `|x - center|_inf <= radius` into per-axis
/// bounds on the sketched step coefficients.
///
/// The step is `x_k + gamma S lambda` with S a coordinate sketch, so
/// coefficient j moves coordinate `c_j` alone and the box reduces to
///
/// ```text
/// (center[c] - radius - x_k[c]) / gamma <= lambda_j <= (center[c] + radius - x_k[c]) / gamma
/// ```
///
/// Coordinates outside the sketch do not move and are already feasible.
/// Requires a coordinate sketch and a feasible `x_k` (within rounding); the
/// returned bounds are nudged so that 0 always stays inside them.
pub fn reduce_constraints(
    x_k: ArrayView1<f64>,
    region: &BoxRegion,
    s: &Sketch,
    gamma: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if s.strategy() != SketchStrategy::Coordinate {
        return Err(Error::UnsupportedSketch(format!(
            "constraint reduction needs a coordinate sketch, got {}",
            s.strategy()
        )));
    }
    if x_k.len() != region.dim() || s.n() != region.dim() {
        return Err(Error::DimensionMismatch {
            expected: region.dim(),
            got: x_k.len(),
        });
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "step size must be positive and finite, got {gamma}"
        )));
    }
    if !region.contains(x_k, FEASIBILITY_SLACK) {
        return Err(Error::ContractViolation(format!(
            "iterate lies {:e} outside the feasible box",
            region.distance(x_k) - region.radius()
        )));
    }
    let m = s.m();
    let mut lower = Array1::<f64>::zeros(m);
    let mut upper = Array1::<f64>::zeros(m);
    let center = region.center();
    for j in 0..m {
        let c = s
            .column_coordinate(j)
            .expect("coordinate sketches record their indices");
        let lo = (center[c] - region.radius() - x_k[c]) / gamma;
        let hi = (center[c] + region.radius() - x_k[c]) / gamma;
        // The feasibility slack can leave a bound on the wrong side of zero
        // by a rounding hair; pin it so the zero step stays feasible.
        lower[j] = lo.min(0.0);
        upper[j] = hi.max(0.0);
    }
    Ok((lower, upper))
}
