//! Randomized subspace Newton methods that work from function values alone.
//!
//! The crate is organized as a small pipeline. An [`oracle::CountedOracle`]
//! wraps an objective and counts every evaluation, and is the only gate the
//! iterative methods have onto it. [`sketch`] draws random orthonormal
//! subspaces, [`estimators`] builds finite-difference gradient and curvature
//! models restricted to a subspace (with evaluation reuse and exact query
//! accounting), and [`solvers`] turns those models into iterates: the plain
//! subspace Newton step, its zeroth-order variant, a box-constrained variant
//! that grows the subspace when a step fails to descend, and a
//! Gaussian-direction baseline. [`qp`] solves the small box-constrained
//! quadratic subproblems the constrained solver produces, [`linalg`] holds
//! the dense symmetric kernels everything leans on, [`theory`] evaluates the
//! convergence bounds and constants the solvers are supposed to obey so they
//! can be checked numerically, and [`harness`] wires it all to config files,
//! CSV traces, and JSON summaries for the `zorsn` command line tool.
//!
//! Determinism is a hard contract throughout: every random choice flows from
//! an explicit seed through a counter-based generator, so identical inputs
//! reproduce identical traces bit for bit.

pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod qp;
pub mod sketch;
pub mod solvers;
pub mod testing;
pub mod theory;

/// Everything that can go wrong across the crate.
///
/// Contract violations (dimension mismatches, infeasible iterates, sketches
/// handed to an estimator they do not belong to) are bugs in the caller and
/// carry enough context to find them. Parameter errors name the violated
/// inequality so a failed theory check can be read without a debugger.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid sketch: {0}")]
    InvalidSketch(String),

    #[error("sketch already spans the full space (m = n = {n}), cannot grow")]
    CannotGrow { n: usize },

    #[error("sketch columns collapsed while orthonormalizing (gave up after {retries} resamples)")]
    RankDeficientSketch { retries: usize },

    #[error("unsupported sketch strategy here: {0}")]
    UnsupportedSketch(String),

    #[error("matrix is not symmetric (largest asymmetry {max_asym:e})")]
    NotSymmetric { max_asym: f64 },

    #[error("Jacobi sweep did not reach the off-diagonal target in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("invalid eigenvalue interval [{lo}, {hi}]: need 0 < lo <= hi, both finite")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error(
        "subset enumeration needs {subsets} terms, above the cap of {cap}; \
         use the Monte Carlo estimator instead"
    )]
    EnumerationTooLarge { subsets: u128, cap: u128 },

    #[error("parameters violate {0}")]
    InfeasibleParameters(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
