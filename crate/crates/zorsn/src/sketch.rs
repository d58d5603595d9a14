//! Column-orthonormal sketching matrices and their incremental growth.
//!
//! A sketch is an n-by-m matrix S with exactly orthonormal columns
//! (`S'S = I`). Solvers restrict their models to `span(S)`, so the two
//! things that matter are the distribution of the span and the stability of
//! the columns under growth: appending a column must leave the existing
//! ones bit-for-bit untouched, because finite-difference evaluations taken
//! along them stay valid only as long as the directions do not move.
//!
//! Three strategies:
//!
//! * [`SketchStrategy::Coordinate`]: a uniform m-subset of unit coordinate
//!   vectors, sampled without replacement. Probes along these touch one
//!   coordinate each, which is what the attack solver wants.
//! * [`SketchStrategy::Gaussian`]: i.i.d. standard-normal columns pushed
//!   through modified Gram-Schmidt (two passes, so the orthonormality
//!   defect stays near machine precision).
//! * [`SketchStrategy::Eigen`]: a uniform m-subset of a supplied
//!   orthonormal eigenbasis, drawn without replacement. Needs the basis, so
//!   it has its own entry point, [`eigenvector_sketch`].

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::mgs_orthonormalize;
use crate::{Error, Result};

/// Pairwise-dot tolerance every constructed sketch is validated against.
pub const ORTHONORMALITY_TOL: f64 = 1e-12;

/// How sketch columns are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchStrategy {
    Coordinate,
    Gaussian,
    Eigen,
}

impl FromStr for SketchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coordinate" => Ok(Self::Coordinate),
            "gaussian" => Ok(Self::Gaussian),
            "eigen" => Ok(Self::Eigen),
            other => Err(Error::UnsupportedSketch(format!(
                "unknown sketch strategy {other:?}; expected coordinate, gaussian, or eigen"
            ))),
        }
    }
}

impl fmt::Display for SketchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Coordinate => "coordinate",
            Self::Gaussian => "gaussian",
            Self::Eigen => "eigen",
        })
    }
}

/// An n-by-m matrix with orthonormal columns, immutable once built.
#[derive(Debug, Clone)]
pub struct Sketch {
    strategy: SketchStrategy,
    /// n x m, validated `S'S = I` within [`ORTHONORMALITY_TOL`].
    columns: Array2<f64>,
    /// Which coordinate (coordinate strategy) or basis column (eigen
    /// strategy) backs each sketch column, in column order.
    chosen: Option<Vec<usize>>,
    /// Full eigenbasis, retained by the eigen strategy so growth can append
    /// an unused basis vector.
    basis: Option<Array2<f64>>,
    /// Seed of the child generator that produced the initial draw.
    seed: u64,
}

impl Sketch {
    pub fn strategy(&self) -> SketchStrategy {
        self.strategy
    }

    /// Ambient dimension n.
    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of columns m.
    pub fn m(&self) -> usize {
        self.columns.ncols()
    }

    /// The sketch matrix S.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.columns.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.columns.column(j)
    }

    /// Sorted record of the indices backing the columns: coordinates for
    /// the coordinate strategy, basis positions for the eigen strategy,
    /// absent for Gaussian sketches.
    pub fn chosen_indices(&self) -> Option<Vec<usize>> {
        self.chosen.as_ref().map(|v| {
            let mut sorted = v.clone();
            sorted.sort_unstable();
            sorted
        })
    }

    /// The index backing column `j` (coordinate or eigen strategy only).
    pub fn column_coordinate(&self, j: usize) -> Option<usize> {
        self.chosen.as_ref().and_then(|v| v.get(j).copied())
    }

    /// Seed of the draw that created this sketch (provenance only).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Largest deviation of `S'S` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.m();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in i..m {
                let dot = self.columns.column(i).dot(&self.columns.column(j));
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }

    fn finish(self) -> Result<Self> {
        let defect = self.orthonormality_defect();
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::ContractViolation(format!(
                "sketch columns lost orthonormality: defect {defect:e}"
            )));
        }
        Ok(self)
    }
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::InvalidSketch(format!(
            "need 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    Ok(())
}

/// Uniform m-subset of 0..n by partial Fisher-Yates, returned sorted.
fn sample_subset(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng.random_range(0..n - i);
        idx.swap(i, j);
    }
    let mut subset = idx[..m].to_vec();
    subset.sort_unstable();
    subset
}

fn coordinate_columns(n: usize, indices: &[usize]) -> Array2<f64> {
    let mut s = Array2::<f64>::zeros((n, indices.len()));
    for (j, &i) in indices.iter().enumerate() {
        s[[i, j]] = 1.0;
    }
    s
}

/// Coordinate sketch over explicitly chosen coordinates, in the given
/// column order. Mainly for tests and worked examples; solvers sample.
pub fn coordinate_sketch(n: usize, indices: &[usize]) -> Result<Sketch> {
    check_shape(n, indices.len())?;
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != indices.len() {
        return Err(Error::InvalidSketch("repeated coordinate index".into()));
    }
    if *sorted.last().expect("nonempty") >= n {
        return Err(Error::InvalidSketch(format!(
            "coordinate index {} out of range for n={n}",
            sorted.last().expect("nonempty")
        )));
    }
    Sketch {
        strategy: SketchStrategy::Coordinate,
        columns: coordinate_columns(n, indices),
        chosen: Some(indices.to_vec()),
        basis: None,
        seed: 0,
    }
    .finish()
}

/// Eigenvector sketch over explicitly chosen basis columns. Shared by the
/// tests and by exhaustive subset enumeration in the theory checks.
pub fn eigen_sketch_with_indices(basis: ArrayView2<f64>, indices: &[usize]) -> Result<Sketch> {
    let n = validate_basis(&basis)?;
    check_shape(n, indices.len())?;
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != indices.len() {
        return Err(Error::InvalidSketch("repeated basis index".into()));
    }
    if *sorted.last().expect("nonempty") >= n {
        return Err(Error::InvalidSketch(format!(
            "basis index {} out of range for n={n}",
            sorted.last().expect("nonempty")
        )));
    }
    let mut columns = Array2::<f64>::zeros((n, indices.len()));
    for (j, &i) in indices.iter().enumerate() {
        columns.column_mut(j).assign(&basis.column(i));
    }
    Sketch {
        strategy: SketchStrategy::Eigen,
        columns,
        chosen: Some(indices.to_vec()),
        basis: Some(basis.to_owned()),
        seed: 0,
    }
    .finish()
}

fn validate_basis(basis: &ArrayView2<f64>) -> Result<usize> {
    let n = basis.nrows();
    if basis.ncols() != n || n == 0 {
        return Err(Error::InvalidSketch(format!(
            "eigenbasis must be square and nonempty, got {}x{}",
            basis.nrows(),
            basis.ncols()
        )));
    }
    for i in 0..n {
        for j in i..n {
            let dot = basis.column(i).dot(&basis.column(j));
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot - want).abs() > 1e-10 {
                return Err(Error::InvalidSketch(format!(
                    "eigenbasis columns {i},{j} not orthonormal: dot {dot}"
                )));
            }
        }
    }
    Ok(n)
}

fn gaussian_columns(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    // Collapse of a Gaussian column onto the span of the others has
    // probability zero; the retry cap only catches a broken generator.
    for _ in 0..8u32 {
        let mut s = Array2::from_shape_fn((n, m), |_| rng.sample::<f64, _>(StandardNormal));
        if mgs_orthonormalize(&mut s, 0).is_ok() {
            return Ok(s);
        }
    }
    Err(Error::RankDeficientSketch { retries: 8 })
}

/// Draw a fresh m-column sketch. The coordinate strategy samples a uniform
/// m-subset without replacement; the Gaussian strategy orthonormalizes
/// standard-normal columns. The eigen strategy needs a basis, so it lives
/// in [`eigenvector_sketch`] and is rejected here.
///
/// All randomness comes from a child generator seeded off `rng`, and the
/// child seed is recorded on the sketch, so a draw can be pinned down after
/// the fact.
pub fn draw_sketch(
    strategy: SketchStrategy,
    n: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Sketch> {
    check_shape(n, m)?;
    let seed = rng.next_u64();
    let mut child = ChaCha8Rng::seed_from_u64(seed);
    match strategy {
        SketchStrategy::Coordinate => {
            let chosen = sample_subset(n, m, &mut child);
            Sketch {
                strategy,
                columns: coordinate_columns(n, &chosen),
                chosen: Some(chosen),
                basis: None,
                seed,
            }
            .finish()
        }
        SketchStrategy::Gaussian => Sketch {
            strategy,
            columns: gaussian_columns(n, m, &mut child)?,
            chosen: None,
            basis: None,
            seed,
        }
        .finish(),
        SketchStrategy::Eigen => Err(Error::UnsupportedSketch(
            "the eigen strategy needs a Hessian eigenbasis; call eigenvector_sketch".into(),
        )),
    }
}

/// Draw m distinct eigenvectors uniformly without replacement from an
/// orthonormal basis (columns of `basis`).
pub fn eigenvector_sketch(
    basis: ArrayView2<f64>,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Sketch> {
    let n = validate_basis(&basis)?;
    check_shape(n, m)?;
    let seed = rng.next_u64();
    let mut child = ChaCha8Rng::seed_from_u64(seed);
    let chosen = sample_subset(n, m, &mut child);
    let mut columns = Array2::<f64>::zeros((n, m));
    for (j, &i) in chosen.iter().enumerate() {
        columns.column_mut(j).assign(&basis.column(i));
    }
    Sketch {
        strategy: SketchStrategy::Eigen,
        columns,
        chosen: Some(chosen),
        basis: Some(basis.to_owned()),
        seed,
    }
    .finish()
}

/// Append one column orthonormal to all existing ones, same strategy.
///
/// The first m columns of the result are bit-for-bit the input's, so
/// finite-difference evaluations taken along them remain valid. Coordinate
/// and eigen strategies pick uniformly among the unused indices; the
/// Gaussian strategy orthogonalizes a fresh normal draw against the span.
pub fn grow_sketch(s: &Sketch, rng: &mut ChaCha8Rng) -> Result<Sketch> {
    let (n, m) = (s.n(), s.m());
    if m >= n {
        return Err(Error::CannotGrow { n });
    }
    let mut columns = Array2::<f64>::zeros((n, m + 1));
    columns.slice_mut(ndarray::s![.., ..m]).assign(&s.columns);
    match s.strategy {
        SketchStrategy::Coordinate | SketchStrategy::Eigen => {
            let used = s.chosen.as_deref().expect("indexed strategies record indices");
            let unused: Vec<usize> = (0..n).filter(|i| !used.contains(i)).collect();
            let pick = unused[rng.random_range(0..unused.len())];
            match s.strategy {
                SketchStrategy::Coordinate => columns[[pick, m]] = 1.0,
                SketchStrategy::Eigen => columns
                    .column_mut(m)
                    .assign(&s.basis.as_ref().expect("eigen keeps its basis").column(pick)),
                SketchStrategy::Gaussian => unreachable!(),
            }
            let mut chosen = used.to_vec();
            chosen.push(pick);
            Sketch {
                strategy: s.strategy,
                columns,
                chosen: Some(chosen),
                basis: s.basis.clone(),
                seed: s.seed,
            }
            .finish()
        }
        SketchStrategy::Gaussian => {
            let mut tries = 0u32;
            loop {
                for r in 0..n {
                    columns[[r, m]] = rng.sample::<f64, _>(StandardNormal);
                }
                if mgs_orthonormalize(&mut columns, m).is_ok() {
                    break;
                }
                tries += 1;
                if tries >= 8 {
                    return Err(Error::RankDeficientSketch { retries: 8 });
                }
            }
            Sketch {
                strategy: s.strategy,
                columns,
                chosen: None,
                basis: None,
                seed: s.seed,
            }
            .finish()
        }
    }
}
