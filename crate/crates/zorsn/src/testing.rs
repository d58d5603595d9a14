//! Deterministic generators and brute-force references shared by the tests.
//!
//! Everything here is deliberately independent of the production code paths:
//! eigenvalue references come from characteristic-polynomial closed forms,
//! and the box minimizer is a plain grid scan. The test suite compares the
//! real implementations against these, so the two sides staying decoupled is
//! the whole point; resist the urge to reuse solver internals here.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Symmetric matrix with entries drawn uniformly from `[-scale, scale]`.
pub fn seeded_symmetric(n: usize, seed: u64, scale: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-scale..scale);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

/// Eigenvalues, ascending, of a symmetric matrix up to 3x3, straight from
/// the characteristic polynomial: the quadratic formula at 2x2 and the
/// trigonometric form of Cardano's method at 3x3.
///
/// # Panics
///
/// Panics for matrices larger than 3x3, where no closed form exists.
pub fn charpoly_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    match a.nrows() {
        1 => vec![a[[0, 0]]],
        2 => {
            let (p, q, r) = (a[[0, 0]], a[[1, 1]], a[[0, 1]]);
            let mean = 0.5 * (p + q);
            let disc = (0.25 * (p - q) * (p - q) + r * r).sqrt();
            vec![mean - disc, mean + disc]
        }
        3 => cubic_roots(a),
        n => panic!("no closed form for {n}x{n}"),
    }
}

/// Roots of det(A - x I) for symmetric 3x3 A. Symmetry keeps all three
/// roots real, which is what lets the arccos form work unconditionally.
fn cubic_roots(a: &Array2<f64>) -> Vec<f64> {
    let q = (a[[0, 0]] + a[[1, 1]] + a[[2, 2]]) / 3.0;
    let p1 = a[[0, 1]].powi(2) + a[[0, 2]].powi(2) + a[[1, 2]].powi(2);
    let p2 = (a[[0, 0]] - q).powi(2)
        + (a[[1, 1]] - q).powi(2)
        + (a[[2, 2]] - q).powi(2)
        + 2.0 * p1;
    if p2 == 0.0 {
        return vec![q; 3];
    }
    let p = (p2 / 6.0).sqrt();
    let b = |i: usize, j: usize| (a[[i, j]] - if i == j { q } else { 0.0 }) / p;
    let det_b = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
        - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let phi = (det_b / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    // phi lies in [0, pi/3], which orders the three cosines.
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    vec![lo, 3.0 * q - hi - lo, hi]
}

/// Exhaustive grid scan for the minimizer of `q(y) = g.y + y'Hy/2` over the
/// axis-aligned box `[lo, hi]`, `points_per_axis` samples per dimension.
///
/// Returns the best grid point and its objective value. The scan never
/// undershoots the true minimum, so a solver under test should come in at
/// or below the returned value (up to its own tolerance).
pub fn grid_minimize_box(
    g: ArrayView1<f64>,
    h: ArrayView2<f64>,
    lo: ArrayView1<f64>,
    hi: ArrayView1<f64>,
    points_per_axis: usize,
) -> (Array1<f64>, f64) {
    let m = g.len();
    assert!(m >= 1, "empty problem");
    assert!(points_per_axis >= 2, "need at least the two endpoints");
    let axes: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            assert!(lo[i] <= hi[i], "box is empty on axis {i}");
            (0..points_per_axis)
                .map(|k| lo[i] + (hi[i] - lo[i]) * k as f64 / (points_per_axis - 1) as f64)
                .collect()
        })
        .collect();
    // Flat copies keep the inner loop free of ndarray indexing overhead;
    // the m=3 grids run hundreds of millions of evaluations.
    let gflat: Vec<f64> = g.iter().copied().collect();
    let hflat: Vec<f64> = h.iter().copied().collect();
    let mut idx = vec![0usize; m];
    let mut y = vec![0.0f64; m];
    for i in 0..m {
        y[i] = axes[i][0];
    }
    let mut best_y = y.clone();
    let mut best_v = f64::INFINITY;
    loop {
        let mut v = 0.0;
        for i in 0..m {
            let mut hy = 0.0;
            let row = &hflat[i * m..(i + 1) * m];
            for j in 0..m {
                hy += row[j] * y[j];
            }
            v += (gflat[i] + 0.5 * hy) * y[i];
        }
        if v < best_v {
            best_v = v;
            best_y.copy_from_slice(&y);
        }
        let mut d = 0;
        loop {
            if d == m {
                return (Array1::from_vec(best_y), best_v);
            }
            idx[d] += 1;
            if idx[d] < points_per_axis {
                y[d] = axes[d][idx[d]];
                break;
            }
            idx[d] = 0;
            y[d] = axes[d][0];
            d += 1;
        }
    }
}
