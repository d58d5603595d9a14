//! Dense symmetric kernels sized for sketched subproblems.
//!
//! Everything here targets the small symmetric systems the rest of the crate
//! produces: the m-by-m subspace models (m rarely above 20) and the modest
//! n-by-n matrices the theory checks decompose. At those sizes a cyclic
//! Jacobi sweep is simpler and more predictable than anything fancier, its
//! rotations preserve symmetry exactly, and its eigenvectors come out
//! orthonormal to working precision without post-processing.
//!
//! `solve_spd` mirrors how the solvers use a pseudo-inverse on paper: try a
//! Cholesky factorization first (the common, well-conditioned case), and if
//! any pivot falls under the threshold, fall back to an eigendecomposition
//! that truncates every eigenvalue at or below the threshold.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

/// Off-diagonal target for the Jacobi sweep, relative to the Frobenius norm.
const OFF_DIAG_TOL: f64 = 1e-12;

/// Hard cap on Jacobi sweeps. Convergence is quadratic once rotations get
/// small, so hitting this means the input was not finite.
const MAX_SWEEPS: usize = 64;

/// Largest tolerated asymmetry before an input is rejected.
const SYMMETRY_TOL: f64 = 1e-10;

/// Default pseudo-inverse cut, relative to the largest eigenvalue magnitude.
const PINV_RELATIVE: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in ascending order.
    pub values: Array1<f64>,
    /// Orthonormal eigenvectors; column `i` pairs with `values[i]`.
    pub vectors: Array2<f64>,
}

/// Which route `solve_spd` took, with enough detail for callers that need to
/// distinguish a healthy solve from a degenerate pseudo-inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SolveRoute {
    Factorized,
    Pseudo { kept: usize },
}

fn check_square_symmetric(a: &ArrayView2<f64>) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if worst > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { max_asym: worst });
    }
    Ok(n)
}

fn off_diag_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * a[[i, j]] * a[[i, j]];
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing the (p, q) entry, accumulated into `v`.
fn rotate(d: &mut Array2<f64>, v: &mut Array2<f64>, p: usize, q: usize) {
    let apq = d[[p, q]];
    if apq == 0.0 {
        return;
    }
    let tau = (d[[q, q]] - d[[p, p]]) / (2.0 * apq);
    // Smaller root of t^2 + 2*tau*t - 1 = 0, the stable choice.
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        1.0 / (tau - (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let n = d.nrows();
    d[[p, p]] -= t * apq;
    d[[q, q]] += t * apq;
    d[[p, q]] = 0.0;
    d[[q, p]] = 0.0;
    for i in 0..n {
        if i == p || i == q {
            continue;
        }
        let aip = d[[i, p]];
        let aiq = d[[i, q]];
        d[[i, p]] = c * aip - s * aiq;
        d[[p, i]] = d[[i, p]];
        d[[i, q]] = s * aip + c * aiq;
        d[[q, i]] = d[[i, q]];
    }
    for i in 0..n {
        let vip = v[[i, p]];
        let viq = v[[i, q]];
        v[[i, p]] = c * vip - s * viq;
        v[[i, q]] = s * vip + c * viq;
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// # Input
///
/// A square matrix, symmetric within `1e-10` entrywise. The two triangles
/// are averaged before sweeping, so tiny asymmetries do not leak into the
/// result.
///
/// # Output
///
/// Eigenvalues in ascending order and a matching orthonormal eigenvector
/// matrix. Sweeping stops once the off-diagonal Frobenius norm drops under
/// `1e-12` times the Frobenius norm of the input (at most 64 sweeps, which
/// in practice is never approached).
pub fn sym_eig(a: ArrayView2<f64>) -> Result<SymEig> {
    let n = check_square_symmetric(&a)?;
    if n == 0 {
        return Err(Error::InvalidProblem("empty matrix".into()));
    }
    let mut d = a.to_owned();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (d[[i, j]] + d[[j, i]]);
            d[[i, j]] = avg;
            d[[j, i]] = avg;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let fro = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !fro.is_finite() {
        return Err(Error::InvalidProblem("matrix has non-finite entries".into()));
    }
    let target = OFF_DIAG_TOL * fro;
    let mut converged = n == 1;
    for _ in 0..MAX_SWEEPS {
        if off_diag_norm(&d) <= target {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut d, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[[i, i]].partial_cmp(&d[[j, j]]).expect("finite"));
    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = d[[src, src]];
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SymEig { values, vectors })
}

/// Upper bound on the largest eigenvalue magnitude (max absolute row sum).
fn gershgorin_bound(a: &ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let mut best = 0.0f64;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += a[[i, j]].abs();
        }
        best = best.max(row);
    }
    best
}

/// Lower-triangular Cholesky factor, or `None` if any pivot (before the
/// square root) is not strictly above `guard`.
fn cholesky(a: &ArrayView2<f64>, guard: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        // Also rejects NaN.
        if !(pivot > guard) {
            return None;
        }
        let root = pivot.sqrt();
        l[[j, j]] = root;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / root;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Array2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[[i, k]] * y[k];
        }
        y[i] = v / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[[k, i]] * x[k];
        }
        x[i] = v / l[[i, i]];
    }
    x
}

pub(crate) fn solve_spd_detail(
    a: ArrayView2<f64>,
    b: ArrayView1<f64>,
    pinv_threshold: Option<f64>,
) -> Result<(Array1<f64>, SolveRoute)> {
    let n = check_square_symmetric(&a)?;
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if let Some(t) = pinv_threshold {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "pinv threshold must be finite and nonnegative, got {t}"
            )));
        }
    }
    // The pivot guard is conservative: Gershgorin overestimates the largest
    // eigenvalue, so the fast route only engages when the matrix is clearly
    // well-conditioned. Everything borderline lands on the spectral route,
    // which applies the threshold to true eigenvalues.
    let guard = pinv_threshold.unwrap_or_else(|| PINV_RELATIVE * gershgorin_bound(&a));
    if let Some(l) = cholesky(&a, guard) {
        return Ok((cholesky_solve(&l, &b), SolveRoute::Factorized));
    }
    let eig = sym_eig(a)?;
    let scale = eig.values.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let cut = pinv_threshold.unwrap_or(PINV_RELATIVE * scale);
    let mut x = Array1::<f64>::zeros(n);
    let mut kept = 0usize;
    for i in 0..n {
        let lam = eig.values[i];
        if lam > cut {
            kept += 1;
            let vi = eig.vectors.column(i);
            let coef = vi.dot(&b) / lam;
            x.scaled_add(coef, &vi);
        }
    }
    Ok((x, SolveRoute::Pseudo { kept }))
}

/// Solve `A x = b` for symmetric positive definite `A`, degrading to a
/// truncated pseudo-inverse when the spectrum reaches the threshold.
///
/// # Input
///
/// `a` must be symmetric within `1e-10`. `pinv_threshold` is the absolute
/// eigenvalue cut; pass `None` for the default of `1e-10` times the largest
/// eigenvalue magnitude.
///
/// # Output
///
/// The solution when `A` is positive definite with its spectrum above the
/// threshold; otherwise the minimum-norm solution over the eigenspaces whose
/// eigenvalues exceed the threshold (eigenvalues at or below it, including
/// any negative ones, are truncated).
pub fn solve_spd(
    a: ArrayView2<f64>,
    b: ArrayView1<f64>,
    pinv_threshold: Option<f64>,
) -> Result<Array1<f64>> {
    solve_spd_detail(a, b, pinv_threshold).map(|(x, _)| x)
}

/// Clamp the spectrum of a symmetric matrix into `[lo, hi]`.
///
/// Decomposes, clamps every eigenvalue, and rebuilds in the same
/// eigenbasis. Requires `0 < lo <= hi`, so the result is always positive
/// definite. Projecting twice is a no-op up to rotation-level rounding.
pub fn project_eigenvalues(a: ArrayView2<f64>, lo: f64, hi: f64) -> Result<Array2<f64>> {
    if !(lo > 0.0) || lo > hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInterval { lo, hi });
    }
    let eig = sym_eig(a)?;
    let n = eig.values.len();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let clamped = eig.values[i].clamp(lo, hi);
        let vi = eig.vectors.column(i);
        for r in 0..n {
            let vr = clamped * vi[r];
            for c in 0..n {
                out[[r, c]] += vr * vi[c];
            }
        }
    }
    // vr*vc == vc*vr exactly, so `out` is symmetric bit for bit.
    Ok(out)
}

/// Modified Gram-Schmidt over columns `from..`, each run against everything
/// to its left twice (the second pass mops up the rounding the first one
/// leaves behind). Columns left of `from` are assumed orthonormal already.
///
/// Returns `Err(j)` if column `j` collapses below `1e-8` of its incoming
/// norm, which is the caller's cue to resample that column.
pub(crate) fn mgs_orthonormalize(
    q: &mut Array2<f64>,
    from: usize,
) -> std::result::Result<(), usize> {
    const COLLAPSE: f64 = 1e-8;
    let (rows, cols) = (q.nrows(), q.ncols());
    for j in from..cols {
        let mut incoming = 0.0;
        for r in 0..rows {
            incoming += q[[r, j]] * q[[r, j]];
        }
        let incoming = incoming.sqrt();
        for _pass in 0..2 {
            for i in 0..j {
                let mut dot = 0.0;
                for r in 0..rows {
                    dot += q[[r, i]] * q[[r, j]];
                }
                for r in 0..rows {
                    let qi = q[[r, i]];
                    q[[r, j]] -= dot * qi;
                }
            }
        }
        let mut nrm = 0.0;
        for r in 0..rows {
            nrm += q[[r, j]] * q[[r, j]];
        }
        let nrm = nrm.sqrt();
        if incoming == 0.0 || nrm <= COLLAPSE * incoming {
            return Err(j);
        }
        for r in 0..rows {
            q[[r, j]] /= nrm;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{charpoly_eigenvalues, seeded_symmetric};
    use ndarray::array;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!(
            (a - b).abs() <= tol,
            "{what}: {a} vs {b} (diff {:e}, tol {tol:e})",
            (a - b).abs()
        );
    }

    #[test]
    fn sym_eig_diagonal_sorts_ascending() {
        let e = sym_eig(array![[3.0, 0.0], [0.0, 1.0]].view()).unwrap();
        assert_close(e.values[0], 1.0, 1e-14, "lambda_0");
        assert_close(e.values[1], 3.0, 1e-14, "lambda_1");
    }

    #[test]
    fn sym_eig_exchange_matrix() {
        // Eigenpairs of [[0,1],[1,0]]: -1 with (1,-1)/sqrt(2), +1 with (1,1)/sqrt(2).
        let e = sym_eig(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
        assert_close(e.values[0], -1.0, 1e-12, "lambda_0");
        assert_close(e.values[1], 1.0, 1e-12, "lambda_1");
        let s = 1.0 / 2.0f64.sqrt();
        for (col, expect) in [(0, [s, -s]), (1, [s, s])] {
            let v = e.vectors.column(col);
            // Sign is not pinned down, compare up to a flip.
            let direct = (v[0] - expect[0]).abs().max((v[1] - expect[1]).abs());
            let flipped = (v[0] + expect[0]).abs().max((v[1] + expect[1]).abs());
            assert!(
                direct.min(flipped) <= 1e-12,
                "eigenvector {col} off: ({}, {})",
                v[0],
                v[1]
            );
        }
    }

    #[test]
    fn sym_eig_matches_characteristic_polynomial_roots() {
        // Closed-form roots (quadratic formula, trigonometric cubic) are the
        // independent check here; they share no code with the Jacobi sweep.
        let mut seed = 11u64;
        for n in 1..=3usize {
            for _ in 0..100 {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = seeded_symmetric(n, seed, 5.0);
                let want = charpoly_eigenvalues(&a);
                let got = sym_eig(a.view()).unwrap();
                for i in 0..n {
                    assert_close(got.values[i], want[i], 1e-8, &format!("n={n} root {i}"));
                }
            }
        }
    }

    #[test]
    fn sym_eig_reconstructs_and_is_orthonormal() {
        for seed in 0..40u64 {
            let n = 1 + (seed as usize % 6);
            let a = seeded_symmetric(n, seed.wrapping_add(99), 3.0);
            let e = sym_eig(a.view()).unwrap();
            let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
            // V diag(w) V^T == A
            for r in 0..n {
                for c in 0..n {
                    let mut v = 0.0;
                    for k in 0..n {
                        v += e.values[k] * e.vectors[[r, k]] * e.vectors[[c, k]];
                    }
                    assert_close(v, a[[r, c]], 1e-10 * scale, "reconstruction");
                }
            }
            // V^T V == I
            for i in 0..n {
                for j in 0..n {
                    let dot = e.vectors.column(i).dot(&e.vectors.column(j));
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_close(dot, want, 1e-12, "orthonormality");
                }
            }
        }
    }

    #[test]
    fn sym_eig_rejects_asymmetric_input() {
        let r = sym_eig(array![[1.0, 2.0], [0.0, 1.0]].view());
        assert!(matches!(r, Err(Error::NotSymmetric { .. })), "{r:?}");
    }

    #[test]
    fn sym_eig_zero_matrix() {
        let e = sym_eig(Array2::<f64>::zeros((3, 3)).view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn solve_spd_diagonal() {
        let x = solve_spd(
            array![[1.0, 0.0], [0.0, 4.0]].view(),
            array![1.0, 4.0].view(),
            None,
        )
        .unwrap();
        assert_close(x[0], 1.0, 1e-14, "x0");
        assert_close(x[1], 1.0, 1e-14, "x1");
    }

    #[test]
    fn solve_spd_truncates_null_direction() {
        // Singular diag(1, 0): the pseudo-inverse keeps only the live axis.
        let (x, route) = solve_spd_detail(
            array![[1.0, 0.0], [0.0, 0.0]].view(),
            array![2.0, 0.0].view(),
            Some(1e-8),
        )
        .unwrap();
        assert_eq!(route, SolveRoute::Pseudo { kept: 1 });
        assert_close(x[0], 2.0, 1e-14, "x0");
        assert_close(x[1], 0.0, 1e-14, "x1");
    }

    #[test]
    fn solve_spd_dense_two_by_two() {
        let x = solve_spd(
            array![[2.0, 1.0], [1.0, 2.0]].view(),
            array![1.0, 1.0].view(),
            None,
        )
        .unwrap();
        assert_close(x[0], 1.0 / 3.0, 1e-12, "x0");
        assert_close(x[1], 1.0 / 3.0, 1e-12, "x1");
    }

    #[test]
    fn solve_spd_residual_on_random_spd() {
        for seed in 0..50u64 {
            let n = 1 + (seed as usize % 8);
            let g = seeded_symmetric(n, seed.wrapping_add(7), 2.0);
            // G^T G + I is comfortably positive definite.
            let mut a = g.t().dot(&g);
            for i in 0..n {
                a[[i, i]] += 1.0;
            }
            let b = Array1::from_iter((0..n).map(|i| (i as f64) - 1.5));
            let (x, route) = solve_spd_detail(a.view(), b.view(), None).unwrap();
            assert_eq!(route, SolveRoute::Factorized, "seed {seed}");
            let r = a.dot(&x) - &b;
            let bound = 1e-9 * (1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            for v in r.iter() {
                assert!(v.abs() <= bound, "residual {v:e} above {bound:e}");
            }
        }
    }

    #[test]
    fn solve_spd_rejects_shape_mismatch() {
        let r = solve_spd(
            array![[1.0, 0.0], [0.0, 1.0]].view(),
            array![1.0].view(),
            None,
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })), "{r:?}");
    }

    #[test]
    fn project_clamps_diagonal_spectrum() {
        let p = project_eigenvalues(array![[-1.0, 0.0], [0.0, 5.0]].view(), 0.1, 2.0).unwrap();
        assert_close(p[[0, 0]], 0.1, 1e-13, "low clamp");
        assert_close(p[[1, 1]], 2.0, 1e-13, "high clamp");
        assert_close(p[[0, 1]], 0.0, 1e-13, "off diag");
    }

    #[test]
    fn project_reassembles_in_original_basis() {
        let p = project_eigenvalues(array![[0.0, 1.0], [1.0, 0.0]].view(), 0.5, 2.0).unwrap();
        // Spectrum (-1, 1) clamps to (0.5, 1); in the Hadamard basis that is
        // [[0.75, 0.25], [0.25, 0.75]].
        assert_close(p[[0, 0]], 0.75, 1e-12, "p00");
        assert_close(p[[0, 1]], 0.25, 1e-12, "p01");
        assert_close(p[[1, 0]], 0.25, 1e-12, "p10");
        assert_close(p[[1, 1]], 0.75, 1e-12, "p11");
    }

    #[test]
    fn project_is_idempotent_and_in_range() {
        for seed in 0..30u64 {
            let n = 1 + (seed as usize % 5);
            let a = seeded_symmetric(n, seed.wrapping_add(31), 4.0);
            let once = project_eigenvalues(a.view(), 0.2, 1.5).unwrap();
            let twice = project_eigenvalues(once.view(), 0.2, 1.5).unwrap();
            for (u, w) in once.iter().zip(twice.iter()) {
                assert_close(*u, *w, 1e-10, "idempotence");
            }
            let e = sym_eig(once.view()).unwrap();
            for l in e.values.iter() {
                assert!(
                    (0.2 - 1e-10..=1.5 + 1e-10).contains(l),
                    "eigenvalue {l} escaped [0.2, 1.5]"
                );
            }
        }
    }

    #[test]
    fn project_rejects_bad_interval() {
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            project_eigenvalues(a.view(), 0.0, 1.0),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(matches!(
            project_eigenvalues(a.view(), 2.0, 1.0),
            Err(Error::InvalidInterval { .. })
        ));
    }

    #[test]
    fn mgs_produces_orthonormal_columns() {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let normal = rand_distr::StandardNormal;
        let mut q = Array2::from_shape_fn((7, 4), |_| normal.sample(&mut rng));
        mgs_orthonormalize(&mut q, 0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot = q.column(i).dot(&q.column(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert_close(dot, want, 1e-13, "q^T q");
            }
        }
    }

    #[test]
    fn mgs_flags_collapsed_column() {
        let mut q = Array2::<f64>::zeros((3, 2));
        q[[0, 0]] = 1.0;
        q[[0, 1]] = 2.0; // parallel to column 0, must collapse
        assert_eq!(mgs_orthonormalize(&mut q, 0), Err(1));
    }
}
