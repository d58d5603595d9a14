//! Finite-difference sketched derivatives with exact evaluation reuse.
//!
//! Given a base point x and a sketch S with columns s_i, the model holds
//!
//! ```text
//! g~[i]    = (f(x + a s_i) - f(x)) / a
//! H~[i][j] = (f(x + a s_i + a s_j) - f(x + a s_i) - f(x + a s_j) + f(x)) / a^2
//! ```
//!
//! with the diagonal using the doubled probe `f(x + 2a s_i)`, which is the
//! i = j case of the same difference operator. Every probe is cached under a
//! structural key (which columns, what multiplier), never under floating
//! point coordinates, so rebuilding a probe is a lookup and the query count
//! is exact: a fresh m-column model costs `1 + m + m(m+1)/2` evaluations,
//! and extending a model by one column costs exactly `m + 2` more.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::linalg;
use crate::oracle::CountedOracle;
use crate::sketch::Sketch;
use crate::{Error, Result};

/// Identity of a probe point relative to the base x, as a sorted multiset of
/// (column, multiplier) offsets. Structural, so deduplication is bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProbeKey {
    /// x itself.
    Base,
    /// x + a s_i.
    Single(usize),
    /// x + a s_i + a s_j with i < j.
    Pair(usize, usize),
    /// x + 2a s_i.
    Twice(usize),
}

/// Sketched finite-difference gradient and Hessian at a fixed base point.
///
/// The model owns copies of the base point and sketch matrix it was built
/// from; extension validates against them, so a model can never silently
/// mix probes from two different geometries.
#[derive(Debug, Clone)]
pub struct SketchedModel {
    g_tilde: Array1<f64>,
    /// Exactly symmetric: both triangles are written from one computation.
    h_tilde: Array2<f64>,
    alpha: f64,
    f_x: f64,
    probe_cache: BTreeMap<ProbeKey, f64>,
    queries_used: u64,
    base_x: Array1<f64>,
    sketch_matrix: Array2<f64>,
}

impl SketchedModel {
    /// Sketched gradient estimate, one entry per sketch column.
    pub fn g_tilde(&self) -> ArrayView1<'_, f64> {
        self.g_tilde.view()
    }

    /// Sketched Hessian estimate, m x m symmetric.
    pub fn h_tilde(&self) -> ArrayView2<'_, f64> {
        self.h_tilde.view()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// f at the base point (the `Base` probe).
    pub fn f_x(&self) -> f64 {
        self.f_x
    }

    /// Oracle evaluations this model has spent, fresh build plus extensions.
    pub fn queries_used(&self) -> u64 {
        self.queries_used
    }

    pub fn m(&self) -> usize {
        self.g_tilde.len()
    }

    /// Number of distinct cached probes; equals [`queries_used`](Self::queries_used)
    /// as long as no probe was ever evaluated twice.
    pub fn probe_count(&self) -> usize {
        self.probe_cache.len()
    }

    pub fn cached(&self, key: ProbeKey) -> Option<f64> {
        self.probe_cache.get(&key).copied()
    }

    /// The sketch matrix this model was built along.
    pub fn sketch_matrix(&self) -> ArrayView2<'_, f64> {
        self.sketch_matrix.view()
    }
}

fn probe_point(
    x: ArrayView1<f64>,
    s: ArrayView2<f64>,
    alpha: f64,
    key: ProbeKey,
) -> Array1<f64> {
    let mut p = x.to_owned();
    match key {
        ProbeKey::Base => {}
        ProbeKey::Single(i) => p.scaled_add(alpha, &s.column(i)),
        ProbeKey::Pair(i, j) => {
            p.scaled_add(alpha, &s.column(i));
            p.scaled_add(alpha, &s.column(j));
        }
        ProbeKey::Twice(i) => p.scaled_add(2.0 * alpha, &s.column(i)),
    }
    p
}

fn probe(
    cache: &mut BTreeMap<ProbeKey, f64>,
    oracle: &mut CountedOracle,
    x: ArrayView1<f64>,
    s: ArrayView2<f64>,
    alpha: f64,
    key: ProbeKey,
) -> Result<f64> {
    if let Some(&v) = cache.get(&key) {
        return Ok(v);
    }
    let point = probe_point(x, s, alpha, key);
    let v = oracle.eval(point.view())?;
    cache.insert(key, v);
    Ok(v)
}

/// One Hessian entry from already-cached probes. Both build and extend call
/// this, which is what makes an extended model agree with a fresh build
/// bit for bit.
fn hessian_entry(cache: &BTreeMap<ProbeKey, f64>, f_x: f64, alpha: f64, i: usize, j: usize) -> f64 {
    let single = |k: usize| cache[&ProbeKey::Single(k)];
    if i == j {
        (cache[&ProbeKey::Twice(i)] - 2.0 * single(i) + f_x) / (alpha * alpha)
    } else {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        (cache[&ProbeKey::Pair(lo, hi)] - single(lo) - single(hi) + f_x) / (alpha * alpha)
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "finite-difference step must be positive and finite, got {alpha}"
        )));
    }
    Ok(())
}

/// Build a fresh sketched model at `x`, spending exactly
/// `1 + m + m(m+1)/2` evaluations.
pub fn build_model(
    oracle: &mut CountedOracle,
    x: ArrayView1<f64>,
    sketch: &Sketch,
    alpha: f64,
) -> Result<SketchedModel> {
    validate_alpha(alpha)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem("base point has non-finite entries".into()));
    }
    let s = sketch.matrix();
    let m = sketch.m();
    let before = oracle.queries();
    let mut cache = BTreeMap::new();

    let f_x = probe(&mut cache, oracle, x, s, alpha, ProbeKey::Base)?;
    let mut g = Array1::<f64>::zeros(m);
    for i in 0..m {
        let fi = probe(&mut cache, oracle, x, s, alpha, ProbeKey::Single(i))?;
        g[i] = (fi - f_x) / alpha;
    }
    for i in 0..m {
        for j in i..m {
            let key = if i == j {
                ProbeKey::Twice(i)
            } else {
                ProbeKey::Pair(i, j)
            };
            probe(&mut cache, oracle, x, s, alpha, key)?;
        }
    }
    let mut h = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let v = hessian_entry(&cache, f_x, alpha, i, j);
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }

    Ok(SketchedModel {
        g_tilde: g,
        h_tilde: h,
        alpha,
        f_x,
        probe_cache: cache,
        queries_used: oracle.queries() - before,
        base_x: x.to_owned(),
        sketch_matrix: s.to_owned(),
    })
}

/// Extend a model to a sketch grown by one column, reusing every cached
/// probe. Costs exactly `m + 2` evaluations: the new single probe, the
/// new doubled probe, and one mixed probe per prior column.
pub fn extend_model(
    oracle: &mut CountedOracle,
    x: ArrayView1<f64>,
    model: &SketchedModel,
    grown: &Sketch,
) -> Result<SketchedModel> {
    let m = model.m();
    if grown.m() != m + 1 || grown.n() != model.base_x.len() {
        return Err(Error::ContractViolation(format!(
            "extension expects {} columns in dimension {}, got {} in {}",
            m + 1,
            model.base_x.len(),
            grown.m(),
            grown.n()
        )));
    }
    if x != model.base_x.view() {
        return Err(Error::ContractViolation(
            "extension must reuse the model's base point".into(),
        ));
    }
    let s = grown.matrix();
    for j in 0..m {
        for r in 0..grown.n() {
            // Bit-exact: a moved column would silently invalidate probes.
            if s[[r, j]] != model.sketch_matrix[[r, j]] {
                return Err(Error::ContractViolation(format!(
                    "grown sketch changed column {j}; existing probes would be stale"
                )));
            }
        }
    }

    let alpha = model.alpha;
    let before = oracle.queries();
    let mut cache = model.probe_cache.clone();
    let f_x = model.f_x;

    let fnew = probe(&mut cache, oracle, x, s, alpha, ProbeKey::Single(m))?;
    for i in 0..m {
        probe(&mut cache, oracle, x, s, alpha, ProbeKey::Pair(i, m))?;
    }
    probe(&mut cache, oracle, x, s, alpha, ProbeKey::Twice(m))?;

    let mut g = Array1::<f64>::zeros(m + 1);
    g.slice_mut(ndarray::s![..m]).assign(&model.g_tilde);
    g[m] = (fnew - f_x) / alpha;
    let mut h = Array2::<f64>::zeros((m + 1, m + 1));
    h.slice_mut(ndarray::s![..m, ..m]).assign(&model.h_tilde);
    for i in 0..=m {
        let v = hessian_entry(&cache, f_x, alpha, i, m);
        h[[i, m]] = v;
        h[[m, i]] = v;
    }

    Ok(SketchedModel {
        g_tilde: g,
        h_tilde: h,
        alpha,
        f_x,
        probe_cache: cache,
        queries_used: model.queries_used + (oracle.queries() - before),
        base_x: model.base_x.clone(),
        sketch_matrix: s.to_owned(),
    })
}

/// Distance of the estimates from exact sketched derivatives:
/// `(||g~ - S'g||_2, ||H~ - S'HS||_2)` with the matrix norm spectral
/// (largest absolute eigenvalue of the symmetric difference).
pub fn model_error(
    model: &SketchedModel,
    exact_sg: ArrayView1<f64>,
    exact_shs: ArrayView2<f64>,
) -> Result<(f64, f64)> {
    let m = model.m();
    if exact_sg.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: exact_sg.len(),
        });
    }
    if exact_shs.nrows() != m || exact_shs.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: exact_shs.nrows().max(exact_shs.ncols()),
        });
    }
    let dg = &model.g_tilde - &exact_sg;
    let g_err = dg.dot(&dg).sqrt();
    let dh = &model.h_tilde - &exact_shs;
    let eig = linalg::sym_eig(dh.view())?;
    let h_err = eig.values.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    Ok((g_err, h_err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{
        make_quadratic, CountedOracle, QuadraticProblem, SmoothConvexProblem, SmoothObjective,
    };
    use crate::sketch::{coordinate_sketch, draw_sketch, grow_sketch, SketchStrategy};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn exact_sketched(
        p: &dyn SmoothObjective,
        x: ArrayView1<f64>,
        s: ArrayView2<f64>,
    ) -> (Array1<f64>, Array2<f64>) {
        let sg = s.t().dot(&p.gradient(x));
        let shs = s.t().dot(&p.hessian(x)).dot(&s);
        (sg, shs)
    }

    #[test]
    fn gradient_along_one_coordinate() {
        // f = ||x||^2/2 at (1,0) along e1: (f(1.1,0) - f(1,0))/0.1 = 1.05,
        // exactly the true slope 1 plus the quadratic's a/2 bias.
        let mut o = CountedOracle::new(QuadraticProblem::identity(2));
        let s = coordinate_sketch(2, &[0]).unwrap();
        let model = build_model(&mut o, array![1.0, 0.0].view(), &s, 0.1).unwrap();
        assert!((model.g_tilde()[0] - 1.05).abs() <= 1e-12, "{}", model.g_tilde()[0]);
        assert_eq!(model.queries_used(), 3);
        assert_eq!(model.probe_count(), 3);
        assert!(model.cached(ProbeKey::Twice(0)).is_some());
    }

    #[test]
    fn hessian_of_identity_quadratic_is_identity() {
        let mut o = CountedOracle::new(QuadraticProblem::identity(2));
        let s = coordinate_sketch(2, &[0, 1]).unwrap();
        let model = build_model(&mut o, array![1.0, 0.0].view(), &s, 0.1).unwrap();
        let h = model.h_tilde();
        assert!((h[[0, 0]] - 1.0).abs() <= 1e-12);
        assert!((h[[1, 1]] - 1.0).abs() <= 1e-12);
        assert!(h[[0, 1]].abs() <= 1e-12);
        assert_eq!(h[[0, 1]], h[[1, 0]], "mirrored by construction");
    }

    #[test]
    fn fresh_build_query_count_formula() {
        for m in 1..=5usize {
            let p = make_quadratic(6, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 1).unwrap();
            let mut o = CountedOracle::new(p);
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let s = draw_sketch(SketchStrategy::Coordinate, 6, m, &mut rng).unwrap();
            let x = Array1::from_elem(6, 0.5);
            let model = build_model(&mut o, x.view(), &s, 0.01).unwrap();
            let want = (1 + m + m * (m + 1) / 2) as u64;
            assert_eq!(model.queries_used(), want, "m={m}");
            assert_eq!(o.queries(), want, "oracle agrees, m={m}");
            assert_eq!(model.probe_count() as u64, want, "no duplicate probes");
        }
    }

    #[test]
    fn extension_costs_m_plus_two_and_matches_fresh_build() {
        let p = make_quadratic(5, &[1.0, 2.0, 3.0, 4.0, 5.0], 7).unwrap();
        let x = Array1::from_shape_fn(5, |i| 0.3 * (i as f64) - 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s3 = draw_sketch(SketchStrategy::Coordinate, 5, 3, &mut rng).unwrap();
        let s4 = grow_sketch(&s3, &mut rng).unwrap();

        let mut o = CountedOracle::new(p.clone());
        let m3 = build_model(&mut o, x.view(), &s3, 0.05).unwrap();
        let before = o.queries();
        let extended = extend_model(&mut o, x.view(), &m3, &s4).unwrap();
        assert_eq!(o.queries() - before, 5, "extending 3 -> 4 costs exactly 5");
        assert_eq!(extended.queries_used(), m3.queries_used() + 5);

        let mut o2 = CountedOracle::new(p);
        let fresh = build_model(&mut o2, x.view(), &s4, 0.05).unwrap();
        assert_eq!(extended.g_tilde(), fresh.g_tilde(), "gradients bit-equal");
        assert_eq!(extended.h_tilde(), fresh.h_tilde(), "Hessians bit-equal");
        assert_eq!(extended.f_x(), fresh.f_x());
        assert_eq!(extended.probe_count(), fresh.probe_count());
    }

    #[test]
    fn extension_rejects_mismatched_inputs() {
        let p = QuadraticProblem::identity(4);
        let x = array![1.0, 0.0, 0.0, 0.0];
        let s2 = coordinate_sketch(4, &[0, 1]).unwrap();
        let mut o = CountedOracle::new(p);
        let model = build_model(&mut o, x.view(), &s2, 0.1).unwrap();

        // Same size is not an extension.
        let r = extend_model(&mut o, x.view(), &model, &s2);
        assert!(matches!(r, Err(Error::ContractViolation(_))), "{r:?}");
        // Different prefix guts the cache.
        let swapped = coordinate_sketch(4, &[1, 0, 2]).unwrap();
        let r = extend_model(&mut o, x.view(), &model, &swapped);
        assert!(matches!(r, Err(Error::ContractViolation(_))), "{r:?}");
        // Moved base point.
        let s3 = coordinate_sketch(4, &[0, 1, 2]).unwrap();
        let y = array![0.0, 0.0, 0.0, 1.0];
        let r = extend_model(&mut o, y.view(), &model, &s3);
        assert!(matches!(r, Err(Error::ContractViolation(_))), "{r:?}");
    }

    #[test]
    fn rejects_nonpositive_step() {
        let mut o = CountedOracle::new(QuadraticProblem::identity(2));
        let s = coordinate_sketch(2, &[0]).unwrap();
        for alpha in [0.0, -0.1, f64::NAN] {
            let r = build_model(&mut o, array![0.0, 0.0].view(), &s, alpha);
            assert!(matches!(r, Err(Error::InvalidProblem(_))), "alpha={alpha}");
        }
        assert_eq!(o.queries(), 0);
    }

    #[test]
    fn quadratic_hessian_estimate_is_exact() {
        // Constant Hessian: the only error left is float rounding.
        let p = make_quadratic(4, &[0.5, 1.0, 2.0, 4.0], 3).unwrap();
        let x = Array1::from_shape_fn(4, |i| (i as f64) * 0.4 - 0.6);
        for alpha in [0.1, 0.01] {
            let mut o = CountedOracle::new(p.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let s = draw_sketch(SketchStrategy::Gaussian, 4, 3, &mut rng).unwrap();
            let model = build_model(&mut o, x.view(), &s, alpha).unwrap();
            let (sg, shs) = exact_sketched(&p, x.view(), s.matrix());
            let (_, h_err) = model_error(&model, sg.view(), shs.view()).unwrap();
            assert!(h_err <= 1e-9, "alpha={alpha}: {h_err:e}");
        }
    }

    #[test]
    fn gradient_error_respects_the_curvature_bound() {
        // L1 = 4, m = 4, alpha = 0.01: the bound is sqrt(4)*0.01*4/2 = 0.04.
        let p = make_quadratic(4, &[1.0, 2.0, 3.0, 4.0], 5).unwrap();
        let x = Array1::from_shape_fn(4, |i| 1.0 - 0.5 * (i as f64));
        let mut o = CountedOracle::new(p.clone());
        let s = coordinate_sketch(4, &[0, 1, 2, 3]).unwrap();
        let model = build_model(&mut o, x.view(), &s, 0.01).unwrap();
        let (sg, shs) = exact_sketched(&p, x.view(), s.matrix());
        let (g_err, _) = model_error(&model, sg.view(), shs.view()).unwrap();
        assert!(g_err <= 0.04 + 1e-9, "{g_err}");
    }

    #[test]
    fn positive_definiteness_transfers_when_error_is_small() {
        // S'HS of a strongly convex problem has spectrum >= mu; if the
        // estimate sits within mu of it, the estimate stays positive.
        let p = SmoothConvexProblem::new(6, 17).unwrap();
        let mu = p.strong_convexity();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let normal = StandardNormal;
        for trial in 0..30u64 {
            let x = Array1::from_shape_fn(6, |_| normal.sample(&mut rng));
            let s = draw_sketch(SketchStrategy::Gaussian, 6, 3, &mut rng).unwrap();
            let mut o = CountedOracle::new(p.clone());
            let model = build_model(&mut o, x.view(), &s, 1e-3).unwrap();
            let (sg, shs) = exact_sketched(&p, x.view(), s.matrix());
            let (_, h_err) = model_error(&model, sg.view(), shs.view()).unwrap();
            assert!(h_err < mu, "step small enough to stay under mu (trial {trial})");
            let min_eig = linalg::sym_eig(model.h_tilde())
                .unwrap()
                .values[0];
            assert!(min_eig > 0.0, "trial {trial}: smallest eigenvalue {min_eig}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn finite_difference_errors_stay_inside_lemma_bounds(
            seed in 0u64..1000,
            alpha_pick in 0usize..2,
            m in 1usize..5,
        ) {
            let alpha = [1e-2, 1e-3][alpha_pick];
            let p = SmoothConvexProblem::new(5, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let x = Array1::from_shape_fn(5, |_| rng.sample::<f64, _>(StandardNormal));
            let s = draw_sketch(SketchStrategy::Gaussian, 5, m, &mut rng).unwrap();
            let mut o = CountedOracle::new(p.clone());
            let model = build_model(&mut o, x.view(), &s, alpha).unwrap();
            let (sg, shs) = exact_sketched(&p, x.view(), s.matrix());
            let (g_err, h_err) = model_error(&model, sg.view(), shs.view()).unwrap();
            let g_bound = (m as f64).sqrt() * alpha * p.grad_lipschitz() / 2.0 + 1e-9;
            let h_bound = 5.0 * (m as f64) * alpha * p.hess_lipschitz() / 3.0 + 1e-9;
            prop_assert!(g_err <= g_bound, "gradient {g_err:e} > {g_bound:e}");
            prop_assert!(h_err <= h_bound, "hessian {h_err:e} > {h_bound:e}");
        }

        #[test]
        fn probe_cache_never_holds_duplicates(seed in 0u64..300, m in 1usize..6) {
            let p = make_quadratic(6, &[1.0, 1.5, 2.0, 2.5, 3.0, 3.5], seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array1::from_shape_fn(6, |_| rng.sample::<f64, _>(StandardNormal));
            let mut s = draw_sketch(SketchStrategy::Coordinate, 6, m, &mut rng).unwrap();
            let mut o = CountedOracle::new(p);
            let mut model = build_model(&mut o, x.view(), &s, 0.05).unwrap();
            prop_assert_eq!(model.probe_count() as u64, model.queries_used());
            while s.m() < 6 {
                s = grow_sketch(&s, &mut rng).unwrap();
                model = extend_model(&mut o, x.view(), &model, &s).unwrap();
                prop_assert_eq!(model.probe_count() as u64, model.queries_used());
                prop_assert_eq!(model.queries_used(), o.queries());
            }
        }
    }
}
