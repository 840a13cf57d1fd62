//! Filter-level properties: determinism, the Kalman oracle for the normal
//! family, static collapse of the smoother, conjugate bookkeeping and the
//! no-information fixed point of linear Bayes.

use edglm_core::filter::{filter_pass, linear_bayes, smooth, PriorStateMoments, StateMoments, Weights};
use edglm_core::modelspec::{harmonic_block, polynomial_block, Covariates, ModelSpec};
use edglm_core::{Family, PredictorMoments};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution, Normal};

fn seasonal_beta_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|t| {
            let eta: f64 = -1.0 + 0.4 * (2.0 * std::f64::consts::PI * t as f64 / 12.0).cos();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let phi = 80.0;
            Beta::new(mu * phi, (1.0 - mu) * phi).unwrap().sample(&mut rng)
        })
        .collect()
}

fn seasonal_spec() -> ModelSpec {
    ModelSpec::new(
        Family::Beta,
        vec![
            polynomial_block(2).unwrap().with_discount(0.9),
            harmonic_block(2.0 * std::f64::consts::PI / 12.0).unwrap().with_discount(0.95),
        ],
        vec![polynomial_block(1).unwrap().with_discount(0.9)],
    )
    .unwrap()
}

#[test]
fn filter_is_deterministic() {
    let y = seasonal_beta_series(60, 3);
    let spec = seasonal_spec();
    let init = StateMoments::vague(5);
    let a = filter_pass(&spec, &y, &Covariates::new(), &init, &Weights::identity()).unwrap();
    let b = filter_pass(&spec, &y, &Covariates::new(), &init, &Weights::identity()).unwrap();
    assert_eq!(a.steps, b.steps);
}

#[test]
fn conjugate_bookkeeping() {
    let y = seasonal_beta_series(60, 5);
    let fr = filter_pass(&seasonal_spec(), &y, &Covariates::new(), &StateMoments::vague(5), &Weights::identity()).unwrap();
    for s in &fr.steps {
        let (s1, s2) = Family::Beta.conjugate_stats(s.y).unwrap();
        assert_eq!(s.tau_star, Family::Beta.conjugate_update(&s.tau, s.y).unwrap());
        let ulp = |x: f64| 4.0 * f64::EPSILON * x.abs().max(1.0);
        assert!((s.tau_star.tau0 - s.tau.tau0 - 1.0).abs() <= ulp(s.tau_star.tau0));
        assert!((s.tau_star.tau1 - s.tau.tau1 - s1).abs() <= ulp(s.tau_star.tau1));
        assert!((s.tau_star.tau2 - s.tau.tau2 - s2).abs() <= ulp(s.tau_star.tau2));
    }
}

#[test]
fn static_collapse_of_the_smoother() {
    for family in [Family::Beta, Family::Normal] {
        let spec = ModelSpec::new(
            family,
            vec![polynomial_block(1).unwrap().with_w(DMatrix::zeros(1, 1))],
            vec![polynomial_block(1).unwrap().with_w(DMatrix::zeros(1, 1))],
        )
        .unwrap();
        let y = seasonal_beta_series(50, 9);
        let fr = filter_pass(&spec, &y, &Covariates::new(), &StateMoments::vague(2), &Weights::identity()).unwrap();
        let sm = smooth(&fr).unwrap();
        let m_t = &fr.steps.last().unwrap().m;
        for s in &sm {
            let err = (&s.m - m_t).abs().max();
            assert!(err <= 1e-12 * m_t.abs().max().max(1.0), "{family}: {err:e}");
        }
    }
}

/// Exact Kalman filter for a local linear trend with known observation
/// variance `v`.
fn kalman(y: &[f64], w: &Matrix2<f64>, v: f64, m0: Vector2<f64>, c0: Matrix2<f64>) -> Vec<Vector2<f64>> {
    let g = Matrix2::new(1.0, 1.0, 0.0, 1.0);
    let f = Vector2::new(1.0, 0.0);
    let (mut m, mut c) = (m0, c0);
    let mut out = Vec::new();
    for &yt in y {
        let a = g * m;
        let r = g * c * g.transpose() + w;
        let q = f.dot(&(r * f)) + v;
        let k = r * f / q;
        m = a + k * (yt - f.dot(&a));
        c = r - k * k.transpose() * q;
        out.push(m);
    }
    out
}

/// The normal-gamma prior ties the spread of μ to φ, so the precision
/// predictor variance is left out of the matching (zero weight): the prior
/// is then fixed by `(f1, f2, q11)` and the mean update is the Kalman update
/// up to the Student-t correction.
#[test]
fn normal_filter_matches_kalman_oracle() {
    let phi: f64 = 400.0;
    let w: Matrix2<f64> = Matrix2::new(1e-5, 0.0, 0.0, 1e-7);
    let mut rng = StdRng::seed_from_u64(42);
    // Initial state drawn from the filter's prior N(m0, C0).
    let mut level = 1.0 + Normal::new(0.0, 1e-3f64.sqrt()).unwrap().sample(&mut rng);
    let mut slope = Normal::new(0.0, 1e-5f64.sqrt()).unwrap().sample(&mut rng);
    let mut y = Vec::new();
    for _ in 0..100 {
        level += slope + Normal::new(0.0, w[(0, 0)].sqrt()).unwrap().sample(&mut rng);
        slope += Normal::new(0.0, w[(1, 1)].sqrt()).unwrap().sample(&mut rng);
        y.push(level + Normal::new(0.0, phi.recip().sqrt()).unwrap().sample(&mut rng));
    }
    let spec = ModelSpec::new(
        Family::Normal,
        vec![polynomial_block(2).unwrap().with_w(DMatrix::from_column_slice(2, 2, w.as_slice()))],
        vec![polynomial_block(1).unwrap().with_w(DMatrix::zeros(1, 1))],
    )
    .unwrap();
    let m0 = Vector2::new(1.0, 0.0);
    let c0 = Matrix2::new(1e-3, 0.0, 0.0, 1e-5);
    let init = StateMoments::new(
        DVector::from_vec(vec![m0[0], m0[1], phi.ln()]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![c0[(0, 0)], c0[(1, 1)], 1e-8])),
    )
    .unwrap();
    let omega = Weights::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0, 0.0));
    let fr = filter_pass(&spec, &y, &Covariates::new(), &init, &omega).unwrap();
    let oracle = kalman(&y, &w, 1.0 / phi, m0, c0);
    for (s, k) in fr.steps.iter().zip(&oracle) {
        let rel = (s.m[0] - k[0]).abs() / k[0].abs().max(1.0);
        assert!(rel < 1e-2, "t = {}: level {} vs {}", s.t, s.m[0], k[0]);
        let slope_err = (s.m[1] - k[1]).abs();
        assert!(slope_err < 1e-2 * k[1].abs().max(0.1), "t = {}: slope {} vs {}", s.t, s.m[1], k[1]);
    }
}

fn spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &l * l.transpose() + DMatrix::identity(n, n) * 0.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn no_information_is_a_fixed_point(n in 2usize..7, seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let prior = PriorStateMoments {
            a: DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)),
            r: spd(n, seed ^ 0x9e37),
        };
        let f = DMatrix::from_fn(n, 2, |i, j| if (i == 0 && j == 0) || (i == n - 1 && j == 1) { 1.0 } else if i < n - 1 && j == 0 { rng.gen_range(-1.0..1.0) } else { 0.0 });
        let fa = f.transpose() * &prior.a;
        let q = f.transpose() * &prior.r * &f;
        let pm = PredictorMoments::new(Vector2::new(fa[0], fa[1]), Matrix2::new(q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]));
        let post = linear_bayes(&prior, &f, &pm, &pm.f, &pm.q).unwrap();
        prop_assert_eq!(post.m, prior.a);
        prop_assert_eq!(post.c, prior.r);
    }
}
