use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udf_core::geometry::{sample_boundary, BoundarySample, Region, DEFAULT_TOL};
use udf_core::psh::*;
use udf_core::{Error, ScalarField};

fn tube() -> ScalarField {
    ScalarField::parse("x1^2 + x2^2 + x4^2 - 1", 4).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complex_hessian_is_hermitian(x in prop::collection::vec(-1.5f64..1.5, 4)) {
        let f = ScalarField::parse("x1^3*x3 + sin(x2*x4) + exp(x1 - x4)*x3^2 + x2^2*x3", 4).unwrap();
        let h = wirtinger_hessian(&f, &x, false, DEFAULT_TOL).unwrap();
        prop_assert!(h.hermitian_defect() <= 1e-12);
    }

    #[test]
    fn chosen_lambda_satisfies_its_inequality(c in 0.01f64..10.0, c2 in 0.0f64..10.0) {
        let l = choose_lambda(c, c2, true).unwrap();
        prop_assert!(l >= LAMBDA_FLOOR);
        prop_assert!(c * (0.25 * l - c2) > 4.0 * c2 * c2);
        let l = choose_lambda(c, c2, false).unwrap();
        prop_assert!(0.5 * c * (0.25 * l - c2) >= 4.0 * c2 * c2);
    }

    #[test]
    fn mollified_max_is_convex_and_monotone(
        a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0, eps in 0.05f64..1.0,
    ) {
        let m = |x: f64, y: f64| mollified_max(x, y, eps);
        prop_assert!(m(a, a) >= a && m(a, a) <= a + eps);
        // ½(a + b + |a − b|) may round one ulp below the max
        let ulp = 1e-14;
        prop_assert!(m(a, b) >= a.max(b) - ulp);
        prop_assert!(m(a + 0.1, b) >= m(a, b) - ulp && m(a, b + 0.1) >= m(a, b) - ulp);
        let mid = m(0.5 * (a + c), 0.5 * (b + d));
        prop_assert!(mid <= 0.5 * (m(a, b) + m(c, d)) + 1e-12);
    }
}

#[test]
fn tangent_decomposition_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let g: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let g: Vec<f64> = g.iter().map(|v| v / len).collect();
        let parts: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = complex_tangent_decompose(&g, &complex_vector(&parts)).unwrap();
        assert!(s.tangency_residual <= 1e-12);
        assert!(s.reassembly_error <= 1e-12);
        assert!(s.identity_gap <= 1e-12);
    }
}

#[test]
fn tube_levi_form() {
    let h = wirtinger_hessian(&tube(), &[0.3, 0.1, 2.0, -0.4], false, DEFAULT_TOL).unwrap();
    assert_eq!(h.entry(0, 0).re, 1.0);
    assert_eq!(h.entry(1, 1).re, 0.5);
    assert_eq!(h.entry(0, 1).norm(), 0.0);
    assert_eq!(h.im.abs().max(), 0.0);
}

#[test]
fn tube_and_ball_constants() {
    let f = tube();
    // complex tangent along z2 where the normal lies in the z1 line
    let s = BoundarySample::new(&f, vec![1.0, 0.0, 0.7, 0.0], 2).unwrap();
    assert!((levi_ratio(&s).unwrap() - 0.25).abs() <= 1e-6);
    let s = BoundarySample::new(&f, vec![0.0, 0.0, -3.0, 1.0], 2).unwrap();
    assert!((levi_ratio(&s).unwrap() - 0.5).abs() <= 1e-6);

    let region = Region::new(vec![-2.0, -2.0, -5.0, -2.0], vec![2.0, 2.0, 5.0, 2.0]).unwrap();
    let samples = sample_boundary(&f, &region, 64, 2, 5, DEFAULT_TOL).unwrap();
    let c = strict_psc_constant(&samples).unwrap();
    assert!((0.25 - 1e-12..=0.5).contains(&c), "C = {c}");

    let ball = ScalarField::parse("x1^2 + x2^2 + x3^2 + x4^2 - 1", 4).unwrap();
    let region = Region::new(vec![-2.0; 4], vec![2.0; 4]).unwrap();
    let samples = sample_boundary(&ball, &region, 32, 2, 5, DEFAULT_TOL).unwrap();
    assert!((strict_psc_constant(&samples).unwrap() - 0.5).abs() <= 1e-6);
}

#[test]
fn half_space_fails_the_hypothesis() {
    let f = ScalarField::parse("x2", 4).unwrap();
    let region = Region::new(vec![-1.0; 4], vec![1.0; 4]).unwrap();
    let samples = sample_boundary(&f, &region, 8, 2, 1, DEFAULT_TOL).unwrap();
    let c = strict_psc_constant(&samples).unwrap();
    assert_eq!(c, 0.0);
    assert!(matches!(choose_lambda(c, 0.0, true), Err(Error::Hypothesis(_))));
    assert!(matches!(
        certify(&f, &samples, f64::INFINITY, true, None, 10, 1, DEFAULT_TOL),
        Err(Error::Hypothesis(_))
    ));
}

#[test]
fn exponential_defining_function_gradient() {
    let ball = ScalarField::parse("x1^2 + x2^2 + x3^2 + x4^2 - 1", 4).unwrap();
    let field = PshField {
        geometry: &ball,
        lambda: 3.5,
        width: 0.25,
        tol: DEFAULT_TOL,
    };
    let p = [0.5, -0.5, 0.5, 0.5];
    let g = field.jet(&p, 1).unwrap().gradient();
    for (gi, ni) in g.iter().zip(p) {
        assert!((gi - 3.5 * ni).abs() <= 1e-6);
    }
    assert!(field.value(&p).unwrap().abs() <= 1e-12);
}

#[test]
fn ball_certifies_with_automatic_lambda() {
    let ball = ScalarField::parse("x1^2 + x2^2 + x3^2 + x4^2 - 1", 4).unwrap();
    let region = Region::new(vec![-2.0; 4], vec![2.0; 4]).unwrap();
    let samples = sample_boundary(&ball, &region, 32, 2, 3, DEFAULT_TOL).unwrap();
    let data = certify(&ball, &samples, 1.0, true, None, 200, 3, DEFAULT_TOL).unwrap();
    assert!(data.passed);
    assert!(data.c * (0.25 * data.lambda - data.c2) > 4.0 * data.c2 * data.c2);
    assert_eq!(data.certified_points, 232);
}
