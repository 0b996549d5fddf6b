use proptest::prelude::*;
use udf_core::curvature::tangential_hessian;
use udf_core::geometry::{sample_boundary, BoundarySample, Region, DEFAULT_TOL};
use udf_core::norms::*;
use udf_core::{MultiIndex, ScalarField};

fn samples(expr: &str, n: usize, order: usize, seed: u64) -> Vec<BoundarySample> {
    let f = ScalarField::parse(expr, n).unwrap();
    let region = Region::new(vec![-3.0; n], vec![3.0; n]).unwrap();
    sample_boundary(&f, &region, 16, order, seed, DEFAULT_TOL).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cb_norms_grow_with_order(a in 0.5f64..2.0, c in -0.3f64..0.3, seed in 0u64..500) {
        let expr = format!("x^2/{a} + y^2 + z^2 - 1 + {c}*x*y*z");
        for s in samples(&expr, 3, 4, seed) {
            for k in 1..=4 {
                prop_assert!(cb_norm(&s, k - 1).unwrap() <= cb_norm(&s, k).unwrap());
            }
        }
    }

    #[test]
    fn chain_inequality(c in -0.5f64..0.5, d in -0.5f64..0.5, seed in 0u64..500) {
        let expr = format!("x^2 + 2*y^2 - 1 + {c}*x^3 + {d}*x*y^3");
        for s in samples(&expr, 2, 4, seed) {
            for j in 0..=2usize {
                for len in 0..=4usize {
                    let k = len + 2 * j;
                    if k > 4 || len + j > 4 {
                        continue;
                    }
                    let inter = cb_intermediate_norm(&s, k, j).unwrap();
                    let full = cb_norm(&s, k).unwrap();
                    prop_assert!(inter <= full);
                    for idx in MultiIndex::all(1, len) {
                        let v = s.frame_derivative(&idx, j).unwrap().abs();
                        prop_assert!(v <= inter, "|I|={len} j={j}: {v} > {inter}");
                    }
                }
            }
        }
    }

    #[test]
    fn second_order_ratio_is_defining_function_free(c in -0.3f64..0.3, seed in 0u64..500) {
        let rho = format!("x^2/4 + y^2 - 1 + {c}*x^2*y");
        let scaled = format!("(2 + sin(x*y))*({rho})");
        let a = samples(&rho, 2, 2, seed);
        let f2 = ScalarField::parse(&scaled, 2).unwrap();
        for s in &a {
            let t = BoundarySample::new(&f2, s.point.clone(), 2).unwrap();
            let h1 = tangential_hessian(s).unwrap().hessian[0][0];
            let h2 = tangential_hessian(&t).unwrap().hessian[0][0];
            prop_assert!((h1 - h2).abs() <= 1e-8, "{h1} vs {h2}");
        }
    }
}

#[test]
fn h_value_inverts_the_gradient() {
    for s in samples("x^2 + 3*y^2 - 1 + 0.1*x^3", 2, 2, 3) {
        let n = sample_norms(&s, 2).unwrap();
        assert!((n.h_value * s.grad_norm - 1.0).abs() <= f64::EPSILON);
    }
}

#[test]
fn circle_closed_forms() {
    let f = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
    let s = BoundarySample::new(&f, vec![1.0, 0.0], 4).unwrap();
    assert!((cb_norm(&s, 2).unwrap() - 8f64.sqrt()).abs() < 1e-14);
    assert!((extrinsic_norm_at(&s.jet, 2).unwrap() - 12f64.sqrt()).abs() < 1e-14);
    assert_eq!(cb_intermediate_norm(&s, 3, 0).unwrap(), cb_norm(&s, 3).unwrap());
    // k even, j = k/2: previous order plus the pure normal term
    let prev = cb_norm(&s, 3).unwrap();
    let dnn = s.frame_derivative(&MultiIndex::empty(), 2).unwrap();
    let expect = (prev * prev + dnn * dnn).sqrt();
    assert!((cb_intermediate_norm(&s, 4, 2).unwrap() - expect).abs() < 1e-14);

    let h = h_diagnostics(&f, &f, &s, 3, 1.0, DEFAULT_TOL).unwrap();
    assert_eq!(h.h_value, 0.5);
    let dh = h.normal_derivative.unwrap();
    assert!((dh + 0.25).abs() <= 1e-4, "∂h/∂n = {dh}");
}

#[test]
fn flat_linear_field_has_zero_first_norm() {
    let f = ScalarField::parse("y", 2).unwrap();
    let s = BoundarySample::new(&f, vec![3.0, 0.0], 2).unwrap();
    assert_eq!(cb_norm(&s, 1).unwrap(), 0.0);
    assert_eq!(uniformity_ratio(&s, 2).unwrap(), 0.0);
}

#[test]
fn counterexample_ratio_is_twice_x() {
    let f = ScalarField::parse("z - x*y^2", 3).unwrap();
    for x in [1.0f64, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let s = BoundarySample::new(&f, vec![x, 0.0, 0.0], 2).unwrap();
        assert!((uniformity_ratio(&s, 2).unwrap() - 2.0 * x).abs() <= 1e-8);
    }
}

#[test]
fn scaled_sinc_extrinsic_norm_diverges() {
    let f = ScalarField::parse("(y - sin(x^2)/x^2)*exp(x^2)", 2).unwrap();
    let mut last = 0.0;
    for x in [2.0f64, 3.0, 4.0, 5.0] {
        let p = vec![x, (x * x).sin() / (x * x)];
        let s = BoundarySample::new(&f, p, 2).unwrap();
        let e = extrinsic_norm_at(&s.jet, 2).unwrap();
        assert!(e > 10.0 * last);
        last = e;
    }
}
