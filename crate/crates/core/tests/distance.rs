use proptest::prelude::*;
use udf_core::geometry::*;
use udf_core::{MultiIndex, ScalarField};

fn ellipse(a: f64, b: f64, wobble: f64) -> ScalarField {
    ScalarField::parse(&format!("x^2/{a}^2 + y^2/{b}^2 - 1 + {wobble}*x^3*y"), 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent_and_signed(
        a in 1.0f64..2.5, b in 0.6f64..1.5, w in -0.05f64..0.05,
        x in -3.0f64..3.0, y in -3.0f64..3.0,
    ) {
        let f = ellipse(a, b, w);
        let q = [x, y];
        let Ok(d) = boundary_project(&f, &q, DEFAULT_TOL) else {
            // the query may sit on the medial axis; nothing to check there
            return Ok(());
        };
        let again = boundary_project(&f, &d.foot, DEFAULT_TOL).unwrap();
        prop_assert!(again.signed.abs() <= 1e-9);
        for (u, v) in again.foot.iter().zip(&d.foot) {
            prop_assert!((u - v).abs() <= 1e-9);
        }
        let rho = f.eval(&q).unwrap();
        prop_assert!(d.signed * rho >= 0.0, "δ {} ρ {}", d.signed, rho);
    }

    #[test]
    fn sample_frames_are_tangent(a in 1.0f64..2.5, b in 0.6f64..1.5, seed in 0u64..1000) {
        let f = ellipse(a, b, 0.02);
        let region = Region::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        for s in sample_boundary(&f, &region, 24, 2, seed, DEFAULT_TOL).unwrap() {
            let t = s.frame_derivative(&MultiIndex::new(vec![0]), 0).unwrap();
            prop_assert!(t.abs() <= 1e-10 * s.grad_norm);
            prop_assert!(f.eval(&s.point).unwrap().abs() <= 1e-9);
        }
    }
}

#[test]
fn mixed_normal_tangential_second_derivatives_vanish() {
    let f = ellipse(2.0, 1.0, 0.03);
    let region = Region::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
    for s in sample_boundary(&f, &region, 40, 2, 9, DEFAULT_TOL).unwrap() {
        let jet = distance_jet_numeric(&f, &s.point, 2, None, None, DEFAULT_TOL).unwrap();
        let framed = jet.rotated(s.frame.matrix());
        let mixed = framed.derivative(&[0, 1]).unwrap();
        assert!(mixed.abs() <= 1e-4, "mixed {mixed} at {:?}", s.point);
        let nn = framed.derivative(&[1, 1]).unwrap();
        assert!(nn.abs() <= 1e-4, "normal-normal {nn}");
    }
}

#[test]
fn numeric_jet_matches_closed_form_on_circle() {
    // δ = |x| − 1 differentiated by the jet algebra itself
    let f = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
    let exact = ScalarField::parse("sqrt(x^2 + y^2) - 1", 2).unwrap();
    for x in [[2.0, 0.0], [0.3, -1.4], [-0.5, 0.6], [1.1, 0.9]] {
        let num = distance_jet_numeric(&f, &x, 3, None, None, DEFAULT_TOL).unwrap();
        let ana = exact.eval_jet(&x, 3).unwrap();
        for k in 0..=3 {
            for idx in MultiIndex::all(2, k) {
                let (a, b) = (num.partial(&idx).unwrap(), ana.partial(&idx).unwrap());
                assert!((a - b).abs() <= 1e-4, "{idx} at {x:?}: {a} vs {b}");
            }
        }
    }
    let at2 = distance_jet_numeric(&f, &[2.0, 0.0], 2, None, None, DEFAULT_TOL).unwrap();
    assert!((at2.derivative(&[0]).unwrap() - 1.0).abs() <= 1e-8);
    assert!(at2.derivative(&[1]).unwrap().abs() <= 1e-8);
    let h = at2.hessian().unwrap();
    assert!(h[(0, 0)].abs() <= 1e-5 && h[(0, 1)].abs() <= 1e-5 && (h[(1, 1)] - 0.5).abs() <= 1e-5);
}

#[test]
fn sinc_graph_distance_against_dense_search() {
    let f = ScalarField::parse_piecewise(
        2,
        &[("abs(x) < 0.1", "y - (1 - x^2/6 + x^4/120 - x^6/5040 + x^8/362880)")],
        "y - sin(x)/x",
    )
    .unwrap();
    let q = [0.0, 2.0];
    let d = signed_distance(&f, &q, DEFAULT_TOL).unwrap();
    // golden-section refinement of a dense scan over the graph
    let dist = |t: f64| {
        let g = if t == 0.0 { 1.0 } else { t.sin() / t };
        (t * t + (g - 2.0) * (g - 2.0)).sqrt()
    };
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=200_000 {
        let t = -10.0 + 20.0 * i as f64 / 200_000.0;
        let v = dist(t);
        if v < best.0 {
            best = (v, t);
        }
    }
    let (mut lo, mut hi) = (best.1 - 1e-4, best.1 + 1e-4);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c, e) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if dist(c) < dist(e) {
            hi = e;
        } else {
            lo = c;
        }
    }
    let brute = dist(0.5 * (lo + hi));
    assert!(d > 0.0);
    assert!((d - brute).abs() <= 1e-6, "{d} vs {brute}");
}

#[test]
fn circle_samples_have_no_large_gaps() {
    let f = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
    let region = Region::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
    let pts = sample_boundary_points(&f, &region, 100, 42, DEFAULT_TOL, &[]).unwrap();
    assert_eq!(pts.len(), 100);
    let mut angles: Vec<f64> = pts.iter().map(|p| p[1].atan2(p[0])).collect();
    angles.sort_by(f64::total_cmp);
    let mut gap = angles[0] + std::f64::consts::TAU - angles[angles.len() - 1];
    for w in angles.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    assert!(gap <= 0.12, "largest angular gap {gap}");
}

#[test]
fn forced_seeds_land_on_the_line() {
    let f = ScalarField::parse("z - x*y^2", 3).unwrap();
    let region = Region::new(vec![1.0, -1.0, -2.0], vec![64.0, 1.0, 2.0]).unwrap();
    let seeds: Vec<Vec<f64>> = (1..=64).map(|x| vec![x as f64, 0.0, 0.0]).collect();
    let pts = sample_boundary_points(&f, &region, 128, 42, DEFAULT_TOL, &seeds).unwrap();
    for x in [1.0, 8.0, 64.0] {
        assert!(
            pts.iter().any(|p| (p[0] - x).abs() <= 1e-8 && p[1].abs() <= 1e-8 && p[2].abs() <= 1e-8),
            "no sample at ({x}, 0, 0)"
        );
    }
}

#[test]
fn eikonal_on_analytic_fields() {
    let circle = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
    let c = eikonal_residual(&circle, &[1.5, 0.0], None, DEFAULT_TOL).unwrap();
    assert!(c.residual <= 1e-8 && c.normal_mismatch <= 1e-8);

    let omega2 = ScalarField::parse_piecewise(
        2,
        &[("abs(x) < 0.1", "y - (1 - x^4/6 + x^8/120 - x^12/5040)")],
        "y - sin(x^2)/x^2",
    )
    .unwrap();
    let region = Region::new(vec![1.0, -2.0], vec![3.0, 2.0]).unwrap();
    for s in sample_boundary(&omega2, &region, 12, 1, 4, DEFAULT_TOL).unwrap() {
        let x: Vec<f64> = s.point.iter().zip(s.normal()).map(|(p, n)| p - 0.05 * n).collect();
        let c = eikonal_residual(&omega2, &x, None, DEFAULT_TOL).unwrap();
        assert!(c.residual <= 1e-5, "residual {} at {:?}", c.residual, x);
    }
}
