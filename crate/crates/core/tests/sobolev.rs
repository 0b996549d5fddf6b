use nalgebra::DMatrix;
use proptest::prelude::*;
use udf_core::curvature::reach_estimate;
use udf_core::geometry::{sample_boundary, signed_distance, Region, DEFAULT_TOL};
use udf_core::linalg::axpy;
use udf_core::registry::SmoothStepCutoff;
use udf_core::sobolev::*;
use udf_core::ScalarField;

fn chi(cover: &PartitionData, x: &[f64], j: usize) -> f64 {
    cover
        .partition_functions(&SmoothStepCutoff, x)
        .unwrap()
        .into_iter()
        .find(|(k, _)| *k == j)
        .map_or(0.0, |(_, v)| v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn partition_of_unity(r in 0.2f64..1.0, x in prop::collection::vec(-2.0f64..2.0, 2)) {
        let cover = lattice_cover(r, &Region::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap()).unwrap();
        let parts = cover.partition_functions(&SmoothStepCutoff, &x).unwrap();
        let sum: f64 = parts.iter().map(|(_, v)| v).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(parts.iter().all(|(_, v)| (0.0..=1.0).contains(v)));
        prop_assert!(cover.neighbors(&x).len() <= cover.overlap_bound);
        prop_assert_eq!(cover.overlap_bound, 25);
    }

    #[test]
    fn partition_scales_with_the_radius(r in 0.2f64..1.0, x in prop::collection::vec(-1.0f64..1.0, 2)) {
        let unit = lattice_cover(1.0, &Region::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap()).unwrap();
        let small = lattice_cover(r, &Region::new(vec![-2.0 * r, -2.0 * r], vec![2.0 * r, 2.0 * r]).unwrap()).unwrap();
        let y: Vec<f64> = x.iter().map(|v| v * r).collect();
        let a = unit.partition_functions(&SmoothStepCutoff, &x).unwrap();
        let b = small.partition_functions(&SmoothStepCutoff, &y).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for ((ja, va), (jb, vb)) in a.iter().zip(&b) {
            for (ca, cb) in unit.centers[*ja].iter().zip(&small.centers[*jb]) {
                prop_assert!((ca * r - cb).abs() <= 1e-12);
            }
            prop_assert!((va - vb).abs() <= 1e-12);
        }
    }
}

#[test]
fn partition_second_derivatives_scale_like_r_squared() {
    // r^2 |D^2 chi_j| is independent of r, so one bound serves every cover
    let mut peaks = Vec::new();
    for r in [1.0, 0.25] {
        let cover = lattice_cover(r, &Region::new(vec![-2.0 * r; 2], vec![2.0 * r; 2]).unwrap()).unwrap();
        let j = cover.neighbors(&[0.0, 0.0])[0];
        let h = 1e-3 * r;
        let mut peak = 0.0f64;
        for a in 0..40 {
            for b in 0..40 {
                let x = [(a as f64 / 39.0 - 0.5) * 2.0 * r, (b as f64 / 39.0 - 0.5) * 2.0 * r];
                let f = |dx: f64, dy: f64| chi(&cover, &[x[0] + dx, x[1] + dy], j);
                let fxx = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
                let fyy = (f(0.0, h) - 2.0 * f(0.0, 0.0) + f(0.0, -h)) / (h * h);
                let fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                peak = peak.max(fxx.abs()).max(fyy.abs()).max(fxy.abs());
            }
        }
        assert!(peak.is_finite());
        peaks.push(peak * r * r);
    }
    assert!((peaks[0] - peaks[1]).abs() <= 1e-3 * peaks[0], "{peaks:?}");
}

#[test]
fn collar_frames_are_tangent_to_level_sets() {
    let f = ScalarField::parse("x^2/4 + y^2 + z^2/2 - 1", 3).unwrap();
    // reach is 1/2; points sit just inside the boundary
    for (t, u, scale) in [(0.3f64, 0.2f64, 0.92), (1.0, 2.0, 0.95), (2.2, -1.0, 1.05), (-0.7, 0.5, 0.9)] {
        let x = [2.0 * t.cos() * scale, t.sin() * u.cos() * scale, 2f64.sqrt() * t.sin() * u.sin() * scale];
        let cf = collar_frame(&f, &x, 0.4, DEFAULT_TOL).unwrap();
        let q = cf.frame.matrix();
        let defect = (q.transpose() * q - DMatrix::<f64>::identity(3, 3)).abs().max();
        assert!(defect <= 1e-12);
        for j in 0..2 {
            let l = cf.frame.axis(j);
            let h = 1e-5;
            let d = (signed_distance(&f, &axpy(&x, h, &l), DEFAULT_TOL).unwrap()
                - signed_distance(&f, &axpy(&x, -h, &l), DEFAULT_TOL).unwrap())
                / (2.0 * h);
            assert!(d.abs() <= 1e-8, "L_{j} δ = {d} at {x:?}");
        }
    }
}

#[test]
fn operator_on_constants_is_the_weight_term() {
    let f = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
    let one = ScalarField::parse("1", 2).unwrap();
    let t = 0.7;
    for x in [[0.8, 0.1], [0.0, -0.9], [0.6, 0.6]] {
        let cf = collar_frame(&f, &x, 0.5, DEFAULT_TOL).unwrap();
        for j in 0..2 {
            let l = cf.frame.axis(j);
            let expect = -2.0 * t * (x[0] * l[0] + x[1] * l[1]);
            let got = tangential_operator_apply(&f, t, &one, &x, j, 0.5, DEFAULT_TOL).unwrap();
            assert!((got - expect).abs() <= 1e-14);
        }
    }
}

fn bump(x: &[f64]) -> f64 {
    let s = (x[0] * x[0] + x[1] * x[1]) / 1.5625;
    if s < 1.0 {
        (-1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

#[test]
fn first_order_norm_converges_under_refinement() {
    let f = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
    let collar = Collar {
        geometry: &f,
        width: 0.5,
        truncation: Region::new(vec![-1.5, -1.5], vec![1.5, 1.5]).unwrap(),
        tol: DEFAULT_TOL,
    };
    let spec = WeightedNormSpec {
        order: 1,
        p: 2.0,
        t: 0.5,
        resolution: 48,
    };
    let n = weighted_sobolev_norm(&bump, &spec, Partitioning::Direct, &collar).unwrap();
    assert!(n.error_estimate <= 0.01 * n.refined, "{n:?}");
}

#[test]
fn cover_radius_respects_the_reach() {
    let circle = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
    let region = Region::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
    let samples = sample_boundary(&circle, &region, 32, 2, 4, DEFAULT_TOL).unwrap();
    let r = choose_cover_radius(&circle, &samples, 1.0, 10.0, DEFAULT_TOL).unwrap();
    assert!(r > 0.0 && r <= 0.25);

    let omega2 = ScalarField::parse_piecewise(
        2,
        &[("abs(x) < 0.1", "y - (1 - x^4/6 + x^8/120 - x^12/5040)")],
        "y - sin(x^2)/x^2",
    )
    .unwrap();
    let region = Region::new(vec![1.0, -2.0], vec![10.0, 2.0]).unwrap();
    let samples = sample_boundary(&omega2, &region, 128, 2, 4, DEFAULT_TOL).unwrap();
    let reach = reach_estimate(&samples, &omega2, 4, DEFAULT_TOL).unwrap().reach;
    let r = choose_cover_radius(&omega2, &samples, reach, 10.0, DEFAULT_TOL).unwrap();
    assert!(r > 0.0 && r <= 0.25 * reach);
}
