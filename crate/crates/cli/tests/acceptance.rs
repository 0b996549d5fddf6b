//! One line per acceptance criterion; exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use udf_core::analysis::{analyze, AnalysisConfig};
use udf_core::corpus::corpus_case;
use udf_core::curvature::{
    eigen_frame, hessian_offset, kappa_offset, propagate_third_derivative, reach_estimate, tangential_hessian,
};
use udf_core::geometry::{boundary_project, eikonal_residual, sample_boundary, signed_distance, Region, DEFAULT_TOL};
use udf_core::norms::{uniformity_ratio, Verdict};
use udf_core::psh::{certify, choose_lambda, collar_points, distance_levi_bound, strict_psc_constant};
use udf_core::registry::cutoff_profiles;
use udf_core::sobolev::{lattice_cover, weighted_sobolev_norm, Collar, Partitioning, WeightedNormSpec};
use udf_core::{MultiIndex, ScalarField};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn core<T>(r: udf_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn square(h: f64, n: usize) -> Region {
    Region::new(vec![-h; n], vec![h; n]).unwrap()
}

fn reach_of(expr: &str, n: usize, radius: f64) -> Check {
    let f = core(ScalarField::parse(expr, n))?;
    let samples = core(sample_boundary(&f, &square(1.5 * radius, n), 256, 2, 7, DEFAULT_TOL))?;
    let r = core(reach_estimate(&samples, &f, 7, DEFAULT_TOL))?;
    let err = (r.reach - radius).abs();
    ensure(
        err <= 1e-6 && r.probes_passed && !r.probes.is_empty(),
        format!("R={radius}: reach {:.9} (err {err:.1e}), {} probes, unique={}", r.reach, r.probes.len(), r.probes_passed),
    )
}

fn criterion_1() -> Check {
    let a = reach_of("x^2 + y^2 - 4", 2, 2.0)?;
    let b = reach_of("x^2 + y^2 + z^2 - 1", 3, 1.0)?;
    Ok(format!("{a}; {b}"))
}

fn criterion_2() -> Check {
    let controls = [
        ("circle", "x^2 + y^2 - 1", 2, 1.0),
        ("sphere", "x^2 + y^2 + z^2 - 1", 3, 1.0),
        ("half-plane", "y", 2, f64::INFINITY),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, expr, n, reach) in controls {
        let f = core(ScalarField::parse(expr, n))?;
        let samples = core(sample_boundary(&f, &square(2.0, n), 128, 2, 11, DEFAULT_TOL))?;
        let width = if reach.is_finite() { 0.5 * reach } else { 1.0 };
        let probes = collar_points(&samples, 200, width, 13);
        let (mut res, mut mis) = (0.0f64, 0.0f64);
        for x in &probes {
            let c = core(eikonal_residual(&f, x, None, DEFAULT_TOL))?;
            res = res.max(c.residual);
            mis = mis.max(c.normal_mismatch);
        }
        ok &= res <= 1e-6 && mis <= 1e-6 && probes.len() == 200;
        parts.push(format!("{name}: |∇δ|-1 {res:.1e}, normal {mis:.1e}"));
    }
    ensure(ok, parts.join("; "))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let terms: Vec<String> = (0..=4)
        .map(|i| {
            let c: f64 = rng.gen_range(-1.0..1.0);
            format!("({:.6})*x^{}*y^{}", 0.03 * c, i, 4 - i)
        })
        .collect();
    let expr = format!("x^2/4 + y^2 - 1 + {}", terms.join(" + "));
    let f = core(ScalarField::parse(&expr, 2))?;
    let samples = core(sample_boundary(&f, &square(3.0, 2), 100, 2, 5, DEFAULT_TOL))?;
    let h = 1e-3;
    let mut gap = 0.0f64;
    for s in &samples {
        let analytic = core(tangential_hessian(s))?.hessian[0][0];
        let t = s.frame.axis(0);
        let at = |k: f64| -> Result<f64, String> {
            let x: Vec<f64> = s.point.iter().zip(&t).map(|(p, d)| p + k * h * d).collect();
            core(signed_distance(&f, &x, DEFAULT_TOL))
        };
        let fd = (at(1.0)? - 2.0 * at(0.0)? + at(-1.0)?) / (h * h);
        gap = gap.max((analytic - fd).abs());
    }
    ensure(
        gap <= 1e-3 && samples.len() == 100,
        format!("{} samples, max gap {gap:.2e}", samples.len()),
    )
}

fn criterion_4() -> Check {
    let case = corpus_case("counterexample").ok_or("counterexample case missing")?;
    let f = core(case.spec.defining_field())?;
    let mut worst = 0.0f64;
    for x in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let s = core(udf_core::geometry::BoundarySample::new(&f, vec![x, 0.0, 0.0], 2))?;
        let r = core(uniformity_ratio(&s, 2))?;
        worst = worst.max((r - 2.0 * x).abs());
    }
    let out = core(case.run(&AnalysisConfig::default()))?;
    let o = &out.report.orders[0];
    let slope = o.fit.slope;
    ensure(
        worst <= 1e-8 && o.verdict == Verdict::Divergent && (slope - 1.0).abs() <= 0.1,
        format!("max |ratio - 2|x|| {worst:.1e}, verdict {}, exponent {slope:.3}", o.verdict),
    )
}

fn criterion_5() -> Check {
    let case = corpus_case("omega1").ok_or("omega1 case missing")?;
    let cfg = AnalysisConfig {
        orders: vec![2, 3, 4],
        ..AnalysisConfig::default()
    };
    let base = core(analyze(&case.spec, case.text, &case.extra_seeds, &cfg))?;
    let mut wide_spec = case.spec.clone();
    wide_spec.region = case.spec.region.doubled();
    let wide = core(analyze(&wide_spec, case.text, &case.extra_seeds, &cfg))?;
    let mut ok = case.spec.region.min[0] == -200.0 && case.spec.region.max[0] == 200.0;
    let mut parts = Vec::new();
    for (a, b) in base.orders.iter().zip(&wide.orders) {
        let change = (b.sup_ratio - a.sup_ratio).abs() / a.sup_ratio;
        ok &= a.verdict == Verdict::Bounded && change <= 0.05;
        parts.push(format!("m={} {} sup {:.4} change {:.2}%", a.order, a.verdict, a.sup_ratio, 100.0 * change));
    }
    ensure(ok && base.orders.len() == 3, parts.join("; "))
}

/// Least-squares slope of the per-bin maxima of `(|x|, ratio)`.
fn envelope_slope(points: &[(f64, f64)], lo: f64, hi: f64, bins: usize) -> Option<f64> {
    let w = (hi - lo) / bins as f64;
    let mut env: Vec<Option<(f64, f64)>> = vec![None; bins];
    for &(x, v) in points {
        if x < lo || x >= hi {
            continue;
        }
        let b = ((x - lo) / w) as usize;
        if env[b].map_or(true, |(_, best)| v > best) {
            env[b] = Some((x, v));
        }
    }
    let env: Vec<(f64, f64)> = env.into_iter().flatten().collect();
    if env.len() < 3 {
        return None;
    }
    let n = env.len() as f64;
    let mx = env.iter().map(|p| p.0).sum::<f64>() / n;
    let my = env.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = env.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = env.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn criterion_6() -> Check {
    let case = corpus_case("omega2").ok_or("omega2 case missing")?;
    let out = core(case.run(&AnalysisConfig::default()))?;
    let r = &out.report;
    let m2 = r.orders.iter().find(|o| o.order == 2).ok_or("order 2 missing")?;
    let m3_pos = r.orders.iter().position(|o| o.order == 3).ok_or("order 3 missing")?;
    let m3 = &r.orders[m3_pos];
    let points: Vec<(f64, f64)> = r
        .samples
        .iter()
        .filter(|s| (s.point[0] * s.point[0]).cos().abs() >= 0.9)
        .map(|s| (s.point[0].abs(), s.ratios[m3_pos]))
        .collect();
    let slope = envelope_slope(&points, 4.0, 40.0, 12).ok_or("too few probes with |cos x²| ≥ 0.9")?;
    ensure(
        m2.verdict == Verdict::Bounded && m3.verdict == Verdict::Divergent && (slope - 8.0).abs() <= 0.2 * 8.0,
        format!(
            "m=2 {}, m=3 {}, envelope slope {slope:.3} over {} probes",
            m2.verdict,
            m3.verdict,
            points.len()
        ),
    )
}

fn criterion_7() -> Check {
    let f = core(ScalarField::parse("x^2 + y^2 - 1", 2))?;
    let s0 = core(udf_core::geometry::BoundarySample::new(&f, vec![0.6, 0.8], 2))?;
    let k0 = core(tangential_hessian(&s0))?.kappas[0];
    let mut worst = 0.0f64;
    for i in 0..=50 {
        let s = -0.5 + 2.5 * i as f64 / 50.0;
        worst = worst.max((core(kappa_offset(k0, s))? - 1.0 / (1.0 + s)).abs());
    }
    // the same curvature through the offset Hessian at (1+s)·p
    for i in 0..=50 {
        let s = -0.5 + 2.5 * i as f64 / 50.0;
        let h = core(hessian_offset(&f, &[0.6 * (1.0 + s), 0.8 * (1.0 + s)], DEFAULT_TOL))?.hessian;
        let tangential = 0.64 * h[(0, 0)] - 0.96 * h[(0, 1)] + 0.36 * h[(1, 1)];
        worst = worst.max((tangential - 1.0 / (1.0 + s)).abs());
    }
    let h = core(hessian_offset(&f, &[2.0, 0.0], DEFAULT_TOL))?.hessian;
    let expect = [[0.0, 0.0], [0.0, 0.5]];
    let mut herr = 0.0f64;
    for (a, row) in expect.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            herr = herr.max((h[(a, b)] - v).abs());
        }
    }
    ensure(
        worst <= 1e-6 && herr <= 1e-9,
        format!("kappa_offset max err {worst:.1e}, hessian at (2,0) err {herr:.1e}"),
    )
}

fn criterion_8() -> Check {
    let f = core(ScalarField::parse("x^2 + y^2 - 1 + 0.05*x^3", 2))?;
    let samples = core(sample_boundary(&f, &square(2.0, 2), 200, 3, 42, DEFAULT_TOL))?;
    let reach = core(reach_estimate(&samples, &f, 42, DEFAULT_TOL))?.reach;
    let s = 0.3 * reach;
    let idx = MultiIndex::new(vec![0, 0, 0]);
    let h = 1e-2;
    let mut worst = 0.0f64;
    let mut count = 0;
    for ang in [0.3f64, 1.0, 2.0, 2.6, 4.0, 5.5] {
        let foot = core(boundary_project(&f, &[ang.cos(), ang.sin()], DEFAULT_TOL))?.foot;
        let sample = core(udf_core::geometry::BoundarySample::new(&f, foot, 3))?;
        let p = core(propagate_third_derivative(&sample, &idx, s))?;
        let (frame, _) = core(eigen_frame(&sample))?;
        let t = frame.axis(0);
        let n = sample.normal();
        let at = |k: f64| -> Result<f64, String> {
            let x: Vec<f64> = (0..2).map(|i| sample.point[i] + s * n[i] + k * h * t[i]).collect();
            core(signed_distance(&f, &x, DEFAULT_TOL))
        };
        let fd = (at(2.0)? - 2.0 * at(1.0)? + 2.0 * at(-1.0)? - at(-2.0)?) / (2.0 * h * h * h);
        worst = worst.max((p.value - fd).abs() / fd.abs());
        count += 1;
    }
    ensure(
        worst <= 1e-2,
        format!("s = 0.3·reach = {s:.4}, {count} normal lines, max relative error {worst:.2e}"),
    )
}

fn criterion_9() -> Check {
    let case = corpus_case("tube").ok_or("tube case missing")?;
    let g = core(case.spec.geometry_field())?;
    let samples = core(sample_boundary(&g, &case.spec.region, 512, 2, 42, DEFAULT_TOL))?;
    let c = core(strict_psc_constant(&samples))?;
    let c2 = core(distance_levi_bound(&samples))?;
    let lambda = core(choose_lambda(c, c2, true))?;
    let strict = c * (lambda / 4.0 - c2) > 4.0 * c2 * c2;
    let reach = core(reach_estimate(&samples, &g, 42, DEFAULT_TOL))?.reach;
    let data = core(certify(&g, &samples, reach, true, Some(lambda), 1000, 42, DEFAULT_TOL))?;
    ensure(
        (c - 0.25).abs() <= 0.01 && strict && data.passed && data.collar_min_eigenvalue >= 0.0,
        format!(
            "C {c:.4}, C2 {c2:.4}, lambda {lambda:.3}, strict inequality {strict}, {} points, min eigenvalue {:.3e}",
            data.certified_points,
            data.boundary_min_eigenvalue.min(data.collar_min_eigenvalue)
        ),
    )
}

fn criterion_10() -> Check {
    let box3 = square(3.0, 2);
    let cover = core(lattice_cover(0.5, &box3))?;
    let profiles = cutoff_profiles();
    let profile = core(profiles.get("smooth-step"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut sum_err, mut overlap) = (0.0f64, 0usize);
    for _ in 0..10_000 {
        let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let chis = core(cover.partition_functions(profile, &x))?;
        let total: f64 = chis.iter().map(|c| c.1).sum();
        sum_err = sum_err.max((total - 1.0).abs());
        let covering = cover
            .centers
            .iter()
            .filter(|c| (c[0] - x[0]).hypot(c[1] - x[1]) < cover.radius)
            .count();
        if covering < chis.len() {
            return Err(format!("{} partition functions at {x:?} but {covering} covering balls", chis.len()));
        }
        overlap = overlap.max(covering);
    }
    let disk = core(ScalarField::parse("x^2 + y^2 - 1", 2))?;
    let collar = Collar {
        geometry: &disk,
        width: 0.5,
        truncation: square(1.5, 2),
        tol: DEFAULT_TOL,
    };
    let spec = WeightedNormSpec {
        order: 0,
        p: 1.0,
        t: 1.0,
        resolution: 48,
    };
    // supported in |x| < 1.25, inside the truncation box
    let u = |x: &[f64]| {
        let b = (1.5625 - x[0] * x[0] - x[1] * x[1]).max(0.0);
        b.powi(3) * (1.0 + x[0] - (2.0 * x[1]).sin())
    };
    let direct = core(weighted_sobolev_norm(&u, &spec, Partitioning::Direct, &collar))?.value;
    let split = core(weighted_sobolev_norm(&u, &spec, Partitioning::Cover(&cover, profile), &collar))?.value;
    let rel = (direct - split).abs() / direct;
    ensure(
        sum_err <= 1e-12 && overlap <= 25 && rel <= 1e-6,
        format!("max |Σχ-1| {sum_err:.1e}, overlap {overlap}, telescoping gap {rel:.1e}"),
    )
}

fn criterion_11() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus/omega1.dom");
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("report-{threads}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_udf"))
            .args(["analyze", "--seed", "42", "--threads", threads, "--out"])
            .arg(&out)
            .arg(&spec)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("analyze failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        reports.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(
        reports[0] == reports[1],
        format!("--threads 1 vs 4: {} vs {} bytes, identical={}", reports[0].len(), reports[1].len(), reports[0] == reports[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("reach of circle and sphere", criterion_1),
        ("eikonal identity on controls", criterion_2),
        ("tangential Hessian of distance", criterion_3),
        ("counterexample ratio and growth", criterion_4),
        ("omega1 bounded and stable", criterion_5),
        ("omega2 third-order growth", criterion_6),
        ("offset curvature and Hessian", criterion_7),
        ("third-derivative propagation", criterion_8),
        ("tube Levi certification", criterion_9),
        ("partition of unity", criterion_10),
        ("thread-count determinism", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {:>2} {tag} {name} ({secs:.1}s): {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
