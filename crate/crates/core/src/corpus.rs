//! Built-in example domains with their expected verdicts, and the
//! projective decay diagnostic.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze, AnalysisConfig, AnalysisReport};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::{fit_line, norm};
use crate::norms::Verdict;

/// Which per-sample quantity a verdict refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Largest single frame derivative over `|∇ρ|`.
    Uniformity,
    /// `|ρ|_{C_b^m} / |∇ρ|`.
    CbRatio,
    /// Cartesian `C^m` norm of `ρ` on the boundary.
    Extrinsic,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Uniformity => "uniformity",
            Metric::CbRatio => "cb-ratio",
            Metric::Extrinsic => "extrinsic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Expectation {
    pub order: usize,
    pub metric: Metric,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct CorpusCase {
    pub name: &'static str,
    pub text: &'static str,
    pub spec: DomainSpec,
    pub expected: Vec<Expectation>,
    pub notes: &'static str,
    /// Projection seeds that pin samples on the features driving a verdict.
    pub extra_seeds: Vec<Vec<f64>>,
    /// Whether the doubled-region stability check is run.
    pub stability: bool,
    /// Complex dimension for the plurisubharmonic construction, if any.
    pub complex_dim: Option<usize>,
}

const FILES: [(&str, &str); 9] = [
    ("counterexample", include_str!("../corpus/counterexample.dom")),
    ("omega1", include_str!("../corpus/omega1.dom")),
    ("omega2", include_str!("../corpus/omega2.dom")),
    ("rho1h", include_str!("../corpus/rho1h.dom")),
    ("rho2h", include_str!("../corpus/rho2h.dom")),
    ("circle", include_str!("../corpus/circle.dom")),
    ("sphere", include_str!("../corpus/sphere.dom")),
    ("half-plane", include_str!("../corpus/half-plane.dom")),
    ("tube", include_str!("../corpus/tube.dom")),
];

fn expect(order: usize, metric: Metric, verdict: Verdict) -> Expectation {
    Expectation { order, metric, verdict }
}

/// `(x, 0, …, 0)` points of the line through the samples that carry the
/// extreme ratios.
fn line_seeds(dim: usize, xs: impl IntoIterator<Item = f64>) -> Vec<Vec<f64>> {
    xs.into_iter()
        .map(|x| {
            let mut p = vec![0.0; dim];
            p[0] = x;
            p
        })
        .collect()
}

/// `x = ±√(kπ)` inside `[lo, hi]`: zeros of `sin x²`, where `|cos x²| = 1`.
pub fn sqrt_pi_seeds(lo: f64, hi: f64) -> Vec<f64> {
    let mut xs = Vec::new();
    let kmax = (lo.abs().max(hi.abs()).powi(2) / std::f64::consts::PI).floor() as usize;
    for k in 1..=kmax {
        let x = (k as f64 * std::f64::consts::PI).sqrt();
        for v in [-x, x] {
            if v >= lo && v <= hi {
                xs.push(v);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs
}

fn build(name: &'static str, text: &'static str) -> CorpusCase {
    let spec = DomainSpec::parse(text).unwrap_or_else(|e| panic!("corpus file {name} is invalid: {e}"));
    use Metric::*;
    use Verdict::*;
    let (expected, notes, extra_seeds, stability, complex_dim) = match name {
        "counterexample" => (
            vec![expect(2, Uniformity, Divergent)],
            "z < x y^2: on the line y = z = 0 the gradient is e_z and the tangential second derivative is -2x, so no defining function is uniformly C^2",
            line_seeds(3, (1..=64).map(f64::from)),
            false,
            None,
        ),
        "omega1" => (
            vec![
                expect(2, Uniformity, Bounded),
                expect(3, Uniformity, Bounded),
                expect(4, Uniformity, Bounded),
            ],
            "y < sin(x)/x: every derivative of the defining function decays like 1/x",
            Vec::new(),
            true,
            None,
        ),
        "omega2" => (
            vec![expect(2, Uniformity, Bounded), expect(3, Uniformity, Divergent)],
            "y < sin(x^2)/x^2: positive reach, but the third tangential derivative grows like 8x cos(x^2)",
            line_seeds(2, sqrt_pi_seeds(-40.0, 40.0)),
            false,
            None,
        ),
        "rho1h" => (
            vec![expect(3, CbRatio, Divergent), expect(3, Uniformity, Divergent)],
            "the omega1 defining function times exp(x^2): the domain is uniformly C^3 but this defining function is not",
            Vec::new(),
            false,
            None,
        ),
        "rho2h" => (
            vec![expect(2, CbRatio, Bounded), expect(2, Extrinsic, Divergent)],
            "the omega2 defining function times exp(x^2): bounded boundary-adapted C^2 ratio although the Cartesian C^2 norm on the boundary is infinite",
            Vec::new(),
            false,
            None,
        ),
        "tube" => (
            vec![expect(2, Uniformity, Bounded)],
            "tube |z'|^2 + (Im z_n)^2 < 1 in C^2: strictly pseudoconvex with Levi constant 1/4",
            Vec::new(),
            false,
            Some(2),
        ),
        _ => (
            spec.orders.iter().map(|&m| expect(m, Uniformity, Bounded)).collect(),
            "analytic control",
            Vec::new(),
            true,
            None,
        ),
    };
    CorpusCase {
        name,
        text,
        spec,
        expected,
        notes,
        extra_seeds,
        stability,
        complex_dim,
    }
}

pub fn corpus_cases() -> Vec<CorpusCase> {
    FILES.iter().map(|(n, t)| build(n, t)).collect()
}

pub fn corpus_case(name: &str) -> Option<CorpusCase> {
    FILES.iter().find(|(n, _)| *n == name).map(|(n, t)| build(n, t))
}

/// One expected-versus-observed line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRow {
    pub order: usize,
    pub metric: Metric,
    pub expected: Verdict,
    pub observed: Verdict,
    pub sup: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub rows: Vec<CaseRow>,
    pub passed: bool,
    #[serde(skip)]
    pub report: AnalysisReport,
}

impl CorpusCase {
    /// Analysis configuration for this case derived from `base`.
    pub fn config(&self, base: &AnalysisConfig) -> AnalysisConfig {
        let mut orders: Vec<usize> = self.expected.iter().map(|e| e.order).collect();
        orders.sort_unstable();
        orders.dedup();
        AnalysisConfig {
            orders,
            stability: self.stability,
            ..base.clone()
        }
    }

    pub fn run(&self, base: &AnalysisConfig) -> Result<CaseOutcome> {
        let report = analyze(&self.spec, self.text, &self.extra_seeds, &self.config(base))?;
        let rows: Vec<CaseRow> = self
            .expected
            .iter()
            .map(|e| {
                let o = report
                    .orders
                    .iter()
                    .find(|o| o.order == e.order)
                    .expect("every expected order is analyzed");
                let (observed, sup, slope) = match e.metric {
                    Metric::Uniformity => (o.verdict, o.sup_ratio, o.fit.slope),
                    Metric::CbRatio => (o.cb_verdict, o.sup_cb_ratio, o.cb_fit.slope),
                    Metric::Extrinsic => (o.extrinsic.verdict, o.extrinsic.sup, o.extrinsic.fit.slope),
                };
                CaseRow {
                    order: e.order,
                    metric: e.metric,
                    expected: e.verdict,
                    observed,
                    sup,
                    slope,
                }
            })
            .collect();
        Ok(CaseOutcome {
            name: self.name.to_string(),
            passed: rows.iter().all(|r| r.expected == r.observed),
            rows,
            report,
        })
    }
}

/// Runs every case; outcomes are in corpus order.
pub fn run_all(base: &AnalysisConfig) -> Vec<(String, Result<CaseOutcome>)> {
    corpus_cases()
        .par_iter()
        .map(|c| (c.name.to_string(), c.run(base)))
        .collect()
}

/// Per-order decay exponents of `|∇^k ρ| / |∇ρ|` along the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectiveFit {
    /// `(k, slope)`; `-inf` when every sampled derivative vanishes.
    pub slopes: Vec<(usize, f64)>,
    /// Decades of `|x|` spanned by the samples.
    pub span: f64,
    pub projective: bool,
}

/// Slack on the required slope `−(k − 1)`.
pub const PROJECTIVE_SLACK: f64 = 0.2;
const DECAY_BINS: usize = 8;

/// Fits `log(|∇^k ρ|/|∇ρ|)` against `log|x|` for `k = 2..=m` over the upper
/// envelope of the samples.
///
/// The domain looks projectively `C^m` when every slope is at most
/// `−(k − 1) + 0.2`.
pub fn projective_decay_fit(f: &ScalarField, points: &[Vec<f64>], m: usize) -> Result<ProjectiveFit> {
    let radii: Vec<f64> = points.iter().map(|p| norm(p)).collect();
    let rmin = radii.iter().copied().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min);
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let span = if rmin.is_finite() { (rmax / rmin).log10() } else { 0.0 };
    if !(span >= 1.0) {
        return Err(Error::InsufficientSpan(span.max(0.0)));
    }
    let jets: Vec<_> = points.par_iter().map(|p| f.eval_jet(p, m)).collect::<Result<_>>()?;
    let mut slopes = Vec::new();
    for k in 2..=m {
        let vals: Vec<(f64, f64)> = jets
            .iter()
            .zip(&radii)
            .filter(|(_, r)| **r > 0.0)
            .map(|(j, r)| Ok((r.ln(), j.order_sum_of_squares(k)?.sqrt() / norm(&j.gradient()))))
            .collect::<Result<_>>()?;
        let (lo, hi) = (rmin.ln(), rmax.ln());
        let width = (hi - lo) / DECAY_BINS as f64;
        let mut best: Vec<Option<(f64, f64)>> = vec![None; DECAY_BINS];
        for &(u, v) in &vals {
            if v > 0.0 && v.is_finite() {
                let b = (((u - lo) / width) as usize).min(DECAY_BINS - 1);
                if best[b].is_none_or(|(_, bv)| v > bv) {
                    best[b] = Some((u, v));
                }
            }
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = best.into_iter().flatten().map(|(u, v)| (u, v.ln())).unzip();
        let slope = if xs.is_empty() {
            f64::NEG_INFINITY
        } else {
            fit_line(&xs, &ys).map_or(0.0, |(s, _)| s)
        };
        slopes.push((k, slope));
    }
    let projective = slopes
        .iter()
        .all(|&(k, s)| s <= -((k - 1) as f64) + PROJECTIVE_SLACK);
    Ok(ProjectiveFit { slopes, span, projective })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_files_parse_and_validate() {
        for c in corpus_cases() {
            assert_eq!(c.spec.name.as_deref(), Some(c.name));
            c.spec.validate(1e-10, 7).unwrap_or_else(|e| panic!("{}: {e}", c.name));
        }
    }

    #[test]
    fn sqrt_pi_seeds_are_sorted_zeros() {
        let xs = sqrt_pi_seeds(-3.0, 3.0);
        assert_eq!(xs.len(), 4);
        for x in xs {
            assert!((x * x).sin().abs() < 1e-12);
        }
    }

    #[test]
    fn half_plane_is_projective() {
        let f = ScalarField::parse("y", 2).unwrap();
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![1.5f64.powi(i), 0.0]).collect();
        let fit = projective_decay_fit(&f, &pts, 3).unwrap();
        assert!(fit.projective);
        assert!(fit.slopes.iter().all(|(_, s)| *s == f64::NEG_INFINITY));
    }

    #[test]
    fn bounded_boundary_has_no_span() {
        let f = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
        let pts: Vec<Vec<f64>> = (0..16)
            .map(|i| {
                let t = i as f64 * 0.4;
                vec![t.cos(), t.sin()]
            })
            .collect();
        assert!(matches!(projective_decay_fit(&f, &pts, 2), Err(Error::InsufficientSpan(_))));
    }
}
