//! Boundary-adapted norms, the uniformity diagnostic and growth fits.
//!
//! In the frame `(y_1, …, y_n)` of a boundary sample, `|f|²_{C_b^k(p)}` sums
//! the squares of `∂^{|I|+j} f / ∂y_I ∂y_n^j` over tangential increasing
//! multi-indices `I` with `|I| + 2j ≤ k`: normal derivatives count twice.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{distance_jet_numeric, BoundarySample};
use crate::jet::{Jet, MultiIndex};
use crate::linalg::{axpy, fit_line};

/// Sum of squares of the derivatives with `|I| + 2j' = k` and `j' ≥ j`,
/// accumulated from the largest `j'` down.
fn layer(
    n: usize,
    k: usize,
    j: usize,
    d: &impl Fn(&MultiIndex, usize) -> Result<f64>,
) -> Result<f64> {
    let mut sum = 0.0;
    for jp in (j..=k / 2).rev() {
        for idx in MultiIndex::all(n - 1, k - 2 * jp) {
            sum += d(&idx, jp)?.powi(2);
        }
    }
    Ok(sum)
}

/// `|f|²_{C_b^k(p)}` for `k = 0..=m` from a frame-derivative accessor.
pub fn cb_squares_with(
    n: usize,
    m: usize,
    d: impl Fn(&MultiIndex, usize) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(d(&MultiIndex::empty(), 0)?.powi(2));
    for k in 1..=m {
        let prev = out[k - 1];
        out.push(prev + layer(n, k, 0, &d)?);
    }
    Ok(out)
}

fn check_order(sample: &BoundarySample, k: usize) -> Result<()> {
    if k > sample.order() {
        return Err(Error::OrderExceeded {
            requested: k,
            available: sample.order(),
        });
    }
    Ok(())
}

fn sample_accessor(sample: &BoundarySample) -> impl Fn(&MultiIndex, usize) -> Result<f64> + '_ {
    move |i, j| sample.frame_derivative(i, j)
}

/// `|ρ|_{C_b^k(p)}`.
pub fn cb_norm(sample: &BoundarySample, k: usize) -> Result<f64> {
    check_order(sample, k)?;
    let sq = cb_squares_with(sample.dim(), k, sample_accessor(sample))?;
    Ok(sq[k].sqrt())
}

/// `|ρ|_{C_b^{k,j}(p)}`: the `C_b^{k-1}` terms plus the order-`k` terms
/// with at least `j` normal derivatives.
pub fn cb_intermediate_norm(sample: &BoundarySample, k: usize, j: usize) -> Result<f64> {
    if 2 * j > k {
        return Err(Error::InvalidParameter(format!(
            "intermediate norm needs k >= 2j, got k={k}, j={j}"
        )));
    }
    check_order(sample, k)?;
    let d = sample_accessor(sample);
    if k == 0 {
        return Ok(d(&MultiIndex::empty(), 0)?.abs());
    }
    let sq = cb_squares_with(sample.dim(), k - 1, &d)?;
    Ok((sq[k - 1] + layer(sample.dim(), k, j, &d)?).sqrt())
}

/// Square root of the sum of squared Cartesian partials of order `≤ k`.
pub fn extrinsic_norm_at(jet: &Jet, k: usize) -> Result<f64> {
    let mut s = 0.0;
    for kk in 0..=k {
        s += jet.order_sum_of_squares(kk)?;
    }
    Ok(s.sqrt())
}

/// Sample supremum of [`extrinsic_norm_at`]; a lower bound for the sup over
/// the whole boundary.
pub fn extrinsic_boundary_norm(samples: &[BoundarySample], k: usize) -> Result<f64> {
    let mut sup = 0.0f64;
    for s in samples {
        sup = sup.max(extrinsic_norm_at(&s.jet, k)?);
    }
    Ok(sup)
}

/// Largest `|∇ρ|⁻¹ |∂^k ρ / ∂y_I ∂y_n^j|` over `2 ≤ k ≤ m`,
/// `0 ≤ j ≤ min(m − k, k)` and tangential `I` of length `k − j`.
pub fn uniformity_ratio(sample: &BoundarySample, m: usize) -> Result<f64> {
    check_order(sample, m)?;
    let n = sample.dim();
    let mut best = 0.0f64;
    for k in 2..=m {
        for j in 0..=(m - k).min(k) {
            for idx in MultiIndex::all(n - 1, k - j) {
                best = best.max(sample.frame_derivative(&idx, j)?.abs());
            }
        }
    }
    Ok(best / sample.grad_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Bounded,
    Divergent,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Bounded => "BOUNDED",
            Verdict::Divergent => "DIVERGENT",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Thresholds for turning a growth fit into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerdictConfig {
    /// Fitted exponents above this are divergent.
    pub slope_threshold: f64,
    /// Allowed relative increase of the sup when the region doubles.
    pub stability: f64,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        VerdictConfig {
            slope_threshold: 0.1,
            stability: 0.05,
        }
    }
}

/// Power-law fit of a per-sample quantity against `1 + |p|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// Number of envelope points the fit used.
    pub points: usize,
}

const FIT_BINS: usize = 8;

/// Fits `log v ≈ slope·log(1 + r) + c` to the upper envelope of `(r, v)`
/// over the outer half of the `log(1 + r)` range.
///
/// The outer range is split into equal bins and each bin contributes its
/// largest value. Without radial spread (compact boundaries) the slope is 0.
pub fn growth_fit(points: &[(f64, f64)]) -> GrowthFit {
    let flat = GrowthFit {
        slope: 0.0,
        intercept: 0.0,
        points: 0,
    };
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(r, v)| r.is_finite() && v.is_finite())
        .map(|&(r, v)| ((1.0 + r).ln(), v))
        .collect();
    if logs.is_empty() {
        return flat;
    }
    let umin = logs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let umax = logs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if umax - umin < 1e-9 * umax.abs().max(1.0) {
        return flat;
    }
    let lo = 0.5 * (umin + umax);
    let width = (umax - lo) / FIT_BINS as f64;
    let mut best: Vec<Option<(f64, f64)>> = vec![None; FIT_BINS];
    for &(u, v) in &logs {
        if u < lo || v <= 0.0 {
            continue;
        }
        let b = (((u - lo) / width) as usize).min(FIT_BINS - 1);
        if best[b].is_none_or(|(_, bv)| v > bv) {
            best[b] = Some((u, v));
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = best.into_iter().flatten().map(|(u, v)| (u, v.ln())).unzip();
    match fit_line(&xs, &ys) {
        Some((slope, intercept)) => GrowthFit {
            slope,
            intercept,
            points: xs.len(),
        },
        None => flat,
    }
}

/// Verdict from a fit and an optional stability check.
pub fn verdict(fit: &GrowthFit, stable: Option<bool>, cfg: &VerdictConfig) -> Verdict {
    if fit.slope > cfg.slope_threshold {
        Verdict::Divergent
    } else if stable != Some(false) {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    }
}

/// Norm data at one boundary sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleNorms {
    pub point: Vec<f64>,
    pub grad_norm: f64,
    /// `|ρ|_{C_b^k(p)}` for `k = 0..=m`.
    pub cb: Vec<f64>,
    /// `|ρ|_{C_b^k(p)} / |∇ρ(p)|`.
    pub ratios: Vec<f64>,
    /// The largest single-derivative ratio, see [`uniformity_ratio`].
    pub uniformity: f64,
    pub h_value: f64,
}

pub fn sample_norms(sample: &BoundarySample, m: usize) -> Result<SampleNorms> {
    check_order(sample, m)?;
    let sq = cb_squares_with(sample.dim(), m, sample_accessor(sample))?;
    let cb: Vec<f64> = sq.iter().map(|v| v.sqrt()).collect();
    let ratios = cb.iter().map(|v| v / sample.grad_norm).collect();
    Ok(SampleNorms {
        point: sample.point.clone(),
        grad_norm: sample.grad_norm,
        cb,
        ratios,
        uniformity: uniformity_ratio(sample, m)?,
        h_value: 1.0 / sample.grad_norm,
    })
}

/// Uniformity diagnostic over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    pub order: usize,
    pub samples: Vec<SampleNorms>,
    pub sup_ratio: f64,
    pub sup_point: Vec<f64>,
    /// Running sup of `|ρ|_{C_b^m} / |∇ρ|`.
    pub sup_cb_ratio: f64,
    pub fit: GrowthFit,
    /// Fit and verdict for `|ρ|_{C_b^m} / |∇ρ|`.
    pub cb_fit: GrowthFit,
    pub cb_verdict: Verdict,
    /// Sup over the extension samples, when supplied.
    pub extension_sup: Option<f64>,
    pub stable: Option<bool>,
    pub verdict: Verdict,
}

/// Runs the uniformity diagnostic of order `m`.
///
/// `extension` holds samples from the doubled region that lie outside the
/// original one; the sup counts as stable when they do not raise it by more
/// than the configured fraction.
pub fn uniformity_report(
    samples: &[BoundarySample],
    m: usize,
    extension: Option<&[BoundarySample]>,
    cfg: &VerdictConfig,
) -> Result<UniformityReport> {
    if samples.is_empty() {
        return Err(Error::NoBoundary);
    }
    let norms: Vec<SampleNorms> = samples
        .par_iter()
        .map(|s| sample_norms(s, m))
        .collect::<Result<_>>()?;
    let mut arg = 0;
    for (i, s) in norms.iter().enumerate() {
        if s.uniformity > norms[arg].uniformity {
            arg = i;
        }
    }
    let sup_ratio = norms[arg].uniformity;
    let sup_cb_ratio = norms.iter().map(|s| s.ratios[m]).fold(0.0, f64::max);
    let fit = growth_fit(
        &norms
            .iter()
            .zip(samples)
            .map(|(s, b)| (b.radius(), s.uniformity))
            .collect::<Vec<_>>(),
    );
    let cb_fit = growth_fit(
        &norms
            .iter()
            .zip(samples)
            .map(|(s, b)| (b.radius(), s.ratios[m]))
            .collect::<Vec<_>>(),
    );
    let extension_sup = match extension {
        Some(ext) => {
            let vals: Vec<f64> = ext
                .par_iter()
                .map(|s| uniformity_ratio(s, m))
                .collect::<Result<_>>()?;
            Some(vals.into_iter().fold(0.0, f64::max))
        }
        None => None,
    };
    let stable = extension_sup.map(|e| e <= (1.0 + cfg.stability) * sup_ratio);
    let cb_verdict = verdict(&cb_fit, None, cfg);
    let verdict = verdict(&fit, stable, cfg);
    Ok(UniformityReport {
        order: m,
        sup_point: norms[arg].point.clone(),
        samples: norms,
        sup_ratio,
        sup_cb_ratio,
        fit,
        cb_fit,
        cb_verdict,
        extension_sup,
        stable,
        verdict,
    })
}

/// Growth of the extrinsic `C^k` boundary norm over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtrinsicReport {
    pub order: usize,
    pub sup: f64,
    pub fit: GrowthFit,
    pub verdict: Verdict,
}

pub fn extrinsic_report(samples: &[BoundarySample], k: usize, cfg: &VerdictConfig) -> Result<ExtrinsicReport> {
    let vals: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| Ok((s.radius(), extrinsic_norm_at(&s.jet, k)?)))
        .collect::<Result<_>>()?;
    let sup = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    let fit = growth_fit(&vals);
    Ok(ExtrinsicReport {
        order: k,
        sup,
        verdict: verdict(&fit, None, cfg),
        fit,
    })
}

/// Normal-line offsets, as fractions of the length scale, used to recover
/// derivatives of `h = δ̃/ρ` at the boundary.
pub const H_OFFSETS: [f64; 3] = [0.02, 0.01, 0.005];

/// Derivatives of `h = δ̃/ρ` at a boundary sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HDiagnostics {
    /// `h(p) = 1/|∇ρ(p)|`.
    pub h_value: f64,
    /// `|h|_{C_b^k(p)} / h(p)` for `k = 0..=m-2`.
    pub ratios: Vec<f64>,
    /// The same ratios without the value term.
    pub derivative_ratios: Vec<f64>,
    /// `∂h/∂y_n(p)` when `m ≥ 3`.
    pub normal_derivative: Option<f64>,
}

/// Extrapolates frame derivatives of `h` to the boundary from the normal-line
/// points `p ± s ν`.
///
/// `geometry` is the field whose zero set is the boundary (it provides
/// `δ̃`); `defining` is the function `ρ`. `scale` is the length the offsets
/// are measured in, normally the reach estimate.
pub fn h_diagnostics(
    defining: &ScalarField,
    geometry: &ScalarField,
    sample: &BoundarySample,
    m: usize,
    scale: f64,
    tol: f64,
) -> Result<HDiagnostics> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("h diagnostics need m >= 2, got {m}")));
    }
    let q = m - 2;
    let n = sample.dim();
    let nu = sample.normal();
    let h_value = 1.0 / sample.grad_norm;
    let mut per_offset: Vec<Jet> = Vec::with_capacity(2 * H_OFFSETS.len());
    for &frac in &H_OFFSETS {
        for sign in [1.0, -1.0] {
            let s = sign * frac * scale;
            let x = axpy(&sample.point, s, &nu);
            let rho = defining.eval_jet(&x, q)?;
            if rho.value() == 0.0 {
                return Err(Error::Singular(format!("rho vanishes at offset point {x:?}")));
            }
            let step = (0.25 * frac * scale).min(crate::geometry::default_fd_step(&x));
            let delta = distance_jet_numeric(geometry, &x, q, Some(step), None, tol)?;
            let h = delta.taylor().div(rho.taylor())?;
            per_offset.push(Jet::new(x, h).rotated(sample.frame.matrix()));
        }
    }
    let extrapolated = |idx: &MultiIndex, j: usize| -> Result<f64> {
        let slots = idx.with_repeated(n - 1, j);
        let mut a = [0.0; 3];
        for (l, v) in a.iter_mut().enumerate() {
            *v = 0.5 * (per_offset[2 * l].partial(&slots)? + per_offset[2 * l + 1].partial(&slots)?);
        }
        let e1 = (a[0] - a[1]).abs();
        let e2 = (a[1] - a[2]).abs();
        if e2 > e1 + 1e-6 * (1.0 + a[2].abs()) {
            return Err(Error::Extrapolation(format!(
                "residuals grow for derivative {slots}: {e1:e} then {e2:e}"
            )));
        }
        let r1 = (4.0 * a[1] - a[0]) / 3.0;
        let r2 = (4.0 * a[2] - a[1]) / 3.0;
        Ok((16.0 * r2 - r1) / 15.0)
    };
    let with_value = |idx: &MultiIndex, j: usize| -> Result<f64> {
        if idx.is_empty() && j == 0 {
            Ok(h_value)
        } else {
            extrapolated(idx, j)
        }
    };
    let sq = cb_squares_with(n, q, with_value)?;
    let ratios = sq.iter().map(|v| v.sqrt() / h_value).collect();
    let derivative_ratios = sq.iter().map(|v| (v - h_value * h_value).max(0.0).sqrt() / h_value).collect();
    let normal_derivative = if q >= 1 {
        Some(extrapolated(&MultiIndex::empty(), 1)?)
    } else {
        None
    };
    Ok(HDiagnostics {
        h_value,
        ratios,
        derivative_ratios,
        normal_derivative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_sample(k: usize) -> BoundarySample {
        let f = ScalarField::parse("x^2 + y^2 - 1", 2).unwrap();
        BoundarySample::new(&f, vec![1.0, 0.0], k).unwrap()
    }

    #[test]
    fn circle_second_order_norm() {
        let s = circle_sample(2);
        assert!((cb_norm(&s, 2).unwrap() - 8f64.sqrt()).abs() < 1e-14);
        assert_eq!(cb_norm(&s, 1).unwrap(), 0.0);
        assert!((extrinsic_norm_at(&s.jet, 2).unwrap() - 12f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn intermediate_norm_endpoints() {
        let s = circle_sample(4);
        for k in 0..=4 {
            assert_eq!(cb_intermediate_norm(&s, k, 0).unwrap(), cb_norm(&s, k).unwrap());
        }
        // k = 4, j = 2: C_b^3 terms plus the pure second normal derivative
        let expect = (cb_norm(&s, 3).unwrap().powi(2) + s.frame_derivative(&MultiIndex::empty(), 2).unwrap().powi(2)).sqrt();
        assert!((cb_intermediate_norm(&s, 4, 2).unwrap() - expect).abs() < 1e-14);
        assert!(matches!(cb_intermediate_norm(&s, 3, 2), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn constant_field_norms() {
        let f = ScalarField::parse("3.5", 2).unwrap();
        let jet = f.eval_jet(&[0.0, 0.0], 3).unwrap();
        let frame = crate::frame::AdaptedFrame::from_normal(vec![0.0, 0.0], &[0.0, 1.0]).unwrap();
        let s = BoundarySample {
            point: vec![0.0, 0.0],
            frame_jet: jet.rotated(frame.matrix()),
            frame,
            jet,
            grad_norm: 1.0,
        };
        for k in 0..=3 {
            assert_eq!(cb_norm(&s, k).unwrap(), 3.5);
        }
        assert_eq!(cb_intermediate_norm(&s, 2, 1).unwrap(), 3.5);
    }

    #[test]
    fn fit_of_linear_growth() {
        let pts: Vec<(f64, f64)> = (0..200).map(|i| {
            let r = 1.0 + i as f64;
            (r, 3.0 * (1.0 + r))
        }).collect();
        let fit = growth_fit(&pts);
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert_eq!(fit.points, FIT_BINS);
        assert_eq!(growth_fit(&[(1.0, 2.0), (1.0, 5.0)]).slope, 0.0);
    }

    #[test]
    fn verdict_rules() {
        let cfg = VerdictConfig::default();
        let fit = |slope| GrowthFit { slope, intercept: 0.0, points: 8 };
        assert_eq!(verdict(&fit(1.0), Some(true), &cfg), Verdict::Divergent);
        assert_eq!(verdict(&fit(0.05), Some(true), &cfg), Verdict::Bounded);
        assert_eq!(verdict(&fit(0.05), Some(false), &cfg), Verdict::Inconclusive);
    }
}
