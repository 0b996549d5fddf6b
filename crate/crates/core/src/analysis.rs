//! End-to-end analysis of a domain spec: sampling, norms, reach and the
//! serializable report.

use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::{reach_estimate, tangential_hessian};
use crate::domain::{digest, DomainSpec};
use crate::error::{Error, Result};
use crate::geometry::{build_samples, default_fd_step, eikonal_residual, sample_boundary_points, BoundarySample, Region};
use crate::linalg::axpy;
use crate::norms::{extrinsic_report, uniformity_report, ExtrinsicReport, GrowthFit, Verdict, VerdictConfig};

pub const REPORT_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub orders: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    /// Finite-difference step of the eikonal probes; `None` picks it per
    /// point, capped by the probe depth.
    pub fd_step: Option<f64>,
    /// Resample the doubled region and compare sups.
    pub stability: bool,
    pub verdict: VerdictConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            orders: vec![2],
            samples: 512,
            seed: 42,
            tol: 1e-10,
            fd_step: None,
            stability: false,
            verdict: VerdictConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub point: Vec<f64>,
    pub grad_norm: f64,
    /// Uniformity ratio per requested order.
    pub ratios: Vec<f64>,
    /// `|ρ|_{C_b^m} / |∇ρ|` per requested order.
    pub cb_ratios: Vec<f64>,
    /// Principal curvatures, descending.
    pub curvatures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderSummary {
    pub order: usize,
    pub sup_ratio: f64,
    pub sup_point: Vec<f64>,
    pub fit: GrowthFit,
    pub verdict: Verdict,
    pub sup_cb_ratio: f64,
    pub cb_fit: GrowthFit,
    pub cb_verdict: Verdict,
    pub extension_sup: Option<f64>,
    pub stable: Option<bool>,
    pub extrinsic: ExtrinsicReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachSummary {
    /// `None` for flat samples.
    pub reach: Option<f64>,
    pub sup_curvature: f64,
    pub probes: usize,
    pub probes_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EikonalSummary {
    pub probes: usize,
    pub max_residual: f64,
    pub max_normal_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub version: &'static str,
    pub spec_digest: String,
    pub name: Option<String>,
    pub dim: usize,
    pub config: AnalysisConfig,
    pub samples: Vec<SampleRecord>,
    pub orders: Vec<OrderSummary>,
    pub reach: ReachSummary,
    pub eikonal: EikonalSummary,
    /// Wall-clock seconds; left empty unless the caller fills it in.
    pub timing: Option<f64>,
}

impl AnalysisReport {
    /// Divergent if any order diverges, else inconclusive if any is.
    pub fn worst_verdict(&self) -> Verdict {
        if self.orders.iter().any(|o| o.verdict == Verdict::Divergent) {
            Verdict::Divergent
        } else if self.orders.iter().any(|o| o.verdict == Verdict::Inconclusive) {
            Verdict::Inconclusive
        } else {
            Verdict::Bounded
        }
    }
}

const EIKONAL_PROBES: usize = 16;

/// Boundary samples of the spec with jets of order `order`.
pub fn spec_samples(
    spec: &DomainSpec,
    region: &Region,
    count: usize,
    order: usize,
    seed: u64,
    tol: f64,
    extra_seeds: &[Vec<f64>],
) -> Result<Vec<BoundarySample>> {
    let geometry = spec.geometry_field()?;
    let defining = spec.defining_field()?;
    let pts = sample_boundary_points(&geometry, region, count, seed, tol, extra_seeds)?;
    build_samples(&defining, pts, order)
}

/// Runs the full pipeline. `text` is the spec file content used for the
/// digest; `extra_seeds` are forced projection seeds.
pub fn analyze(spec: &DomainSpec, text: &str, extra_seeds: &[Vec<f64>], cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    if cfg.orders.is_empty() || cfg.orders.iter().any(|&m| m < 2) {
        return Err(Error::InvalidParameter("orders must be at least 2".into()));
    }
    let top = *cfg.orders.iter().max().unwrap_or(&2);
    let geometry = spec.geometry_field()?;
    let samples = spec_samples(spec, &spec.region, cfg.samples, top, cfg.seed, cfg.tol, extra_seeds)?;
    let extension = if cfg.stability {
        let doubled = spec.region.doubled();
        let slack = 1e-9 * spec.region.diameter().max(1.0);
        let ext = spec_samples(spec, &doubled, cfg.samples, top, cfg.seed, cfg.tol, &[])?;
        Some(
            ext.into_iter()
                .filter(|s| !spec.region.contains(&s.point, slack))
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };

    let mut orders = Vec::with_capacity(cfg.orders.len());
    let mut per_sample: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); samples.len()];
    for &m in &cfg.orders {
        let u = uniformity_report(&samples, m, extension.as_deref(), &cfg.verdict)?;
        for (rec, s) in per_sample.iter_mut().zip(&u.samples) {
            rec.0.push(s.uniformity);
            rec.1.push(s.ratios[m]);
        }
        orders.push(OrderSummary {
            order: m,
            sup_ratio: u.sup_ratio,
            sup_point: u.sup_point,
            fit: u.fit,
            verdict: u.verdict,
            sup_cb_ratio: u.sup_cb_ratio,
            cb_fit: u.cb_fit,
            cb_verdict: u.cb_verdict,
            extension_sup: u.extension_sup,
            stable: u.stable,
            extrinsic: extrinsic_report(&samples, m, &cfg.verdict)?,
        });
    }

    let shapes: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| tangential_hessian(s).map(|d| d.kappas))
        .collect::<Result<_>>()?;
    let reach = reach_estimate(&samples, &geometry, cfg.seed, cfg.tol)?;

    // eikonal probes inside a quarter of the reach
    let depth = if reach.infinite { 0.25 } else { 0.25 * reach.reach };
    let stride = (samples.len() / EIKONAL_PROBES).max(1);
    let probes: Vec<Vec<f64>> = samples
        .iter()
        .step_by(stride)
        .take(EIKONAL_PROBES)
        .enumerate()
        .map(|(i, s)| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            axpy(&s.point, sign * depth, &s.normal())
        })
        .collect();
    let checks: Vec<_> = probes
        .par_iter()
        .map(|x| {
            // keep the stencil well inside the collar
            let step = cfg.fd_step.unwrap_or_else(|| default_fd_step(x).min(0.25 * depth));
            eikonal_residual(&geometry, x, Some(step), cfg.tol)
        })
        .collect::<Result<_>>()?;
    let eikonal = EikonalSummary {
        probes: checks.len(),
        max_residual: checks.iter().map(|c| c.residual).fold(0.0, f64::max),
        max_normal_mismatch: checks.iter().map(|c| c.normal_mismatch).fold(0.0, f64::max),
    };

    let records = samples
        .iter()
        .zip(per_sample)
        .zip(shapes)
        .map(|((s, (ratios, cb_ratios)), curvatures)| SampleRecord {
            point: s.point.clone(),
            grad_norm: s.grad_norm,
            ratios,
            cb_ratios,
            curvatures,
        })
        .collect();

    Ok(AnalysisReport {
        version: REPORT_VERSION,
        spec_digest: digest(text),
        name: spec.name.clone(),
        dim: spec.dim,
        config: cfg.clone(),
        samples: records,
        orders,
        reach: ReachSummary {
            reach: (!reach.infinite).then_some(reach.reach),
            sup_curvature: reach.sup_curvature,
            probes: reach.probes.len(),
            probes_passed: reach.probes_passed,
        },
        eikonal,
        timing: None,
    })
}
