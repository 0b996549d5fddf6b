//! Second fundamental form, reach, and derivatives of the signed distance
//! along normal lines.
//!
//! Curvatures are the eigenvalues of the tangential Hessian of `δ̃`, with
//! `δ̃` positive outside: the boundary of the unit disk has `κ = +1`.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::frame::AdaptedFrame;
use crate::geometry::{boundary_project, distance_jet_numeric, project_from, BoundarySample};
use crate::jet::{Jet, MultiIndex};
use crate::linalg::{axpy, gauss_legendre, norm, sub, symmetric_eigen};

/// Smallest admissible `|1 + s·κ|`.
pub const POLE_GUARD: f64 = 1e-6;
/// Relative eigen-gap below which eigenvector frames are not trusted.
pub const EIGEN_GAP_REL: f64 = 1e-6;

/// Tangential Hessian of `δ̃` at a boundary sample and its spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeData {
    pub point: Vec<f64>,
    /// `(n−1) × (n−1)`, row-major.
    pub hessian: Vec<Vec<f64>>,
    /// Principal curvatures, descending.
    pub kappas: Vec<f64>,
    /// Smallest separation between consecutive curvatures (∞ for `n = 2`).
    pub eigen_gap: f64,
    #[serde(skip)]
    pub eigenvectors: DMatrix<f64>,
}

impl ShapeData {
    pub fn spectral_radius(&self) -> f64 {
        self.kappas.iter().fold(0.0f64, |m, k| m.max(k.abs()))
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let t = self.kappas.len();
        DMatrix::from_fn(t, t, |r, c| self.hessian[r][c])
    }
}

fn tangential_hessian_matrix(sample: &BoundarySample) -> Result<DMatrix<f64>> {
    let t = sample.dim() - 1;
    let mut h = DMatrix::zeros(t, t);
    for a in 0..t {
        for b in a..t {
            let v = sample.frame_derivative(&MultiIndex::new(vec![a, b]), 0)? / sample.grad_norm;
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    Ok(h)
}

/// `∂²δ̃/∂y_j∂y_k = |∇ρ|⁻¹ ∂²ρ/∂y_j∂y_k` at the sample, with its
/// eigen-decomposition.
pub fn tangential_hessian(sample: &BoundarySample) -> Result<ShapeData> {
    let h = tangential_hessian_matrix(sample)?;
    let (kappas, vecs) = symmetric_eigen(&h);
    let eigen_gap = kappas
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(ShapeData {
        point: sample.point.clone(),
        hessian: h.row_iter().map(|r| r.iter().copied().collect()).collect(),
        kappas,
        eigen_gap,
        eigenvectors: vecs,
    })
}

/// Outcome of a normal-line uniqueness probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnpProbe {
    pub base: Vec<f64>,
    /// Signed offset along the outward normal.
    pub offset: f64,
    /// Whether the probe projected uniquely back onto its base point.
    pub returned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachReport {
    /// Spectral radius of the tangential Hessian per sample.
    pub curvature_radii: Vec<f64>,
    pub sup_curvature: f64,
    /// `1/sup_curvature`; infinite (serialized as null) for flat samples.
    pub reach: f64,
    pub infinite: bool,
    /// Probes at `±0.9·reach`.
    pub probes: Vec<UnpProbe>,
    pub probes_passed: bool,
    /// Probes at `±1.5·reach`, reported only.
    pub beyond: Vec<UnpProbe>,
}

/// Number of samples probed for unique projection.
pub const UNP_PROBES: usize = 10;

fn probe(geometry: &ScalarField, sample: &BoundarySample, offset: f64, tol: f64) -> UnpProbe {
    let x = axpy(&sample.point, offset, &sample.normal());
    let returned = match boundary_project(geometry, &x, tol) {
        Ok(d) => {
            let scale = offset.abs().max(1.0);
            d.unique && norm(&sub(&d.foot, &sample.point)) <= 1e-6 * scale
        }
        Err(_) => false,
    };
    UnpProbe {
        base: sample.point.clone(),
        offset,
        returned,
    }
}

/// Reach as the reciprocal of the largest sampled curvature, with
/// uniqueness probes along normals of up to [`UNP_PROBES`] samples.
///
/// The estimate is an upper bound when the samples miss the most curved
/// part of the boundary.
pub fn reach_estimate(samples: &[BoundarySample], geometry: &ScalarField, seed: u64, tol: f64) -> Result<ReachReport> {
    if samples.is_empty() {
        return Err(Error::NoBoundary);
    }
    let radii: Vec<f64> = samples
        .par_iter()
        .map(|s| tangential_hessian(s).map(|d| d.spectral_radius()))
        .collect::<Result<_>>()?;
    let sup = radii.iter().fold(0.0f64, |m, v| m.max(*v));
    let infinite = sup == 0.0;
    let reach = if infinite { f64::INFINITY } else { 1.0 / sup };
    let (mut probes, mut beyond) = (Vec::new(), Vec::new());
    if !infinite {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample_indices(&mut rng, samples.len(), UNP_PROBES.min(samples.len())).into_vec();
        picked.sort_unstable();
        let results: Vec<(Vec<UnpProbe>, Vec<UnpProbe>)> = picked
            .par_iter()
            .map(|&i| {
                let s = &samples[i];
                (
                    vec![probe(geometry, s, 0.9 * reach, tol), probe(geometry, s, -0.9 * reach, tol)],
                    vec![probe(geometry, s, 1.5 * reach, tol), probe(geometry, s, -1.5 * reach, tol)],
                )
            })
            .collect();
        for (p, b) in results {
            probes.extend(p);
            beyond.extend(b);
        }
    }
    let probes_passed = probes.iter().all(|p| p.returned);
    Ok(ReachReport {
        curvature_radii: radii,
        sup_curvature: sup,
        reach,
        infinite,
        probes,
        probes_passed,
        beyond,
    })
}

fn third_order_from(jet: &Jet, grad_norm: f64, n: usize, j: usize, k: usize, l: usize) -> Result<f64> {
    let d = |s: &[usize]| jet.derivative(s);
    let nn = n - 1;
    let third = d(&[j, k, l])? / grad_norm;
    let mixed = d(&[j, nn])? * d(&[k, l])? + d(&[k, nn])? * d(&[j, l])? + d(&[l, nn])? * d(&[j, k])?;
    Ok(third - mixed / (grad_norm * grad_norm))
}

/// `∂³δ̃/∂y_j∂y_k∂y_l` at the sample from derivatives of `ρ` up to order 3
/// (tangential slots `j, k, l`, 0-based).
pub fn third_order_invariant(sample: &BoundarySample, j: usize, k: usize, l: usize) -> Result<f64> {
    let n = sample.dim();
    if [j, k, l].iter().any(|&s| s + 1 >= n) {
        return Err(Error::InvalidParameter("third-order invariant takes tangential slots".into()));
    }
    if sample.order() < 3 {
        return Err(Error::OrderExceeded {
            requested: 3,
            available: sample.order(),
        });
    }
    third_order_from(&sample.frame_jet, sample.grad_norm, n, j, k, l)
}

/// Hessian of `δ̃` off the boundary assembled from boundary data at the
/// nearest point.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetHessian {
    pub foot: Vec<f64>,
    pub signed: f64,
    pub normal: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Cartesian Hessian of `δ̃` at a boundary point: `Q diag(H, 0) Qᵀ`.
pub fn boundary_distance_hessian(sample: &BoundarySample) -> Result<DMatrix<f64>> {
    let n = sample.dim();
    let h = tangential_hessian_matrix(sample)?;
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (n - 1, n - 1)).copy_from(&h);
    let q = sample.frame.matrix();
    Ok(q * full * q.transpose())
}

/// `Hess δ̃(x) = Hess δ̃(π(x)) · (Id + δ̃(x) Hess δ̃(π(x)))⁻¹`.
pub fn hessian_offset(f: &ScalarField, x: &[f64], tol: f64) -> Result<OffsetHessian> {
    let (foot, g) = project_from(f, x, x, tol)?;
    let gn = norm(&g);
    let normal: Vec<f64> = g.iter().map(|v| v / gn).collect();
    let signed = crate::linalg::dot(&sub(x, &foot), &normal);
    hessian_offset_at(f, foot, signed, tol).map(|mut h| {
        h.normal = normal;
        h
    })
}

/// As [`hessian_offset`] for a known foot and signed distance.
pub fn hessian_offset_at(f: &ScalarField, foot: Vec<f64>, signed: f64, _tol: f64) -> Result<OffsetHessian> {
    let sample = BoundarySample::new(f, foot, 2)?;
    let shape = tangential_hessian(&sample)?;
    for k in &shape.kappas {
        let g = 1.0 + signed * k;
        if g.abs() <= POLE_GUARD {
            return Err(Error::PoleGuard(g.abs()));
        }
    }
    let hb = boundary_distance_hessian(&sample)?;
    let n = sample.dim();
    let m = DMatrix::<f64>::identity(n, n) + &hb * signed;
    let inv = m
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Id + s Hess is not invertible".into()))?;
    Ok(OffsetHessian {
        normal: sample.normal(),
        foot: sample.point,
        signed,
        hessian: hb * inv,
    })
}

fn pole(g: f64) -> Result<f64> {
    if g.abs() <= POLE_GUARD {
        Err(Error::PoleGuard(g.abs()))
    } else {
        Ok(g)
    }
}

/// Curvature at signed offset `s` along the normal: `κ0 / (1 + s κ0)`.
pub fn kappa_offset(kappa0: f64, s: f64) -> Result<f64> {
    Ok(kappa0 / pole(1.0 + s * kappa0)?)
}

/// `μ(s) = ∏ (1 + s κ_j)`.
pub fn mu_product(kappas: &[f64], s: f64) -> Result<f64> {
    let mut mu = 1.0;
    for k in kappas {
        mu *= pole(1.0 + s * k)?;
    }
    Ok(mu)
}

/// Frame at a sample whose tangential axes are eigenvectors of the
/// tangential Hessian.
pub fn eigen_frame(sample: &BoundarySample) -> Result<(AdaptedFrame, ShapeData)> {
    let shape = tangential_hessian(sample)?;
    let scale = shape.spectral_radius();
    let threshold = EIGEN_GAP_REL * scale;
    if shape.kappas.len() > 1 && shape.eigen_gap < threshold {
        return Err(Error::EigenGap {
            gap: shape.eigen_gap,
            threshold,
        });
    }
    let n = sample.dim();
    let mut rot = DMatrix::<f64>::identity(n, n);
    rot.view_mut((0, 0), (n - 1, n - 1)).copy_from(&shape.eigenvectors);
    let q = sample.frame.matrix() * rot;
    Ok((AdaptedFrame::from_matrix(sample.point.clone(), q), shape))
}

/// A derivative of `δ̃` propagated along the normal line of a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Propagated {
    pub value: f64,
    /// Value at the boundary point.
    pub initial: f64,
    pub mu: f64,
    /// True when the eigen-gap forced the finite-difference route.
    pub fallback: bool,
}

fn check_tangential(index: &MultiIndex, n: usize, len: usize) -> Result<()> {
    if index.len() != len || index.entries().iter().any(|&s| s + 1 >= n) {
        return Err(Error::InvalidParameter(format!(
            "expected a tangential multi-index of length {len}, got {index}"
        )));
    }
    Ok(())
}

/// `∂³δ̃/∂y_I (0′, s) = μ_I(s)⁻¹ ∂³δ̃/∂y_I (0)` in the eigenvector frame of
/// the sample (slots of `I` refer to that frame, ordered by descending
/// curvature).
pub fn propagate_third_derivative(sample: &BoundarySample, index: &MultiIndex, s: f64) -> Result<Propagated> {
    let n = sample.dim();
    check_tangential(index, n, 3)?;
    let (frame, shape) = eigen_frame(sample)?;
    let jet = sample.jet.truncated(3).rotated(frame.matrix());
    let e = index.entries();
    let initial = third_order_from(&jet, sample.grad_norm, n, e[0], e[1], e[2])?;
    let ks: Vec<f64> = e.iter().map(|&a| shape.kappas[a]).collect();
    for k in &shape.kappas {
        pole(1.0 + s * k)?;
    }
    let mu = mu_product(&ks, s)?;
    Ok(Propagated {
        value: initial / mu,
        initial,
        mu,
        fallback: false,
    })
}

/// [`propagate_third_derivative`], falling back to the finite-difference
/// oracle in the sample's own frame when the eigen-gap is too small.
pub fn propagate_third_derivative_or_numeric(
    geometry: &ScalarField,
    sample: &BoundarySample,
    index: &MultiIndex,
    s: f64,
    tol: f64,
) -> Result<Propagated> {
    match propagate_third_derivative(sample, index, s) {
        Err(Error::EigenGap { .. }) => {
            let x = axpy(&sample.point, s, &sample.normal());
            let at = distance_jet_numeric(geometry, &x, 3, None, None, tol)?.rotated(sample.frame.matrix());
            let at0 = distance_jet_numeric(geometry, &sample.point, 3, None, None, tol)?.rotated(sample.frame.matrix());
            Ok(Propagated {
                value: at.partial(index)?,
                initial: at0.partial(index)?,
                mu: f64::NAN,
                fallback: true,
            })
        }
        other => other,
    }
}

/// Number of Gauss–Legendre nodes for the fourth-order integral term.
pub const QUADRATURE_NODES: usize = 16;

/// `∂⁴δ̃/∂y_I (0′, s)` for a tangential `I` of length 4 in the eigenvector
/// frame, using the integral form of the normal-line equation.
///
/// The value at the boundary comes from the finite-difference oracle; the
/// integrand uses the propagated third derivatives and `∂_n ∂²δ̃ = −κ²`
/// on the diagonal.
pub fn propagate_fourth_derivative(
    geometry: &ScalarField,
    sample: &BoundarySample,
    index: &MultiIndex,
    s: f64,
    tol: f64,
) -> Result<Propagated> {
    let n = sample.dim();
    check_tangential(index, n, 4)?;
    let (frame, shape) = eigen_frame(sample)?;
    for k in &shape.kappas {
        pole(1.0 + s * k)?;
    }
    let rho = sample.jet.truncated(3).rotated(frame.matrix());
    let delta0 = distance_jet_numeric(geometry, &sample.point, 4, None, None, tol)?.rotated(frame.matrix());
    let initial = delta0.partial(index)?;
    let kap = &shape.kappas;
    let third0 = |a: usize, b: usize, c: usize| third_order_from(&rho, sample.grad_norm, n, a, b, c);
    let e = index.entries().to_vec();
    let mu_i = |t: f64| -> Result<f64> { mu_product(&e.iter().map(|&a| kap[a]).collect::<Vec<_>>(), t) };

    // integrand at t: Σ_j Σ_{|J|=2} ∂_j ∂_J δ̃ · ∂_j ∂_{I∖J} δ̃ on the normal line
    let integrand = |t: f64| -> Result<f64> {
        let mut total = 0.0;
        for mask in 0u32..16 {
            if mask.count_ones() != 2 {
                continue;
            }
            let (mut jpart, mut rest) = (Vec::new(), Vec::new());
            for (pos, &slot) in e.iter().enumerate() {
                if mask & (1 << pos) != 0 {
                    jpart.push(slot);
                } else {
                    rest.push(slot);
                }
            }
            for j in 0..n - 1 {
                let a = third0(j, jpart[0], jpart[1])? / mu_product(&[kap[j], kap[jpart[0]], kap[jpart[1]]], t)?;
                let b = third0(j, rest[0], rest[1])? / mu_product(&[kap[j], kap[rest[0]], kap[rest[1]]], t)?;
                total += a * b;
            }
            let dn = |pair: &[usize]| -> Result<f64> {
                if pair[0] == pair[1] {
                    let k = kappa_offset(kap[pair[0]], t)?;
                    Ok(-k * k)
                } else {
                    Ok(0.0)
                }
            };
            total += dn(&jpart)? * dn(&rest)?;
        }
        Ok(total)
    };
    let (nodes, weights) = gauss_legendre(QUADRATURE_NODES);
    let mut terms = Vec::with_capacity(QUADRATURE_NODES);
    for (x, w) in nodes.iter().zip(&weights) {
        let t = 0.5 * s * (x + 1.0);
        terms.push(0.5 * s * w * mu_i(t)? * integrand(t)?);
    }
    let integral = crate::linalg::compensated_sum(terms);
    let mu = mu_i(s)?;
    Ok(Propagated {
        value: initial / mu - integral / (2.0 * mu),
        initial,
        mu,
        fallback: false,
    })
}

/// Residual of the normal-derivative identity obtained by differentiating
/// `|∇δ̃|² = 1` along `I` at a boundary point:
/// `Σ_j Σ_{∅≠J⊊I} ∂_j∂_J δ̃ · ∂_j∂_{I∖J} δ̃ + 2 ∂_n ∂_I δ̃`.
///
/// All derivatives come from the finite-difference oracle in the sample's
/// frame.
pub fn normal_identity_residual(
    geometry: &ScalarField,
    sample: &BoundarySample,
    index: &MultiIndex,
    step: Option<f64>,
    tol: f64,
) -> Result<f64> {
    let k = index.len();
    if k == 0 || k > 3 {
        return Err(Error::InvalidParameter(format!("identity order must be 1..=3, got {k}")));
    }
    let n = sample.dim();
    let jet = distance_jet_numeric(geometry, &sample.point, k + 1, step, None, tol)?.rotated(sample.frame.matrix());
    let e = index.entries();
    let mut total = 0.0;
    for mask in 1u32..((1 << k) - 1) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (pos, &slot) in e.iter().enumerate() {
            if mask & (1 << pos) != 0 {
                a.push(slot);
            } else {
                b.push(slot);
            }
        }
        for j in 0..n {
            let mut aj = a.clone();
            aj.push(j);
            let mut bj = b.clone();
            bj.push(j);
            total += jet.derivative(&aj)? * jet.derivative(&bj)?;
        }
    }
    let mut top = e.to_vec();
    top.push(n - 1);
    total += 2.0 * jet.derivative(&top)?;
    Ok(total.abs())
}
