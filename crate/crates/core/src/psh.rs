//! Levi-form estimates and plurisubharmonic defining functions
//! `ρ_λ = exp(λ δ̃) − 1` on domains in `C^n ≅ R^{2n}`.
//!
//! Complex coordinates pair consecutive real ones:
//! `z_j = x_{2j} + i x_{2j+1}` (0-based).

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::{boundary_distance_hessian, hessian_offset_at};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{distance_jet_numeric, project_from, BoundarySample, Region};
use crate::jet::{Jet, JetLayout, Taylor};
use crate::registry::smooth_step;
use crate::linalg::{axpy, dot, gauss_legendre, hermitian_min_eigenvalue, norm, sub};

pub type C64 = Complex<f64>;

/// Hermitian matrix `∂²f/∂z_j∂z̄_k` stored as real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexHessian {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl ComplexHessian {
    /// From a real `2n × 2n` Hessian.
    pub fn from_real(h: &DMatrix<f64>) -> Result<ComplexHessian> {
        if h.nrows() % 2 != 0 || h.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch {
                expected: 2 * (h.nrows() / 2 + 1),
                got: h.nrows(),
            });
        }
        let n = h.nrows() / 2;
        let mut re = DMatrix::zeros(n, n);
        let mut im = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let (aj, bj, ak, bk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
                re[(j, k)] = 0.25 * (h[(aj, ak)] + h[(bj, bk)]);
                im[(j, k)] = 0.25 * (h[(aj, bk)] - h[(bj, ak)]);
            }
        }
        Ok(ComplexHessian { re, im })
    }

    pub fn dim(&self) -> usize {
        self.re.nrows()
    }

    pub fn entry(&self, j: usize, k: usize) -> C64 {
        C64::new(self.re[(j, k)], self.im[(j, k)])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_min_eigenvalue(&self.re, &self.im)
    }

    /// `max_{j,k} |H_{jk}|`.
    pub fn max_entry(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for k in 0..n {
                m = m.max(self.entry(j, k).norm());
            }
        }
        m
    }

    /// `max |H − H*|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for k in 0..n {
                m = m.max((self.entry(j, k) - self.entry(k, j).conj()).norm());
            }
        }
        m
    }

    /// `u* H u`.
    pub fn quadratic(&self, u: &[C64]) -> f64 {
        let n = self.dim();
        let mut s = C64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                s += u[j].conj() * self.entry(j, k) * u[k];
            }
        }
        s.re
    }
}

/// `∂f/∂z_j = ½(∂f/∂x_{2j} − i ∂f/∂x_{2j+1})`.
pub fn complex_gradient(real_grad: &[f64]) -> Vec<C64> {
    real_grad
        .chunks(2)
        .map(|c| C64::new(0.5 * c[0], -0.5 * c[1]))
        .collect()
}

fn check_even(n: usize) -> Result<()> {
    if n % 2 != 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "complex analysis needs an even real dimension, got {n}"
        )));
    }
    Ok(())
}

/// Complex Hessian of `f` at `x`, or of the signed distance of `{f < 0}`
/// when `use_distance` is set.
pub fn wirtinger_hessian(f: &ScalarField, x: &[f64], use_distance: bool, tol: f64) -> Result<ComplexHessian> {
    check_even(f.dim())?;
    let h = if use_distance {
        distance_hessian(f, x, tol)?
    } else {
        f.eval_jet(x, 2)?.hessian()?
    };
    ComplexHessian::from_real(&h)
}

/// Real Hessian of `δ̃`: offset formula, finite differences when the pole
/// guard trips.
fn distance_hessian(f: &ScalarField, x: &[f64], tol: f64) -> Result<DMatrix<f64>> {
    let (foot, g) = project_from(f, x, x, tol)?;
    let gn = norm(&g);
    let signed = dot(&sub(x, &foot), &g) / gn;
    match hessian_offset_at(f, foot, signed, tol) {
        Ok(h) => Ok(h.hessian),
        Err(Error::PoleGuard(_)) => distance_jet_numeric(f, x, 2, None, None, tol)?.hessian(),
        Err(e) => Err(e),
    }
}

/// Splitting `v = τ + ν` with `Σ ∂δ̃/∂z_j τ_j = 0` and `ν` parallel to the
/// conjugate complex gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSplit {
    pub tau: Vec<C64>,
    pub nu: Vec<C64>,
    /// `|Σ ∂δ̃/∂z_j τ_j|`.
    pub tangency_residual: f64,
    /// `max |v − τ − ν|`.
    pub reassembly_error: f64,
    /// `| |Σ ∂δ̃/∂z_j v_j| − ½|ν| |` for a unit real gradient.
    pub identity_gap: f64,
}

/// Decomposes `v` against the complex gradient built from `real_grad`
/// (the unit normal at a boundary point).
pub fn complex_tangent_decompose(real_grad: &[f64], v: &[C64]) -> Result<TangentSplit> {
    check_even(real_grad.len())?;
    let w = complex_gradient(real_grad);
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: v.len(),
        });
    }
    let ww: f64 = w.iter().map(|c| c.norm_sqr()).sum();
    if ww == 0.0 {
        return Err(Error::ZeroGradient(real_grad.to_vec()));
    }
    let pairing: C64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: Vec<C64> = w.iter().map(|c| c.conj() * (pairing / ww)).collect();
    let tau: Vec<C64> = v.iter().zip(&nu).map(|(a, b)| a - b).collect();
    let tangency_residual = w.iter().zip(&tau).map(|(a, b)| a * b).sum::<C64>().norm();
    let reassembly_error = v
        .iter()
        .zip(tau.iter().zip(&nu))
        .map(|(a, (t, n))| (a - t - n).norm())
        .fold(0.0, f64::max);
    let nu_len = nu.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let scale = norm(real_grad);
    Ok(TangentSplit {
        identity_gap: (pairing.norm() / scale - 0.5 * nu_len).abs(),
        tau,
        nu,
        tangency_residual,
        reassembly_error,
    })
}

/// Orthonormal basis (columns) of `{u : Σ w̄_j u_j = 0}`.
fn orthogonal_complement(w: &[C64]) -> Vec<Vec<C64>> {
    let n = w.len();
    let wn = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<C64>> = vec![w.iter().map(|c| c / wn).collect()];
    for e in 0..n {
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[e] = C64::new(1.0, 0.0);
        for b in &basis {
            let proj: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
            for i in 0..n {
                v[i] -= proj * b[i];
            }
        }
        let l = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if l > 1e-8 {
            basis.push(v.iter().map(|c| c / l).collect());
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Smallest eigenvalue of the Levi form of `ρ` on complex tangents at a
/// boundary sample, divided by `|∇ρ|`.
pub fn levi_ratio(sample: &BoundarySample) -> Result<f64> {
    check_even(sample.dim())?;
    let l = ComplexHessian::from_real(&sample.jet.hessian()?)?;
    let w = complex_gradient(&sample.jet.gradient());
    // Σ L_jk t_j t̄_k = u* L u with u = t̄; tangency Σ w_j t_j = 0 means u ⊥ w
    let basis = orthogonal_complement(&w);
    let m = basis.len();
    if m == 0 {
        return Ok(f64::INFINITY);
    }
    let mut re = DMatrix::zeros(m, m);
    let mut im = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..l.dim() {
                for k in 0..l.dim() {
                    s += basis[a][j].conj() * l.entry(j, k) * basis[b][k];
                }
            }
            re[(a, b)] = s.re;
            im[(a, b)] = s.im;
        }
    }
    Ok(hermitian_min_eigenvalue(&re, &im) / sample.grad_norm)
}

/// Strict pseudoconvexity constant: the smallest [`levi_ratio`] over the
/// samples (a sample-based upper bound for the true infimum).
pub fn strict_psc_constant(samples: &[BoundarySample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoBoundary);
    }
    let vals: Vec<f64> = samples.par_iter().map(levi_ratio).collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

/// Sample sup of `max_{j,k} |∂²δ̃/∂z_j∂z̄_k|` on the boundary.
pub fn distance_levi_bound(samples: &[BoundarySample]) -> Result<f64> {
    let vals: Vec<f64> = samples
        .par_iter()
        .map(|s| Ok(ComplexHessian::from_real(&boundary_distance_hessian(s)?)?.max_entry()))
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Relative margin applied to the smallest admissible `λ`.
pub const LAMBDA_MARGIN: f64 = 0.1;
/// Lower bound on the returned `λ`.
pub const LAMBDA_FLOOR: f64 = 1.0;

fn lambda_inequality(c: f64, c2: f64, lambda: f64, strict: bool) -> bool {
    if strict {
        c * (0.25 * lambda - c2) > 4.0 * c2 * c2
    } else {
        0.5 * c * (0.25 * lambda - c2) >= 4.0 * c2 * c2
    }
}

/// `λ` for `ρ_λ = e^{λδ̃} − 1`.
///
/// Strict (boundary) case: `C(λ/4 − C₂) > 4C₂²`; collar case:
/// `½C(λ/4 − C₂) ≥ 4C₂²`. The threshold is scaled by `1 + margin` and
/// floored at [`LAMBDA_FLOOR`].
pub fn choose_lambda(c: f64, c2: f64, strict: bool) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Hypothesis(format!(
            "strict pseudoconvexity constant must be positive, got {c}"
        )));
    }
    if !(c2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("C2 must be nonnegative, got {c2}")));
    }
    let factor = if strict { 4.0 } else { 8.0 };
    let threshold = 4.0 * (c2 + factor * c2 * c2 / c);
    let lambda = ((1.0 + LAMBDA_MARGIN) * threshold).max(LAMBDA_FLOOR);
    if !lambda_inequality(c, c2, lambda, strict) {
        return Err(Error::Hypothesis(format!(
            "lambda {lambda} does not satisfy the selection inequality"
        )));
    }
    Ok(lambda)
}

/// `ρ_λ = exp(λ δ̃) − 1` on a collar `|δ̃| < width`.
#[derive(Debug, Clone)]
pub struct PshField<'a> {
    pub geometry: &'a ScalarField,
    pub lambda: f64,
    pub width: f64,
    pub tol: f64,
}

impl PshField<'_> {
    /// Jet of `δ̃` at `x`: order ≤ 2 from boundary data at the foot,
    /// finite differences otherwise.
    pub fn distance_jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let (foot, g) = project_from(self.geometry, x, x, self.tol)?;
        let gn = norm(&g);
        let normal: Vec<f64> = g.iter().map(|v| v / gn).collect();
        let signed = dot(&sub(x, &foot), &normal);
        if signed.abs() >= self.width {
            return Err(Error::OutsideCollar {
                distance: signed.abs(),
                width: self.width,
            });
        }
        if order <= 2 {
            if let Ok(h) = hessian_offset_at(self.geometry, foot, signed, self.tol) {
                return Ok(Jet::from_partials(x.to_vec(), order, |e| {
                    let idx: Vec<usize> = e
                        .iter()
                        .enumerate()
                        .flat_map(|(i, &a)| std::iter::repeat_n(i, a as usize))
                        .collect();
                    match idx.len() {
                        0 => signed,
                        1 => normal[idx[0]],
                        _ => h.hessian[(idx[0], idx[1])],
                    }
                }));
            }
        }
        distance_jet_numeric(self.geometry, x, order, None, None, self.tol)
    }

    pub fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let d = self.distance_jet(x, order)?;
        let layout = JetLayout::get(x.len(), order);
        let scaled = d.taylor().scale(self.lambda);
        let one = Taylor::constant(&layout, 1.0);
        Ok(Jet::new(x.to_vec(), scaled.exp().sub(&one)))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.jet(x, 0)?.value())
    }

    pub fn complex_hessian(&self, x: &[f64]) -> Result<ComplexHessian> {
        ComplexHessian::from_real(&self.jet(x, 2)?.hessian()?)
    }
}

const SMOOTH_ABS_PANELS: usize = 8;

/// Even, convex, `C^∞` smoothing of `|t|` that equals `|t|` for `|t| ≥ 1`.
pub fn smooth_abs(t: f64) -> f64 {
    let a = t.abs();
    if a >= 1.0 {
        return a;
    }
    // S(t) = t + 2 ∫_t^1 (1 − H(u)) du with H(u) = ψ((u + 1)/2)
    let (nodes, weights) = gauss_legendre(16);
    let width = (1.0 - a) / SMOOTH_ABS_PANELS as f64;
    let mut integral = 0.0;
    for p in 0..SMOOTH_ABS_PANELS {
        let lo = a + p as f64 * width;
        for (x, w) in nodes.iter().zip(&weights) {
            let u = lo + 0.5 * width * (x + 1.0);
            integral += 0.5 * width * w * (1.0 - smooth_step(0.5 * (u + 1.0)));
        }
    }
    a + 2.0 * integral
}

/// Smooth convex maximum: `½(a + b + eps·S((a − b)/eps))`, exactly
/// `max(a, b)` when `|a − b| ≥ eps`.
pub fn mollified_max(a: f64, b: f64, eps: f64) -> f64 {
    if (a - b).abs() >= eps {
        return a.max(b);
    }
    0.5 * (a + b + eps * smooth_abs((a - b) / eps))
}

/// `M_eps(ρ_λ, A)` with the preconditions of the global extension checked.
pub fn global_extension(rho: f64, a: f64, eps: f64) -> Result<f64> {
    if !(a < 0.0) {
        return Err(Error::InvalidParameter(format!("interior level A must be negative, got {a}")));
    }
    if !(eps > 0.0 && eps < 0.5 * a.abs()) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, |A|/2), got {eps}")));
    }
    Ok(mollified_max(rho, a, eps))
}

/// Largest `δ̃` over interior grid points of `region` at depth at least
/// `depth`: an estimate of `sup_{Ω∖U} δ̃`.
pub fn estimate_interior_level(geometry: &ScalarField, region: &Region, depth: f64, per_axis: usize, tol: f64) -> Result<f64> {
    let n = region.dim();
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(n as u32);
    let pts: Vec<Vec<f64>> = (0..total)
        .map(|mut c| {
            (0..n)
                .map(|i| {
                    let k = c % per_axis;
                    c /= per_axis;
                    region.min[i] + region.extent(i) * k as f64 / (per_axis - 1) as f64
                })
                .collect()
        })
        .collect();
    let vals: Vec<Option<f64>> = pts
        .par_iter()
        .map(|x| {
            if geometry.eval(x).ok()? >= 0.0 {
                return None;
            }
            let (foot, _) = project_from(geometry, x, x, tol).ok()?;
            let d = -norm(&sub(x, &foot));
            (d <= -depth).then_some(d)
        })
        .collect();
    vals.into_iter()
        .flatten()
        .reduce(f64::max)
        .ok_or_else(|| Error::InvalidParameter("no interior probe lies outside the collar".into()))
}

/// Certification record at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub point: Vec<f64>,
    pub min_eigenvalue: f64,
}

/// Levi-form data and the certification outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeviData {
    pub complex_dim: usize,
    /// Strict pseudoconvexity constant.
    pub c: f64,
    /// Bound on the complex Hessian entries of `δ̃`.
    pub c2: f64,
    pub lambda: f64,
    pub strict: bool,
    pub collar_width: f64,
    /// Interior level in units of `δ̃`, when estimated.
    pub interior_level: Option<f64>,
    pub boundary_min_eigenvalue: f64,
    pub collar_min_eigenvalue: f64,
    pub certified_points: usize,
    pub passed: bool,
    #[serde(skip)]
    pub certificates: Vec<Certificate>,
}

/// Collar points `p + s ν` with `s` uniform in `(−width, width)`.
pub fn collar_points(samples: &[BoundarySample], count: usize, width: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s = &samples[rng.gen_range(0..samples.len())];
            let t: f64 = rng.gen_range(-1.0..1.0);
            axpy(&s.point, 0.999 * t * width, &s.normal())
        })
        .collect()
}

/// Estimates `C` and `C₂`, chooses `λ` and certifies `ρ_λ` at boundary
/// samples and `collar_count` collar points.
///
/// `lambda` overrides the automatic choice. The collar width is a quarter of
/// `reach` (or 1 for flat boundaries).
#[allow(clippy::too_many_arguments)]
pub fn certify(
    geometry: &ScalarField,
    samples: &[BoundarySample],
    reach: f64,
    strict: bool,
    lambda: Option<f64>,
    collar_count: usize,
    seed: u64,
    tol: f64,
) -> Result<LeviData> {
    check_even(geometry.dim())?;
    let c = strict_psc_constant(samples)?;
    let c2 = distance_levi_bound(samples)?;
    let lambda = match lambda {
        Some(l) => l,
        None => choose_lambda(c, c2, strict)?,
    };
    let width = if reach.is_finite() { 0.25 * reach } else { 1.0 };
    let field = PshField {
        geometry,
        lambda,
        width,
        tol,
    };
    let boundary: Vec<Certificate> = samples
        .par_iter()
        .map(|s| {
            Ok(Certificate {
                point: s.point.clone(),
                min_eigenvalue: field.complex_hessian(&s.point)?.min_eigenvalue(),
            })
        })
        .collect::<Result<_>>()?;
    let pts = collar_points(samples, collar_count, width, seed);
    let collar: Vec<Certificate> = pts
        .par_iter()
        .map(|x| {
            Ok(Certificate {
                point: x.clone(),
                min_eigenvalue: field.complex_hessian(x)?.min_eigenvalue(),
            })
        })
        .collect::<Result<_>>()?;
    let bmin = boundary.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let cmin = collar.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let passed = if strict { bmin > 0.0 && cmin >= 0.0 } else { cmin >= 0.0 && bmin >= 0.0 };
    let mut certificates = boundary;
    certificates.extend(collar);
    Ok(LeviData {
        complex_dim: geometry.dim() / 2,
        c,
        c2,
        lambda,
        strict,
        collar_width: width,
        interior_level: None,
        boundary_min_eigenvalue: bmin,
        collar_min_eigenvalue: cmin,
        certified_points: certificates.len(),
        passed,
        certificates,
    })
}

/// Complex vector from interleaved real and imaginary parts.
pub fn complex_vector(parts: &[f64]) -> Vec<C64> {
    parts.chunks(2).map(|c| C64::new(c[0], c[1])).collect()
}

/// Real vector `(Re v_1, Im v_1, …)`.
pub fn real_vector(v: &[C64]) -> DVector<f64> {
    DVector::from_iterator(2 * v.len(), v.iter().flat_map(|c| [c.re, c.im]))
}
