//! Lattice covers of a collar, the induced partitions of unity, tangential
//! operators `T_j = L_j − L_j(φ_t)` and weighted Sobolev norms on a bounded
//! truncation.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::frame::AdaptedFrame;
use crate::geometry::{project_from, BoundarySample, Region};
use crate::linalg::{axpy, compensated_sum, dot, norm, sub};
use crate::registry::CutoffProfile;

/// Largest cover radius tried, relative to the reach.
pub const REACH_FRACTION: f64 = 0.25;
/// Normals on a cover ball may turn by less than this angle.
pub const GRAPH_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

/// `(2⌈√n⌉ + 1)^n`.
pub fn overlap_bound(n: usize) -> usize {
    let c = (n as f64).sqrt().ceil() as usize;
    (2 * c + 1).pow(n as u32)
}

fn graph_condition(geometry: &ScalarField, sample: &BoundarySample, r: f64, tol: f64) -> bool {
    let n0 = sample.normal();
    let cos_limit = GRAPH_ANGLE.cos();
    for j in 0..sample.dim() - 1 {
        let t = sample.frame.axis(j);
        for frac in [0.45, 0.9] {
            for sign in [1.0, -1.0] {
                let q = axpy(&sample.point, sign * frac * r, &t);
                let Ok((y, g)) = project_from(geometry, &q, &q, tol) else {
                    return false;
                };
                if norm(&sub(&y, &sample.point)) >= r {
                    continue;
                }
                if dot(&g, &n0) / norm(&g) <= cos_limit {
                    return false;
                }
            }
        }
    }
    true
}

/// Largest `r ≤ min(cap, ¼ reach)`, halving from the top, on which the
/// boundary normal turns by less than 45° inside every probe ball.
pub fn choose_cover_radius(
    geometry: &ScalarField,
    samples: &[BoundarySample],
    reach: f64,
    cap: f64,
    tol: f64,
) -> Result<f64> {
    if !(cap > 0.0) {
        return Err(Error::InvalidParameter(format!("radius cap must be positive, got {cap}")));
    }
    let floor = 1e-6 * cap;
    let mut r = cap.min(REACH_FRACTION * reach);
    while r >= floor {
        if samples.par_iter().all(|s| graph_condition(geometry, s, r, tol)) {
            return Ok(r);
        }
        r *= 0.5;
    }
    Err(Error::NoAdmissibleRadius(floor))
}

/// Lattice cover `{B(p_j, r)}` with centers at multiples of `r/√n`.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionData {
    pub radius: f64,
    pub spacing: f64,
    pub centers: Vec<Vec<f64>>,
    pub overlap_bound: usize,
    #[serde(skip)]
    lattice: Vec<Vec<i64>>,
    #[serde(skip)]
    index: HashMap<Vec<i64>, usize>,
}

/// All lattice centers within `r/2` (per coordinate) of `region`, in
/// lexicographic order.
pub fn lattice_cover(r: f64, region: &Region) -> Result<PartitionData> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("cover radius must be positive, got {r}")));
    }
    let n = region.dim();
    if (0..n).any(|i| !(region.extent(i) >= 0.0)) {
        return Err(Error::InvalidParameter("empty region".into()));
    }
    let h = r / (n as f64).sqrt();
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|i| {
            let lo = ((region.min[i] - 0.5 * r) / h - 1e-9).ceil() as i64;
            let hi = ((region.max[i] + 0.5 * r) / h + 1e-9).floor() as i64;
            (lo, hi)
        })
        .collect();
    let mut lattice = Vec::new();
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().all(|(lo, hi)| lo <= hi) {
        loop {
            lattice.push(cur.clone());
            let mut axis = n;
            loop {
                if axis == 0 {
                    return Ok(PartitionData::from_lattice(r, h, n, lattice));
                }
                axis -= 1;
                if cur[axis] < ranges[axis].1 {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = ranges[axis].0;
            }
        }
    }
    Err(Error::InvalidParameter("region admits no lattice centers".into()))
}

impl PartitionData {
    fn from_lattice(radius: f64, spacing: f64, n: usize, lattice: Vec<Vec<i64>>) -> PartitionData {
        let centers = lattice
            .iter()
            .map(|k| k.iter().map(|&c| c as f64 * spacing).collect())
            .collect();
        let index = lattice.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        PartitionData {
            radius,
            spacing,
            centers,
            overlap_bound: overlap_bound(n),
            lattice,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// Keeps the centers whose ball can meet the collar `|δ̃| < eps`.
    pub fn restrict_to_collar(&self, geometry: &ScalarField, eps: f64, tol: f64) -> Result<PartitionData> {
        let keep: Vec<bool> = self
            .centers
            .par_iter()
            .map(|p| {
                let (foot, _) = project_from(geometry, p, p, tol)?;
                Ok(norm(&sub(p, &foot)) < eps + self.radius)
            })
            .collect::<Result<_>>()?;
        let lattice = self
            .lattice
            .iter()
            .zip(keep)
            .filter_map(|(k, keep)| keep.then(|| k.clone()))
            .collect();
        Ok(PartitionData::from_lattice(self.radius, self.spacing, self.dim(), lattice))
    }

    /// Indices of centers with `|x − p_j| < r`, ascending.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let n = x.len();
        let reach = (self.radius / self.spacing).ceil() as i64;
        let base: Vec<i64> = x.iter().map(|v| (v / self.spacing).round() as i64).collect();
        let mut out = Vec::new();
        let mut off = vec![-reach; n];
        loop {
            let key: Vec<i64> = base.iter().zip(&off).map(|(b, o)| b + o).collect();
            if let Some(&j) = self.index.get(&key) {
                if norm(&sub(x, &self.centers[j])) < self.radius {
                    out.push(j);
                }
            }
            let mut axis = 0;
            loop {
                if axis == n {
                    out.sort_unstable();
                    return out;
                }
                if off[axis] < reach {
                    off[axis] += 1;
                    break;
                }
                off[axis] = -reach;
                axis += 1;
            }
        }
    }

    /// `χ_j(x) = χ(x − p_j) / Σ_k χ(x − p_k)` for the centers near `x`.
    pub fn partition_functions(&self, profile: &dyn CutoffProfile, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        let raw: Vec<(usize, f64)> = self
            .neighbors(x)
            .into_iter()
            .map(|j| (j, profile.value(norm(&sub(x, &self.centers[j])) / self.radius)))
            .filter(|(_, v)| *v > 0.0)
            .collect();
        let total: f64 = raw.iter().map(|(_, v)| v).sum();
        if !(total > 0.0) {
            return Err(Error::Uncovered(x.to_vec()));
        }
        Ok(raw.into_iter().map(|(j, v)| (j, v / total)).collect())
    }
}

/// Frame transported from the nearest boundary point.
#[derive(Debug, Clone)]
pub struct CollarFrame {
    pub foot: Vec<f64>,
    pub signed: f64,
    pub frame: AdaptedFrame,
}

pub fn collar_frame(geometry: &ScalarField, x: &[f64], width: f64, tol: f64) -> Result<CollarFrame> {
    let (foot, g) = project_from(geometry, x, x, tol)?;
    let frame = AdaptedFrame::from_normal(foot.clone(), &g)?;
    let signed = dot(&sub(x, &foot), &frame.normal());
    if signed.abs() >= width {
        return Err(Error::OutsideCollar {
            distance: signed.abs(),
            width,
        });
    }
    Ok(CollarFrame { foot, signed, frame })
}

/// `φ_t(x) = t|x|²`.
pub fn weight(t: f64, x: &[f64]) -> f64 {
    t * dot(x, x)
}

/// `(L_j u)(x) − (L_j φ_t)(x) u(x)`; `j = n − 1` is the normal direction.
pub fn tangential_operator_apply(
    geometry: &ScalarField,
    t: f64,
    u: &ScalarField,
    x: &[f64],
    j: usize,
    width: f64,
    tol: f64,
) -> Result<f64> {
    let cf = collar_frame(geometry, x, width, tol)?;
    let l = cf.frame.axis(j);
    let lu = dot(&u.gradient(x)?, &l);
    let lphi = 2.0 * t * dot(x, &l);
    Ok(lu - lphi * u.eval(x)?)
}

/// Order, exponent, weight parameter and cells per axis of the coarse grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNormSpec {
    pub order: usize,
    pub p: f64,
    pub t: f64,
    pub resolution: usize,
}

/// Quadrature value on the coarse and the doubled grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNorm {
    pub value: f64,
    pub refined: f64,
    pub error_estimate: f64,
}

/// What to integrate: the partitioned sum over `χ_j` or the plain norm.
#[derive(Clone, Copy)]
pub enum Partitioning<'a> {
    Direct,
    Cover(&'a PartitionData, &'a dyn CutoffProfile),
}

/// Collar `Ω_ε = {x ∈ Ω : δ(x) < ε}` inside a truncation box.
#[derive(Debug, Clone)]
pub struct Collar<'a> {
    pub geometry: &'a ScalarField,
    pub width: f64,
    pub truncation: Region,
    pub tol: f64,
}

const LEAK_TOL: f64 = 1e-12;

fn grid_point(region: &Region, res: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .enumerate()
        .map(|(i, &k)| region.min[i] + region.extent(i) * (k as f64 + 0.5) / res as f64)
        .collect()
}

fn unravel(mut c: usize, n: usize, res: usize) -> Vec<usize> {
    let mut idx = vec![0; n];
    for i in (0..n).rev() {
        idx[i] = c % res;
        c /= res;
    }
    idx
}

type Fun<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

fn point_terms(
    collar: &Collar,
    spec: &WeightedNormSpec,
    part: Partitioning,
    u: &Fun,
    x: &[f64],
) -> Result<f64> {
    let pieces: Vec<(Option<usize>, f64)> = match part {
        Partitioning::Direct => vec![(None, 1.0)],
        Partitioning::Cover(cover, profile) => cover
            .partition_functions(profile, x)?
            .into_iter()
            .map(|(j, c)| (Some(j), c))
            .collect(),
    };
    let ux = u(x);
    let mut terms = Vec::with_capacity(pieces.len() * (1 + x.len()));
    for &(_, c) in &pieces {
        terms.push((ux * c).abs().powf(spec.p));
    }
    if spec.order == 1 {
        let cf = collar_frame(collar.geometry, x, collar.width, collar.tol)?;
        let h = 1e-5 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let chi = |y: &[f64], j: Option<usize>| -> Result<f64> {
            match (part, j) {
                (Partitioning::Cover(cover, profile), Some(j)) => Ok(cover
                    .partition_functions(profile, y)?
                    .into_iter()
                    .find(|(k, _)| *k == j)
                    .map_or(0.0, |(_, v)| v)),
                _ => Ok(1.0),
            }
        };
        for &(j, c) in &pieces {
            let mut grad = vec![0.0; x.len()];
            for (i, gi) in grad.iter_mut().enumerate() {
                let mut yp = x.to_vec();
                let mut ym = x.to_vec();
                yp[i] += h;
                ym[i] -= h;
                *gi = (u(&yp) * chi(&yp, j)? - u(&ym) * chi(&ym, j)?) / (2.0 * h);
            }
            for a in 0..x.len() {
                let l = cf.frame.axis(a);
                let tv = dot(&grad, &l) - 2.0 * spec.t * dot(x, &l) * ux * c;
                terms.push(tv.abs().powf(spec.p));
            }
        }
    }
    Ok(compensated_sum(terms) * (-weight(spec.t, x)).exp())
}

fn quadrature(collar: &Collar, spec: &WeightedNormSpec, part: Partitioning, u: &Fun, res: usize) -> Result<f64> {
    let region = &collar.truncation;
    let n = region.dim();
    let cell: f64 = (0..n).map(|i| region.extent(i) / res as f64).product();
    let total = res.pow(n as u32);
    let scale = (0..total)
        .into_par_iter()
        .map(|c| u(&grid_point(region, res, &unravel(c, n, res))).abs())
        .reduce(|| 0.0, f64::max);
    // the outermost layer of cells must see no mass
    let leak = (0..total)
        .into_par_iter()
        .filter(|&c| unravel(c, n, res).iter().any(|&k| k == 0 || k + 1 == res))
        .map(|c| u(&grid_point(region, res, &unravel(c, n, res))).abs())
        .reduce(|| 0.0, f64::max);
    if leak > LEAK_TOL * scale.max(1.0) {
        return Err(Error::SupportLeak(leak));
    }
    let rows: Vec<f64> = (0..res)
        .into_par_iter()
        .map(|row| {
            let per_row = total / res;
            let vals: Vec<f64> = (0..per_row)
                .map(|c| {
                    let x = grid_point(region, res, &unravel(row * per_row + c, n, res));
                    if collar.geometry.eval(&x)? >= 0.0 {
                        return Ok(0.0);
                    }
                    let (foot, _) = project_from(collar.geometry, &x, &x, collar.tol)?;
                    if norm(&sub(&x, &foot)) >= collar.width {
                        return Ok(0.0);
                    }
                    point_terms(collar, spec, part, u, &x)
                })
                .collect::<Result<_>>()?;
            Ok(compensated_sum(vals))
        })
        .collect::<Result<_>>()?;
    Ok(compensated_sum(rows) * cell)
}

/// `(Σ_j Σ_{|α| ≤ k} ‖T^α (u χ_j)‖^p_{L^p(Ω_ε, e^{−φ_t})})^{1/p}` by
/// midpoint quadrature, with the grid-doubling difference as the error
/// estimate. Orders 0 and 1 are supported.
pub fn weighted_sobolev_norm(
    u: &Fun,
    spec: &WeightedNormSpec,
    partitioning: Partitioning,
    collar: &Collar,
) -> Result<WeightedNorm> {
    if spec.order > 1 {
        return Err(Error::OrderExceeded {
            requested: spec.order,
            available: 1,
        });
    }
    if !(spec.p >= 1.0) || spec.resolution == 0 {
        return Err(Error::InvalidParameter("need p ≥ 1 and a positive resolution".into()));
    }
    let coarse = quadrature(collar, spec, partitioning, u, spec.resolution)?.powf(1.0 / spec.p);
    let refined = quadrature(collar, spec, partitioning, u, 2 * spec.resolution)?.powf(1.0 / spec.p);
    Ok(WeightedNorm {
        value: coarse,
        refined,
        error_estimate: (refined - coarse).abs(),
    })
}
