//! Nearest-point projection onto `{ρ = 0}`, signed distance, boundary
//! sampling and a finite-difference oracle for jets of the signed distance.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::frame::AdaptedFrame;
use crate::jet::{Jet, JetLayout, MultiIndex};
use crate::linalg::{dot, norm, sub};

pub const DEFAULT_TOL: f64 = 1e-10;
const WARMUP_STEPS: usize = 3;
const MAX_NEWTON: usize = 100;
const POLISH_STEPS: usize = 2;

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Region {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Region> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::InvalidParameter("region bounds must have equal positive length".into()));
        }
        if min.iter().zip(&max).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidParameter("region min must not exceed max".into()));
        }
        Ok(Region { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn extent(&self, i: usize) -> f64 {
        self.max[i] - self.min[i]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: &[f64], slack: f64) -> bool {
        p.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.min[i] - slack && v <= self.max[i] + slack)
    }

    /// The box scaled by two about its center.
    pub fn doubled(&self) -> Region {
        let (min, max) = (0..self.dim())
            .map(|i| {
                let c = 0.5 * (self.min[i] + self.max[i]);
                (c - self.extent(i), c + self.extent(i))
            })
            .unzip();
        Region { min, max }
    }
}

/// Result of projecting a query point onto the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEval {
    pub query: Vec<f64>,
    pub foot: Vec<f64>,
    /// Signed distance, negative inside.
    pub signed: f64,
    /// Unit outward normal at the foot.
    pub normal: Vec<f64>,
    /// False when another foot at the same distance was found.
    pub unique: bool,
}

impl DistanceEval {
    pub fn distance(&self) -> f64 {
        self.signed.abs()
    }

    pub fn in_collar(&self, eps: f64) -> bool {
        self.distance() < eps
    }
}

fn value_grad(f: &ScalarField, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let j = f.eval_jet(y, 1)?;
    Ok((j.value(), j.gradient()))
}

fn tangency_residual(x: &[f64], y: &[f64], g: &[f64]) -> f64 {
    let v = sub(x, y);
    let gn = norm(g);
    let along = dot(&v, g) / gn;
    v.iter()
        .zip(g)
        .map(|(vi, gi)| (vi - along * gi / gn).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Relative to the distance, but never below rounding at the query's scale.
fn tangency_tol(x: &[f64], y: &[f64], tol: f64) -> f64 {
    let d = norm(&sub(x, y));
    (tol * d.max(1e-6)).max(64.0 * f64::EPSILON * norm(x).max(1.0))
}

fn kkt_residual(f: &ScalarField, x: &[f64], y: &[f64], mu: f64) -> Result<(Vec<f64>, f64)> {
    let (r, g) = value_grad(f, y)?;
    let mut res: Vec<f64> = (0..x.len()).map(|i| y[i] - x[i] + mu * g[i]).collect();
    res.push(r);
    let merit = dot(&res, &res);
    Ok((res, merit))
}

/// Critical point of `|x − y|` on `{ρ = 0}` reached from `start`.
///
/// Returns the foot and the gradient of `ρ` there.
pub fn project_from(f: &ScalarField, x: &[f64], start: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = f.dim();
    if x.len() != n || start.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len().min(start.len()),
        });
    }
    let mut y = start.to_vec();
    for _ in 0..WARMUP_STEPS {
        let (r, g) = value_grad(f, &y)?;
        let gg = dot(&g, &g);
        if gg == 0.0 {
            return Err(Error::ZeroGradient(y));
        }
        if r == 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = (0..n).map(|i| y[i] - t * r * g[i] / gg).collect();
            if let Ok(rc) = f.eval(&cand) {
                if rc.abs() < r.abs() {
                    y = cand;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }

    let (_, g) = value_grad(f, &y)?;
    let gg = dot(&g, &g);
    if gg == 0.0 {
        return Err(Error::ZeroGradient(y));
    }
    let mut mu = -dot(&sub(&y, x), &g) / gg;
    let mut polish = 0;
    for _ in 0..MAX_NEWTON {
        let jet = f.eval_jet(&y, 2)?;
        let r = jet.value();
        let g = jet.gradient();
        let gnorm = norm(&g);
        if gnorm == 0.0 {
            return Err(Error::ZeroGradient(y));
        }
        let converged = r.abs() <= tol * gnorm.max(1.0) && tangency_residual(x, &y, &g) <= tangency_tol(x, &y, tol);
        if converged {
            if polish >= POLISH_STEPS {
                return Ok((y, g));
            }
            polish += 1;
        }
        let h = jet.hessian()?;
        let mut k = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = if i == j { 1.0 } else { 0.0 } + mu * h[(i, j)];
            }
            k[(i, n)] = g[i];
            k[(n, i)] = g[i];
        }
        let (res, merit) = kkt_residual(f, x, &y, mu)?;
        let rhs = DVector::from_iterator(n + 1, res.iter().map(|v| -v));
        let step = match k.lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                // singular KKT system: fall back to a normal step
                let mut s = DVector::zeros(n + 1);
                for i in 0..n {
                    s[i] = -r * g[i] / (gnorm * gnorm);
                }
                s
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..n).map(|i| y[i] + t * step[i]).collect();
            let cmu = mu + t * step[n];
            if let Ok((_, m)) = kkt_residual(f, x, &cand, cmu) {
                if m <= (1.0 - 1e-4 * t) * merit || (converged && m <= merit) {
                    y = cand;
                    mu = cmu;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if converged {
                return Ok((y, g));
            }
            return Err(Error::NoConvergence(format!(
                "line search stalled at {y:?} (|rho| = {:e})",
                r.abs()
            )));
        }
    }
    let (r, g) = value_grad(f, &y)?;
    if r.abs() <= tol * norm(&g).max(1.0) && tangency_residual(x, &y, &g) <= tangency_tol(x, &y, tol) {
        return Ok((y, g));
    }
    Err(Error::NoConvergence(format!(
        "iteration budget exhausted for query {x:?}"
    )))
}

fn unit(g: &[f64]) -> Vec<f64> {
    let l = norm(g);
    g.iter().map(|v| v / l).collect()
}

fn sign_of(f: &ScalarField, x: &[f64], foot: &[f64], normal: &[f64]) -> f64 {
    match f.eval(x) {
        Ok(v) if v > 0.0 => 1.0,
        Ok(v) if v < 0.0 => -1.0,
        Ok(_) => 0.0,
        Err(_) => dot(&sub(x, foot), normal).signum(),
    }
}

/// Nearest boundary point of `x` with a multi-start uniqueness probe.
pub fn boundary_project(f: &ScalarField, x: &[f64], tol: f64) -> Result<DistanceEval> {
    let mut feet = Vec::new();
    match project_from(f, x, x, tol) {
        Ok(c) => feet.push(c),
        Err(Error::ZeroGradient(_)) => {
            // critical point of ρ at the query: start slightly off it
            let eta = 1e-3 * norm(x).max(1.0);
            let mut last = Error::ZeroGradient(x.to_vec());
            for i in 0..x.len() {
                for s in [1.0, -1.0] {
                    let mut seed = x.to_vec();
                    seed[i] += s * eta;
                    match project_from(f, x, &seed, tol) {
                        Ok(c) => feet.push(c),
                        Err(e) => last = e,
                    }
                }
            }
            if feet.is_empty() {
                return Err(last);
            }
        }
        Err(e) => return Err(e),
    }
    let d0 = feet
        .iter()
        .map(|(p, _)| norm(&sub(x, p)))
        .fold(f64::INFINITY, f64::min);
    if d0 > 0.0 {
        let eta = 0.5 * d0;
        for i in 0..x.len() {
            for s in [-1.0, 1.0] {
                let mut seed = x.to_vec();
                seed[i] += s * eta;
                if let Ok(c) = project_from(f, x, &seed, tol) {
                    feet.push(c);
                }
            }
        }
    }
    let dists: Vec<f64> = feet.iter().map(|(p, _)| norm(&sub(x, p))).collect();
    let mut best = 0;
    for (i, &d) in dists.iter().enumerate() {
        if d < dists[best] - tol * dists[best].max(1.0) {
            best = i;
        }
    }
    let scale = norm(x).max(1.0);
    let unique = !feet.iter().zip(&dists).any(|((p, _), &d)| {
        norm(&sub(p, &feet[best].0)) > 10.0 * tol * scale && (d - dists[best]).abs() < tol * dists[best].max(1.0)
    });
    let (foot, g) = feet.swap_remove(best);
    let normal = unit(&g);
    let signed = sign_of(f, x, &foot, &normal) * dists[best];
    Ok(DistanceEval {
        query: x.to_vec(),
        foot,
        signed,
        normal,
        unique,
    })
}

/// Signed distance `δ̃(x)`: negative inside `{ρ < 0}`.
pub fn signed_distance(f: &ScalarField, x: &[f64], tol: f64) -> Result<f64> {
    Ok(boundary_project(f, x, tol)?.signed)
}

/// Adapted frame at a boundary point from the gradient of `ρ`.
pub fn adapted_frame(f: &ScalarField, p: &[f64]) -> Result<AdaptedFrame> {
    let g = f.gradient(p)?;
    AdaptedFrame::from_normal(p.to_vec(), &g)
}

/// A boundary point together with its frame and the jet of the defining
/// function there.
#[derive(Debug, Clone)]
pub struct BoundarySample {
    pub point: Vec<f64>,
    pub frame: AdaptedFrame,
    /// Cartesian jet of `ρ` at the point.
    pub jet: Jet,
    /// The same jet in frame coordinates.
    pub frame_jet: Jet,
    pub grad_norm: f64,
}

impl BoundarySample {
    pub fn new(f: &ScalarField, point: Vec<f64>, order: usize) -> Result<BoundarySample> {
        let jet = f.eval_jet(&point, order.max(1))?;
        let g = jet.gradient();
        let grad_norm = norm(&g);
        if !(grad_norm > 0.0) {
            return Err(Error::ZeroGradient(point));
        }
        let frame = AdaptedFrame::from_normal(point.clone(), &g)?;
        let frame_jet = jet.rotated(frame.matrix());
        Ok(BoundarySample {
            point,
            frame,
            jet,
            frame_jet,
            grad_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn order(&self) -> usize {
        self.jet.order()
    }

    pub fn normal(&self) -> Vec<f64> {
        self.frame.normal()
    }

    /// `∂^{|I|+j} ρ / ∂y_I ∂y_n^j` at the sample.
    pub fn frame_derivative(&self, tangential: &MultiIndex, j: usize) -> Result<f64> {
        let n = self.dim();
        if tangential.entries().iter().any(|&s| s + 1 >= n) {
            return Err(Error::InvalidParameter(format!(
                "multi-index {tangential} is not tangential in dimension {n}"
            )));
        }
        self.frame_jet.partial(&tangential.with_repeated(n - 1, j))
    }

    pub fn radius(&self) -> f64 {
        norm(&self.point)
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => {}
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn seed_lattice(region: &Region, count: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, f64) {
    let n = region.dim();
    let active: Vec<usize> = (0..n).filter(|&i| region.extent(i) > 0.0).collect();
    let volume: f64 = active.iter().map(|&i| region.extent(i)).product();
    let h = if active.is_empty() {
        1.0
    } else {
        (volume / count as f64).powf(1.0 / active.len() as f64)
    };
    let counts: Vec<usize> = (0..n)
        .map(|i| {
            if region.extent(i) > 0.0 {
                ((region.extent(i) / h).ceil() as usize).max(1)
            } else {
                1
            }
        })
        .collect();
    let total: usize = counts.iter().product();
    let mut seeds = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let p = (0..n)
            .map(|i| {
                let cell = region.extent(i) / counts[i] as f64;
                let jitter: f64 = rng.gen_range(-0.25..0.25);
                region.min[i] + (idx[i] as f64 + 0.5 + jitter) * cell
            })
            .collect();
        seeds.push(p);
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    (seeds, h)
}

/// Boundary points inside `region`: project a jittered seed lattice, drop
/// near-duplicates and thin to `count` points by farthest-point selection.
///
/// Feet of `extra_seeds` are always kept, on top of the `count` thinned
/// points. The output is sorted
/// lexicographically and does not depend on the thread count.
pub fn sample_boundary_points(
    geometry: &ScalarField,
    region: &Region,
    count: usize,
    seed: u64,
    tol: f64,
    extra_seeds: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if region.dim() != geometry.dim() {
        return Err(Error::DimensionMismatch {
            expected: geometry.dim(),
            got: region.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lattice, h) = seed_lattice(region, count.max(1) * 8, &mut rng);
    let slack = 1e-9 * region.diameter().max(1.0);
    let project = |s: &Vec<f64>| -> Option<Vec<f64>> {
        let (foot, _) = project_from(geometry, s, s, tol).ok()?;
        region.contains(&foot, slack).then_some(foot)
    };
    let forced: Vec<Vec<f64>> = extra_seeds.par_iter().filter_map(project).collect();
    let found: Vec<Vec<f64>> = lattice.par_iter().filter_map(project).collect();
    if forced.is_empty() && found.is_empty() {
        return Err(Error::NoBoundary);
    }

    let spacing = 0.05 * h;
    let n = geometry.dim();
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / spacing).floor() as i64).collect() };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(n as u32))
        .map(|mut c| {
            (0..n)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .collect();
    let n_forced = {
        let mut add = |p: Vec<f64>, kept: &mut Vec<Vec<f64>>| -> bool {
            let k = key(&p);
            for o in &offsets {
                let nk: Vec<i64> = k.iter().zip(o).map(|(a, b)| a + b).collect();
                if let Some(ids) = grid.get(&nk) {
                    if ids.iter().any(|&i| norm(&sub(&kept[i], &p)) < spacing) {
                        return false;
                    }
                }
            }
            grid.entry(k).or_default().push(kept.len());
            kept.push(p);
            true
        };
        for p in forced {
            add(p, &mut kept);
        }
        let nf = kept.len();
        for p in found {
            add(p, &mut kept);
        }
        nf
    };

    let target = count + n_forced;
    let mut chosen: Vec<usize> = (0..n_forced).collect();
    if kept.len() <= target {
        chosen = (0..kept.len()).collect();
    } else {
        let mut mind = vec![f64::INFINITY; kept.len()];
        let mut taken = vec![false; kept.len()];
        if chosen.is_empty() {
            let first = (0..kept.len())
                .min_by(|&a, &b| lex_cmp(&kept[a], &kept[b]).then(a.cmp(&b)))
                .unwrap_or(0);
            chosen.push(first);
        }
        for &c in &chosen {
            taken[c] = true;
        }
        let update = |mind: &mut Vec<f64>, c: usize| {
            let pc = kept[c].clone();
            mind.par_iter_mut().enumerate().for_each(|(i, m)| {
                let d = norm(&sub(&kept[i], &pc));
                if d < *m {
                    *m = d;
                }
            });
        };
        for &c in &chosen.clone() {
            update(&mut mind, c);
        }
        while chosen.len() < target {
            let mut best = usize::MAX;
            for i in 0..kept.len() {
                if !taken[i] && (best == usize::MAX || mind[i] > mind[best]) {
                    best = i;
                }
            }
            if best == usize::MAX {
                break;
            }
            taken[best] = true;
            chosen.push(best);
            update(&mut mind, best);
        }
    }
    let mut out: Vec<Vec<f64>> = chosen.into_iter().map(|i| kept[i].clone()).collect();
    out.sort_by(|a, b| lex_cmp(a, b));
    Ok(out)
}

/// Boundary samples with jets of `f` of the given order.
pub fn sample_boundary(
    f: &ScalarField,
    region: &Region,
    count: usize,
    order: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<BoundarySample>> {
    let pts = sample_boundary_points(f, region, count, seed, tol, &[])?;
    build_samples(f, pts, order)
}

/// Samples of `defining` at the given boundary points, in order.
pub fn build_samples(defining: &ScalarField, points: Vec<Vec<f64>>, order: usize) -> Result<Vec<BoundarySample>> {
    points
        .into_par_iter()
        .map(|p| BoundarySample::new(defining, p, order))
        .collect()
}

/// Central-difference weights per derivative order, with offsets in steps.
fn stencil(order: u8) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(1, 0.5), (-1, -0.5)],
        2 => &[(1, 1.0), (0, -2.0), (-1, 1.0)],
        3 => &[(2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)],
        _ => &[(2, 1.0), (1, -4.0), (0, 6.0), (-1, -4.0), (-2, 1.0)],
    }
}

/// Highest order supported by [`distance_jet_numeric`].
pub const NUMERIC_JET_MAX_ORDER: usize = 4;

pub fn default_fd_step(x: &[f64]) -> f64 {
    (1e-3 * norm(x)).max(1e-4)
}

/// Signed distance at `y` with the projection seeded at `start`, computed as
/// `(y − π(y))·n̂(π(y))`.
fn distance_from_seed(f: &ScalarField, y: &[f64], start: &[f64], tol: f64) -> Result<f64> {
    let (foot, g) = project_from(f, y, start, tol)?;
    Ok(dot(&sub(y, &foot), &unit(&g)))
}

/// Jet of `δ̃` at `x` up to order `k` by tensor-product central differences
/// with one Richardson step.
///
/// When `reach` is given the stencil must stay inside the collar of that
/// width.
pub fn distance_jet_numeric(
    f: &ScalarField,
    x: &[f64],
    k: usize,
    step: Option<f64>,
    reach: Option<f64>,
    tol: f64,
) -> Result<Jet> {
    if k > NUMERIC_JET_MAX_ORDER {
        return Err(Error::OrderExceeded {
            requested: k,
            available: NUMERIC_JET_MAX_ORDER,
        });
    }
    let n = f.dim();
    let s = step.unwrap_or_else(|| default_fd_step(x));
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step {s}")));
    }
    let (foot, g) = project_from(f, x, x, tol)?;
    let center = dot(&sub(x, &foot), &unit(&g));
    if let Some(r) = reach {
        let extent = k as f64 * s;
        if center.abs() + extent >= r {
            return Err(Error::StencilOutsideCollar {
                distance: center.abs(),
                extent,
                reach: r,
            });
        }
    }
    let layout = JetLayout::get(n, k);
    let half = 0.5 * s;
    // nodes on the half-step grid; the coarse level uses even offsets
    let mut nodes: BTreeSet<Vec<i32>> = BTreeSet::new();
    for idx in 0..layout.len() {
        let e = layout.exponents(idx);
        for scale in [1i32, 2] {
            let mut partial: Vec<Vec<i32>> = vec![Vec::new()];
            for &a in e {
                let mut next = Vec::new();
                for pre in &partial {
                    for &(o, _) in stencil(a) {
                        let mut v = pre.clone();
                        v.push(o * scale);
                        next.push(v);
                    }
                }
                partial = next;
            }
            nodes.extend(partial);
        }
    }
    let nodes: Vec<Vec<i32>> = nodes.into_iter().collect();
    let values: Vec<f64> = nodes
        .par_iter()
        .map(|m| {
            if m.iter().all(|&o| o == 0) {
                return Ok(center);
            }
            let y: Vec<f64> = (0..n).map(|i| x[i] + m[i] as f64 * half).collect();
            let start: Vec<f64> = (0..n).map(|i| foot[i] + m[i] as f64 * half).collect();
            distance_from_seed(f, &y, &start, tol)
        })
        .collect::<Result<Vec<f64>>>()?;
    let table: HashMap<&Vec<i32>, f64> = nodes.iter().zip(values).collect();

    let difference = |e: &[u8], scale: i32| -> f64 {
        let h = half * scale as f64;
        let mut total = 0.0;
        let mut stack: Vec<(Vec<i32>, f64)> = vec![(Vec::new(), 1.0)];
        for &a in e {
            let mut next = Vec::new();
            for (pre, w) in &stack {
                for &(o, c) in stencil(a) {
                    let mut v = pre.clone();
                    v.push(o * scale);
                    next.push((v, w * c));
                }
            }
            stack = next;
        }
        for (m, w) in stack {
            total += w * table[&m];
        }
        let order: i32 = e.iter().map(|&a| a as i32).sum();
        total / h.powi(order)
    };
    Ok(Jet::from_partials(x.to_vec(), k, |e| {
        if e.iter().all(|&a| a == 0) {
            return center;
        }
        let fine = difference(e, 1);
        let coarse = difference(e, 2);
        (4.0 * fine - coarse) / 3.0
    }))
}

/// Deviation of the numeric distance gradient from a unit vector and from
/// the unit normal at the foot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EikonalCheck {
    pub residual: f64,
    pub normal_mismatch: f64,
}

pub fn eikonal_residual(f: &ScalarField, x: &[f64], step: Option<f64>, tol: f64) -> Result<EikonalCheck> {
    let jet = distance_jet_numeric(f, x, 1, step, None, tol)?;
    let grad = jet.gradient();
    let (_, g) = project_from(f, x, x, tol)?;
    let nrm = unit(&g);
    Ok(EikonalCheck {
        residual: (norm(&grad) - 1.0).abs(),
        normal_mismatch: norm(&sub(&grad, &nrm)),
    })
}
