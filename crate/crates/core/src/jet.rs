//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Taylor`] stores the coefficients `c_α = ∂^α f / α!` of a polynomial in
//! `n` variables truncated at total degree `k`, one coefficient per monomial.
//! Monomials correspond one-to-one with increasing multi-indices, so every
//! mixed partial is stored exactly once.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{Algebra, Func, MIN_DENOMINATOR};

/// Default cap on jet order.
pub const DEFAULT_MAX_ORDER: usize = 6;

/// Monomial table shared by all jets of one `(dim, order)`.
pub struct JetLayout {
    dim: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    degree: Vec<usize>,
    factorial: Vec<f64>,
    /// `(i, j, t)`: monomial i times monomial j lands in monomial t.
    products: Vec<(u32, u32, u32)>,
}

impl fmt::Debug for JetLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetLayout")
            .field("dim", &self.dim)
            .field("order", &self.order)
            .field("monomials", &self.exps.len())
            .finish()
    }
}

fn monomials_of_degree(dim: usize, degree: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() + 1 == dim {
        prefix.push(degree as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=degree).rev() {
        prefix.push(first as u8);
        monomials_of_degree(dim, degree - first, prefix, out);
        prefix.pop();
    }
}

impl JetLayout {
    fn build(dim: usize, order: usize) -> JetLayout {
        let mut exps = Vec::new();
        for d in 0..=order {
            if dim == 0 {
                if d == 0 {
                    exps.push(Vec::new());
                }
                continue;
            }
            monomials_of_degree(dim, d, &mut Vec::new(), &mut exps);
        }
        let lookup: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let degree: Vec<usize> = exps
            .iter()
            .map(|e| e.iter().map(|&a| a as usize).sum())
            .collect();
        let factorial = exps
            .iter()
            .map(|e| e.iter().map(|&a| (1..=a as u64).product::<u64>() as f64).product())
            .collect();
        let mut products = Vec::new();
        let mut sum = vec![0u8; dim];
        for i in 0..exps.len() {
            for j in 0..exps.len() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                for v in 0..dim {
                    sum[v] = exps[i][v] + exps[j][v];
                }
                products.push((i as u32, j as u32, lookup[&sum] as u32));
            }
        }
        JetLayout {
            dim,
            order,
            exps,
            lookup,
            degree,
            factorial,
            products,
        }
    }

    /// Shared layout for `(dim, order)`.
    pub fn get(dim: usize, order: usize) -> Arc<JetLayout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetLayout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|p| p.into_inner());
        guard
            .entry((dim, order))
            .or_insert_with(|| Arc::new(JetLayout::build(dim, order)))
            .clone()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degree[i]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.lookup.get(exps).copied()
    }
}

/// Increasing multi-index over 0-based coordinate slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(mut entries: Vec<usize>) -> MultiIndex {
        entries.sort_unstable();
        MultiIndex(entries)
    }

    pub fn empty() -> MultiIndex {
        MultiIndex(Vec::new())
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, slot: usize) -> bool {
        self.0.contains(&slot)
    }

    /// Appends `count` copies of `slot`.
    pub fn with_repeated(&self, slot: usize, count: usize) -> MultiIndex {
        let mut e = self.0.clone();
        e.extend(std::iter::repeat_n(slot, count));
        MultiIndex::new(e)
    }

    /// All increasing multi-indices of length `len` over slots `0..slots`.
    pub fn all(slots: usize, len: usize) -> Vec<MultiIndex> {
        fn rec(slots: usize, len: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if cur.len() == len {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for s in start..slots {
                cur.push(s);
                rec(slots, len, s, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if len == 0 {
            out.push(MultiIndex::empty());
        } else if slots > 0 {
            rec(slots, len, 0, &mut Vec::new(), &mut out);
        }
        out
    }

    fn exponents(&self, dim: usize) -> Result<Vec<u8>> {
        let mut e = vec![0u8; dim];
        for &s in &self.0 {
            if s >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s + 1,
                });
            }
            e[s] += 1;
        }
        Ok(e)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", s + 1)?;
        }
        write!(f, ")")
    }
}

/// Truncated Taylor polynomial around an implicit base point.
#[derive(Debug, Clone)]
pub struct Taylor {
    layout: Arc<JetLayout>,
    c: Vec<f64>,
}

impl Taylor {
    pub fn constant(layout: &Arc<JetLayout>, v: f64) -> Taylor {
        let mut c = vec![0.0; layout.len()];
        c[0] = v;
        Taylor {
            layout: layout.clone(),
            c,
        }
    }

    /// The coordinate function `x_i` with value `at`.
    pub fn variable(layout: &Arc<JetLayout>, i: usize, at: f64) -> Taylor {
        let mut t = Taylor::constant(layout, at);
        if layout.order >= 1 {
            let mut e = vec![0u8; layout.dim];
            e[i] = 1;
            t.c[layout.lookup[&e]] = 1.0;
        }
        t
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Mixed partial for a multi-index.
    pub fn partial(&self, index: &MultiIndex) -> Result<f64> {
        if index.len() > self.layout.order {
            return Err(Error::OrderExceeded {
                requested: index.len(),
                available: self.layout.order,
            });
        }
        let e = index.exponents(self.layout.dim)?;
        let i = self.layout.lookup[&e];
        Ok(self.c[i] * self.layout.factorial[i])
    }

    /// Mixed partial for an arbitrary (unsorted) tuple of coordinate slots.
    pub fn derivative(&self, slots: &[usize]) -> Result<f64> {
        self.partial(&MultiIndex::new(slots.to_vec()))
    }

    fn zip(&self, other: &Taylor, f: impl Fn(f64, f64) -> f64) -> Taylor {
        debug_assert!(Arc::ptr_eq(&self.layout, &other.layout));
        Taylor {
            layout: self.layout.clone(),
            c: self.c.iter().zip(&other.c).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn add(&self, other: &Taylor) -> Taylor {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Taylor) -> Taylor {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Taylor {
        Taylor {
            layout: self.layout.clone(),
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    pub fn add_const(&self, v: f64) -> Taylor {
        let mut t = self.clone();
        t.c[0] += v;
        t
    }

    pub fn mul(&self, other: &Taylor) -> Taylor {
        debug_assert!(Arc::ptr_eq(&self.layout, &other.layout));
        let mut c = vec![0.0; self.c.len()];
        for &(i, j, t) in &self.layout.products {
            let (a, b) = (self.c[i as usize], other.c[j as usize]);
            if a != 0.0 && b != 0.0 {
                c[t as usize] += a * b;
            }
        }
        Taylor {
            layout: self.layout.clone(),
            c,
        }
    }

    /// `g(self)` for a univariate `g` given by its Taylor coefficients
    /// around `self.value()`.
    pub fn compose(&self, g: &[f64]) -> Taylor {
        let mut h = self.clone();
        h.c[0] = 0.0;
        let k = self.layout.order.min(g.len().saturating_sub(1));
        let mut r = Taylor::constant(&self.layout, g[k]);
        for j in (0..k).rev() {
            r = r.mul(&h).add_const(g[j]);
        }
        r
    }

    fn order(&self) -> usize {
        self.layout.order
    }

    pub fn recip(&self) -> Result<Taylor> {
        let a = self.value();
        if a.abs() < MIN_DENOMINATOR {
            return Err(Error::Singular(format!("division by {a:e}")));
        }
        let mut g = Vec::with_capacity(self.order() + 1);
        let mut term = 1.0 / a;
        for _ in 0..=self.order() {
            g.push(term);
            term *= -1.0 / a;
        }
        Ok(self.compose(&g))
    }

    pub fn div(&self, other: &Taylor) -> Result<Taylor> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn exp(&self) -> Taylor {
        let ea = self.value().exp();
        let mut g = Vec::with_capacity(self.order() + 1);
        let mut fact = 1.0;
        for j in 0..=self.order() {
            if j > 0 {
                fact *= j as f64;
            }
            g.push(ea / fact);
        }
        self.compose(&g)
    }

    pub fn ln(&self) -> Result<Taylor> {
        let a = self.value();
        if a <= 0.0 {
            return Err(Error::Singular(format!("log of {a:e}")));
        }
        let mut g = vec![a.ln()];
        for j in 1..=self.order() {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            g.push(sign / (j as f64 * a.powi(j as i32)));
        }
        Ok(self.compose(&g))
    }

    fn sin_cos_series(a: f64, order: usize, phase: usize) -> Vec<f64> {
        let (s, c) = a.sin_cos();
        let cycle = [s, c, -s, -c];
        let mut fact = 1.0;
        (0..=order)
            .map(|j| {
                if j > 0 {
                    fact *= j as f64;
                }
                cycle[(j + phase) % 4] / fact
            })
            .collect()
    }

    pub fn sin(&self) -> Taylor {
        self.compose(&Self::sin_cos_series(self.value(), self.order(), 0))
    }

    pub fn cos(&self) -> Taylor {
        self.compose(&Self::sin_cos_series(self.value(), self.order(), 1))
    }

    pub fn tan(&self) -> Result<Taylor> {
        self.sin().div(&self.cos())
    }

    /// `self^p` for real `p`; requires a positive base.
    pub fn powf(&self, p: f64) -> Result<Taylor> {
        let a = self.value();
        if a <= 0.0 {
            return Err(Error::Singular(format!(
                "non-integer power {p} of non-positive base {a:e}"
            )));
        }
        let mut g = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        let ap = a.powf(p);
        for j in 0..=self.order() {
            if j > 0 {
                binom *= (p - (j as f64 - 1.0)) / j as f64;
            }
            g.push(ap * binom / a.powi(j as i32));
        }
        Ok(self.compose(&g))
    }

    pub fn sqrt(&self) -> Result<Taylor> {
        if self.order() == 0 && self.value() == 0.0 {
            return Ok(Taylor::constant(&self.layout, 0.0));
        }
        self.powf(0.5)
    }

    pub fn powi(&self, n: i32) -> Result<Taylor> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut result = Taylor::constant(&self.layout, 1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        Ok(result)
    }

    pub fn atan(&self) -> Taylor {
        let a = self.value();
        let k = self.order();
        // atan'(a + t) = 1 / (1 + a^2 + 2 a t + t^2), integrated term by term
        let p = [1.0 + a * a, 2.0 * a, 1.0];
        let mut q = vec![0.0; k.max(1)];
        for j in 0..q.len() {
            let mut s = if j == 0 { 1.0 } else { 0.0 };
            for i in 1..=j.min(2) {
                s -= p[i] * q[j - i];
            }
            q[j] = s / p[0];
        }
        let mut g = vec![a.atan()];
        for j in 1..=k {
            g.push(q[j - 1] / j as f64);
        }
        self.compose(&g)
    }

    pub fn abs(&self) -> Result<Taylor> {
        let a = self.value();
        if a == 0.0 && self.order() > 0 {
            return Err(Error::Singular("abs is not differentiable at 0".into()));
        }
        Ok(if a < 0.0 { self.scale(-1.0) } else { self.clone() })
    }

    /// Substitutes `x - p = Q y`: the result is the Taylor polynomial of
    /// `y ↦ f(p + Q y)`.
    pub fn compose_linear(&self, q: &DMatrix<f64>) -> Taylor {
        let layout = &self.layout;
        let n = layout.dim;
        let lin: Vec<Taylor> = (0..n)
            .map(|i| {
                let mut t = Taylor::constant(layout, 0.0);
                if layout.order >= 1 {
                    for s in 0..n {
                        let mut e = vec![0u8; n];
                        e[s] = 1;
                        t.c[layout.lookup[&e]] = q[(i, s)];
                    }
                }
                t
            })
            .collect();
        let mut powers: Vec<Taylor> = Vec::with_capacity(layout.len());
        let mut out = Taylor::constant(layout, self.c[0]);
        powers.push(Taylor::constant(layout, 1.0));
        for idx in 1..layout.len() {
            let e = &layout.exps[idx];
            let i = e.iter().position(|&a| a > 0).expect("nonconstant monomial");
            let mut prev = e.clone();
            prev[i] -= 1;
            let p = powers[layout.lookup[&prev]].mul(&lin[i]);
            if self.c[idx] != 0.0 {
                for (o, v) in out.c.iter_mut().zip(&p.c) {
                    *o += self.c[idx] * v;
                }
            }
            powers.push(p);
        }
        out
    }
}

/// All mixed partials of a function at a base point up to a fixed order.
#[derive(Debug, Clone)]
pub struct Jet {
    point: Vec<f64>,
    poly: Taylor,
}

impl Jet {
    pub fn new(point: Vec<f64>, poly: Taylor) -> Jet {
        Jet { point, poly }
    }

    /// Builds a jet from partial derivatives supplied per monomial
    /// (`partials(exps)` returns `∂^α f`).
    pub fn from_partials(point: Vec<f64>, order: usize, partials: impl Fn(&[u8]) -> f64) -> Jet {
        let layout = JetLayout::get(point.len(), order);
        let c = (0..layout.len())
            .map(|i| partials(&layout.exps[i]) / layout.factorial[i])
            .collect();
        Jet {
            point,
            poly: Taylor { layout, c },
        }
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    /// `(exponents, ∂^α f)` for every monomial, in layout order.
    pub fn partials(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        let l = &self.poly.layout;
        (0..l.len()).map(move |i| (l.exps[i].as_slice(), self.poly.c[i] * l.factorial[i]))
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn order(&self) -> usize {
        self.poly.layout.order
    }

    pub fn taylor(&self) -> &Taylor {
        &self.poly
    }

    pub fn value(&self) -> f64 {
        self.poly.value()
    }

    pub fn partial(&self, index: &MultiIndex) -> Result<f64> {
        self.poly.partial(index)
    }

    /// Partial derivative for a tuple of slots in any order.
    pub fn derivative(&self, slots: &[usize]) -> Result<f64> {
        self.poly.derivative(slots)
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.derivative(&[i]).unwrap_or(0.0))
            .collect()
    }

    pub fn hessian(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = self.derivative(&[i, j])?;
            }
        }
        Ok(h)
    }

    /// Jet of `y ↦ f(p + Q y)` at `y = 0`; its slots are frame coordinates.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Jet {
        Jet {
            point: self.point.clone(),
            poly: self.poly.compose_linear(q),
        }
    }

    /// Truncates to a lower order.
    pub fn truncated(&self, order: usize) -> Jet {
        let order = order.min(self.order());
        Jet::from_partials(self.point.clone(), order, |e| {
            let i = self.poly.layout.lookup[e];
            self.poly.c[i] * self.poly.layout.factorial[i]
        })
    }

    /// Sum of squares of all partials of exact order `k`, one term per
    /// increasing multi-index.
    pub fn order_sum_of_squares(&self, k: usize) -> Result<f64> {
        if k > self.order() {
            return Err(Error::OrderExceeded {
                requested: k,
                available: self.order(),
            });
        }
        let l = &self.poly.layout;
        Ok((0..l.len())
            .filter(|&i| l.degree[i] == k)
            .map(|i| (self.poly.c[i] * l.factorial[i]).powi(2))
            .sum())
    }
}

/// Jet arithmetic at a fixed base point.
pub(crate) struct JetAlgebra<'a> {
    pub layout: Arc<JetLayout>,
    pub point: &'a [f64],
}

impl Algebra for JetAlgebra<'_> {
    type T = Taylor;

    fn constant(&self, c: f64) -> Taylor {
        Taylor::constant(&self.layout, c)
    }

    fn var(&self, i: usize) -> Result<Taylor> {
        if i >= self.point.len() {
            return Err(Error::DimensionMismatch {
                expected: i + 1,
                got: self.point.len(),
            });
        }
        Ok(Taylor::variable(&self.layout, i, self.point[i]))
    }

    fn neg(&self, a: &Taylor) -> Taylor {
        a.scale(-1.0)
    }

    fn add(&self, a: &Taylor, b: &Taylor) -> Taylor {
        a.add(b)
    }

    fn sub(&self, a: &Taylor, b: &Taylor) -> Taylor {
        a.sub(b)
    }

    fn mul(&self, a: &Taylor, b: &Taylor) -> Taylor {
        a.mul(b)
    }

    fn div(&self, a: &Taylor, b: &Taylor) -> Result<Taylor> {
        a.div(b)
    }

    fn powi(&self, a: &Taylor, n: i32) -> Result<Taylor> {
        a.powi(n)
    }

    fn powf(&self, a: &Taylor, p: f64) -> Result<Taylor> {
        a.powf(p)
    }

    fn call(&self, f: Func, a: &Taylor) -> Result<Taylor> {
        match f {
            Func::Sin => Ok(a.sin()),
            Func::Cos => Ok(a.cos()),
            Func::Tan => a.tan(),
            Func::Exp => Ok(a.exp()),
            Func::Log => a.ln(),
            Func::Sqrt => a.sqrt(),
            Func::Atan => Ok(a.atan()),
            Func::Abs => a.abs(),
        }
    }
}
