//! Piecewise scalar fields and their jets.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{eval, parse_expr, parse_guard, Expr, F64Algebra, Guard};
use crate::frame::AdaptedFrame;
use crate::jet::{Jet, JetAlgebra, JetLayout, MultiIndex, DEFAULT_MAX_ORDER};

/// One piece of a field: the expression is used where the guard holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub guard: Option<Guard>,
    pub expr: Expr,
}

/// A real function on R^n given by guarded expressions.
///
/// Evaluation uses the first branch whose guard holds; a branch without a
/// guard always matches.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    dim: usize,
    branches: Vec<Branch>,
    max_jet_order: usize,
}

impl ScalarField {
    pub fn new(dim: usize, branches: Vec<Branch>) -> Result<ScalarField> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if branches.is_empty() {
            return Err(Error::InvalidParameter("a field needs at least one branch".into()));
        }
        Ok(ScalarField {
            dim,
            branches,
            max_jet_order: DEFAULT_MAX_ORDER,
        })
    }

    /// Single-branch field from expression text.
    pub fn parse(text: &str, dim: usize) -> Result<ScalarField> {
        let expr = parse_expr(text, dim)?;
        ScalarField::new(dim, vec![Branch { guard: None, expr }])
    }

    /// Field with guarded branches tried in order before the fallback.
    pub fn parse_piecewise(dim: usize, guarded: &[(&str, &str)], fallback: &str) -> Result<ScalarField> {
        let mut branches = Vec::with_capacity(guarded.len() + 1);
        for (g, e) in guarded {
            branches.push(Branch {
                guard: Some(parse_guard(g, dim)?),
                expr: parse_expr(e, dim)?,
            });
        }
        branches.push(Branch {
            guard: None,
            expr: parse_expr(fallback, dim)?,
        });
        ScalarField::new(dim, branches)
    }

    pub fn with_max_jet_order(mut self, order: usize) -> ScalarField {
        self.max_jet_order = order.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn max_jet_order(&self) -> usize {
        self.max_jet_order
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn active(&self, x: &[f64]) -> Result<&Branch> {
        self.check_point(x)?;
        for b in &self.branches {
            match &b.guard {
                None => return Ok(b),
                Some(g) if g.holds(x)? => return Ok(b),
                Some(_) => {}
            }
        }
        Err(Error::NoBranch(x.to_vec()))
    }

    /// Position of the branch used at `x`.
    pub fn active_branch(&self, x: &[f64]) -> Result<usize> {
        let b = self.active(x)?;
        Ok(self.branches.iter().position(|c| std::ptr::eq(c, b)).unwrap_or(0))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let b = self.active(x)?;
        let v = eval(&b.expr, &F64Algebra { point: x })?;
        if !v.is_finite() {
            return Err(Error::Singular(format!("non-finite value at {x:?}")));
        }
        Ok(v)
    }

    /// All partials up to order `k` of the active branch at `x`.
    pub fn eval_jet(&self, x: &[f64], k: usize) -> Result<Jet> {
        if k > self.max_jet_order {
            return Err(Error::OrderExceeded {
                requested: k,
                available: self.max_jet_order,
            });
        }
        let b = self.active(x)?;
        let alg = JetAlgebra {
            layout: JetLayout::get(self.dim, k),
            point: x,
        };
        let t = eval(&b.expr, &alg)?;
        if t.coeffs().iter().any(|c| !c.is_finite()) {
            return Err(Error::Singular(format!("non-finite jet at {x:?}")));
        }
        Ok(Jet::new(x.to_vec(), t))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_jet(x, 1)?.gradient())
    }
}

/// Outcome of a cross-branch consistency check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub max_disagreement: f64,
    pub worst_probe: Option<Vec<f64>>,
    pub tol: f64,
    pub passed: bool,
}

/// Compares the branches that are active at or immediately around each probe.
pub fn validate_field(f: &ScalarField, probes: &[Vec<f64>], tol: f64) -> ValidationReport {
    let mut worst = 0.0f64;
    let mut worst_probe = None;
    if f.branches.len() > 1 {
        for x in probes {
            if x.len() != f.dim {
                continue;
            }
            let eta = 1e-7 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut near = Vec::new();
            let mut note = |p: &[f64]| {
                if let Ok(b) = f.active(p) {
                    let i = f.branches.iter().position(|c| std::ptr::eq(c, b)).unwrap_or(0);
                    if !near.contains(&i) {
                        near.push(i);
                    }
                }
            };
            note(x);
            for d in 0..f.dim {
                for s in [-1.0, 1.0] {
                    let mut p = x.clone();
                    p[d] += s * eta;
                    note(&p);
                }
            }
            let values: Vec<f64> = near
                .iter()
                .filter_map(|&i| eval(&f.branches[i].expr, &F64Algebra { point: x }).ok())
                .filter(|v| v.is_finite())
                .collect();
            for a in &values {
                for b in &values {
                    let d = (a - b).abs();
                    if d > worst {
                        worst = d;
                        worst_probe = Some(x.clone());
                    }
                }
            }
        }
    }
    ValidationReport {
        max_disagreement: worst,
        worst_probe,
        tol,
        passed: worst <= tol,
    }
}

/// `∂^{|I|+j} f / ∂y_I ∂y_n^j` in the coordinates `y = Qᵀ(x − p)` of the frame.
pub fn frame_derivative(jet: &Jet, frame: &AdaptedFrame, tangential: &MultiIndex, j: usize) -> Result<f64> {
    let n = jet.dim();
    if tangential.entries().iter().any(|&s| s + 1 >= n) {
        return Err(Error::InvalidParameter(format!(
            "multi-index {tangential} is not tangential in dimension {n}"
        )));
    }
    let order = tangential.len() + j;
    if order > jet.order() {
        return Err(Error::OrderExceeded {
            requested: order,
            available: jet.order(),
        });
    }
    jet.truncated(order)
        .rotated(frame.matrix())
        .partial(&tangential.with_repeated(n - 1, j))
}
