//! Named, swappable strategies: signed-distance jet providers and cutoff
//! profiles for partitions of unity.

use crate::curvature::hessian_offset;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{distance_jet_numeric, NUMERIC_JET_MAX_ORDER};
use crate::jet::Jet;

/// Ordered name → strategy table.
pub struct StrategyRegistry<T: ?Sized> {
    entries: Vec<(String, Box<T>)>,
}

impl<T: ?Sized> Default for StrategyRegistry<T> {
    fn default() -> Self {
        StrategyRegistry { entries: Vec::new() }
    }
}

impl<T: ?Sized> StrategyRegistry<T> {
    /// Adds or replaces `name`.
    pub fn register(&mut self, name: &str, strategy: Box<T>) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = strategy,
            None => self.entries.push((name.to_string(), strategy)),
        }
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_ref())
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown strategy '{name}' (available: {})",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Source of jets of the signed distance `δ̃`.
pub trait DistanceJetProvider: Send + Sync {
    fn max_order(&self) -> usize;
    fn jet(&self, f: &ScalarField, x: &[f64], order: usize, step: Option<f64>, tol: f64) -> Result<Jet>;
}

/// Richardson-extrapolated finite differences of `δ̃`.
pub struct NumericDistance;

impl DistanceJetProvider for NumericDistance {
    fn max_order(&self) -> usize {
        NUMERIC_JET_MAX_ORDER
    }

    fn jet(&self, f: &ScalarField, x: &[f64], order: usize, step: Option<f64>, tol: f64) -> Result<Jet> {
        distance_jet_numeric(f, x, order, step, None, tol)
    }
}

/// Order ≤ 2 jets from the foot point: value, normal and the offset
/// Hessian `H(I + δ̃H)⁻¹`.
pub struct OffsetDistance;

impl DistanceJetProvider for OffsetDistance {
    fn max_order(&self) -> usize {
        2
    }

    fn jet(&self, f: &ScalarField, x: &[f64], order: usize, _step: Option<f64>, tol: f64) -> Result<Jet> {
        if order > 2 {
            return Err(Error::OrderExceeded {
                requested: order,
                available: 2,
            });
        }
        let h = hessian_offset(f, x, tol)?;
        Ok(Jet::from_partials(x.to_vec(), order, |e| {
            let idx: Vec<usize> = e
                .iter()
                .enumerate()
                .flat_map(|(i, &a)| std::iter::repeat_n(i, a as usize))
                .collect();
            match idx.len() {
                0 => h.signed,
                1 => h.normal[idx[0]],
                _ => h.hessian[(idx[0], idx[1])],
            }
        }))
    }
}

pub fn distance_providers() -> StrategyRegistry<dyn DistanceJetProvider> {
    let mut r: StrategyRegistry<dyn DistanceJetProvider> = StrategyRegistry::default();
    r.register("numeric", Box::new(NumericDistance));
    r.register("offset", Box::new(OffsetDistance));
    r
}

/// Radial cutoff `χ(|x|/r)`: 1 on `[0, ½]`, 0 on `[1, ∞)`, values in `[0, 1]`.
pub trait CutoffProfile: Send + Sync {
    fn value(&self, s: f64) -> f64;
}

fn flat_exp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// `C^∞` smooth step `f(t)/(f(t) + f(1 − t))`, `f(t) = e^{−1/t}`.
pub fn smooth_step(t: f64) -> f64 {
    let (a, b) = (flat_exp(t), flat_exp(1.0 - t));
    a / (a + b)
}

/// `1 − ψ(2s − 1)` with the smooth step `ψ`: flat to all orders at both ends.
pub struct SmoothStepCutoff;

impl CutoffProfile for SmoothStepCutoff {
    fn value(&self, s: f64) -> f64 {
        1.0 - smooth_step(2.0 * s - 1.0)
    }
}

/// `exp(1 − 1/(1 − u²))` in `u = 2s − 1`; only `C¹` where it meets the
/// plateau at `s = ½`.
pub struct BumpCutoff;

impl CutoffProfile for BumpCutoff {
    fn value(&self, s: f64) -> f64 {
        let u = 2.0 * s - 1.0;
        if u <= 0.0 {
            1.0
        } else if u >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - u * u)).exp()
        }
    }
}

pub fn cutoff_profiles() -> StrategyRegistry<dyn CutoffProfile> {
    let mut r: StrategyRegistry<dyn CutoffProfile> = StrategyRegistry::default();
    r.register("smooth-step", Box::new(SmoothStepCutoff));
    r.register("bump", Box::new(BumpCutoff));
    r
}
