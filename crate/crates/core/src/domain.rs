//! Domain spec files: one `key = value` pair per line.
//!
//! ```text
//! dim = 2
//! rho = "y - sin(x)/x"
//! branch = { guard = "abs(x) < 0.1", rho = "y - (1 - x^2/6)" }
//! region = { min = [-50, -5], max = [50, 5] }
//! ```
//!
//! Optional keys: `name`, `factor` (a positive expression multiplying every
//! branch; the boundary is the zero set of the unscaled field) and
//! `orders` (suggested derivative orders).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::field::{validate_field, ScalarField, ValidationReport};
use crate::geometry::Region;

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    pub guard: String,
    pub rho: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub name: Option<String>,
    pub dim: usize,
    pub rho: String,
    pub branches: Vec<BranchSpec>,
    pub region: Region,
    pub factor: Option<String>,
    pub orders: Vec<usize>,
}

fn spec_err(line: usize, message: impl Into<String>) -> Error {
    Error::SpecFile {
        line,
        message: message.into(),
    }
}

fn as_str(v: &Value, line: usize, key: &str) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| spec_err(line, format!("`{key}` must be a string")))
}

fn as_numbers(v: &Value, line: usize, key: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| spec_err(line, format!("`{key}` must be an array")))?;
    arr.iter()
        .map(|e| match e {
            Value::Integer(i) => Ok(*i as f64),
            Value::Float(f) => Ok(*f),
            _ => Err(spec_err(line, format!("`{key}` entries must be numbers"))),
        })
        .collect()
}

fn as_usize(v: &Value, line: usize, key: &str) -> Result<usize> {
    v.as_integer()
        .filter(|i| *i > 0)
        .map(|i| i as usize)
        .ok_or_else(|| spec_err(line, format!("`{key}` must be a positive integer")))
}

fn check_keys(t: &Table, allowed: &[&str], line: usize, what: &str) -> Result<()> {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(spec_err(line, format!("unknown key `{k}` in {what}")));
        }
    }
    Ok(())
}

fn quote(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

fn number_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", parts.join(", "))
}

impl DomainSpec {
    pub fn parse(text: &str) -> Result<DomainSpec> {
        let mut name = None;
        let mut dim = None;
        let mut rho = None;
        let mut branches = Vec::new();
        let mut region = None;
        let mut factor = None;
        let mut orders = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let table: Table = trimmed.parse().map_err(|e: toml::de::Error| spec_err(line, e.message()))?;
            let (key, value) = table
                .into_iter()
                .next()
                .ok_or_else(|| spec_err(line, "expected `key = value`"))?;
            let once = |seen: bool| {
                if seen {
                    Err(spec_err(line, format!("`{key}` given twice")))
                } else {
                    Ok(())
                }
            };
            match key.as_str() {
                "name" => {
                    once(name.is_some())?;
                    name = Some(as_str(&value, line, "name")?);
                }
                "dim" => {
                    once(dim.is_some())?;
                    dim = Some(as_usize(&value, line, "dim")?);
                }
                "rho" => {
                    once(rho.is_some())?;
                    rho = Some(as_str(&value, line, "rho")?);
                }
                "factor" => {
                    once(factor.is_some())?;
                    factor = Some(as_str(&value, line, "factor")?);
                }
                "branch" => {
                    let t = value
                        .as_table()
                        .ok_or_else(|| spec_err(line, "`branch` must be an inline table"))?;
                    check_keys(t, &["guard", "rho"], line, "branch")?;
                    let get = |k: &str| {
                        t.get(k)
                            .ok_or_else(|| spec_err(line, format!("branch needs `{k}`")))
                            .and_then(|v| as_str(v, line, k))
                    };
                    branches.push(BranchSpec {
                        guard: get("guard")?,
                        rho: get("rho")?,
                    });
                }
                "region" => {
                    once(region.is_some())?;
                    let t = value
                        .as_table()
                        .ok_or_else(|| spec_err(line, "`region` must be an inline table"))?;
                    check_keys(t, &["min", "max"], line, "region")?;
                    let get = |k: &str| {
                        t.get(k)
                            .ok_or_else(|| spec_err(line, format!("region needs `{k}`")))
                            .and_then(|v| as_numbers(v, line, k))
                    };
                    let (min, max) = (get("min")?, get("max")?);
                    region = Some((line, min, max));
                }
                "orders" => {
                    let arr = value
                        .as_array()
                        .ok_or_else(|| spec_err(line, "`orders` must be an array"))?;
                    orders = arr
                        .iter()
                        .map(|v| as_usize(v, line, "orders"))
                        .collect::<Result<_>>()?;
                }
                other => return Err(spec_err(line, format!("unknown key `{other}`"))),
            }
        }
        let dim = dim.ok_or_else(|| spec_err(0, "missing `dim`"))?;
        let rho = rho.ok_or_else(|| spec_err(0, "missing `rho`"))?;
        let (rline, min, max) = region.ok_or_else(|| spec_err(0, "missing `region`"))?;
        if min.len() != dim || max.len() != dim {
            return Err(spec_err(rline, format!("region bounds must have {dim} entries")));
        }
        let region = Region::new(min, max).map_err(|e| spec_err(rline, e.to_string()))?;
        Ok(DomainSpec {
            name,
            dim,
            rho,
            branches,
            region,
            factor,
            orders,
        })
    }

    /// Spec text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(n) = &self.name {
            out += &format!("name = {}\n", quote(n));
        }
        out += &format!("dim = {}\n", self.dim);
        out += &format!("rho = {}\n", quote(&self.rho));
        for b in &self.branches {
            out += &format!("branch = {{ guard = {}, rho = {} }}\n", quote(&b.guard), quote(&b.rho));
        }
        if let Some(f) = &self.factor {
            out += &format!("factor = {}\n", quote(f));
        }
        out += &format!(
            "region = {{ min = {}, max = {} }}\n",
            number_list(&self.region.min),
            number_list(&self.region.max)
        );
        if !self.orders.is_empty() {
            let o: Vec<String> = self.orders.iter().map(usize::to_string).collect();
            out += &format!("orders = [{}]\n", o.join(", "));
        }
        out
    }

    fn build(&self, factor: Option<&str>) -> Result<ScalarField> {
        let wrap = |e: &str| match factor {
            Some(f) => format!("({e}) * ({f})"),
            None => e.to_string(),
        };
        let bodies: Vec<String> = self.branches.iter().map(|b| wrap(&b.rho)).collect();
        let guarded: Vec<(&str, &str)> = self
            .branches
            .iter()
            .zip(&bodies)
            .map(|(b, e)| (b.guard.as_str(), e.as_str()))
            .collect();
        ScalarField::parse_piecewise(self.dim, &guarded, &wrap(&self.rho))
    }

    /// The defining function `ρ`, including the factor.
    pub fn defining_field(&self) -> Result<ScalarField> {
        self.build(self.factor.as_deref())
    }

    /// The field whose zero set is the boundary.
    pub fn geometry_field(&self) -> Result<ScalarField> {
        self.build(None)
    }

    /// Cross-branch consistency of the defining function near every guard
    /// switch found along axis-parallel probe lines.
    pub fn validate(&self, tol: f64, seed: u64) -> Result<ValidationReport> {
        let f = self.defining_field()?;
        let probes = switch_points(&f, &self.region, seed);
        let report = validate_field(&f, &probes, tol);
        if !report.passed {
            return Err(Error::Validation {
                disagreement: report.max_disagreement,
                tol,
            });
        }
        Ok(report)
    }
}

const PROBE_LINES: usize = 16;
const PROBE_STEPS: usize = 512;

/// Points where the active branch changes, located by bisection along
/// random axis-parallel lines through `region`.
pub fn switch_points(f: &ScalarField, region: &Region, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if f.branches().len() < 2 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = region.dim();
    for axis in 0..n {
        for _ in 0..PROBE_LINES {
            let base: Vec<f64> = (0..n)
                .map(|i| region.min[i] + rng.gen::<f64>() * region.extent(i))
                .collect();
            let at = |t: f64| {
                let mut p = base.clone();
                p[axis] = t;
                p
            };
            let branch = |t: f64| f.active_branch(&at(t)).ok();
            let step = region.extent(axis) / PROBE_STEPS as f64;
            let mut prev = branch(region.min[axis]);
            for k in 1..=PROBE_STEPS {
                let t1 = region.min[axis] + k as f64 * step;
                let cur = branch(t1);
                if cur != prev {
                    let (mut lo, mut hi) = (t1 - step, t1);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if branch(mid) == prev {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    out.push(at(0.5 * (lo + hi)));
                }
                prev = cur;
            }
        }
    }
    out
}

/// Lowercase hex SHA-256 of the spec text.
pub fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA1: &str = r#"
dim = 2
rho = "y - sin(x)/x"
branch = { guard = "abs(x) < 0.1", rho = "y - (1 - x^2/6 + x^4/120 - x^6/5040 + x^8/362880 - x^10/39916800 + x^12/6227020800)" }
region = { min = [-50, -5], max = [50, 5] }
"#;

    #[test]
    fn parses_example() {
        let s = DomainSpec::parse(OMEGA1).unwrap();
        assert_eq!(s.dim, 2);
        assert_eq!(s.branches.len(), 1);
        assert_eq!(s.region.min, vec![-50.0, -5.0]);
        assert_eq!(DomainSpec::parse(&s.to_text()).unwrap(), s);
        let r = s.validate(1e-10, 1).unwrap();
        assert!(r.worst_probe.is_some());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            DomainSpec::parse("dim = 2\nfoo = 1\n"),
            Err(Error::SpecFile { line: 2, .. })
        ));
        assert!(DomainSpec::parse("dim = 2\nrho = \"y\"\n").is_err());
        let bad = "dim = 2\nrho = \"y - \"\nregion = { min = [0, 0], max = [1, 1] }\n";
        let s = DomainSpec::parse(bad).unwrap();
        assert!(matches!(s.defining_field(), Err(Error::Syntax { .. })));
    }

    #[test]
    fn inconsistent_branches_fail_validation() {
        let text = "dim = 1\nrho = \"x\"\nbranch = { guard = \"x < 0.5\", rho = \"x + 1\" }\nregion = { min = [0], max = [1] }\n";
        let s = DomainSpec::parse(text).unwrap();
        assert!(matches!(s.validate(1e-10, 3), Err(Error::Validation { .. })));
    }

    #[test]
    fn digest_is_hex() {
        assert_eq!(
            digest("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
