//! Truncated countable edge families.
//!
//! The generator formulas are transcendental in general (logs, square
//! roots), so family members are evaluated in `f64`. Sums over the family are
//! accumulated in `f64` and enter exact certificates as the dyadic rational
//! of the accumulated float, annotated with the truncation error.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::spec::FamilySpec;

/// Largest truncation index we will instantiate.
pub const MAX_TRUNCATION: u64 = 20_000_000;

#[derive(Clone, Debug)]
pub struct TruncatedFamily {
    pub spec: FamilySpec,
    /// Atom indices (not ids).
    pub source: usize,
    pub target: usize,
    pub n0: u64,
    /// Truncation index `M`: members are `n0..=M`.
    pub m: u64,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub probs: Vec<f64>,
    /// Upper bound on the dropped mass `Σ_{n>M} p_n`.
    pub epsilon_tail: f64,
    /// Upper bound on `Σ_{n>M} p_n·|slope_n|`, if the family declares one.
    pub tail_contraction: Option<f64>,
    /// `Σ_{n≤M} p_n`, pairwise-summed.
    pub kept_mass: f64,
}

impl TruncatedFamily {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn member_id(&self, k: usize) -> String {
        format!("{}{}", self.spec.id_prefix, self.n0 + k as u64)
    }

    /// Parses a member id back to its position, if it belongs to the family.
    pub fn member_index(&self, id: &str) -> Option<usize> {
        let n: u64 = id.strip_prefix(&self.spec.id_prefix)?.parse().ok()?;
        (n >= self.n0 && n <= self.m).then(|| (n - self.n0) as usize)
    }

    /// `Σ f(k)` over members with pairwise summation (stable for 10⁷ terms).
    pub fn sum(&self, f: impl Fn(usize) -> f64) -> f64 {
        pairwise(0, self.len(), &f)
    }

    /// Largest `|slope_n|` among kept members.
    pub fn max_slope(&self) -> f64 {
        self.slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}

fn pairwise(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
    if hi - lo <= 64 {
        return (lo..hi).map(f).sum();
    }
    let mid = lo + (hi - lo) / 2;
    pairwise(lo, mid, f) + pairwise(mid, hi, f)
}

struct Compiled {
    constants: HashMap<String, f64>,
    slope: Expr,
    intercept: Expr,
    prob: Expr,
    tail_mass: Expr,
    tail_contraction: Option<Expr>,
}

impl Compiled {
    fn new(spec: &FamilySpec) -> Result<Self> {
        let mut constants = HashMap::new();
        for (name, text) in &spec.constants {
            let value = Expr::parse(text)?.eval(&|v| constants.get(v).copied())?;
            constants.insert(name.clone(), value);
        }
        Ok(Compiled {
            slope: Expr::parse(&spec.map.slope)?,
            intercept: Expr::parse(&spec.map.intercept)?,
            prob: Expr::parse(&spec.prob)?,
            tail_mass: Expr::parse(&spec.tail_mass_bound)?,
            tail_contraction: spec
                .tail_contraction_bound
                .as_deref()
                .map(Expr::parse)
                .transpose()?,
            constants,
        })
    }

    fn at(&self, expr: &Expr, var: &str, value: f64) -> Result<f64> {
        let out = expr.eval(&|v| {
            if v == var {
                Some(value)
            } else {
                self.constants.get(v).copied()
            }
        })?;
        if !out.is_finite() {
            return Err(Error::Expression {
                expr: expr.to_string(),
                reason: format!("non-finite value at {var} = {value}"),
            });
        }
        Ok(out)
    }
}

/// Evaluates the generator for `n0..=M`. `M` is `truncate_at` if given,
/// otherwise the smallest index whose tail bound is at most `epsilon_tail`.
pub fn instantiate(spec: &FamilySpec, source: usize, target: usize) -> Result<TruncatedFamily> {
    let c = Compiled::new(spec)?;
    let bad = |reason: String| Error::Malformed(format!("tail family: {reason}"));
    let m = match (spec.truncate_at, spec.epsilon_tail) {
        (Some(m), _) => m,
        (None, Some(eps)) => smallest_truncation(&c, spec.n0, eps)?,
        (None, None) => return Err(bad("needs truncate_at or epsilon_tail".into())),
    };
    if m < spec.n0 {
        return Err(bad(format!("truncation index {m} below n0 = {}", spec.n0)));
    }
    if m > MAX_TRUNCATION {
        return Err(bad(format!("truncation index {m} exceeds {MAX_TRUNCATION}")));
    }
    let count = (m - spec.n0 + 1) as usize;
    let mut slopes = Vec::with_capacity(count);
    let mut intercepts = Vec::with_capacity(count);
    let mut probs = Vec::with_capacity(count);
    for n in spec.n0..=m {
        let x = n as f64;
        let p = c.at(&c.prob, "n", x)?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(bad(format!("p_{n} = {p} is not in (0, 1]")));
        }
        slopes.push(c.at(&c.slope, "n", x)?);
        intercepts.push(c.at(&c.intercept, "n", x)?);
        probs.push(p);
    }
    let epsilon_tail = c.at(&c.tail_mass, "M", m as f64)?;
    if epsilon_tail < 0.0 {
        return Err(bad(format!("tail mass bound is negative at M = {m}")));
    }
    // The bound must decrease; spot-check it against a coarser truncation.
    let coarser = c.at(&c.tail_mass, "M", (m / 2).max(spec.n0) as f64)?;
    if coarser < epsilon_tail {
        return Err(bad("tail mass bound is not monotone".into()));
    }
    let tail_contraction = c
        .tail_contraction
        .as_ref()
        .map(|e| c.at(e, "M", m as f64))
        .transpose()?;
    let mut fam = TruncatedFamily {
        spec: spec.clone(),
        source,
        target,
        n0: spec.n0,
        m,
        slopes,
        intercepts,
        probs,
        epsilon_tail,
        tail_contraction,
        kept_mass: 0.0,
    };
    fam.kept_mass = fam.sum(|k| fam.probs[k]);
    Ok(fam)
}

fn smallest_truncation(c: &Compiled, n0: u64, eps: f64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::Malformed("tail family: epsilon_tail must be positive".into()));
    }
    let tail = |m: u64| c.at(&c.tail_mass, "M", m as f64);
    let mut hi = n0.max(1);
    while tail(hi)? > eps {
        hi = hi.saturating_mul(2);
        if hi > MAX_TRUNCATION {
            return Err(Error::Malformed(format!(
                "tail family: epsilon_tail {eps} needs truncation beyond {MAX_TRUNCATION}"
            )));
        }
    }
    let mut lo = n0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if tail(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::FamilyMapSpec;

    fn geometric(truncate_at: Option<u64>, epsilon_tail: Option<f64>) -> FamilySpec {
        FamilySpec {
            id_prefix: "g".into(),
            from: 1,
            to: 1,
            n0: 1,
            truncate_at,
            epsilon_tail,
            constants: Default::default(),
            map: FamilyMapSpec {
                slope: "1/2".into(),
                intercept: "1/n".into(),
            },
            prob: "2^(-n)".into(),
            tail_mass_bound: "2^(-M)".into(),
            tail_contraction_bound: Some("2^(-M-1)".into()),
        }
    }

    #[test]
    fn truncation_by_index() {
        let fam = instantiate(&geometric(Some(10), None), 0, 0).unwrap();
        assert_eq!(fam.len(), 10);
        assert!((fam.kept_mass + fam.epsilon_tail - 1.0).abs() < 1e-15);
        assert_eq!(fam.member_id(0), "g1");
        assert_eq!(fam.member_index("g10"), Some(9));
        assert_eq!(fam.member_index("g11"), None);
    }

    #[test]
    fn truncation_by_tail_mass() {
        let fam = instantiate(&geometric(None, Some(1e-3)), 0, 0).unwrap();
        assert_eq!(fam.m, 10); // 2^-10 < 1e-3 < 2^-9
        assert!(fam.epsilon_tail <= 1e-3);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let mut spec = geometric(Some(5), None);
        spec.prob = "n - 3".into();
        assert!(instantiate(&spec, 0, 0).is_err());
    }
}
