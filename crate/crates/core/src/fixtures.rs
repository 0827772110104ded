//! Bundled example systems and parametric builders for the families that
//! have no single finite document.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{self, IntervalSystem, System};
use crate::rational::{self, Rational};
use crate::subshift::SubshiftSystem;

pub const PRDM: &str = include_str!("../fixtures/prdm.json");
pub const DMSE: &str = include_str!("../fixtures/dmse.json");
pub const GNCE: &str = include_str!("../fixtures/gnce.json");
pub const IEEX: &str = include_str!("../fixtures/ieex.json");
pub const CHAIN: &str = include_str!("../fixtures/chain.json");
pub const CHAIN2: &str = include_str!("../fixtures/chain2.json");
pub const STRADDLE: &str = include_str!("../fixtures/straddle.json");

/// Documents by name, as accepted by the CLI's `fixture:` prefix.
pub fn document(name: &str) -> Option<&'static str> {
    Some(match name {
        "prdm" => PRDM,
        "dmse" => DMSE,
        "gnce" => GNCE,
        "ieex" => IEEX,
        "chain" => CHAIN,
        "chain2" => CHAIN2,
        "straddle" => STRADDLE,
        _ => return None,
    })
}

fn interval(doc: &str) -> IntervalSystem {
    match model::load(doc).expect("bundled fixture validates") {
        System::Interval(s) => s,
        System::Subshift(_) => unreachable!("interval fixture"),
    }
}

fn subshift(doc: &str) -> SubshiftSystem {
    match model::load(doc).expect("bundled fixture validates") {
        System::Subshift(s) => s,
        System::Interval(_) => unreachable!("subshift fixture"),
    }
}

pub fn prdm() -> IntervalSystem {
    interval(PRDM)
}

pub fn dmse() -> IntervalSystem {
    interval(DMSE)
}

pub fn gnce() -> IntervalSystem {
    interval(GNCE)
}

pub fn ieex() -> IntervalSystem {
    interval(IEEX)
}

/// Two-state chain with rows `(3/10, 7/10)` and `(3/5, 2/5)`.
pub fn chain() -> SubshiftSystem {
    subshift(CHAIN)
}

/// A memory-2 g-function on the golden-mean graph.
pub fn chain2() -> SubshiftSystem {
    subshift(CHAIN2)
}

fn q(x: &Rational) -> Value {
    Value::String(x.to_string())
}

fn affine(slope: Rational, intercept: Rational) -> Value {
    json!({"slope": q(&slope), "intercept": q(&intercept)})
}

/// The halving maps `w_0 = x/2`, `w_1 = 1/2 + x/2`.
fn w(side: u8) -> Value {
    let half = rational::frac(1, 2);
    if side == 0 {
        affine(half, rational::int(0))
    } else {
        affine(half.clone(), half)
    }
}

/// Halving maps on `[0,1]` with `p_0` equal to `a_i` on `[i/2^n, (i+1)/2^n)`
/// and to `a_{2^n-1}` at 1; atoms are these cells (ids `0..2^n`) plus `{1}`
/// (id `2^n`). Edges `"i"` follow `w_0` and `"-i"` follow `w_1`.
pub fn mcae_document(n: u32, a: &[Rational]) -> Result<String> {
    let cells = 1u64 << n;
    if a.len() as u64 != cells {
        return Err(Error::Malformed(format!("mcae needs {cells} values a_i, got {}", a.len())));
    }
    let zero = rational::int(0);
    let one = rational::int(1);
    let width = rational::pow2(-(n as i64));
    let mut atoms = Vec::new();
    let mut edges = Vec::new();
    for i in 0..=cells {
        let (ai, atom) = if i < cells {
            let lo = &width * rational::int(i as i64);
            let hi = &lo + &width;
            let atom = json!({"id": i, "kind": "interval", "lo": q(&lo), "hi": q(&hi), "lo_closed": true});
            (a[i as usize].clone(), atom)
        } else {
            (a[cells as usize - 1].clone(), json!({"id": i, "kind": "point", "at": "1"}))
        };
        if ai < zero || ai > one {
            return Err(Error::Malformed(format!("a_{i} = {ai} is outside [0, 1]")));
        }
        atoms.push(atom);
        if ai > zero {
            edges.push(json!({"id": i.to_string(), "from": i, "map": w(0), "prob": affine(zero.clone(), ai.clone())}));
        }
        if ai < one {
            edges.push(json!({"id": format!("-{i}"), "from": i, "map": w(1), "prob": affine(zero.clone(), &one - &ai)}));
        }
    }
    Ok(json!({"space": {"lo": "0", "hi": "1"}, "atoms": atoms, "edges": edges}).to_string())
}

pub fn mcae(n: u32, a: &[Rational]) -> Result<IntervalSystem> {
    match model::load(&mcae_document(n, a)?)? {
        System::Interval(s) => Ok(s),
        System::Subshift(_) => unreachable!(),
    }
}

/// The halving system on the countable partition `{0}`, `{1}`,
/// `(1-2^{-(i-2)}, 1-2^{-(i-1)}]` for `i = 2..=t`, truncated by one final open
/// atom `(1-2^{-(t-1)}, 1)`. Atom ids: `{0}` is 1, `{1}` is 0, cells keep `i`,
/// the final atom is `t+1`.
pub fn dyadic_prdm_document(t: u32) -> Result<String> {
    if t < 2 {
        return Err(Error::Malformed("dyadic partition needs t >= 2".into()));
    }
    let zero = rational::int(0);
    let one = rational::int(1);
    let x = affine(one.clone(), zero.clone());
    let one_minus_x = affine(rational::int(-1), one.clone());
    let mut atoms = vec![
        json!({"id": 1, "kind": "point", "at": "0"}),
        json!({"id": 0, "kind": "point", "at": "1"}),
    ];
    let mut edges = vec![
        json!({"id": "w1@1", "from": 1, "map": w(1), "prob": one_minus_x.clone()}),
        json!({"id": "w0@0", "from": 0, "map": w(0), "prob": x.clone()}),
    ];
    for i in 2..=t + 1 {
        let lo = &one - rational::pow2(-(i as i64 - 2));
        let atom = if i <= t {
            let hi = &one - rational::pow2(-(i as i64 - 1));
            json!({"id": i, "kind": "interval", "lo": q(&lo), "hi": q(&hi), "hi_closed": true})
        } else {
            json!({"id": i, "kind": "interval", "lo": q(&lo), "hi": "1"})
        };
        atoms.push(atom);
        edges.push(json!({"id": format!("w0@{i}"), "from": i, "map": w(0), "prob": x.clone()}));
        edges.push(json!({"id": format!("w1@{i}"), "from": i, "map": w(1), "prob": one_minus_x.clone()}));
    }
    Ok(json!({"space": {"lo": "0", "hi": "1"}, "atoms": atoms, "edges": edges}).to_string())
}

pub fn dyadic_prdm(t: u32) -> Result<IntervalSystem> {
    match model::load(&dyadic_prdm_document(t)?)? {
        System::Interval(s) => Ok(s),
        System::Subshift(_) => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixtures_validate() {
        for name in ["prdm", "dmse", "gnce", "ieex", "chain", "chain2"] {
            model::load(document(name).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        let err = model::load(STRADDLE).unwrap_err();
        assert!(matches!(err, Error::Straddle { .. }), "{err}");
    }

    #[test]
    fn mcae_shape() {
        let s = mcae(1, &[rational::frac(1, 3), rational::frac(2, 3)]).unwrap();
        assert_eq!(s.atoms.len(), 3);
        assert_eq!(s.edges.len(), 6);
        let s = mcae(1, &[rational::int(0), rational::int(1)]).unwrap();
        assert_eq!(s.edges.len(), 3);
    }

    #[test]
    fn dyadic_shape() {
        let s = dyadic_prdm(10).unwrap();
        assert_eq!(s.atoms.len(), 12);
        assert_eq!(s.edges.len(), 2 + 2 * 10);
    }
}
