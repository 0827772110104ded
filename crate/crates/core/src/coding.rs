//! Finite and eventually periodic edge words, the coding map, cylinder
//! probabilities and the Hölder check.
//!
//! A word is stored oldest symbol first: `[σ_{-m}, …, σ_{-1}, σ_0]`, so the
//! backward composition `w_{σ_0}∘…∘w_{σ_{-m}}` applies the maps in storage
//! order. Textual words (`"b,c"`) use the same left-to-right time order.

use num_traits::{One, Signed, Zero};

use crate::analysis::certificates::{interval_contraction, interval_coupling};
use crate::error::{Error, Result};
use crate::model::{Affine, IntervalSystem};
use crate::rational::{self, Rational};
use crate::simulation::rng::RngStream;

/// Longest common recent block inspected by [`word_metric`].
pub const METRIC_CAP: usize = 64;

/// `d′ = 2^{-exponent}`; `upper_bound` marks values where the comparison
/// stopped without seeing a disagreement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordMetric {
    pub exponent: u32,
    pub upper_bound: bool,
}

impl WordMetric {
    pub fn value(&self) -> Rational {
        rational::pow2(-(self.exponent as i64))
    }

    pub fn value_f64(&self) -> f64 {
        (-(self.exponent as f64)).exp2()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SymbolWord {
    /// Edge indices, oldest first.
    pub symbols: Vec<usize>,
}

impl SymbolWord {
    pub fn new(symbols: Vec<usize>) -> Self {
        SymbolWord { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn from_ids<S: AsRef<str>>(system: &IntervalSystem, ids: &[S]) -> Result<Self> {
        ids.iter()
            .map(|id| {
                let id = id.as_ref().trim();
                system
                    .edge_index(id)
                    .ok_or_else(|| Error::UnknownEdge(id.to_string()))
            })
            .collect::<Result<Vec<_>>>()
            .map(SymbolWord::new)
    }

    /// Comma-separated edge ids in time order; the empty string is the empty word.
    pub fn parse(system: &IntervalSystem, text: &str) -> Result<Self> {
        let ids: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        Self::from_ids(system, &ids)
    }

    pub fn ids(&self, system: &IntervalSystem) -> Vec<String> {
        self.symbols.iter().map(|&e| system.edges[e].id.clone()).collect()
    }

    /// First `k` with `t(symbols[k]) ≠ i(symbols[k+1])`.
    pub fn broken_junction(&self, system: &IntervalSystem) -> Option<usize> {
        self.symbols
            .windows(2)
            .position(|w| system.edges[w[0]].target != system.edges[w[1]].source)
    }

    pub fn is_path(&self, system: &IntervalSystem) -> bool {
        self.broken_junction(system).is_none()
    }

    pub fn check_path(&self, system: &IntervalSystem) -> Result<()> {
        match self.broken_junction(system) {
            None => Ok(()),
            Some(k) => Err(junction_error(system, k, self.symbols[k], self.symbols[k + 1])),
        }
    }

    /// `w_{last}∘…∘w_{first}`.
    pub fn composite(&self, system: &IntervalSystem) -> Affine {
        self.symbols
            .iter()
            .fold(Affine::identity(), |acc, &e| system.edges[e].map.compose(&acc))
    }

    pub fn concat(&self, newer: &SymbolWord) -> SymbolWord {
        let mut symbols = self.symbols.clone();
        symbols.extend_from_slice(&newer.symbols);
        SymbolWord { symbols }
    }
}

fn junction_error(system: &IntervalSystem, junction: usize, from: usize, to: usize) -> Error {
    Error::InvalidPath {
        junction,
        from: system.edges[from].id.clone(),
        to: system.edges[to].id.clone(),
    }
}

/// `σ = (…, period, period, prefix)`: the period repeats forever into the past.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EventuallyPeriodicWord {
    pub prefix: SymbolWord,
    pub period: SymbolWord,
}

impl EventuallyPeriodicWord {
    /// Checks the period's internal junctions, its wrap-around and the
    /// junction into the prefix.
    pub fn new(system: &IntervalSystem, prefix: SymbolWord, period: SymbolWord) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::EmptyWord);
        }
        period.check_path(system)?;
        let (first, last) = (period.symbols[0], *period.symbols.last().unwrap());
        if system.edges[last].target != system.edges[first].source {
            return Err(junction_error(system, period.len() - 1, last, first));
        }
        if let Some(&p0) = prefix.symbols.first() {
            if system.edges[last].target != system.edges[p0].source {
                return Err(junction_error(system, period.len() - 1, last, p0));
            }
        }
        prefix.check_path(system)?;
        Ok(EventuallyPeriodicWord { prefix, period })
    }

    /// `σ_{-k}`, with `k = 0` the newest symbol.
    pub fn symbol_back(&self, k: usize) -> usize {
        let n = self.prefix.len();
        if k < n {
            self.prefix.symbols[n - 1 - k]
        } else {
            let p = self.period.len();
            self.period.symbols[p - 1 - (k - n) % p]
        }
    }

    /// The newest `n` symbols, oldest first.
    pub fn unroll(&self, n: usize) -> SymbolWord {
        SymbolWord::new((0..n).rev().map(|k| self.symbol_back(k)).collect())
    }

    /// `σ·e`: one more symbol at time 1, shifted back to time 0.
    pub fn push(&self, system: &IntervalSystem, e: usize) -> Result<Self> {
        let newest = self.symbol_back(0);
        if system.edges[newest].target != system.edges[e].source {
            return Err(junction_error(system, self.prefix.len(), newest, e));
        }
        let mut prefix = self.prefix.clone();
        prefix.symbols.push(e);
        Ok(EventuallyPeriodicWord {
            prefix,
            period: self.period.clone(),
        })
    }

    pub fn ids(&self, system: &IntervalSystem) -> (Vec<String>, Vec<String>) {
        (self.prefix.ids(system), self.period.ids(system))
    }
}

/// `X_m = w_{σ_0}∘…∘w_{σ_m}(x_{i(σ_m)})` for a finite path.
pub fn eval_x(system: &IntervalSystem, word: &SymbolWord) -> Result<Rational> {
    let first = *word.symbols.first().ok_or(Error::EmptyWord)?;
    word.check_path(system)?;
    let x0 = &system.anchors[system.edges[first].source];
    Ok(word.composite(system).eval(x0))
}

/// `F(σ)`: the fixed point of the period composite, pushed through the prefix.
pub fn coding_map_exact(system: &IntervalSystem, word: &EventuallyPeriodicWord) -> Result<Rational> {
    let cycle = word.period.composite(system);
    if cycle.slope.abs() >= Rational::one() {
        return Err(Error::PeriodNotContracting);
    }
    let fixed = cycle.fixed_point().expect("slope below 1 in modulus");
    Ok(word.prefix.composite(system).eval(&fixed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedCoding {
    pub estimate: Rational,
    /// Valid only on the good sets of the Hölder estimate; see `conditional`.
    pub error_bound: f64,
    pub conditional: bool,
}

/// `2C₁·a^{(m+1)/2}/(1−√a)` with `C₁ = 2b/(1−a)`; infinite when `a ≥ 1`.
pub fn truncation_bound(a: f64, b: f64, depth: usize) -> f64 {
    if a >= 1.0 {
        return f64::INFINITY;
    }
    let c1 = 2.0 * b / (1.0 - a);
    2.0 * c1 * a.powf((depth as f64 + 1.0) / 2.0) / (1.0 - a.sqrt())
}

/// `X_depth` from symbols `σ_0, σ_{-1}, …, σ_{-depth}` yielded by `source(k)`.
pub fn coding_map_truncated(
    system: &IntervalSystem,
    depth: usize,
    source: &mut dyn FnMut(usize) -> Option<usize>,
) -> Result<TruncatedCoding> {
    let mut symbols = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        let e = source(k).ok_or_else(|| {
            Error::NotApplicable(format!("word ends after {k} symbols, depth {depth} requested"))
        })?;
        symbols.push(e);
    }
    symbols.reverse();
    let estimate = eval_x(system, &SymbolWord::new(symbols))?;
    let a = rational::to_f64(&interval_contraction(system).a);
    let b = rational::to_f64(&interval_coupling(system).b);
    Ok(TruncatedCoding {
        estimate,
        error_bound: truncation_bound(a, b, depth),
        conditional: true,
    })
}

pub fn coding_map_truncated_word(
    system: &IntervalSystem,
    word: &EventuallyPeriodicWord,
    depth: usize,
) -> Result<TruncatedCoding> {
    coding_map_truncated(system, depth, &mut |k| Some(word.symbol_back(k)))
}

/// `P_x` of the cylinder `[e_m, …, e_n]`: `p_{e_m}(x)·p_{e_{m+1}}(w_{e_m}x)···`.
/// Zero when the word is not a path or `x ∉ K_{i(e_m)}`.
pub fn cylinder_prob(system: &IntervalSystem, x: &Rational, word: &SymbolWord) -> Rational {
    let mut x = x.clone();
    let mut acc = Rational::one();
    for &e in &word.symbols {
        let edge = &system.edges[e];
        if system.atom_of(&x) != Some(edge.source) {
            return Rational::zero();
        }
        acc *= edge.prob.eval(&x);
        if acc.is_zero() {
            return acc;
        }
        x = edge.map.eval(&x);
    }
    acc
}

/// `d′(σ, σ′)` from the number of agreeing recent symbols, capped at [`METRIC_CAP`].
pub fn word_metric(w1: &EventuallyPeriodicWord, w2: &EventuallyPeriodicWord) -> WordMetric {
    let agree = (0..METRIC_CAP)
        .take_while(|&k| w1.symbol_back(k) == w2.symbol_back(k))
        .count();
    WordMetric {
        exponent: agree as u32,
        upper_bound: agree == METRIC_CAP,
    }
}

/// Hölder constant `8b/((1−√a)(1−a))` and exponent `log√a / log(1/2)`.
pub fn holder_parameters(a: f64, b: f64) -> (f64, f64) {
    let constant = 8.0 * b / ((1.0 - a.sqrt()) * (1.0 - a));
    let exponent = a.sqrt().ln() / 0.5f64.ln();
    (constant, exponent)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolderEntry {
    pub distance: Rational,
    pub metric: WordMetric,
    pub bound: f64,
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolderReport {
    pub a: Rational,
    pub b: Rational,
    pub constant: f64,
    pub exponent: f64,
    pub entries: Vec<HolderEntry>,
    pub violations: usize,
}

pub fn holder_check(
    system: &IntervalSystem,
    pairs: &[(EventuallyPeriodicWord, EventuallyPeriodicWord)],
) -> Result<HolderReport> {
    let a = interval_contraction(system).a;
    let b = interval_coupling(system).b;
    let (constant, exponent) = holder_parameters(rational::to_f64(&a), rational::to_f64(&b));
    let mut entries = Vec::with_capacity(pairs.len());
    for (w1, w2) in pairs {
        let distance = (coding_map_exact(system, w1)? - coding_map_exact(system, w2)?).abs();
        let metric = word_metric(w1, w2);
        let bound = constant * metric.value_f64().powf(exponent);
        let violation = rational::to_f64(&distance) > bound * (1.0 + 1e-12);
        entries.push(HolderEntry {
            distance,
            metric,
            bound,
            violation,
        });
    }
    let violations = entries.iter().filter(|e| e.violation).count();
    Ok(HolderReport {
        a,
        b,
        constant,
        exponent,
        entries,
        violations,
    })
}

/// Edges ending in each atom, restricted to edges whose source has an
/// infinite past (only those occur in eventually periodic words).
fn in_edges(system: &IntervalSystem) -> Vec<Vec<usize>> {
    let mut live = vec![true; system.atoms.len()];
    loop {
        let mut fed = vec![false; system.atoms.len()];
        for e in &system.edges {
            if live[e.source] {
                fed[e.target] = true;
            }
        }
        if fed == live {
            break;
        }
        live = fed;
    }
    let mut out = vec![Vec::new(); system.atoms.len()];
    for (k, e) in system.edges.iter().enumerate() {
        if live[e.source] {
            out[e.target].push(k);
        }
    }
    out
}

/// Extends `newer` (oldest first) backward by `len` random edges; `None` on a
/// dead end (an atom with no incoming edge).
fn extend_back(
    system: &IntervalSystem,
    incoming: &[Vec<usize>],
    atom: usize,
    len: usize,
    rng: &mut RngStream,
) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(len);
    let mut at = atom;
    for _ in 0..len {
        let choices = &incoming[at];
        if choices.is_empty() {
            return None;
        }
        let e = choices[rng.below(choices.len() as u64) as usize];
        out.push(e);
        at = system.edges[e].source;
    }
    out.reverse();
    Some(out)
}

/// A random closed walk through `atom` of length at most `max_len`, or `None`.
fn random_cycle(
    system: &IntervalSystem,
    incoming: &[Vec<usize>],
    atom: usize,
    max_len: usize,
    rng: &mut RngStream,
) -> Option<Vec<usize>> {
    let mut walk = Vec::new();
    let mut at = atom;
    for _ in 0..max_len {
        let choices = &incoming[at];
        if choices.is_empty() {
            return None;
        }
        let e = choices[rng.below(choices.len() as u64) as usize];
        walk.push(e);
        at = system.edges[e].source;
        if at == atom {
            walk.reverse();
            return Some(walk);
        }
    }
    None
}

/// Attaches a random prefix extension and period behind `block` (oldest
/// first); retries a bounded number of times.
fn complete_backward(
    system: &IntervalSystem,
    incoming: &[Vec<usize>],
    block: &[usize],
    max_prefix: usize,
    max_period: usize,
    rng: &mut RngStream,
) -> Option<EventuallyPeriodicWord> {
    let start = system.edges[*block.first()?].source;
    for _ in 0..64 {
        let extra = rng.below(max_prefix as u64 + 1) as usize;
        let Some(ext) = extend_back(system, incoming, start, extra, rng) else {
            continue;
        };
        let oldest = ext.first().map_or(start, |&e| system.edges[e].source);
        let Some(period) = random_cycle(system, incoming, oldest, max_period.max(1), rng) else {
            continue;
        };
        let mut prefix = ext;
        prefix.extend_from_slice(block);
        return Some(EventuallyPeriodicWord {
            prefix: SymbolWord::new(prefix),
            period: SymbolWord::new(period),
        });
    }
    None
}

/// A random eventually periodic path with period composite contracting.
pub fn random_periodic_word(
    system: &IntervalSystem,
    max_prefix: usize,
    max_period: usize,
    rng: &mut RngStream,
) -> Option<EventuallyPeriodicWord> {
    let incoming = in_edges(system);
    for _ in 0..256 {
        let e = rng.below(system.edges.len() as u64) as usize;
        if let Some(w) = complete_backward(system, &incoming, &[e], max_prefix, max_period, rng) {
            if w.period.composite(system).slope.abs() < Rational::one() {
                return Some(w);
            }
        }
    }
    None
}

/// Two eventually periodic words sharing a random recent block of length `central`.
pub fn random_word_pair(
    system: &IntervalSystem,
    central: usize,
    max_prefix: usize,
    max_period: usize,
    rng: &mut RngStream,
) -> Option<(EventuallyPeriodicWord, EventuallyPeriodicWord)> {
    let incoming = in_edges(system);
    for _ in 0..256 {
        let e = rng.below(system.edges.len() as u64) as usize;
        let Some(mut block) = extend_back(system, &incoming, system.edges[e].source, central.saturating_sub(1), rng)
        else {
            continue;
        };
        block.push(e);
        let w1 = complete_backward(system, &incoming, &block, max_prefix, max_period, rng);
        let w2 = complete_backward(system, &incoming, &block, max_prefix, max_period, rng);
        if let (Some(w1), Some(w2)) = (w1, w2) {
            let contracting = |w: &EventuallyPeriodicWord| {
                w.period.composite(system).slope.abs() < Rational::one()
            };
            if contracting(&w1) && contracting(&w2) {
                return Some((w1, w2));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::frac;

    fn word(sys: &IntervalSystem, s: &str) -> SymbolWord {
        SymbolWord::parse(sys, s).unwrap()
    }

    #[test]
    fn eval_x_examples() {
        let prdm = fixtures::prdm();
        assert_eq!(eval_x(&prdm, &word(&prdm, "b")).unwrap(), frac(1, 4));
        let dmse = fixtures::dmse();
        assert_eq!(eval_x(&dmse, &word(&dmse, "b,b,b")).unwrap(), frac(1, 16));
        let err = eval_x(&prdm, &word(&prdm, "a,a")).unwrap_err();
        assert!(matches!(err, Error::InvalidPath { junction: 0, .. }), "{err}");
    }

    #[test]
    fn exact_coding_examples() {
        let dmse = fixtures::dmse();
        let tail = |s: &str| EventuallyPeriodicWord::new(&dmse, SymbolWord::default(), word(&dmse, s)).unwrap();
        assert_eq!(coding_map_exact(&dmse, &tail("b")).unwrap(), frac(0, 1));
        assert_eq!(coding_map_exact(&dmse, &tail("c")).unwrap(), frac(1, 1));
        let prdm = fixtures::prdm();
        let w = EventuallyPeriodicWord::new(&prdm, SymbolWord::default(), word(&prdm, "b,c")).unwrap();
        assert_eq!(coding_map_exact(&prdm, &w).unwrap(), frac(2, 3));
    }

    #[test]
    fn non_contracting_period() {
        let mut prdm = fixtures::prdm();
        let b = prdm.edge_index("b").unwrap();
        prdm.edges[b].map = Affine::identity();
        let w = EventuallyPeriodicWord::new(&prdm, SymbolWord::default(), word(&prdm, "b")).unwrap();
        let err = coding_map_exact(&prdm, &w).unwrap_err();
        assert_eq!(err.to_string(), "period not contracting; use coding_map_truncated");
    }

    #[test]
    fn cylinder_examples() {
        let prdm = fixtures::prdm();
        assert_eq!(cylinder_prob(&prdm, &frac(1, 2), &word(&prdm, "b,c")), frac(3, 8));
        assert_eq!(cylinder_prob(&prdm, &frac(1, 2), &word(&prdm, "a")), frac(0, 1));
        assert_eq!(cylinder_prob(&prdm, &frac(1, 3), &word(&prdm, "c")), frac(2, 3));
    }

    #[test]
    fn truncation_bound_examples() {
        let prdm = fixtures::prdm();
        let w = EventuallyPeriodicWord::new(&prdm, SymbolWord::default(), word(&prdm, "b")).unwrap();
        let t = coding_map_truncated_word(&prdm, &w, 40).unwrap();
        assert!(t.error_bound < 5e-6);
        let t0 = coding_map_truncated_word(&prdm, &w, 0).unwrap();
        let s = 0.5f64.sqrt();
        assert!((t0.error_bound - 2.0 * s / (1.0 - s)).abs() < 1e-12);
        let t30 = coding_map_truncated_word(&prdm, &w, 30).unwrap();
        let exact = coding_map_exact(&prdm, &w).unwrap();
        assert!(rational::to_f64(&(t30.estimate - exact).abs()) <= t30.error_bound);
    }

    #[test]
    fn holder_parameters_prdm() {
        let (c, alpha) = holder_parameters(0.5, 0.25);
        assert!((alpha - 0.5).abs() < 1e-15);
        assert!((c - 13.657).abs() < 1e-3);
    }

    #[test]
    fn metric_counts_recent_agreement() {
        let prdm = fixtures::prdm();
        let w1 = EventuallyPeriodicWord::new(&prdm, word(&prdm, "c,b"), word(&prdm, "b")).unwrap();
        let w2 = EventuallyPeriodicWord::new(&prdm, word(&prdm, "b,b"), word(&prdm, "c")).unwrap();
        let m = word_metric(&w1, &w2);
        assert_eq!(m.exponent, 1);
        assert_eq!(m.value(), frac(1, 2));
        assert!(word_metric(&w1, &w1).upper_bound);
    }
}
