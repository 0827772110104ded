//! Refinements by cut points: split atoms, restrict edges, and check the
//! identities relating the base and refined systems.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_traits::Zero;

use crate::coding::{coding_map_exact, cylinder_prob, EventuallyPeriodicWord, SymbolWord};
use crate::error::{Error, Result};
use crate::model::spec::{AffineSpec, AtomKind, AtomSpec, EdgeSpec};
use crate::model::system::validate_interval;
use crate::model::{Interval, IntervalSystem};
use crate::rational::{self, Rational};

/// Which piece receives the cut point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutSide {
    /// `(lo, c]` and `(c, hi)`.
    LeftClosed,
    /// `(lo, c)` and `[c, hi)`.
    RightClosed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cut {
    pub atom: u64,
    pub point: Rational,
    pub side: CutSide,
}

impl FromStr for Cut {
    type Err = Error;

    /// `atom@point[:left-closed|:right-closed]`, e.g. `2@1/2:left-closed`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Malformed(format!("cut {s:?}: expected ATOM@POINT[:left-closed|:right-closed]"));
        let (atom, rest) = s.trim().split_once('@').ok_or_else(bad)?;
        let (point, side) = match rest.split_once(':') {
            Some((p, side)) => (p, side),
            None => (rest, "left-closed"),
        };
        let side = match side {
            "left-closed" => CutSide::LeftClosed,
            "right-closed" => CutSide::RightClosed,
            _ => return Err(bad()),
        };
        Ok(Cut {
            atom: atom.trim().parse().map_err(|_| bad())?,
            point: rational::parse(point.trim())?,
            side,
        })
    }
}

/// Comma-separated cuts.
pub fn parse_cuts(text: &str) -> Result<Vec<Cut>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub base: IntervalSystem,
    pub refined: IntervalSystem,
    /// Refined edge index → base edge index.
    pub r: Vec<usize>,
    /// Refined atom index → base atom index.
    pub atom_embedding: Vec<usize>,
}

fn atom_spec(id: u64, set: &Interval) -> AtomSpec {
    if set.is_point() {
        AtomSpec {
            id,
            kind: AtomKind::Point,
            at: set.lo.clone(),
            lo: None,
            hi: None,
            lo_closed: false,
            hi_closed: false,
        }
    } else {
        AtomSpec {
            id,
            kind: AtomKind::Interval,
            at: None,
            lo: set.lo.clone(),
            hi: set.hi.clone(),
            lo_closed: set.lo_closed,
            hi_closed: set.hi_closed,
        }
    }
}

fn split(set: &Interval, cuts: &[&Cut]) -> Result<Vec<Interval>> {
    let mut pieces = vec![set.clone()];
    for cut in cuts {
        let c = &cut.point;
        let last = pieces.pop().unwrap();
        let interior = !last.is_point()
            && last.lo.as_ref().is_none_or(|lo| lo < c)
            && last.hi.as_ref().is_none_or(|hi| c < hi);
        if !interior {
            return Err(Error::CutNotInterior(format!("{} is not interior to atom {} = {}", c, cut.atom, set)));
        }
        let left = Interval {
            hi: Some(c.clone()),
            hi_closed: cut.side == CutSide::LeftClosed,
            ..last.clone()
        };
        let right = Interval {
            lo: Some(c.clone()),
            lo_closed: cut.side == CutSide::RightClosed,
            ..last
        };
        pieces.push(left);
        pieces.push(right);
    }
    Ok(pieces)
}

/// Splits the cut atoms and restricts every edge to every piece of its
/// source. Uncut atoms keep their ids; pieces get fresh ids above the
/// largest existing one, in left-to-right order. Restricted edges are named
/// `e.k` (k-th piece) and restrictions with probability identically 0 are
/// dropped. The result is re-validated, so straddling images are reported.
pub fn build_refinement(system: &IntervalSystem, cuts: &[Cut]) -> Result<Refinement> {
    if system.family.is_some() {
        return Err(Error::NotApplicable("refinement of systems with an edge family".into()));
    }
    let mut by_atom: BTreeMap<usize, Vec<&Cut>> = BTreeMap::new();
    for cut in cuts {
        let i = system.atom_index(cut.atom).ok_or(Error::UnknownAtom(cut.atom))?;
        by_atom.entry(i).or_default().push(cut);
    }
    for list in by_atom.values_mut() {
        list.sort_by(|a, b| a.point.cmp(&b.point));
        if list.windows(2).any(|w| w[0].point == w[1].point) {
            return Err(Error::CutNotInterior(format!("repeated cut {} in atom {}", list[0].point, list[0].atom)));
        }
    }
    let mut next_id = system.atoms.iter().map(|a| a.id).max().unwrap_or(0) + 1;
    // (base atom index, piece number (1-based, 0 if uncut), new id, set)
    let mut pieces: Vec<(usize, usize, u64, Interval)> = Vec::new();
    for &i in system.atoms_in_order() {
        let atom = &system.atoms[i];
        match by_atom.get(&i) {
            None => pieces.push((i, 0, atom.id, atom.set.clone())),
            Some(list) => {
                for (k, set) in split(&atom.set, list)?.into_iter().enumerate() {
                    pieces.push((i, k + 1, next_id, set));
                    next_id += 1;
                }
            }
        }
    }
    let mut spec = system.to_spec();
    spec.atoms = pieces.iter().map(|(_, _, id, set)| atom_spec(*id, set)).collect();
    spec.anchors = pieces
        .iter()
        .map(|(i, _, id, set)| {
            let x = &system.anchors[*i];
            let anchor = if set.contains(x) { x.clone() } else { set.default_anchor() };
            (*id, anchor)
        })
        .collect();
    let mut edges = Vec::new();
    let mut r_by_id: BTreeMap<String, usize> = BTreeMap::new();
    for (e, edge) in system.edges.iter().enumerate() {
        for (i, k, id, set) in &pieces {
            if *i != edge.source {
                continue;
            }
            let (_, sup) = set.affine_range(&edge.prob);
            if sup.is_some_and(|s| s.is_zero()) {
                continue;
            }
            let name = if *k == 0 { edge.id.clone() } else { format!("{}.{}", edge.id, k) };
            r_by_id.insert(name.clone(), e);
            edges.push(EdgeSpec {
                id: name,
                from: *id,
                to: None,
                map: AffineSpec {
                    slope: edge.map.slope.clone(),
                    intercept: edge.map.intercept.clone(),
                },
                prob: AffineSpec {
                    slope: edge.prob.slope.clone(),
                    intercept: edge.prob.intercept.clone(),
                },
                group: edge.group.clone(),
            });
        }
    }
    spec.edges = edges;
    let refined = validate_interval(&spec)?;
    let r: Vec<usize> = refined.edges.iter().map(|e| r_by_id[&e.id]).collect();
    let base_of_id: BTreeMap<u64, usize> = pieces.iter().map(|(i, _, id, _)| (*id, *i)).collect();
    let atom_embedding = refined.atoms.iter().map(|a| base_of_id[&a.id]).collect();
    let refinement = Refinement {
        base: system.clone(),
        refined,
        r,
        atom_embedding,
    };
    let report = refinement.structure();
    if !report.surjective {
        return Err(Error::Malformed("refinement map is not surjective".into()));
    }
    Ok(refinement)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureReport {
    pub surjective: bool,
    /// Refined atoms lie in their base atoms and cover them.
    pub partition: bool,
    /// Every refined edge carries the coefficients of its base edge.
    pub restriction: bool,
}

impl StructureReport {
    pub fn ok(&self) -> bool {
        self.surjective && self.partition && self.restriction
    }
}

impl Refinement {
    pub fn structure(&self) -> StructureReport {
        let mut hit = vec![false; self.base.edges.len()];
        for &e in &self.r {
            hit[e] = true;
        }
        let restriction = self.r.iter().enumerate().all(|(k, &e)| {
            let (a, b) = (&self.refined.edges[k], &self.base.edges[e]);
            a.map == b.map && a.prob == b.prob && self.atom_embedding[a.source] == b.source
        });
        let partition = self
            .refined
            .atoms
            .iter()
            .zip(&self.atom_embedding)
            .all(|(a, &i)| a.set.is_subset_of(&self.base.atoms[i].set))
            && (0..self.base.atoms.len()).all(|i| {
                // Boundary points and a midpoint of every base atom are covered.
                let set = &self.base.atoms[i].set;
                let mut probes: Vec<Rational> = set
                    .closure_endpoints()
                    .into_iter()
                    .filter(|z| set.contains(z))
                    .collect();
                probes.push(set.default_anchor());
                probes.extend(self.refined.atoms.iter().flat_map(|a| a.set.closure_endpoints()).filter(|z| set.contains(z)));
                probes
                    .iter()
                    .all(|z| self.refined.atom_of(z).map(|j| self.atom_embedding[j]) == Some(i))
            });
        StructureReport {
            surjective: hit.iter().all(|&h| h),
            partition,
            restriction,
        }
    }

    /// `Ψ_r`: symbol-wise application of `r`.
    pub fn psi_project(&self, word: &SymbolWord) -> SymbolWord {
        SymbolWord::new(word.symbols.iter().map(|&e| self.r[e]).collect())
    }

    pub fn project_periodic(&self, word: &EventuallyPeriodicWord) -> Result<EventuallyPeriodicWord> {
        EventuallyPeriodicWord::new(&self.base, self.psi_project(&word.prefix), self.psi_project(&word.period))
    }

    /// Refined edges projecting to base edge `e`.
    pub fn fibre(&self, e: usize) -> Vec<usize> {
        (0..self.r.len()).filter(|&k| self.r[k] == e).collect()
    }
}

/// Longest base word accepted by [`cylinder_pushforward_check`].
pub const PUSHFORWARD_MAX_DEPTH: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PushforwardCheck {
    pub lhs: Rational,
    pub rhs: Rational,
    pub equal: bool,
}

/// Base `P_x(word)` against the sum of refined `P^r_x(w′)` over all refined
/// words `w′` projecting to `word`.
pub fn cylinder_pushforward_check(
    refinement: &Refinement,
    x: &Rational,
    word: &SymbolWord,
) -> Result<PushforwardCheck> {
    if word.len() > PUSHFORWARD_MAX_DEPTH {
        return Err(Error::NotApplicable(format!(
            "pushforward check limited to depth {PUSHFORWARD_MAX_DEPTH}"
        )));
    }
    let lhs = cylinder_prob(&refinement.base, x, word);
    let fibres: Vec<Vec<usize>> = word.symbols.iter().map(|&e| refinement.fibre(e)).collect();
    let mut rhs = Rational::zero();
    let mut current = vec![0usize; fibres.len()];
    if fibres.iter().all(|f| !f.is_empty()) {
        loop {
            let w = SymbolWord::new(current.iter().zip(&fibres).map(|(&k, f)| f[k]).collect());
            rhs += cylinder_prob(&refinement.refined, x, &w);
            // Odometer over the fibres.
            let mut pos = fibres.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                current[pos] += 1;
                if current[pos] < fibres[pos].len() {
                    break;
                }
                current[pos] = 0;
            }
            if current.iter().all(|&k| k == 0) {
                break;
            }
        }
    }
    Ok(PushforwardCheck {
        equal: lhs == rhs,
        lhs,
        rhs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommuteEntry {
    pub refined: Rational,
    pub base: Rational,
    pub equal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommuteReport {
    pub entries: Vec<CommuteEntry>,
    pub all_equal: bool,
}

/// `F_r(σ′) = F(Ψ_r σ′)` on each refined word.
pub fn coding_commute_check(refinement: &Refinement, words: &[EventuallyPeriodicWord]) -> Result<CommuteReport> {
    let entries = words
        .iter()
        .map(|w| {
            let refined = coding_map_exact(&refinement.refined, w)?;
            let base = coding_map_exact(&refinement.base, &refinement.project_periodic(w)?)?;
            Ok(CommuteEntry {
                equal: refined == base,
                refined,
                base,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CommuteReport {
        all_equal: entries.iter().all(|e| e.equal),
        entries,
    })
}

/// `Uf(x)` from base edges equals `Uf(x)` from refined edges for every base
/// atom indicator `f`.
pub fn operator_invariance(refinement: &Refinement, x: &Rational) -> bool {
    let base = &refinement.base;
    (0..base.atoms.len()).all(|j| {
        let f = |y: &Rational| {
            if base.atom_of(y) == Some(j) {
                Rational::from_integer(1.into())
            } else {
                Rational::zero()
            }
        };
        base.apply_u(x, &f) == refinement.refined.apply_u(x, &f)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::frac;

    fn dyadic(sys: &IntervalSystem) -> Refinement {
        build_refinement(sys, &parse_cuts("2@1/2:left-closed").unwrap()).unwrap()
    }

    #[test]
    fn prdm_dyadic_refinement() {
        let prdm = fixtures::prdm();
        let r = dyadic(&prdm);
        assert_eq!(r.refined.atoms.len(), 4);
        assert_eq!(r.refined.edges.len(), 6);
        assert!(r.structure().ok());
        let ids: Vec<u64> = r.refined.atoms.iter().map(|a| a.id).collect();
        assert_eq!(ids, vec![1, 4, 5, 3]);
        assert_eq!(r.refined.anchors[1], frac(1, 2));
        assert_eq!(r.refined.anchors[2], frac(3, 4));
    }

    #[test]
    fn cut_must_be_interior() {
        let prdm = fixtures::prdm();
        let err = build_refinement(&prdm, &parse_cuts("2@1").unwrap()).unwrap_err();
        assert!(err.to_string().starts_with("cut not interior"), "{err}");
        let err = build_refinement(&prdm, &parse_cuts("1@0").unwrap()).unwrap_err();
        assert!(matches!(err, Error::CutNotInterior(_)));
    }

    #[test]
    fn straddling_cut() {
        let prdm = fixtures::prdm();
        let err = build_refinement(&prdm, &parse_cuts("2@1/3").unwrap()).unwrap_err();
        match err {
            Error::Straddle { witness, .. } => assert_eq!(witness, "1/3"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn pushforward_example() {
        let prdm = fixtures::prdm();
        let r = dyadic(&prdm);
        let w = SymbolWord::parse(&prdm, "b,c").unwrap();
        let check = cylinder_pushforward_check(&r, &frac(1, 2), &w).unwrap();
        assert!(check.equal);
        assert_eq!(check.lhs, frac(3, 8));
        assert_eq!(psi_empty(&r), SymbolWord::default());
    }

    fn psi_empty(r: &Refinement) -> SymbolWord {
        r.psi_project(&SymbolWord::default())
    }

    #[test]
    fn cut_syntax() {
        let c: Cut = "2@1/2:right-closed".parse().unwrap();
        assert_eq!(c.side, CutSide::RightClosed);
        assert!("2-1/2".parse::<Cut>().is_err());
        assert!("2@1/2:sideways".parse::<Cut>().is_err());
    }
}
