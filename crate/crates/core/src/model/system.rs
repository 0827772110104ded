//! Validated interval-backend Markov systems.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::model::family::{self, TruncatedFamily};
use crate::model::interval::{Affine, Interval, LeftEdge};
use crate::model::spec::{AffineSpec, AtomKind, AtomSpec, EdgeSpec, IntervalSpec, SpaceSpec};
use crate::rational::{self, Rational};

/// Float slack for the family probability-sum check.
const FAMILY_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub id: u64,
    pub set: Interval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: String,
    /// Atom indices into [`IntervalSystem::atoms`].
    pub source: usize,
    pub target: usize,
    pub map: Affine,
    pub prob: Affine,
    pub group: Option<String>,
}

#[derive(Clone, Debug)]
pub struct IntervalSystem {
    pub space: Interval,
    pub atoms: Vec<Atom>,
    pub edges: Vec<Edge>,
    /// `anchors[i]` is the fixed point `x_i ∈ K_i`.
    pub anchors: Vec<Rational>,
    pub family: Option<TruncatedFamily>,
    out_edges: Vec<Vec<usize>>,
    /// Atom indices sorted along the line.
    order: Vec<usize>,
}

impl IntervalSystem {
    pub fn atom_index(&self, id: u64) -> Option<usize> {
        self.atoms.iter().position(|a| a.id == id)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Explicit edges leaving atom `i` (family members are not included).
    pub fn edges_from(&self, i: usize) -> &[usize] {
        &self.out_edges[i]
    }

    /// The atom containing `x`, or `None` outside the state space.
    pub fn atom_of(&self, x: &Rational) -> Option<usize> {
        let probe = LeftEdge(Some(x), true);
        // Last atom whose left edge is at or before x.
        let pos = self
            .order
            .partition_point(|&i| self.atoms[i].set.left_edge() <= probe);
        if pos == 0 {
            return None;
        }
        let i = self.order[pos - 1];
        self.atoms[i].set.contains(x).then_some(i)
    }

    pub fn atom_id_of(&self, x: &Rational) -> Option<u64> {
        self.atom_of(x).map(|i| self.atoms[i].id)
    }

    /// Atom indices sorted by position.
    pub fn atoms_in_order(&self) -> &[usize] {
        &self.order
    }

    pub fn epsilon_tail(&self) -> Option<f64> {
        self.family.as_ref().map(|f| f.epsilon_tail)
    }

    /// `Uf(x) = Σ p_e(x)·f(w_e(x))` over the explicit edges out of x's atom.
    pub fn apply_u(&self, x: &Rational, f: &dyn Fn(&Rational) -> Rational) -> Option<Rational> {
        let i = self.atom_of(x)?;
        let mut acc = Rational::zero();
        for &e in self.edges_from(i) {
            let edge = &self.edges[e];
            let p = edge.prob.eval(x);
            if !p.is_zero() {
                acc += p * f(&edge.map.eval(x));
            }
        }
        Some(acc)
    }

    /// The Markov subsystem on the given atoms: the atoms, their anchors, and
    /// every edge leaving them. Callers pass a closed set (all targets inside).
    pub fn restrict(&self, keep: &[usize]) -> IntervalSystem {
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let new_index: BTreeMap<usize, usize> =
            keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let atoms: Vec<Atom> = keep.iter().map(|&i| self.atoms[i].clone()).collect();
        let anchors = keep.iter().map(|&i| self.anchors[i].clone()).collect();
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .filter(|e| new_index.contains_key(&e.source) && new_index.contains_key(&e.target))
            .map(|e| Edge {
                source: new_index[&e.source],
                target: new_index[&e.target],
                ..e.clone()
            })
            .collect();
        let family = self.family.as_ref().and_then(|f| {
            let (s, t) = (new_index.get(&f.source)?, new_index.get(&f.target)?);
            let mut f = f.clone();
            f.source = *s;
            f.target = *t;
            Some(f)
        });
        let space = hull(atoms.iter().map(|a| &a.set));
        IntervalSystem::assemble(space, atoms, edges, anchors, family)
    }

    fn assemble(
        space: Interval,
        atoms: Vec<Atom>,
        edges: Vec<Edge>,
        anchors: Vec<Rational>,
        family: Option<TruncatedFamily>,
    ) -> IntervalSystem {
        let mut out_edges = vec![Vec::new(); atoms.len()];
        for (k, e) in edges.iter().enumerate() {
            out_edges[e.source].push(k);
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| atoms[a].set.left_edge().cmp(&atoms[b].set.left_edge()));
        IntervalSystem {
            space,
            atoms,
            edges,
            anchors,
            family,
            out_edges,
            order,
        }
    }

    /// The document this system would be read back from (anchors explicit).
    pub fn to_spec(&self) -> IntervalSpec {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                if a.set.is_point() {
                    AtomSpec {
                        id: a.id,
                        kind: AtomKind::Point,
                        at: a.set.lo.clone(),
                        lo: None,
                        hi: None,
                        lo_closed: false,
                        hi_closed: false,
                    }
                } else {
                    AtomSpec {
                        id: a.id,
                        kind: AtomKind::Interval,
                        at: None,
                        lo: a.set.lo.clone(),
                        hi: a.set.hi.clone(),
                        lo_closed: a.set.lo_closed,
                        hi_closed: a.set.hi_closed,
                    }
                }
            })
            .collect();
        let anchors = self
            .atoms
            .iter()
            .zip(&self.anchors)
            .map(|(a, x)| (a.id, x.clone()))
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeSpec {
                id: e.id.clone(),
                from: self.atoms[e.source].id,
                to: Some(self.atoms[e.target].id),
                map: AffineSpec {
                    slope: e.map.slope.clone(),
                    intercept: e.map.intercept.clone(),
                },
                prob: AffineSpec {
                    slope: e.prob.slope.clone(),
                    intercept: e.prob.intercept.clone(),
                },
                group: e.group.clone(),
            })
            .collect();
        let tail_family = self.family.as_ref().map(|f| {
            let mut spec = f.spec.clone();
            spec.truncate_at = Some(f.m);
            spec.epsilon_tail = None;
            spec
        });
        IntervalSpec {
            space: SpaceSpec {
                lo: self.space.lo.clone(),
                hi: self.space.hi.clone(),
                lo_closed: self.space.lo.as_ref().map(|_| self.space.lo_closed),
                hi_closed: self.space.hi.as_ref().map(|_| self.space.hi_closed),
            },
            atoms,
            anchors,
            edges,
            tail_family,
        }
    }
}

fn hull<'a>(sets: impl Iterator<Item = &'a Interval>) -> Interval {
    let mut it = sets;
    let first = it.next().expect("non-empty").clone();
    it.fold(first, |acc, s| {
        let (lo, lo_closed) = match (&acc.lo, &s.lo) {
            (None, _) | (_, None) => (None, false),
            (Some(a), Some(b)) if a < b => (Some(a.clone()), acc.lo_closed),
            (Some(a), Some(b)) if b < a => (Some(b.clone()), s.lo_closed),
            (Some(a), _) => (Some(a.clone()), acc.lo_closed || s.lo_closed),
        };
        let (hi, hi_closed) = match (&acc.hi, &s.hi) {
            (None, _) | (_, None) => (None, false),
            (Some(a), Some(b)) if a > b => (Some(a.clone()), acc.hi_closed),
            (Some(a), Some(b)) if b > a => (Some(b.clone()), s.hi_closed),
            (Some(a), _) => (Some(a.clone()), acc.hi_closed || s.hi_closed),
        };
        Interval::new(lo, hi, lo_closed, hi_closed).expect("hull of non-empty sets")
    })
}

fn space_of(spec: &SpaceSpec) -> Result<Interval> {
    let lo_closed = spec.lo_closed.unwrap_or(true);
    let hi_closed = spec.hi_closed.unwrap_or(true);
    Interval::new(spec.lo.clone(), spec.hi.clone(), lo_closed, hi_closed)
        .ok_or_else(|| Error::Malformed("state space is empty".into()))
}

fn atom_of_spec(a: &AtomSpec) -> Result<Interval> {
    match a.kind {
        AtomKind::Point => {
            let at = a
                .at
                .clone()
                .ok_or_else(|| Error::Malformed(format!("point atom {} needs \"at\"", a.id)))?;
            Ok(Interval::point(at))
        }
        AtomKind::Interval => {
            if let (Some(lo), Some(hi)) = (&a.lo, &a.hi) {
                if lo >= hi {
                    return Err(Error::Malformed(format!(
                        "interval atom {} needs lo < hi (got {lo}, {hi})",
                        a.id
                    )));
                }
            }
            Interval::new(a.lo.clone(), a.hi.clone(), a.lo_closed, a.hi_closed)
                .ok_or_else(|| Error::Malformed(format!("atom {} is empty", a.id)))
        }
    }
}

/// Where the uncovered part of the line begins during the partition sweep:
/// `(None, _)` before any finite point is `-inf`; `done` once `+inf` is reached.
struct Frontier {
    at: Option<Rational>,
    included: bool,
    done: bool,
}

fn check_partition(space: &Interval, atoms: &[Atom], order: &[usize]) -> Result<()> {
    let mut frontier = Frontier {
        at: space.lo.clone(),
        included: space.lo_closed,
        done: false,
    };
    let mut prev: Option<usize> = None;
    for &i in order {
        let set = &atoms[i].set;
        if !set.is_subset_of(space) {
            return Err(Error::Malformed(format!(
                "atom {} = {set} is not inside the state space {space}",
                atoms[i].id
            )));
        }
        let start = set.left_edge();
        let expected = LeftEdge(frontier.at.as_ref(), frontier.included);
        if frontier.done || start < expected {
            let p = prev.expect("the first atom cannot start before the space");
            let witness = set
                .intersect(&atoms[p].set)
                .map(|w| w.default_anchor())
                .expect("atoms starting before the frontier overlap their predecessor");
            return Err(Error::Overlap {
                first: atoms[p].id,
                second: atoms[i].id,
                witness: witness.to_string(),
            });
        }
        if start > expected {
            let gap = Interval::new(frontier.at.clone(), set.lo.clone(), frontier.included, !set.lo_closed)
                .expect("a gap between sorted atoms is non-empty");
            return Err(Error::Gap {
                witness: gap.to_string(),
            });
        }
        frontier = match &set.hi {
            None => Frontier {
                at: None,
                included: false,
                done: true,
            },
            Some(hi) => Frontier {
                at: Some(hi.clone()),
                included: !set.hi_closed,
                done: false,
            },
        };
        prev = Some(i);
    }
    if !frontier.done {
        if let Some(hi) = &space.hi {
            let end = Interval::new(frontier.at.clone(), Some(hi.clone()), frontier.included, space.hi_closed);
            if let Some(gap) = end {
                return Err(Error::Gap {
                    witness: gap.to_string(),
                });
            }
        } else {
            let gap = Interval::new(frontier.at.clone(), None, frontier.included, false)
                .expect("half-line is non-empty");
            return Err(Error::Gap {
                witness: gap.to_string(),
            });
        }
    }
    Ok(())
}

fn resolve_target(
    id: &str,
    image: &Interval,
    space: &Interval,
    atoms: &[Atom],
    lookup: &dyn Fn(&Rational) -> Option<usize>,
) -> Result<usize> {
    if !image.is_subset_of(space) {
        return Err(Error::ImageOutside { edge: id.into() });
    }
    let probe = image.default_anchor();
    let k = lookup(&probe).ok_or_else(|| Error::ImageOutside { edge: id.into() })?;
    let target = &atoms[k].set;
    if image.is_subset_of(target) {
        return Ok(k);
    }
    // The image leaves atom k through one of its ends; that end is the cut.
    let past_hi = match (&image.hi, &target.hi) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(a), Some(b)) => a > b || (a == b && image.hi_closed && !target.hi_closed),
    };
    let witness = if past_hi { &target.hi } else { &target.lo };
    Err(Error::Straddle {
        edge: id.into(),
        witness: witness
            .as_ref()
            .map_or_else(|| "inf".to_string(), |w| w.to_string()),
    })
}

/// Validates an interval-backend document: partition, anchors, edge targets,
/// probability ranges and the per-atom probability-sum identity.
pub fn validate_interval(spec: &IntervalSpec) -> Result<IntervalSystem> {
    let space = space_of(&spec.space)?;
    if spec.atoms.is_empty() {
        return Err(Error::Malformed("system has no atoms".into()));
    }
    let atoms: Vec<Atom> = spec
        .atoms
        .iter()
        .map(|a| Ok(Atom { id: a.id, set: atom_of_spec(a)? }))
        .collect::<Result<_>>()?;
    let skeleton = IntervalSystem::assemble(space.clone(), atoms, Vec::new(), Vec::new(), None);
    check_partition(&space, &skeleton.atoms, &skeleton.order)?;
    let atoms = &skeleton.atoms;
    let index_of = |id: u64| {
        skeleton
            .atom_index(id)
            .ok_or(Error::UnknownAtom(id))
    };

    for id in spec.anchors.keys() {
        index_of(*id)?;
    }
    let anchors: Vec<Rational> = atoms
        .iter()
        .map(|a| {
            let x = spec
                .anchors
                .get(&a.id)
                .cloned()
                .unwrap_or_else(|| a.set.default_anchor());
            if a.set.contains(&x) {
                Ok(x)
            } else {
                Err(Error::AnchorOutside {
                    atom: a.id,
                    anchor: x.to_string(),
                })
            }
        })
        .collect::<Result<_>>()?;

    let lookup = |x: &Rational| skeleton.atom_of(x);
    let mut edges = Vec::with_capacity(spec.edges.len());
    for e in &spec.edges {
        let source = index_of(e.from)?;
        let set = &atoms[source].set;
        let map = Affine::new(e.map.slope.clone(), e.map.intercept.clone());
        let prob = Affine::new(e.prob.slope.clone(), e.prob.intercept.clone());
        check_probability(&e.id, atoms[source].id, set, &prob)?;
        let target = resolve_target(&e.id, &set.image(&map), &space, atoms, &lookup)?;
        if let Some(declared) = e.to {
            if declared != atoms[target].id {
                return Err(Error::Malformed(format!(
                    "edge {:?} declares target {declared} but maps into atom {}",
                    e.id, atoms[target].id
                )));
            }
        }
        edges.push(Edge {
            id: e.id.clone(),
            source,
            target,
            map,
            prob,
            group: e.group.clone(),
        });
    }

    let family = match &spec.tail_family {
        None => None,
        Some(f) => {
            let source = index_of(f.from)?;
            let target = index_of(f.to)?;
            let fam = family::instantiate(f, source, target)?;
            for k in 0..fam.len() {
                let id = fam.member_id(k);
                if spec.edges.iter().any(|e| e.id == id) {
                    return Err(Error::DuplicateEdge(id));
                }
                let map = Affine::new(
                    rational::from_f64(fam.slopes[k]).expect("finite"),
                    rational::from_f64(fam.intercepts[k]).expect("finite"),
                );
                let image = atoms[source].set.image(&map);
                let resolved = resolve_target(&id, &image, &space, atoms, &lookup)?;
                if resolved != target {
                    return Err(Error::Malformed(format!(
                        "family member {id} maps into atom {} instead of {}",
                        atoms[resolved].id, f.to
                    )));
                }
            }
            Some(fam)
        }
    };

    let system = IntervalSystem::assemble(space, skeleton.atoms.clone(), edges, anchors, family);
    check_probability_sums(&system)?;
    Ok(system)
}

fn check_probability(id: &str, atom: u64, set: &Interval, prob: &Affine) -> Result<()> {
    if !set.is_bounded() && !prob.slope.is_zero() {
        return Err(Error::Unsupported {
            edge: id.into(),
            atom,
            reason: "probabilities on unbounded atoms must be constant".into(),
        });
    }
    let identically_zero = if set.is_point() {
        prob.eval(set.lo.as_ref().unwrap()).is_zero()
    } else {
        prob.is_zero()
    };
    if identically_zero {
        return Err(Error::ZeroProbabilityEdge {
            edge: id.into(),
            atom,
        });
    }
    let points = if set.is_bounded() {
        set.closure_endpoints()
    } else {
        vec![Rational::zero()]
    };
    for x in points {
        let v = prob.eval(&x);
        if v.is_negative() || v > Rational::one() {
            return Err(Error::ProbabilityRange {
                edge: id.into(),
                atom,
                at: x.to_string(),
                value: v.to_string(),
            });
        }
    }
    Ok(())
}

fn check_probability_sums(system: &IntervalSystem) -> Result<()> {
    for (i, atom) in system.atoms.iter().enumerate() {
        let total = system
            .edges_from(i)
            .iter()
            .fold(Affine::constant(Rational::zero()), |acc, &e| {
                acc.add(&system.edges[e].prob)
            });
        let family = system.family.as_ref().filter(|f| f.source == i);
        let residual = total.add(&Affine::constant(-Rational::one()));
        match family {
            None => {
                let ok = if atom.set.is_point() {
                    residual.eval(atom.set.lo.as_ref().unwrap()).is_zero()
                } else {
                    residual.is_zero()
                };
                if !ok {
                    return Err(Error::ProbabilitySum {
                        atom: atom.id,
                        residual: residual.to_string(),
                    });
                }
            }
            Some(f) => {
                let at = atom.set.lo.clone().unwrap_or_default();
                let explicit = if atom.set.is_point() {
                    total.eval(&at)
                } else if !total.slope.is_zero() {
                    return Err(Error::ProbabilitySum {
                        atom: atom.id,
                        residual: residual.to_string(),
                    });
                } else {
                    total.intercept.clone()
                };
                let missing = 1.0 - (rational::to_f64(&explicit) + f.kept_mass);
                if missing < -FAMILY_SUM_TOL || missing > f.epsilon_tail + FAMILY_SUM_TOL {
                    return Err(Error::ProbabilitySum {
                        atom: atom.id,
                        residual: format!(
                            "{:.3e} (truncated mass bound {:.3e})",
                            -missing, f.epsilon_tail
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::{parse_spec, SystemSpec};
    use crate::rational::{frac, int};

    fn system(doc: &str) -> Result<IntervalSystem> {
        match parse_spec(doc)? {
            SystemSpec::Interval(s) => validate_interval(&s),
            SystemSpec::Subshift(_) => panic!("interval fixture expected"),
        }
    }

    fn halving(atoms: &str, edges: &str) -> String {
        format!(r#"{{"space":{{"lo":"0","hi":"1"}},"atoms":[{atoms}],"edges":[{edges}]}}"#)
    }

    const ONE_ATOM: &str = r#"{"id":1,"kind":"interval","lo":"0","hi":"1","lo_closed":true,"hi_closed":true}"#;
    const SELF_LOOP: &str = r#"{"id":"e","from":1,"map":{"slope":"1/2","intercept":"0"},"prob":{"slope":"0","intercept":"1"}}"#;

    #[test]
    fn single_atom_system_validates() {
        let s = system(&halving(ONE_ATOM, SELF_LOOP)).unwrap();
        assert_eq!(s.edges[0].target, 0);
        assert_eq!(s.anchors[0], frac(1, 2));
        assert_eq!(s.atom_of(&int(2)), None);
        assert_eq!(s.atom_of(&int(1)), Some(0));
    }

    #[test]
    fn overlap_is_reported_with_witness() {
        let atoms = r#"{"id":1,"kind":"interval","lo":"0","hi":"1/2","lo_closed":true,"hi_closed":true},
                       {"id":2,"kind":"interval","lo":"1/2","hi":"1","lo_closed":true,"hi_closed":true}"#;
        let err = system(&halving(atoms, SELF_LOOP)).unwrap_err();
        match err {
            Error::Overlap { witness, .. } => assert_eq!(witness, "1/2"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn gap_is_reported_with_witness_interval() {
        let atoms = r#"{"id":1,"kind":"interval","lo":"0","hi":"1/2","lo_closed":true,"hi_closed":false},
                       {"id":2,"kind":"interval","lo":"1/2","hi":"1","lo_closed":false,"hi_closed":true}"#;
        let err = system(&halving(atoms, SELF_LOOP)).unwrap_err();
        match err {
            Error::Gap { witness } => assert_eq!(witness, "{1/2}"),
            other => panic!("unexpected {other}"),
        }
        let atoms = r#"{"id":1,"kind":"interval","lo":"0","hi":"1/2","lo_closed":true,"hi_closed":true}"#;
        let err = system(&halving(atoms, SELF_LOOP)).unwrap_err();
        assert!(matches!(err, Error::Gap { witness } if witness == "(1/2, 1]"));
    }

    #[test]
    fn probability_sum_residual() {
        let edges = r#"{"id":"e","from":1,"map":{"slope":"1/2","intercept":"0"},"prob":{"slope":"1/2","intercept":"1/4"}}"#;
        let err = system(&halving(ONE_ATOM, edges)).unwrap_err();
        assert!(matches!(err, Error::ProbabilitySum { atom: 1, ref residual } if residual == "1/2·x - 3/4"), "{err}");
    }

    #[test]
    fn zero_probability_edges_are_rejected() {
        let edges = format!(
            r#"{SELF_LOOP},{{"id":"z","from":1,"map":{{"slope":"1/2","intercept":"0"}},"prob":{{"slope":"0","intercept":"0"}}}}"#
        );
        let err = system(&halving(ONE_ATOM, &edges)).unwrap_err();
        assert!(matches!(err, Error::ZeroProbabilityEdge { .. }));
    }

    #[test]
    fn anchors_must_lie_in_their_atom() {
        let doc = halving(ONE_ATOM, SELF_LOOP).replace(r#""edges""#, r#""anchors":{"1":"2"},"edges""#);
        assert!(matches!(system(&doc), Err(Error::AnchorOutside { atom: 1, .. })));
    }

    #[test]
    fn unbounded_space() {
        let doc = r#"{"space":{"lo":null,"hi":null},"atoms":[{"id":1,"kind":"interval"}],
            "edges":[{"id":"e","from":1,"map":{"slope":"1/2","intercept":"1"},"prob":{"slope":"0","intercept":"1"}}]}"#;
        let s = system(doc).unwrap();
        assert_eq!(s.anchors[0], int(0));
        assert_eq!(s.atom_of(&int(-1000)), Some(0));
    }
}
