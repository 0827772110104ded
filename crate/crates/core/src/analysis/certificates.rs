//! Contraction rate `a`, coupling constant `b` and the dominating chain.
//!
//! Every per-atom quantity here is `sup` of an affine function of `x` over an
//! atom, so it is attained at an endpoint of the closure and computed exactly.
//! Contributions of a truncated family are float sums entered as the dyadic
//! rational of the accumulated `f64`.

use num_traits::{One, Signed, Zero};

use crate::model::{Affine, Interval, IntervalSystem, System};
use crate::rational::{self, Rational};
use crate::subshift::SubshiftSystem;

/// `sup_{x ∈ set} f(x)`, or `None` if unbounded.
pub fn sup_on(set: &Interval, f: &Affine) -> Option<Rational> {
    set.affine_range(f).1
}

fn from_float(x: f64) -> Rational {
    rational::from_f64(x).expect("finite float sum")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionCertificate {
    /// The certified rate: `a_truncated` plus the tail term, if any.
    pub a: Rational,
    pub a_truncated: Rational,
    /// Bound on the contribution of the dropped family members.
    pub epsilon_term: Option<Rational>,
    pub contractive: bool,
    /// Per-atom suprema of `Σ p_e(x)·|slope_e|` (atom order of the system).
    pub per_atom: Vec<Rational>,
}

pub fn contraction_certificate(system: &System) -> ContractionCertificate {
    match system {
        System::Interval(s) => interval_contraction(s),
        System::Subshift(s) => {
            let half = rational::frac(1, 2);
            ContractionCertificate {
                a: half.clone(),
                a_truncated: half.clone(),
                epsilon_term: None,
                contractive: true,
                per_atom: vec![half; s.vertices.len()],
            }
        }
    }
}

pub fn interval_contraction(s: &IntervalSystem) -> ContractionCertificate {
    let mut per_atom = Vec::with_capacity(s.atoms.len());
    for (i, atom) in s.atoms.iter().enumerate() {
        let f = s.edges_from(i).iter().fold(Affine::constant(Rational::zero()), |acc, &e| {
            let edge = &s.edges[e];
            acc.add(&edge.prob.scale(&edge.map.lipschitz()))
        });
        let mut sup = sup_on(&atom.set, &f).expect("probabilities are constant on unbounded atoms");
        if let Some(fam) = s.family.as_ref().filter(|f| f.source == i) {
            sup += from_float(fam.sum(|k| fam.probs[k] * fam.slopes[k].abs()));
        }
        per_atom.push(sup);
    }
    let a_truncated = per_atom.iter().max().cloned().unwrap_or_else(Rational::zero);
    let epsilon_term = s.family.as_ref().map(|fam| {
        from_float(
            fam.tail_contraction
                .unwrap_or(fam.epsilon_tail * fam.max_slope()),
        )
    });
    let a = match &epsilon_term {
        Some(eps) => &a_truncated + eps,
        None => a_truncated.clone(),
    };
    ContractionCertificate {
        contractive: a < Rational::one(),
        a,
        a_truncated,
        epsilon_term,
        per_atom,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingCertificate {
    pub b: Rational,
    /// `(atom id, x_i)` as used.
    pub anchors: Vec<(u64, Rational)>,
    pub per_atom: Vec<Rational>,
    /// True when `b` is a bound rather than the exact supremum.
    pub bound_only: bool,
}

pub fn coupling_constant_b(system: &System) -> CouplingCertificate {
    match system {
        System::Interval(s) => interval_coupling(s),
        // Distances in the subshift metric never exceed 1.
        System::Subshift(s) => CouplingCertificate {
            b: Rational::one(),
            anchors: Vec::new(),
            per_atom: vec![Rational::one(); s.vertices.len()],
            bound_only: true,
        },
    }
}

pub fn interval_coupling(s: &IntervalSystem) -> CouplingCertificate {
    let mut per_atom = Vec::with_capacity(s.atoms.len());
    for (i, atom) in s.atoms.iter().enumerate() {
        let xi = &s.anchors[i];
        let f = s.edges_from(i).iter().fold(Affine::constant(Rational::zero()), |acc, &e| {
            let edge = &s.edges[e];
            let dist = (edge.map.eval(xi) - &s.anchors[edge.target]).abs();
            acc.add(&edge.prob.scale(&dist))
        });
        let mut sup = sup_on(&atom.set, &f).expect("probabilities are constant on unbounded atoms");
        if let Some(fam) = s.family.as_ref().filter(|f| f.source == i) {
            let x = rational::to_f64(xi);
            let xt = rational::to_f64(&s.anchors[fam.target]);
            sup += from_float(fam.sum(|k| {
                fam.probs[k] * (fam.slopes[k] * x + fam.intercepts[k] - xt).abs()
            }));
        }
        per_atom.push(sup);
    }
    CouplingCertificate {
        b: per_atom.iter().max().cloned().unwrap_or_else(Rational::zero),
        anchors: s
            .atoms
            .iter()
            .zip(&s.anchors)
            .map(|(a, x)| (a.id, x.clone()))
            .collect(),
        per_atom,
        bound_only: s.family.is_some(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominatingChain {
    pub atoms: Vec<u64>,
    pub xi: Vec<Rational>,
    /// `q[i][j]`, dense.
    pub q: Vec<Vec<Rational>>,
    pub c: Rational,
}

pub fn dominating_chain(system: &System) -> DominatingChain {
    let (atoms, s) = match system {
        System::Interval(s) => (s.atoms.iter().map(|a| a.id).collect(), interval_sups(s)),
        System::Subshift(s) => (s.vertices.clone(), subshift_sups(s)),
    };
    let n = atoms.len();
    let xi: Vec<Rational> = s
        .iter()
        .map(|row| row.iter().fold(Rational::zero(), |a, v| a + v))
        .collect();
    let q = s
        .iter()
        .zip(&xi)
        .map(|(row, x)| {
            row.iter()
                .map(|v| if x.is_zero() { Rational::zero() } else { v / x })
                .collect()
        })
        .collect();
    let c = (0..n).fold(Rational::zero(), |acc, j| {
        acc + (0..n).map(|i| s[i][j].clone()).max().unwrap_or_else(Rational::zero)
    });
    DominatingChain { atoms, xi, q, c }
}

/// `S[i][j] = Σ_{e: i→j} sup p_e = ξ_i q_ij`.
fn interval_sups(s: &IntervalSystem) -> Vec<Vec<Rational>> {
    let n = s.atoms.len();
    let mut out = vec![vec![Rational::zero(); n]; n];
    for e in &s.edges {
        let sup = sup_on(&s.atoms[e.source].set, &e.prob).expect("bounded probabilities");
        out[e.source][e.target] += sup;
    }
    if let Some(fam) = &s.family {
        out[fam.source][fam.target] += from_float(fam.kept_mass);
    }
    out
}

fn subshift_sups(s: &SubshiftSystem) -> Vec<Vec<Rational>> {
    let n = s.vertices.len();
    let mut out = vec![vec![Rational::zero(); n]; n];
    for (k, e) in s.edges.iter().enumerate() {
        out[e.source][e.target] += s.sup_prob(k);
    }
    out
}
