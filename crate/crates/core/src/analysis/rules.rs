//! Verdict rules: the grouping rule for globally continuous systems, closed
//! subsystems, and the ordered classification pipeline.

use std::collections::BTreeMap;

use num_traits::One;

use crate::analysis::boundary::{self, csc_check, default_n_max, omega_set, Omega};
use crate::analysis::certificates::{contraction_certificate, coupling_constant_b, dominating_chain};
use crate::analysis::report::{
    AnalysisReport, Consistency, ConsistencyReason, Degeneracy, Existence, HypothesisCheck,
};
use crate::graph;
use crate::model::{Affine, Interval, IntervalSystem, System};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UcctOutcome {
    pub holds: bool,
    pub reason: String,
}

/// Edges labelled with the same group must be restrictions of one global
/// (map, probability) pair, i.e. have identical coefficients.
pub fn ucct_rule(system: &System) -> UcctOutcome {
    let s = match system {
        System::Interval(s) => s,
        System::Subshift(_) => {
            return UcctOutcome {
                holds: false,
                reason: "not applicable to the subshift backend".into(),
            }
        }
    };
    if s.family.is_some() {
        return UcctOutcome {
            holds: false,
            reason: "family members carry no group labels".into(),
        };
    }
    let mut groups: BTreeMap<&str, (&str, &Affine, &Affine)> = BTreeMap::new();
    for e in &s.edges {
        let Some(label) = e.group.as_deref() else {
            return UcctOutcome {
                holds: false,
                reason: format!("edge {:?} has no group label", e.id),
            };
        };
        match groups.get(label) {
            None => {
                groups.insert(label, (&e.id, &e.map, &e.prob));
            }
            Some((first, map, prob)) => {
                if *map != &e.map {
                    return UcctOutcome {
                        holds: false,
                        reason: format!("edges {first:?} and {:?} share group {label:?} but their maps differ", e.id),
                    };
                }
                if *prob != &e.prob {
                    return UcctOutcome {
                        holds: false,
                        reason: format!(
                            "edges {first:?} and {:?} share group {label:?} but their probabilities differ ({} vs {})",
                            e.id, prob, e.prob
                        ),
                    };
                }
            }
        }
    }
    UcctOutcome {
        holds: true,
        reason: format!(
            "{} groups, each a restriction of one global affine pair; all ξ_i finite",
            groups.len()
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subsystem {
    pub atoms: Vec<u64>,
    /// Atom indices in the parent system.
    pub indices: Vec<usize>,
    pub closed_in_k: bool,
}

/// Minimal non-empty atom sets closed under edge targets.
pub fn closed_subsystems(system: &System) -> Vec<Subsystem> {
    let (n, arcs, ids): (usize, Vec<(usize, usize)>, Vec<u64>) = match system {
        System::Interval(s) => {
            let mut arcs: Vec<(usize, usize)> = s.edges.iter().map(|e| (e.source, e.target)).collect();
            if let Some(f) = &s.family {
                arcs.push((f.source, f.target));
            }
            (s.atoms.len(), arcs, s.atoms.iter().map(|a| a.id).collect())
        }
        System::Subshift(s) => (s.vertices.len(), s.vertex_arcs(), s.vertices.clone()),
    };
    graph::closed_classes(n, &arcs)
        .into_iter()
        .map(|class| {
            let closed_in_k = match system {
                System::Interval(s) => union_closed_in_space(s, &class),
                // Cylinder sets K_i are clopen in the sequence space.
                System::Subshift(_) => true,
            };
            Subsystem {
                atoms: class.iter().map(|&i| ids[i]).collect(),
                indices: class,
                closed_in_k,
            }
        })
        .collect()
}

/// Whether `∪_{i∈S} K_i` is closed relative to the state space.
pub fn union_closed_in_space(s: &IntervalSystem, members: &[usize]) -> bool {
    let mut pieces: Vec<&Interval> = members.iter().map(|&i| &s.atoms[i].set).collect();
    pieces.sort_by(|a, b| a.left_edge().cmp(&b.left_edge()));
    let mut merged: Vec<Interval> = Vec::new();
    for p in pieces {
        if let Some(last) = merged.last_mut() {
            let touching = matches!((&last.hi, &p.lo), (Some(a), Some(b)) if a == b)
                && (last.hi_closed || p.lo_closed);
            if touching {
                last.hi = p.hi.clone();
                last.hi_closed = p.hi_closed;
                continue;
            }
        }
        merged.push(p.clone());
    }
    merged
        .iter()
        .flat_map(|m| m.boundary())
        .all(|z| !s.space.contains(&z))
}

/// Outcome of rules (1) and (2) on one system.
struct CoreVerdict {
    degeneracy: Degeneracy,
    consistency: Consistency,
    existence: Existence,
    checks: Vec<HypothesisCheck>,
    omega: Omega,
    omega_stop: Option<boundary::OmegaStop>,
    r_iterates: Vec<boundary::BoundaryFn>,
    csc: Option<boundary::CscOutcome>,
    ucct: UcctOutcome,
    n_max: usize,
}

fn check(name: &str, holds: bool, detail: impl Into<String>) -> HypothesisCheck {
    HypothesisCheck {
        name: name.into(),
        holds,
        detail: detail.into(),
    }
}

fn core_verdict(system: &System, n_max: Option<usize>) -> CoreVerdict {
    let a = contraction_certificate(system);
    let b = coupling_constant_b(system);
    let chain = dominating_chain(system);

    let mut checks = vec![
        check(
            "contractive",
            a.contractive,
            format!("a = {} {} 1", a.a, if a.contractive { "<" } else { ">=" }),
        ),
        check(
            "b finite",
            true,
            format!("b = {}{}", b.b, if b.bound_only { " (upper bound)" } else { "" }),
        ),
        check(
            "uniformly continuous",
            true,
            match system {
                System::Interval(_) => "maps and probabilities are affine on every atom",
                System::Subshift(_) => "g depends on finitely many symbols",
            },
        ),
        check(
            "dominating chain",
            true,
            format!("all ξ_i finite (max {})", chain.xi.iter().max().unwrap()),
        ),
        check(
            "tightness",
            true,
            format!(
                "finite atom set (N = {}); c = {} < ∞",
                chain.atoms.len(),
                chain.c
            ),
        ),
    ];
    let quantitative = a.contractive;

    let (omega, omega_stop, r_iterates, n_max) = match system {
        System::Interval(s) => {
            let n = n_max.unwrap_or_else(|| default_n_max(s));
            let res = omega_set(s, n);
            (res.omega, Some(res.stop), res.iterates, n)
        }
        // Every K_i is open in the sequence space, so R1 = 0.
        System::Subshift(_) => (Omega::Decided(Vec::new()), None, Vec::new(), n_max.unwrap_or(0)),
    };
    let ucct = ucct_rule(system);

    if omega.is_empty() {
        checks.push(check("non-degenerate", true, "Ω = ∅"));
        let existence = if quantitative {
            Existence::Guaranteed {
                rule: "eimc-i".into(),
                subsystem: None,
            }
        } else {
            Existence::NotEstablished
        };
        return CoreVerdict {
            degeneracy: Degeneracy::NonDegenerate {
                reason: "omega-empty".into(),
            },
            consistency: Consistency::Consistent {
                reason: ConsistencyReason::OmegaEmpty,
            },
            existence,
            checks,
            omega,
            omega_stop,
            r_iterates,
            csc: None,
            ucct,
            n_max,
        };
    }

    let csc = match system {
        System::Interval(s) => csc_check(s, &omega).ok(),
        System::Subshift(_) => None,
    };
    let degeneracy = match &omega {
        Omega::Decided(points) => Degeneracy::DegenerateCapable {
            omega: points.clone(),
        },
        Omega::Undecided { .. } => Degeneracy::Undecided,
    };
    let consistency = match (&csc, ucct.holds) {
        (Some(c), _) if c.pass => Consistency::Consistent {
            reason: ConsistencyReason::CscHolds,
        },
        (_, true) => Consistency::Consistent {
            reason: ConsistencyReason::UcctRule,
        },
        (Some(c), false) => Consistency::InconsistentCandidate {
            witness: c.witness.clone().expect("failed check carries a witness"),
        },
        (None, false) => Consistency::Undecided,
    };
    match &csc {
        Some(c) => checks.push(check(
            "csc kernel domination",
            c.pass,
            match &c.witness {
                None => "R-kernel ≤ U-kernel at every point of Ω".to_string(),
                Some(w) => format!(
                    "at z = {}: R-mass {} > U-mass {} at {}",
                    w.z, w.r_mass, w.u_mass, w.y
                ),
            },
        )),
        None => checks.push(check("csc kernel domination", false, "Ω undecided")),
    }
    checks.push(check("ucct grouping", ucct.holds, ucct.reason.clone()));
    let existence = if quantitative && matches!(consistency, Consistency::Consistent { .. }) {
        Existence::Guaranteed {
            rule: "usdmc".into(),
            subsystem: None,
        }
    } else {
        Existence::NotEstablished
    };
    CoreVerdict {
        degeneracy,
        consistency,
        existence,
        checks,
        omega,
        omega_stop,
        r_iterates,
        csc,
        ucct,
        n_max,
    }
}

/// Runs all certificates and applies the verdict rules in order:
/// (1) Ω = ∅; (2) kernel domination or the grouping rule; (3) a closed-in-K
/// minimal subsystem passing (1) or (2); (4) not established.
pub fn classify(system: &System, n_max: Option<usize>) -> AnalysisReport {
    let core = core_verdict(system, n_max);
    let subsystems = closed_subsystems(system);
    let mut checks = core.checks;
    let mut existence = core.existence;

    if matches!(existence, Existence::NotEstablished) {
        if let System::Interval(s) = system {
            for sub in subsystems.iter().filter(|sub| sub.closed_in_k) {
                let restricted = System::Interval(s.restrict(&sub.indices));
                let inner = core_verdict(&restricted, n_max);
                let label = format!("{:?}", sub.atoms);
                let passed = matches!(inner.existence, Existence::Guaranteed { .. });
                let via = match &inner.existence {
                    Existence::Guaranteed { rule, .. } => rule.clone(),
                    Existence::NotEstablished => "none".into(),
                };
                checks.push(check(
                    "closed subsystem (sndct)",
                    passed,
                    format!("atoms {label}: closed in K; inner rule {via}"),
                ));
                if passed {
                    existence = Existence::Guaranteed {
                        rule: "sndct".into(),
                        subsystem: Some(sub.atoms.clone()),
                    };
                    break;
                }
            }
        }
    }

    let (boundary_points, epsilon_tail) = match system {
        System::Interval(s) => (boundary::boundary_set(s), s.epsilon_tail()),
        System::Subshift(_) => (Vec::new(), None),
    };
    AnalysisReport {
        backend: match system {
            System::Interval(_) => "interval",
            System::Subshift(_) => "subshift",
        },
        contraction: contraction_certificate(system),
        coupling: coupling_constant_b(system),
        chain: dominating_chain(system),
        epsilon_tail,
        boundary: boundary_points,
        r_iterates: core.r_iterates,
        omega: core.omega,
        omega_stop: core.omega_stop,
        n_max: core.n_max,
        degeneracy: core.degeneracy,
        consistency: core.consistency,
        csc: core.csc,
        ucct: core.ucct,
        subsystems,
        existence,
        checks,
    }
}

/// True iff the constant function `1` is dominated: `R1 ≤ 1` on `B`.
pub fn r1_at_most_one(system: &IntervalSystem) -> bool {
    boundary::r_apply(system, None)
        .values
        .values()
        .all(|v| *v <= crate::rational::Rational::one())
}
