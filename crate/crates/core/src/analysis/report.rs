//! The analysis report and its JSON / text renderings.

use serde_json::{json, Value};

use crate::analysis::boundary::{BoundaryFn, BoundaryPoint, CscOutcome, CscWitness, Omega, OmegaStop};
use crate::analysis::certificates::{ContractionCertificate, CouplingCertificate, DominatingChain};
use crate::analysis::rules::{Subsystem, UcctOutcome};
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Degeneracy {
    NonDegenerate { reason: String },
    /// Ω is non-empty: degeneracy is possible but not proven.
    DegenerateCapable { omega: Vec<Rational> },
    Undecided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsistencyReason {
    OmegaEmpty,
    CscHolds,
    UcctRule,
}

impl ConsistencyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsistencyReason::OmegaEmpty => "omega-empty",
            ConsistencyReason::CscHolds => "csc-holds",
            ConsistencyReason::UcctRule => "ucct-rule",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Consistency {
    Consistent { reason: ConsistencyReason },
    InconsistentCandidate { witness: CscWitness },
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Existence {
    Guaranteed { rule: String, subsystem: Option<Vec<u64>> },
    NotEstablished,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypothesisCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub backend: &'static str,
    pub contraction: ContractionCertificate,
    pub coupling: CouplingCertificate,
    pub chain: DominatingChain,
    pub epsilon_tail: Option<f64>,
    pub boundary: Vec<BoundaryPoint>,
    pub r_iterates: Vec<BoundaryFn>,
    pub omega: Omega,
    pub omega_stop: Option<OmegaStop>,
    pub n_max: usize,
    pub degeneracy: Degeneracy,
    pub consistency: Consistency,
    pub csc: Option<CscOutcome>,
    pub ucct: UcctOutcome,
    pub subsystems: Vec<Subsystem>,
    pub existence: Existence,
    pub checks: Vec<HypothesisCheck>,
}

fn r(x: &Rational) -> Value {
    Value::String(x.to_string())
}

fn fn_json(f: &BoundaryFn) -> Value {
    Value::Object(
        f.values
            .iter()
            .map(|(x, v)| (x.to_string(), r(v)))
            .collect(),
    )
}

impl AnalysisReport {
    /// Whether any verdict component is undecided (for `--strict`).
    pub fn is_undecided(&self) -> bool {
        matches!(self.omega, Omega::Undecided { .. })
            || self.degeneracy == Degeneracy::Undecided
            || self.consistency == Consistency::Undecided
    }

    pub fn is_guaranteed(&self) -> bool {
        matches!(self.existence, Existence::Guaranteed { .. })
    }

    pub fn verdict_line(&self) -> String {
        match &self.existence {
            Existence::Guaranteed { rule, subsystem: None } => {
                format!("existence guaranteed ({rule})")
            }
            Existence::Guaranteed { rule, subsystem: Some(atoms) } => {
                format!("existence guaranteed ({rule}) on atoms {atoms:?}")
            }
            Existence::NotEstablished => "existence not established".into(),
        }
    }

    pub fn to_json(&self) -> Value {
        let degeneracy = match &self.degeneracy {
            Degeneracy::NonDegenerate { reason } => json!({"verdict": "non-degenerate", "reason": reason}),
            Degeneracy::DegenerateCapable { omega } => json!({
                "verdict": "degenerate-capable",
                "omega": omega.iter().map(r).collect::<Vec<_>>(),
            }),
            Degeneracy::Undecided => json!({"verdict": "undecided"}),
        };
        let consistency = match &self.consistency {
            Consistency::Consistent { reason } => json!({"verdict": "consistent", "reason": reason.as_str()}),
            Consistency::InconsistentCandidate { witness } => json!({
                "verdict": "inconsistent-candidate",
                "witness": {"z": r(&witness.z), "y": r(&witness.y),
                            "r_mass": r(&witness.r_mass), "u_mass": r(&witness.u_mass)},
            }),
            Consistency::Undecided => json!({"verdict": "undecided"}),
        };
        let existence = match &self.existence {
            Existence::Guaranteed { rule, subsystem } => json!({
                "verdict": "guaranteed", "rule": rule, "subsystem": subsystem,
            }),
            Existence::NotEstablished => json!({"verdict": "not-established"}),
        };
        let omega = match &self.omega {
            Omega::Decided(points) => json!({"decided": true, "points": points.iter().map(r).collect::<Vec<_>>()}),
            Omega::Undecided { after } => json!({"decided": false, "after": after}),
        };
        let stop = self.omega_stop.map(|s| match s {
            OmegaStop::Empty => json!({"kind": "empty"}),
            OmegaStop::Cycle { start, period } => json!({"kind": "cycle", "start": start, "period": period}),
            OmegaStop::Cap => json!({"kind": "cap"}),
        });
        let csc = self.csc.as_ref().map(|c| {
            json!({
                "pass": c.pass,
                "kernels": c.kernels.iter().map(|(rk, uk)| json!({
                    "z": r(&rk.base), "r": fn_json(&rk.masses), "u": fn_json(&uk.masses),
                })).collect::<Vec<_>>(),
            })
        });
        json!({
            "backend": self.backend,
            "a": r(&self.contraction.a),
            "a_truncated": r(&self.contraction.a_truncated),
            "a_epsilon_term": self.contraction.epsilon_term.as_ref().map(r),
            "a_per_atom": self.contraction.per_atom.iter().map(r).collect::<Vec<_>>(),
            "contractive": self.contraction.contractive,
            "b": r(&self.coupling.b),
            "b_bound_only": self.coupling.bound_only,
            "anchors": self.coupling.anchors.iter().map(|(id, x)| json!([id, r(x)])).collect::<Vec<_>>(),
            "epsilon_tail": self.epsilon_tail,
            "chain": {
                "atoms": self.chain.atoms,
                "xi": self.chain.xi.iter().map(r).collect::<Vec<_>>(),
                "q": self.chain.q.iter().map(|row| row.iter().map(r).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "c": r(&self.chain.c),
            },
            "boundary": self.boundary.iter().map(|b| json!({"point": r(&b.point), "atoms": b.atoms})).collect::<Vec<_>>(),
            "r_iterates": self.r_iterates.iter().map(fn_json).collect::<Vec<_>>(),
            "omega": omega,
            "omega_stop": stop,
            "n_max": self.n_max,
            "degeneracy": degeneracy,
            "consistency": consistency,
            "csc": csc,
            "ucct": {"holds": self.ucct.holds, "reason": self.ucct.reason},
            "subsystems": self.subsystems.iter().map(|s| json!({"atoms": s.atoms, "closed_in_k": s.closed_in_k})).collect::<Vec<_>>(),
            "existence": existence,
            "checks": self.checks.iter().map(|c| json!({"name": c.name, "holds": c.holds, "detail": c.detail})).collect::<Vec<_>>(),
            "undecided": self.is_undecided(),
        })
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "backend: {}", self.backend);
        let _ = write!(out, "a = {}", self.contraction.a);
        if let Some(eps) = &self.contraction.epsilon_term {
            let _ = write!(
                out,
                " (truncated {} + tail {}; ≈ {:.6})",
                self.contraction.a_truncated,
                crate::rational::to_f64(eps),
                crate::rational::to_f64(&self.contraction.a)
            );
        }
        let _ = writeln!(out);
        let _ = write!(out, "b = {}", self.coupling.b);
        if self.coupling.bound_only {
            let _ = write!(out, " (upper bound)");
        }
        let _ = writeln!(out);
        if let Some(eps) = self.epsilon_tail {
            let _ = writeln!(out, "epsilon_tail = {eps:.6}");
        }
        let xi: Vec<String> = self
            .chain
            .atoms
            .iter()
            .zip(&self.chain.xi)
            .map(|(id, x)| format!("{id}: {x}"))
            .collect();
        let _ = writeln!(out, "xi = {{{}}}", xi.join(", "));
        let _ = writeln!(out, "c = {}", self.chain.c);
        if self.backend == "interval" {
            let pts: Vec<String> = self.boundary.iter().map(|b| b.point.to_string()).collect();
            let _ = writeln!(out, "B = {{{}}}", pts.join(", "));
            for (k, f) in self.r_iterates.iter().enumerate() {
                let _ = writeln!(out, "R^{} 1 = {}", k + 1, f);
            }
        }
        let _ = writeln!(out, "Omega = {}", self.omega);
        let deg = match &self.degeneracy {
            Degeneracy::NonDegenerate { reason } => format!("non-degenerate ({reason})"),
            Degeneracy::DegenerateCapable { .. } => "degenerate-capable (Omega non-empty)".into(),
            Degeneracy::Undecided => "undecided".into(),
        };
        let _ = writeln!(out, "degeneracy: {deg}");
        let con = match &self.consistency {
            Consistency::Consistent { reason } => format!("consistent ({})", reason.as_str()),
            Consistency::InconsistentCandidate { witness } => format!(
                "inconsistent candidate (at z = {}: R-mass {} > U-mass {} at {})",
                witness.z, witness.r_mass, witness.u_mass, witness.y
            ),
            Consistency::Undecided => "undecided".into(),
        };
        let _ = writeln!(out, "consistency: {con}");
        let subs: Vec<String> = self
            .subsystems
            .iter()
            .map(|s| {
                let ids: Vec<String> = s.atoms.iter().map(|a| a.to_string()).collect();
                format!(
                    "{{{}}}{}",
                    ids.join(", "),
                    if s.closed_in_k { " (closed in K)" } else { "" }
                )
            })
            .collect();
        let _ = writeln!(out, "closed subsystems: {}", subs.join(", "));
        let _ = writeln!(out, "checks:");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "  [{}] {}: {}",
                if c.holds { "x" } else { " " },
                c.name,
                c.detail
            );
        }
        let _ = writeln!(out, "verdict: {}", self.verdict_line());
        out
    }
}
