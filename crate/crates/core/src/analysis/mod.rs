//! Static analysis of a validated system: certificates, the boundary
//! calculus and the existence verdict.

pub mod boundary;
pub mod certificates;
pub mod report;
pub mod rules;

pub use boundary::{
    boundary_prob, boundary_set, csc_check, default_n_max, omega_set, r_apply, BoundaryFn,
    BoundaryMatrix, BoundaryPoint, CscOutcome, CscWitness, Omega, OmegaResult, OmegaStop,
};
pub use certificates::{
    contraction_certificate, coupling_constant_b, dominating_chain, ContractionCertificate,
    CouplingCertificate, DominatingChain,
};
pub use report::{AnalysisReport, Consistency, ConsistencyReason, Degeneracy, Existence, HypothesisCheck};
pub use rules::{classify, closed_subsystems, ucct_rule, Subsystem, UcctOutcome};
