use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed rational literal {0:?}")]
    MalformedRational(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
    #[error("invalid system document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("duplicate atom id {0}")]
    DuplicateAtom(u64),
    #[error("duplicate edge id {0:?}")]
    DuplicateEdge(String),
    #[error("system has no edges")]
    NoEdges,
    #[error("malformed system: {0}")]
    Malformed(String),
    #[error("expression {expr:?}: {reason}")]
    Expression { expr: String, reason: String },

    #[error("atoms {first} and {second} overlap at {witness}")]
    Overlap {
        first: u64,
        second: u64,
        witness: String,
    },
    #[error("atoms do not cover the state space: gap {witness}")]
    Gap { witness: String },
    #[error("probabilities out of atom {atom} do not sum to 1: residual {residual}")]
    ProbabilitySum { atom: u64, residual: String },
    #[error("probability of edge {edge:?} leaves [0,1] on atom {atom}: {value} at {at}")]
    ProbabilityRange {
        edge: String,
        atom: u64,
        at: String,
        value: String,
    },
    #[error("image of edge {edge:?} straddles atom boundary at {witness}; not a Markov partition")]
    Straddle { edge: String, witness: String },
    #[error("image of edge {edge:?} leaves the state space")]
    ImageOutside { edge: String },
    #[error("edge {edge:?} has probability identically zero on atom {atom}")]
    ZeroProbabilityEdge { edge: String, atom: u64 },
    #[error("anchor {anchor} does not lie in atom {atom}")]
    AnchorOutside { atom: u64, anchor: String },
    #[error("edge {edge:?} leaves atom {atom}: {reason}")]
    Unsupported {
        edge: String,
        atom: u64,
        reason: String,
    },
    #[error("subshift: {0}")]
    Subshift(String),

    #[error("invalid path: junction {junction} ({from:?} -> {to:?}) is broken")]
    InvalidPath {
        junction: usize,
        from: String,
        to: String,
    },
    #[error("empty word")]
    EmptyWord,
    #[error("period not contracting; use coding_map_truncated")]
    PeriodNotContracting,
    #[error("omega undecided; run omega_set with larger n_max")]
    OmegaUndecided,
    #[error("unknown edge {0:?}")]
    UnknownEdge(String),
    #[error("unknown atom {0}")]
    UnknownAtom(u64),
    #[error("cut not interior: {0}")]
    CutNotInterior(String),

    #[error("no samples: steps must exceed burn-in")]
    NoSamples,
    #[error("state {0} left the state space")]
    OutsideSpace(f64),
    #[error("state became non-finite after {0} steps")]
    NonFinite(u64),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("chain is reducible; closed classes: {0}")]
    Reducible(String),
}

impl Error {
    /// Errors that mean "the document describes no valid Markov system".
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedRational(_)
                | Error::ZeroDenominator(_)
                | Error::Json(_)
                | Error::UnknownBackend(_)
                | Error::DuplicateAtom(_)
                | Error::DuplicateEdge(_)
                | Error::NoEdges
                | Error::Malformed(_)
                | Error::Expression { .. }
                | Error::Overlap { .. }
                | Error::Gap { .. }
                | Error::ProbabilitySum { .. }
                | Error::ProbabilityRange { .. }
                | Error::Straddle { .. }
                | Error::ImageOutside { .. }
                | Error::ZeroProbabilityEdge { .. }
                | Error::AnchorOutside { .. }
                | Error::Unsupported { .. }
                | Error::Subshift(_)
        )
    }
}
