//! Markov systems: the document format, validation, and the validated forms
//! of both backends.

pub mod family;
pub mod interval;
pub mod spec;
pub mod system;

pub use interval::{Affine, Interval};
pub use spec::{parse_spec, IntervalSpec, SubshiftSpec, SystemSpec};
pub use system::{validate_interval, Atom, Edge, IntervalSystem};

use crate::error::Result;
use crate::subshift::{validate_subshift, SubshiftSystem};

#[derive(Clone, Debug)]
pub enum System {
    Interval(IntervalSystem),
    Subshift(SubshiftSystem),
}

impl System {
    pub fn as_interval(&self) -> Option<&IntervalSystem> {
        match self {
            System::Interval(s) => Some(s),
            System::Subshift(_) => None,
        }
    }

    pub fn as_subshift(&self) -> Option<&SubshiftSystem> {
        match self {
            System::Subshift(s) => Some(s),
            System::Interval(_) => None,
        }
    }

    pub fn to_spec(&self) -> SystemSpec {
        match self {
            System::Interval(s) => SystemSpec::Interval(s.to_spec()),
            System::Subshift(s) => SystemSpec::Subshift(s.spec.clone()),
        }
    }

    /// Number of edges, counting kept members of a truncated family.
    pub fn edge_count(&self) -> usize {
        match self {
            System::Interval(s) => s.edges.len() + s.family.as_ref().map_or(0, |f| f.len()),
            System::Subshift(s) => s.edges.len(),
        }
    }

    pub fn atom_count(&self) -> usize {
        match self {
            System::Interval(s) => s.atoms.len(),
            System::Subshift(s) => s.vertices.len(),
        }
    }

    pub fn atom_ids(&self) -> Vec<u64> {
        match self {
            System::Interval(s) => s.atoms.iter().map(|a| a.id).collect(),
            System::Subshift(s) => s.vertices.clone(),
        }
    }
}

pub fn validate(spec: &SystemSpec) -> Result<System> {
    Ok(match spec {
        SystemSpec::Interval(s) => System::Interval(validate_interval(s)?),
        SystemSpec::Subshift(s) => System::Subshift(validate_subshift(s)?),
    })
}

/// Parses and validates a system document.
pub fn load(document: &str) -> Result<System> {
    validate(&parse_spec(document)?)
}
