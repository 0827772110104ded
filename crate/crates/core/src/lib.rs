//! Contractive Markov systems on the line and on finite-graph subshifts:
//! validation, exact certificates, coding maps, simulation and refinement.

pub mod analysis;
pub mod coding;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod graph;
pub mod model;
pub mod rational;
pub mod refine;
pub mod simulation;
pub mod subshift;
pub mod thermo;

pub use error::{Error, Result};
pub use model::{load, validate, IntervalSystem, System};
pub use rational::Rational;
