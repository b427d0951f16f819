//! Simulation and verification tools for a Z2-invariant lattice gauge theory
//! whose link variables live in `[-1, 1]`, together with the two-wall spin
//! model that controls its confinement bound.

pub mod bounds;
pub mod config;
pub mod error;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod run;
pub mod sampling;
pub mod stats;
pub mod twowall;

pub use error::{Error, Result};
