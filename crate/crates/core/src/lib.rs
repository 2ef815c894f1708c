//! Brascamp–Lieb data analysis: the gaussian constant and its extremisers,
//! critical subspaces and decompositions, and finiteness decisions.

pub mod catalog;
pub mod error;
pub mod finiteness;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod structure;
pub mod subspace;

pub use error::{Error, Result};
pub use model::{BlDatum, EquivalenceTransform, GaussianInput, LinearMap, Tolerances};
pub use subspace::Subspace;
