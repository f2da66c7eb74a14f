//! Discrete p-Laplacian systems with concave-convex nonlinearities on the
//! Sierpinski gasket: gasket graphs, p-energies, the Euler functional, the
//! fibering-map analysis of its Nehari manifold, and a two-branch solver with
//! verification certificates.

// Negated comparisons are the NaN-rejecting form throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod fibering;
pub mod field;
pub mod functional;
pub mod gasket;
pub mod solver;
pub mod verify;

pub use energy::{ApModel, EnergyContext};
pub use error::{Error, Result};
pub use field::VertexField;
pub use gasket::{build_gasket, CellAddress, GasketGraph};
