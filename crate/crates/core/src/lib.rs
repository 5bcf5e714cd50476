//! Lie-Poisson relative dynamics of planar point vortices and an
//! Energy-Casimir stability certificate for their relative equilibria.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod analysis;
pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod par;
pub mod scenario;
pub mod stability;

pub use error::{Error, Result};
