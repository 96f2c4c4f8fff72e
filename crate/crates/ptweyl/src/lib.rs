//! Non-unitary quantum maps for a pair of coupled chaotic resonators, one
//! absorbing and one amplifying.  The crate builds the map, computes its
//! complex spectrum and the phase-space supports of its eigenstates, iterates
//! the classical limit, and fits the scaling of the amplified-state fraction
//! with matrix size.

pub mod classical;
pub mod harness;
pub mod husimi;
pub mod linalg;
pub mod operators;
pub mod spectra;

mod error;
mod stats;

pub use error::{Error, Result};
