//! Modeling and fitting toolkit for a transmon qubit dispersively coupled to
//! the Kittel mode of a ferromagnetic sphere through the modes of a 3D cavity.
//!
//! All frequencies, linewidths and couplings are linear frequencies (ω/2π)
//! in MHz unless a function says otherwise.

pub mod error;
pub mod fitting;
pub mod fock;
pub mod dispersive;
pub mod hybrid;
pub mod io;
pub mod lindblad;
pub mod units;

pub use error::{Error, Result};
