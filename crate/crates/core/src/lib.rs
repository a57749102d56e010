//! Out-of-time-ordered correlators of Z3 parafermion chains.
//!
//! Parafermions are mapped to clock spins by a generalized Jordan–Wigner
//! transformation. Inserting the global parity turns a left string into a
//! right string, so Heisenberg-evolved operators can be handled as matrix
//! product operators with a canonical-form shortcut in the trace contraction.
//! A dense exact-diagonalization backend serves as reference.

pub mod algebra;
pub mod analysis;
pub mod ed;
pub mod error;
pub mod linalg;
pub mod model;
pub mod mpo;
pub mod otoc;

pub use error::{Error, Result};
