//! Exact diagonalization of the Dicke model.
//!
//! The pipeline is `basis` -> `hamiltonian` -> `solver` -> `observables` ->
//! `analysis`: enumerate a truncated basis, build the dense Hamiltonian,
//! diagonalize it completely, evaluate Peres operators and the truncation
//! certificate per eigenstate, then assemble lattices and spectral
//! diagnostics.

pub mod algebra;
pub mod analysis;
pub mod basis;
pub mod error;
pub mod hamiltonian;
pub mod observables;
pub mod solver;

pub use algebra::{Spin, SpinQuantum};
pub use basis::{BasisIndex, BasisKind, BasisSpec, Label, Parity};
pub use error::{DickeError, Result};
pub use hamiltonian::{ModelParams, Provenance, SymmetricMatrix};
pub use solver::{eigh, ResidualReport, Spectrum};
