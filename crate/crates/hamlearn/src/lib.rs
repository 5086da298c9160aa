//! Numerical laboratory for Heisenberg-limited learning of bosonic Hamiltonians
//! under engineered dissipation.
//!
//! The crate is organized bottom-up:
//!
//! - [`fock`]: truncated Fock spaces, states, ladder operators, displacements;
//! - [`hamiltonian`]: low-intersection bosonic Hamiltonians and their projections
//!   onto coherent code spaces;
//! - [`lindblad`]: jump operators, kernel projectors, and master-equation
//!   integration;
//! - [`experiment`]: the ancilla-interferometry circuit that turns dissipative
//!   evolution into phase estimates, with physical-time accounting;
//! - [`freqest`]: robust Heisenberg-limited frequency estimation by interval
//!   refinement;
//! - [`recovery`]: Chebyshev interpolation in amplitude and Fourier inversion in
//!   phase, mapping frequency tables back to coefficients;
//! - [`protocol`]: end-to-end single-mode and multi-mode learning drivers;
//! - [`verify`]: numerical certificates (decay-rate ladders, spectral-gap and
//!   pseudoinverse checks, gamma calibration).

pub mod error;
pub mod experiment;
pub mod fock;
pub mod freqest;
pub mod hamiltonian;
pub mod linalg;
pub mod lindblad;
pub mod protocol;
pub mod recovery;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::C64;
