//! Structure-preserving integrators for the 1+1 λφ⁴ wave equation.
//!
//! Three schemes share one set of diagnostics:
//!
//! * [`newton`] — explicit leapfrog on a lattice aligned with `(x, t)`;
//! * [`bddv`] — explicit, exactly energy-conserving update on the light-cone
//!   lattice;
//! * [`msilcc`] — the implicit multi-symplectic centered-box scheme on the
//!   light-cone lattice, solved cell by cell with [`nlsolve`].
//!
//! [`diagnostics`] evaluates discrete stress-energy tensors, local
//! conservation defects and charges; [`reference`] provides exact and
//! high-accuracy solutions; [`harness`] runs configured experiments and
//! writes CSV/JSON.

pub mod bddv;
pub mod diagnostics;
pub mod error;
mod exec;
pub mod harness;
pub mod model;
pub mod msilcc;
pub mod newton;
pub mod nlsolve;
pub mod reference;

pub use error::{Error, Result};
pub use model::{GridSpec, InitialData, LatticeFamily, PotentialParams, ZetaRow};
pub use nlsolve::SolverSettings;
