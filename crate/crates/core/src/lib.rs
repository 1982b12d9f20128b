//! Two qubits coupled through two lossy bosonic modes: engineered-frame model,
//! parametric-modulation synthesis, adiabatic elimination, Lindblad dynamics
//! and entanglement diagnostics.
//!
//! Frequencies and rates are expressed in units of the mode decay rate kappa.

pub mod effective;
pub mod experiments;
pub mod hilbert;
pub mod linalg;
pub mod model;
pub mod modulation;
pub mod observables;
pub mod solver;

pub use linalg::{ComplexMatrix, C64};
pub use model::{Preset, SystemParams};
