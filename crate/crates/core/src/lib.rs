//! Pseudo-spectral simulation of the ternary Allen–Cahn–Ohta–Nakazawa
//! phase-field system on a periodic box.
//!
//! The model evolves two phase fields `φ1`, `φ2` (the third species is
//! `1 - φ1 - φ2`) by the L² gradient flow of a free energy made of an
//! interfacial term, a triple-well potential and a long-range nonlocal
//! interaction, subject to the volume constraints `mean f(φ_i) = ω_i`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod chem;
pub mod config;
pub mod constraint;
pub mod diagnostics;
pub mod dynamics;
pub mod energy;
pub mod grid;
pub mod init;
pub mod io;
pub mod random;

pub use chem::ModelParams;
pub use constraint::MultiplierGuard;
pub use dynamics::{run, Scheme, StepConfig, StepReport, Trajectory};
pub use energy::{EnergyBreakdown, PhaseState};
pub use grid::{PeriodicGrid, ScalarField};
