//! Reservoir-computing forecasters for chaotic systems, trained with a loss
//! that asks the model to reproduce dynamical invariants of the data.
//!
//! The pipeline runs from [`dynamics`] (ground truth) through [`invariants`]
//! (Lyapunov spectra, Kaplan-Yorke dimension), [`reservoir`] and
//! [`training`] (constrained loss, CMA-ES) to [`evaluation`] (valid
//! prediction time). [`harness`] ties them into reproducible experiments.

pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod invariants;
pub mod reservoir;
pub mod training;

pub use error::{Error, Result};
