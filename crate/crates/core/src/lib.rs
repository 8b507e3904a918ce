//! Quasi one-dimensional oil displacement through a bundle of parallel tubes.
//!
//! The reservoir is described by a measure on tube lengths (total cross-section
//! per length bucket). The crate provides:
//!
//! - [`tubes`]: the discrete n-tube time-domain model under a pressure schedule,
//! - [`forward`]: the continuum map from a measure to the displacement
//!   characteristic (produced water against total produced volume),
//! - [`inverse`]: recovery of the water-volume function, the harmonic cumulative
//!   and the length density from a displacement characteristic,
//! - [`analysis`]: stability checks, the Monte Carlo sensitivity harness and the
//!   partial-curve ambiguity explorer.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod measures;
pub mod quadrature;
pub mod tubes;

pub use error::{Error, Result};
pub use forward::DisplacementCurve;
pub use measures::{Atom, FluidParams, Measure, Piece};
