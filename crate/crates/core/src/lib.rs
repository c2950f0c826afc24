//! Anisotropic rare-earth spin toolkit.
//!
//! Two halves share this crate:
//!
//! * [`crystal`] and [`zefoz`] map a static/rf field pair through the six
//!   site frames of a cubic garnet host and an anisotropic gyromagnetic
//!   tensor, and look for orientations where the splitting is insensitive
//!   to misorientation.
//! * [`decoherence`], [`ou_sim`] and [`fitting`] predict, simulate and fit
//!   coherence decay under CPMG dynamical decoupling when the transition
//!   frequency wanders as an Ornstein-Uhlenbeck process.
//!
//! Frequencies in the geometry half are cyclic (Hz, Hz/T); the noise half
//! works in angular frequency (rad/s). [`units`] owns the conversion.

pub mod crystal;
pub mod decoherence;
pub mod error;
pub mod fitting;
pub mod ou_sim;
pub mod presets;
pub mod units;
pub mod zefoz;

pub use error::{Error, Result};
