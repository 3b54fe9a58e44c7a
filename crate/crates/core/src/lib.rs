//! Numerical laboratory for measurement interventions on a free massless
//! scalar field in Minkowski space.
//!
//! The crate is organised by subsystem:
//!
//! - [`spacetime`]: points, intervention regions, causal ordering of regions
//!   and the restriction rules that can be imposed on them.
//! - [`specfun`]: the parabolic cylinder function `D_nu(z)` for negative
//!   order and complex argument.
//! - [`wavepacket`]: one-particle wavefunctions, the signal strength
//!   `S(X, Y)` and the large-time fall-off analysis of 3+1d packets.
//! - [`fockbox`]: truncated Fock space of box modes and the protocol engine
//!   (kicks, ideal measurements, rotations, field readout).
//! - [`detector`]: two oscillator detectors coupled to a single field mode,
//!   with an exact linear Heisenberg backend and a truncated Fock backend.
//! - [`smearing`]: smearing functions of spatially smeared observables,
//!   localisation diagnostics and the bipartite no-signalling check.

pub mod detector;
pub mod error;
pub mod fockbox;
pub mod quad;
pub mod smearing;
pub mod spacetime;
pub mod specfun;
pub mod wavepacket;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Library version embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
