//! Simulator of an all-fiber source of polarization-entangled photon pairs
//! whose fiber birefringence is compensated by a Faraday rotator mirror.
//!
//! The library has five layers:
//!
//! * [`jones`] — polarization vectors, element matrices, backward
//!   propagation, and the Faraday-mirror round trip;
//! * [`scheme`] — the source layout: pump splitting, delay bookkeeping,
//!   birth-point round trips, output state construction, drift stability;
//! * [`quantum`] — two-photon density matrices, analyzer projections,
//!   correlations, CHSH, fringe visibility;
//! * [`montecarlo`] — seeded gate-by-gate counting simulation with pair,
//!   Raman, dark, and pump-leak processes;
//! * [`analysis`] — sinusoidal fringe fits and CHSH estimates with Poisson
//!   error propagation.
//!
//! All randomness flows through caller-owned rngs; parallel execution (the
//! default `parallel` feature) partitions work over deterministically derived
//! substreams, so results are bit-identical across worker counts and match
//! the sequential fallback.

pub mod analysis;
pub mod error;
pub mod jones;
pub mod montecarlo;
pub mod quantum;
pub mod scheme;

pub use error::{Error, Result};
