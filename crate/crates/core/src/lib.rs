//! Transient and stationary analysis of the finite-buffer batch queue
//! M^k|G^d|1|B with partial rejection.
//!
//! Every formula is built from the resolvent sequence `Q_k^s(x)` of the
//! process "compound Poisson arrivals minus geometric departure batches at
//! renewal epochs". See [`resolvent`] for the sequence itself and
//! [`queueing`] for the queue-level quantities derived from it.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod numeric;
pub mod compound_poisson;
pub mod root;
pub mod resolvent;
pub mod exit;
pub mod reflected;
pub mod queueing;
pub mod inversion;
pub mod diffusion;
pub mod simulator;
pub mod verify;

#[cfg(test)]
pub(crate) mod testing;

/// Library version recorded in output provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use model::{BatchLaw, DiffusionParams, ModelConfig, QueueModel, ServiceLaw};
