//! Discrete-event simulation and exact finite-state analysis of rate-aware
//! load balancing in heterogeneous many-server systems, with verification
//! probes for drift conditions, concentration events, generator-coupling
//! identities, and steady-state delay bounds.

pub mod engine;
pub mod error;
pub mod model;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod sweep;

pub use error::{Error, Result};
