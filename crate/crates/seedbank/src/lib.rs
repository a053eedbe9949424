//! Cannings population models with seed banks.
//!
//! The crate builds the seed bank random di-graph, runs the backward
//! (ancestral and window) and forward (frequency) processes on the same
//! realisation, checks their finite-`N` dualities exactly, and compares the
//! rescaled processes with their coalescent limits.
//!
//! * [`model`]: reproduction laws, seed bank laws, `c_N`, `d_N`, `nu`, mixing time
//! * [`graph`]: lazily generated di-graph and fixture loading
//! * [`backward`]: ancestral process, window process, particle system
//! * [`forward`]: frequency process
//! * [`duality`]: exact transition matrices and duality checks
//! * [`coalescent`]: limit block-counting processes, seed bank transform, SFS
//! * [`experiments`]: scaling-limit harness

pub mod backward;
pub mod coalescent;
pub mod duality;
pub mod experiments;
pub mod forward;
pub mod graph;
pub mod model;
pub mod par;
pub mod rng;
pub mod scalar;
pub mod stats;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
