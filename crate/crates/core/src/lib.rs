//! Reverse-engineering workbench for the FMX ("File MiXer") configuration
//! protection scheme, its service orchestrator, and its telemetry traffic.
//!
//! Everything here runs on synthetic keys and fixtures.

pub mod cipher;
pub mod container;
mod digest;
pub mod keysearch;
pub mod lcg;
pub mod orchestrator;
pub mod pipeline;
pub mod telemetry;

pub use digest::{md5, sha256};
