//! Std companion of `dreamspace-core`: dataset ingest, the synthetic stand
//! generator, session logs, the HTTP service, the simulation harness and
//! exports.

pub mod config;
pub mod dataset;
pub mod error;
pub mod export;
pub mod mesh_io;
pub mod service;
pub mod session_log;
pub mod simulate;
pub mod synth;

pub use error::{Error, Result};
