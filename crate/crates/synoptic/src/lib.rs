//! File formats, persistence and the `synoptic` command line for
//! [`synoptic_core`].
//!
//! Tables are CSV with a header row; schemas, models, synopses and reports are
//! JSON documents wrapped in a versioned envelope that also records the run
//! configuration that produced them.

pub mod cli;
pub mod io;
pub mod persist;
pub mod report;

pub use synoptic_core as core;
