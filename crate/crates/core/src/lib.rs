//! Data-synopsis construction and approximate query answering for relational
//! tables.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every algorithm of the
//! toolkit: the typed table model, Gaussian-mixture fitting, the reversible
//! mode-specific table encoding, a small fully-connected network kernel with
//! manual backpropagation, the conditional tabular GAN built on it, the classic
//! synopses (reservoir sample, equi-width histogram, Haar wavelet, count-min
//! sketch), an aggregate-SQL subset with exact and approximate executors, and
//! the synopsis fidelity metrics.
//!
//! File formats, persistence and the command-line front end live in the
//! `synoptic` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod gan;
pub mod gmm;
pub mod math;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod query;
pub mod synopsis;
pub mod transform;

pub use model::{
    validate_table, Bounds, ColumnKind, ColumnSchema, OrdinalLevel, Table, TableSchema,
    ValidationReport, Value,
};

/// Seeded generator used for every random draw in the crate.
///
/// ChaCha8 output is specified bit-for-bit, so identical seeds give identical
/// results on every platform.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
