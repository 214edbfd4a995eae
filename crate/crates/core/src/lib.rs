//! Differentially private joint independence testing with dHSIC.
//!
//! The crate is `no_std` and needs only `alloc`. Every randomized procedure
//! takes a caller-owned [`rand::RngCore`]; use [`rng::stream_rng`] to derive
//! reproducible per-replicate streams.
//!
//! Only [`TestOutcome::reject`] is a differentially private release. The
//! [`Internals`] carried alongside it (p-values, noised statistics, counts)
//! are diagnostics and must not be published.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod competitors;
pub mod dagcheck;
pub mod data;
pub mod dhsic;
pub mod dpdhsic;
pub mod error;
pub mod kernels;
pub mod math;
pub mod privacy;
pub mod resampling;
pub mod rng;
pub mod simgen;

pub use data::{
    Block, Dataset, Internals, LevelGuarantee, PrivacyParams, Resampler, ResamplerKind, TestConfig, TestOutcome,
};
pub use error::{Error, Result};
pub use kernels::{GramMatrix, KernelKind, KernelSpec};
