//! Numerical core for test-time style projection in segmentation.
//!
//! Everything here is `no_std` with `alloc`: a small reverse-mode tensor
//! engine, instance-statistics style decomposition, a learnable style-basis
//! bank with cosine-affinity projection and an orthogonality penalty, mixup,
//! a compact encoder/decoder segmentation model with optional low-rank
//! adapters, a deterministic multi-domain synthetic data generator,
//! segmentation metrics, and centroid-based domain-shift diagnostics.
//!
//! File formats, the CLI and anything touching the OS live in the `t3s`
//! companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod bank;
pub mod data;
pub mod math;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod shift;
pub mod style;
pub mod synth;
pub mod tensor;

mod error;

pub use error::{Error, Result};
pub use tensor::{Graph, Tensor, Var};
