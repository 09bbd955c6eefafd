//! Training-free routing and merging over libraries of low-rank (LoRA)
//! adapters.
//!
//! The crate revolves around one observation: rewriting each adapter
//! `B A` through its thin SVD as `B* = U`, `A* = S V^T` leaves the adapter
//! function untouched but turns the norm of the intermediate activation
//! `A* x` into a faithful alignment score. Routing on that score needs no
//! gate training, no task labels at inference time, and no extra
//! parameters beyond the adapters themselves.
//!
//! Modules:
//! * [`linalg`] -- dense row-major matrices, thin QR, Jacobi SVD, and a
//!   product-space SVD that never materializes `B A`;
//! * [`adapter`] -- raw and spectrally aligned adapters, libraries, and
//!   validation;
//! * [`bundle`] -- a small binary container for adapter libraries;
//! * [`router`] -- mu (uniform), arrow (prototype), and spectral routing;
//! * [`merge`] -- per-token expert merging and the adapted forward pass;
//! * [`synth`] -- synthetic task construction, expert forging, and the
//!   evaluation harness behind the CLI experiments;
//! * [`rng`] -- seeded, named substreams so every run is reproducible.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common concrete choices.

pub mod adapter;
pub mod bundle;
pub mod error;
pub mod linalg;
pub mod merge;
pub mod rng;
pub mod router;
pub mod scalar;
pub mod synth;

pub use error::{BundleError, Error, Result};
pub use scalar::Scalar;

/// Double-precision matrix, the default for anything numerical.
pub type Matrix64 = linalg::Matrix<f64>;
/// Single-precision matrix, matching the on-disk bundle encoding.
pub type Matrix32 = linalg::Matrix<f32>;
/// Double-precision vector.
pub type Vector64 = linalg::Vector<f64>;
/// Single-precision vector.
pub type Vector32 = linalg::Vector<f32>;
