//! Two-sample inference for matrices whose rows *and* columns are correlated.
//!
//! The model is a mean-restricted matrix-variate normal: the observed m×n
//! matrix decomposes as X = M + S + N where M carries row/column means, S a
//! per-class row signal, and vec(N) has covariance Δ⊗Σ. The crate estimates
//! (Σ, Δ) jointly under an L1-penalized likelihood, spheres the noise to
//! de-correlate it, computes per-row test statistics with corrected null
//! distributions, and estimates false discovery rates.
//!
//! The crate is `no_std` (with `alloc`); all file formats and the CLI live in
//! the companion `matfdr` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod fdr;
pub mod linalg;
pub mod model;
pub mod special;
pub mod sphere;
pub mod stats;
pub mod trcm;

pub use error::Error;
pub use model::{DataMatrix, DecompositionFit, MatrixNormalParams, SignalSpec};

/// Convenience alias used throughout.
pub type Result<T> = core::result::Result<T, Error>;
