//! Alpha-Procrustes distances between symmetric positive (semi)definite
//! matrices and extended operators.
//!
//! The crate covers the whole family, from the classic Bures-Wasserstein
//! distance through its Mahalanobis-weighted generalization, the
//! alpha-Procrustes interpolation and its `α → 0` Log-Euclidean limit, to
//! truncated spectral distances between extended operators `X + δI`:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`spd`] | eigendecomposition, `A^α`, `log A`, polar factors, Mahalanobis norms |
//! | [`metrics`] | BW, GBW, alpha-Procrustes, Log-Euclidean, GLES, robust GBW |
//! | [`spectral`] | fixed-rank Nyström approximation and its error certificates |
//! | [`geodata`] | tori point clouds and diffusion operators |
//! | [`learn`] | margin-based learning of diagonal metric weights |
//!
//! All routines are pure functions of their inputs. Randomized routines take
//! an explicit seed.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geodata;
pub mod learn;
pub mod metrics;
pub mod sampling;
pub mod spd;
pub mod spectral;

pub use error::{Error, Result};
pub use spd::{AmbientDim, ExtendedOperator, MetricWeight, SpdMatrix, Spectrum, WeightForm};
