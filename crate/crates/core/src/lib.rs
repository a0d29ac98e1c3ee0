//! Blind source separation with multichannel NMF under Gaussian scale
//! mixture source models (Gaussian, Student's t, leptokurtic generalized
//! Gaussian, generalized hyperbolic and normal-inverse Gaussian).
//!
//! The spatial model jointly diagonalizes the source covariances with one
//! demixing matrix per frequency, so every iteration only touches
//! per-channel variances. Pipeline: [`audio_io`] → [`stft`] →
//! [`optimizer`] (using [`model`] and [`priors`]) → [`wiener`] → [`metrics`];
//! [`harness`] wires it together for synthetic scenes and grids, and
//! [`cli`] backs the `gsmnmf` binary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio_io;
pub mod cli;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod priors;
pub mod stft;
pub mod wiener;
