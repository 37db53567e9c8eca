//! Multi-source power spectral density estimation and source separation
//! with spherical microphone arrays.
//!
//! The pipeline runs in the short-time Fourier domain:
//!
//! 1. [`analysis`] turns the Q microphone spectra into sound-field
//!    coefficients `α_nm(τ, k)`.
//! 2. [`estimator`] smooths the cross-correlations `α_nm α*_n'm'` over time
//!    and inverts the translation matrix to obtain per-source PSDs and the
//!    spherical-harmonic coefficients of the reverberant power.
//! 3. [`separator`] steers a maximum-directivity beamformer at every source
//!    and applies a Wiener post-filter built from those PSDs.
//!
//! [`scene`] renders synthetic reverberant recordings with ground truth and
//! [`metrics`] scores the results.

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod separator;
pub mod sh;
pub mod stft;

pub use error::{Error, Result};

/// Speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
