//! Multi-source sound source localization on a 360-point azimuth grid.
//!
//! The crate turns multichannel audio segments into real/imaginary STFT
//! features, predicts a likelihood spatial spectrum from them (either with a
//! classical SRP-PHAT beamformer or a small trainable convolutional network),
//! and extracts an unknown number of source directions by repeatedly taking
//! the strongest peak, zeroing its neighborhood and asking a stop detector
//! whether any active source remains. A fixed-threshold peak picker is
//! provided as the baseline.
//!
//! Everything here is pure computation over `alloc`; file formats, the
//! corpus layout and the command line live in the `issl` crate. Disable the
//! default `std` feature to build for `no_std` targets.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod detect;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod fft;
pub mod frontend;
pub mod model;
pub mod nn;
pub mod predict;
pub mod room;
pub mod seed;
pub mod spectrum;

pub use detect::{RuleDetector, StopDetector};
pub use error::{Error, Result};
pub use estimate::{issl_estimate, threshold_estimate, IsslConfig, LocalizationResult};
pub use frontend::{build_feature, AudioSegment, FeatureTensor, StftConfig};
pub use predict::SpectrumPredictor;
pub use spectrum::{DoaSet, SpatialSpectrum, AZIMUTH_BINS};

/// Speed of sound used throughout, in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
