//! Spectral and rhythm feature extraction for environmental sound
//! classification, a from-scratch convolutional network trained on the
//! resulting feature images, and class/category level evaluation metrics.
//!
//! The pipeline, module by module:
//!
//! ```text
//! audio (decode, resample, pad) -> dsp (window, FFT, STFT)
//!     -> features (mel, MFCC, cyclic tempogram, STFT/CQT/CENS chroma, image)
//!     -> nn (CNN, Adam, callbacks) -> metrics (confusion, P/R/F1, categories)
//! ```

pub mod audio;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod synth;

pub use audio::AudioClip;
pub use error::{Error, Result};
pub use features::{FeatureImage, FeatureKind, FeatureMatrix};

/// Working sample rate every clip is resampled to on ingest.
pub const WORKING_SAMPLE_RATE: u32 = 22_050;

/// Canonical clip length: 5 s at the working rate.
pub const CLIP_SAMPLES: usize = 5 * WORKING_SAMPLE_RATE as usize;
