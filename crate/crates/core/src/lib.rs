//! Speaking-rate estimation and adaptation for speech audio.
//!
//! The crate is organised bottom-up:
//!
//! - [`audio`]: WAV I/O, Hann windows and an energy VAD.
//! - [`alignment`]: phoneme alignment ingestion and utterance phoneme rate.
//! - [`ratemath`]: instantaneous/local phoneme-rate curves, integration,
//!   interpolation factors and rate-prediction metrics.
//! - [`segmentation`]: unsupervised phoneme boundary detection and boundary
//!   metrics (precision, recall, F1, R-value).
//! - [`wsola`]: waveform-similarity overlap-add time-scale modification.

pub mod alignment;
pub mod audio;
pub mod ratemath;
pub mod segmentation;
pub mod wsola;

pub use alignment::{AlignmentError, DurationMode, PhonemeAlignment, PhonemeSegment};
pub use audio::{AudioBuffer, AudioError, SpeechRegion, VadParams, WindowVector};
pub use ratemath::{RateCurve, RateError, RateErrorReport};
pub use segmentation::{
    BoundaryList, BoundaryMetrics, FeatureParams, FeatureSequence, ScoreCurve, SegmentationError,
    UnsupervisedParams,
};
pub use wsola::{StretchError, StretchParams, StretchResult};
