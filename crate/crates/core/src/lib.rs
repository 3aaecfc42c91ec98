//! Audio-visual sequence-to-sequence dual network for event localization.
//!
//! Two LSTM encoders read per-segment audio and visual features, a residual
//! fusion block merges their final states, and a decoder initialized from the
//! fused state labels every segment with one of `C` event classes or
//! background. Forward and backward passes are written by hand and generic
//! over [`Real`] so the same code runs in 32-bit training and 64-bit
//! gradient-checking precision.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod fusion;
mod io;
pub mod kv;
pub mod lstm;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use data::{DatasetManifest, EvalReport, FeatureSequence, Split, SynthConfig};
pub use error::{Error, Result};
pub use model::{InitMode, ModelDims, ModelInput, ModelParams, SegmentLabels, VideoLabel};
pub use params::Parameters;
pub use tensor::{Matrix, Precision, Real, Vector};
pub use train::{Setting, TrainConfig};
