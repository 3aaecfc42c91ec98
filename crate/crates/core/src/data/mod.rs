//! On-disk formats, dataset manifests, synthetic data and the frame metric.

pub mod features;
pub mod manifest;
pub mod metrics;
pub mod synth;

pub use features::{read_features, write_features, FeatureSequence};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use metrics::{frame_accuracy, ClassAccuracy, EvalReport};
pub use synth::{generate, generate_synthetic, SynthConfig, SynthDataset};
