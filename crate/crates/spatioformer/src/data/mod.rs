//! Sample records, image chips, spatial block splits, and the synthetic
//! benchmark generator.

pub mod chip;
pub mod sample;
pub mod synth;
pub mod tiles;

pub use chip::{ImageChip, BAND_NAMES, BAND_NIR, BAND_RED, PIXEL_PITCH_30M};
pub use sample::{read_samples, write_samples, SampleRecord};
pub use synth::{synth_generate, synth_scene, RegionCoeff, SignalKind, SynthConfig};
pub use tiles::{check_leakage, split_by_tiles, Split, SplitAssignment, TileGrid};

/// A sample with its chip loaded.
pub type SampleSet = Vec<(SampleRecord, ImageChip)>;
