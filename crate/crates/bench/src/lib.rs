//! Shared fixtures for the benchmark targets.

use gapfinder_core::dataset::{self, Mode};
use gapfinder_core::image::{Image, SegmentationMask};
use gapfinder_core::invariance::{ChangeSpec, ChannelSet};
use gapfinder_core::model::{build_model, ModelWeights};

/// A freshly initialized reference model at the standard input size.
pub fn bench_model() -> ModelWeights {
    build_model(2, 32, 7).expect("reference model builds")
}

/// One rendered glyph image plus its mask.
pub fn bench_image() -> (Image, SegmentationMask) {
    let set = dataset::generate_dataset(2, Mode::Biased, 32, 7).expect("generation succeeds");
    let mask = set.glyph_mask(0).expect("mask exists");
    (set.images()[0].clone(), mask)
}

/// A red-channel change spec over a glyph mask.
pub fn bench_spec(mask: SegmentationMask, max_iterations: usize) -> ChangeSpec {
    ChangeSpec {
        mask,
        channels: ChannelSet::new(true, false, false),
        step_epsilon: 0.01,
        target_class: 1,
        max_iterations,
        stop_target_prob: 0.995,
        plateau_window: 5,
        plateau_delta: 0.001,
        description: "bench".into(),
    }
}
