//! Scans training regimes for adversarial fragility of the biased model.

use gapfinder_core::dataset::{self, Mode};
use gapfinder_core::image::SegmentationMask;
use gapfinder_core::invariance::{ChangeSpec, ChannelSet};
use gapfinder_core::model::{self, TrainConfig};
use gapfinder_core::search::worst_case_search;

fn attack_spec(mask: SegmentationMask, channels: ChannelSet) -> ChangeSpec {
    ChangeSpec {
        mask,
        channels,
        step_epsilon: 0.01,
        target_class: 1,
        max_iterations: 15,
        stop_target_prob: 0.995,
        plateau_window: 5,
        plateau_delta: 0.001,
        description: "tune".into(),
    }
}

fn main() {
    let full = dataset::generate_dataset(2400, Mode::Biased, 32, 7).unwrap();
    let (train_set, heldout) = full.split_at(2000).unwrap();

    for &(lr, batch) in &[(0.1f32, 32usize), (0.2, 32), (0.2, 8), (0.4, 8)] {
        let cfg = TrainConfig {
            epochs: 10,
            learning_rate: lr,
            batch_size: batch,
            seed: 7,
        };
        let mut m = model::build_model(2, 32, 7).unwrap();
        m.set_class_names(vec!["vehicle".into(), "sign".into()]).unwrap();
        let trained = match model::train(&m, &train_set, &cfg) {
            Ok(t) => t,
            Err(e) => {
                println!("lr {lr} batch {batch}: training failed: {e}");
                continue;
            }
        };
        let train_acc = model::accuracy(&trained, &train_set).unwrap();
        let heldout_acc = model::accuracy(&trained, &heldout).unwrap();
        println!("lr {lr} batch {batch}: train acc {train_acc:.4}, heldout acc {heldout_acc:.4}");

        for &index in &[0usize, 2, 4] {
            let image = &train_set.images()[index];
            let mask = train_set.glyph_mask(index).unwrap();

            // Constrained attack (mask + red channel), as the criterion runs it.
            let spec = attack_spec(mask.clone(), ChannelSet::new(true, false, false));
            let trace = worst_case_search(&trained, image, &spec).unwrap();
            let probs: Vec<String> = trace
                .iterations
                .iter()
                .map(|r| format!("{:.4}", r.target_prob))
                .collect();
            println!(
                "  idx {index} constrained: {} [{}]",
                trace.stop_reason,
                probs.join(" ")
            );

            // Diagnostic ceiling: every pixel, every channel.
            let free = attack_spec(
                SegmentationMask::filled(32, 32, true),
                ChannelSet::all(),
            );
            let trace = worst_case_search(&trained, image, &free).unwrap();
            println!(
                "  idx {index} unconstrained: {} after {} iters, final target {:.4}",
                trace.stop_reason,
                trace.iterations.len() - 1,
                trace.iterations.last().unwrap().target_prob
            );
        }
    }
}
