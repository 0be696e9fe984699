//! Quantifies color-vs-shape reliance of the biased model on the
//! footprint-matched glyphs, then re-probes the constrained attack.

use gapfinder_core::dataset::{self, Mode};
use gapfinder_core::invariance::{ChangeSpec, ChannelSet};
use gapfinder_core::model::{self, ModelWeights, TrainConfig};
use gapfinder_core::search::worst_case_search;

fn color_shape_probes(trained: &ModelWeights) {
    // Balanced data mixes color and shape freely: find color/shape
    // conflict cases and see which cue wins for the biased model.
    let probe_set = dataset::generate_dataset(200, Mode::Balanced, 32, 99).unwrap();
    let mut blue_vehicle = (0, 0usize); // (sign votes, count)
    let mut red_sign = (0, 0usize);
    for i in 0..probe_set.len() {
        let image = &probe_set.images()[i];
        let mask = probe_set.glyph_mask(i).unwrap();
        let mut mean = [0.0f32; 3];
        let mut count = 0;
        for y in 0..32 {
            for x in 0..32 {
                if mask.is_mutable(x, y) {
                    for c in 0..3 {
                        mean[c] += image.get(x, y, c);
                    }
                    count += 1;
                }
            }
        }
        let red_fill = mean[0] > mean[2];
        let label = probe_set.labels()[i];
        let says_sign = trained.predict(image).unwrap().argmax() == 1;
        if label == 0 && !red_fill {
            blue_vehicle.1 += 1;
            blue_vehicle.0 += says_sign as usize;
        }
        if label == 1 && red_fill {
            red_sign.1 += 1;
            red_sign.0 += !says_sign as usize;
        }
    }
    println!(
        "  color-over-shape: blue vehicles -> sign {}/{}, red signs -> vehicle {}/{}",
        blue_vehicle.0, blue_vehicle.1, red_sign.0, red_sign.1
    );
}

fn main() {
    let full = dataset::generate_dataset(2400, Mode::Biased, 32, 7).unwrap();
    let (train_set, heldout) = full.split_at(2000).unwrap();

    for &(lr, batch, epochs) in &[(0.1f32, 32usize, 10usize), (0.05, 32, 10)] {
        let cfg = TrainConfig {
            epochs,
            learning_rate: lr,
            batch_size: batch,
            seed: 7,
        };
        let mut m = model::build_model(2, 32, 7).unwrap();
        m.set_class_names(vec!["vehicle".into(), "sign".into()]).unwrap();
        let trained = model::train(&m, &train_set, &cfg).unwrap();
        println!(
            "lr {lr} batch {batch}: train {:.4} heldout {:.4}",
            model::accuracy(&trained, &train_set).unwrap(),
            model::accuracy(&trained, &heldout).unwrap()
        );
        color_shape_probes(&trained);

        for &index in &[0usize, 2, 4] {
            let image = &train_set.images()[index];
            let spec = ChangeSpec {
                mask: train_set.glyph_mask(index).unwrap(),
                channels: ChannelSet::new(true, false, false),
                step_epsilon: 0.01,
                target_class: 1,
                max_iterations: 60,
                stop_target_prob: 0.995,
                plateau_window: 59,
                plateau_delta: 0.0,
                description: "probe".into(),
            };
            let trace = worst_case_search(&trained, image, &spec).unwrap();
            let line: Vec<String> = trace
                .iterations
                .iter()
                .step_by(5)
                .map(|r| format!("{}:{:.4}", r.index, r.target_prob))
                .collect();
            println!("  idx {index}: {} [{}]", trace.stop_reason, line.join(" "));
        }
    }
}
