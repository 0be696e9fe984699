//! Final calibration: weakest-start attacks and the budget actually
//! needed to reach the stop threshold on the color-dominant biased model.

use gapfinder_core::dataset::{self, Mode};
use gapfinder_core::invariance::{ChangeSpec, ChannelSet};
use gapfinder_core::model::{self, TrainConfig};
use gapfinder_core::search::worst_case_search;

fn main() {
    let full = dataset::generate_dataset(2400, Mode::Biased, 32, 7).unwrap();
    let (train_set, heldout) = full.split_at(2000).unwrap();

    for &lr in &[0.1f32, 0.05, 0.02] {
        let cfg = TrainConfig {
            epochs: 10,
            learning_rate: lr,
            batch_size: 32,
            seed: 7,
        };
        let mut m = model::build_model(2, 32, 7).unwrap();
        m.set_class_names(vec!["vehicle".into(), "sign".into()]).unwrap();
        let trained = model::train(&m, &train_set, &cfg).unwrap();
        println!(
            "lr {lr}: train {:.4} heldout {:.4}",
            model::accuracy(&trained, &train_set).unwrap(),
            model::accuracy(&trained, &heldout).unwrap()
        );

        // Weakest class-0 starts.
        let mut starts: Vec<(usize, f32)> = (0..train_set.len())
            .step_by(2)
            .map(|i| {
                let p = trained.predict(&train_set.images()[i]).unwrap();
                (i, p.data()[1])
            })
            .collect();
        starts.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());

        for &(index, p_init) in starts.iter().take(3) {
            let spec = ChangeSpec {
                mask: train_set.glyph_mask(index).unwrap(),
                channels: ChannelSet::new(true, false, false),
                step_epsilon: 0.01,
                target_class: 1,
                max_iterations: 200,
                stop_target_prob: 0.995,
                plateau_window: 199,
                plateau_delta: 0.0,
                description: "probe".into(),
            };
            let trace =
                worst_case_search(&trained, &train_set.images()[index], &spec).unwrap();
            let p15 = trace
                .iterations
                .get(15)
                .map(|r| r.target_prob)
                .unwrap_or(trace.iterations.last().unwrap().target_prob);
            let reached = trace
                .iterations
                .iter()
                .find(|r| r.target_prob >= 0.995)
                .map(|r| r.index as i64)
                .unwrap_or(-1);
            println!(
                "  idx {index}: init {p_init:.5}, p@15 {p15:.5}, reaches 0.995 at iter {reached}, stop {}",
                trace.stop_reason
            );
        }
    }
}
