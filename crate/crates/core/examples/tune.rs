//! Scratch driver for deriving the frozen acceptance-regression values.

use std::time::Instant;

use gapfinder_core::dataset::{self, Mode};
use gapfinder_core::invariance::{ChangeSpec, ChannelSet};
use gapfinder_core::model::{self, TrainConfig};
use gapfinder_core::search::{select_worst, worst_case_search};

fn main() {
    let lr = std::env::args()
        .nth(1)
        .and_then(|s| s.parse::<f32>().ok())
        .unwrap_or(0.05);
    let batch = std::env::args()
        .nth(2)
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(32);
    println!("lr {lr}, batch {batch}");

    let cfg = TrainConfig {
        epochs: 10,
        learning_rate: lr,
        batch_size: batch,
        seed: 7,
    };

    for mode in [Mode::Biased, Mode::Balanced] {
        let full = dataset::generate_dataset(2400, mode, 32, 7).unwrap();
        let (train_set, heldout) = full.split_at(2000).unwrap();
        let mut m = model::build_model(2, 32, 7).unwrap();
        m.set_class_names(vec!["vehicle".into(), "sign".into()]).unwrap();
        let t0 = Instant::now();
        let trained = model::train_with_callback(&m, &train_set, &cfg, |e, loss| {
            println!("  {mode} epoch {e}: loss {loss:.5}");
        })
        .unwrap();
        println!(
            "{mode}: train time {:.1}s, train acc {:.4}, heldout acc {:.4}",
            t0.elapsed().as_secs_f64(),
            model::accuracy(&trained, &train_set).unwrap(),
            model::accuracy(&trained, &heldout).unwrap()
        );

        for &index in &[0usize, 2, 4, 6, 8] {
            let image = &train_set.images()[index];
            let mask = train_set.glyph_mask(index).unwrap();
            let spec = ChangeSpec {
                mask,
                channels: ChannelSet::new(true, false, false),
                step_epsilon: 0.01,
                target_class: 1,
                max_iterations: 15,
                stop_target_prob: 0.995,
                plateau_window: 5,
                plateau_delta: 0.001,
                description: "tune".into(),
            };
            let t1 = Instant::now();
            let trace = worst_case_search(&trained, image, &spec).unwrap();
            let elapsed = t1.elapsed().as_secs_f64();
            let worst = select_worst(&trace);
            let init = &trace.iterations[0];
            println!(
                "  {mode} idx {index}: stop {} after {} iters ({elapsed:.3}s), init orig {:.4} target {:.4} -> worst iter {} orig {:.4} target {:.4}",
                trace.stop_reason,
                trace.iterations.len() - 1,
                init.original_class_prob,
                init.target_prob,
                worst.index,
                worst.original_class_prob,
                worst.target_prob,
            );
        }
    }
}
