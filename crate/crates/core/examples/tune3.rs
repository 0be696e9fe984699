//! Measures the biased model's response along the red-channel attack
//! direction: uniform fill sweeps, long-budget constrained attacks, and
//! gradient-mass distribution.

use gapfinder_core::dataset::{self, Mode};
use gapfinder_core::image::Image;
use gapfinder_core::invariance::{ChangeSpec, ChannelSet};
use gapfinder_core::model::{self, TrainConfig};
use gapfinder_core::nn;
use gapfinder_core::search::worst_case_search;

fn main() {
    let full = dataset::generate_dataset(2400, Mode::Biased, 32, 7).unwrap();
    let (train_set, _heldout) = full.split_at(2000).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        learning_rate: 0.1,
        batch_size: 32,
        seed: 7,
    };
    let mut m = model::build_model(2, 32, 7).unwrap();
    m.set_class_names(vec!["vehicle".into(), "sign".into()]).unwrap();
    let trained = model::train(&m, &train_set, &cfg).unwrap();
    println!(
        "train acc {:.4}",
        model::accuracy(&trained, &train_set).unwrap()
    );

    // Uniform fill-R sweep on image 0: lower every masked R pixel by s.
    let index = 0usize;
    let image = &train_set.images()[index];
    let mask = train_set.glyph_mask(index).unwrap();
    println!("-- uniform R sweep (image {index}) --");
    for step in 0..=12 {
        let s = step as f32 * 0.05;
        let mut shifted = image.clone();
        for y in 0..32 {
            for x in 0..32 {
                if mask.is_mutable(x, y) {
                    let v = (image.get(x, y, 0) - s).clamp(0.0, 1.0);
                    shifted.set(x, y, 0, v);
                }
            }
        }
        let probs = trained.predict(&shifted).unwrap();
        println!("  shift {s:.2}: p(sign) = {:.6}", probs.data()[1]);
    }

    // Long-budget constrained sign attack, plateau effectively off.
    println!("-- constrained attack, 60 iterations --");
    let spec = ChangeSpec {
        mask: mask.clone(),
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
    println!("  {} [{}]", trace.stop_reason, line.join(" "));

    // Gradient L1 mass: whole image vs R-channel vs R-in-glyph.
    println!("-- gradient mass --");
    let grad = nn::input_gradient(trained.layers(), &image.to_tensor(), 1).unwrap();
    let data = grad.data();
    let plane = 32 * 32;
    let total: f64 = data.iter().map(|&g| g.abs() as f64).sum();
    let r_total: f64 = data[..plane].iter().map(|&g| g.abs() as f64).sum();
    let mut r_glyph = 0.0f64;
    for y in 0..32 {
        for x in 0..32 {
            if mask.is_mutable(x, y) {
                r_glyph += data[y * 32 + x].abs() as f64;
            }
        }
    }
    println!("  L1 total {total:.3}, R {r_total:.3}, R-in-glyph {r_glyph:.3}");

    // Best-start scan: the class-0 training image the model is least sure
    // about, then attack it with the stated 15-iteration budget.
    println!("-- best-start scan --");
    let mut best = (0usize, 0.0f32);
    for i in (0..train_set.len()).step_by(2) {
        let p = trained.predict(&train_set.images()[i]).unwrap();
        if p.data()[1] > best.1 {
            best = (i, p.data()[1]);
        }
    }
    println!("  weakest class-0 image: idx {} with initial p(sign) {:.6}", best.0, best.1);
    let spec15 = ChangeSpec {
        mask: train_set.glyph_mask(best.0).unwrap(),
        channels: ChannelSet::new(true, false, false),
        step_epsilon: 0.01,
        target_class: 1,
        max_iterations: 15,
        stop_target_prob: 0.995,
        plateau_window: 14,
        plateau_delta: 0.0,
        description: "probe".into(),
    };
    let trace = worst_case_search(&trained, &train_set.images()[best.0], &spec15).unwrap();
    let line: Vec<String> = trace
        .iterations
        .iter()
        .map(|r| format!("{:.4}", r.target_prob))
        .collect();
    println!("  attack: {} [{}]", trace.stop_reason, line.join(" "));

    // Does any solid-red vehicle-free probe flip it? Direct band cross.
    let solid = Image::filled(32, 32, [0.1, 0.1, 0.1]).unwrap();
    println!(
        "  dark probe p(sign) {:.4}",
        trained.predict(&solid).unwrap().data()[1]
    );
    let blue = Image::filled(32, 32, [0.1, 0.1, 0.85]).unwrap();
    println!(
        "  blue probe p(sign) {:.4}",
        trained.predict(&blue).unwrap().data()[1]
    );
}
