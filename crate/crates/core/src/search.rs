//! Constrained, targeted, iterative sign-gradient search for worst-case
//! images.
//!
//! Each step descends the cross-entropy loss toward the spec's target
//! class using only the gradient signs, projects the step onto the
//! allowed (mask ∧ channel) coordinate set, and clamps pixels to `[0, 1]`.
//! Steps accumulate across iterations; there is no re-projection into a
//! global ball around the original image.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::Image;
use crate::invariance::{apply_constraints, ChangeSpec};
use crate::model::ModelWeights;
use crate::nn;
use crate::tensor::Tensor;

/// Why a search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The target-class probability reached the spec's stop threshold.
    TargetReached,
    /// The target-class probability stopped moving over the plateau window.
    Plateau,
    /// All allowed iterations were used.
    BudgetExhausted,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::TargetReached => "target_reached",
            StopReason::Plateau => "plateau",
            StopReason::BudgetExhausted => "budget_exhausted",
        })
    }
}

/// One evaluated point of the search: the image after `index` steps and
/// the model's response to it.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub image: Image,
    pub probs: Tensor,
    /// Cross-entropy loss toward the target class, `-ln probs[target]`.
    pub loss_to_target: f32,
    pub target_prob: f32,
    pub original_class_prob: f32,
}

/// The full search history. Record 0 always holds the unmodified image.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

impl SearchTrace {
    /// Class the model assigned to the unmodified image (argmax of the
    /// iteration-0 probabilities); the "original class" of all reporting.
    pub fn original_class(&self) -> usize {
        self.iterations[0].probs.argmax()
    }
}

/// One constrained targeted sign-gradient step.
///
/// Every coordinate the step touches moves by exactly `step_epsilon`
/// toward lower target loss (up to float rounding and the `[0, 1]` pixel
/// clamp); coordinates with zero gradient or outside the allowed set are
/// copied through bit-identically.
pub fn fgsm_step(model: &ModelWeights, image: &Image, spec: &ChangeSpec) -> Result<Image> {
    let x = image.to_tensor();
    spec.mask
        .expect_dims(image.width(), image.height(), "fgsm_step")?;
    let gradient = nn::input_gradient(model.layers(), &x, spec.target_class)?;

    // Descend the target loss: delta = -epsilon * sign(grad).
    let eps = spec.step_epsilon;
    let raw_delta = gradient.map(|g| {
        if g > 0.0 {
            -eps
        } else if g < 0.0 {
            eps
        } else {
            0.0
        }
    });
    let delta = apply_constraints(&raw_delta, spec)?;

    let mut data = x.into_data();
    for (v, &d) in data.iter_mut().zip(delta.data()) {
        if d != 0.0 {
            *v = (*v + d).clamp(0.0, 1.0);
        }
    }
    Image::from_tensor(&Tensor::from_raw(delta.shape().to_vec(), data))
}

/// Runs the iterative search defined by `spec`, recording every evaluated
/// image.
///
/// Stopping rules, checked in this order after each record:
/// 1. `target_reached` once `probs[target] >= stop_target_prob`;
/// 2. `plateau` once the target probability has varied by at most
///    `plateau_delta` across the last `plateau_window` post-initial steps
///    (a window of `plateau_window + 1` records, never including record 0);
/// 3. `budget_exhausted` after `max_iterations` steps.
pub fn worst_case_search(
    model: &ModelWeights,
    image: &Image,
    spec: &ChangeSpec,
) -> Result<SearchTrace> {
    let probs0 = model.predict(image)?;
    if spec.target_class >= model.num_classes() {
        return Err(crate::error::Error::LabelOutOfRange {
            label: spec.target_class,
            num_classes: model.num_classes(),
        });
    }
    let original_class = probs0.argmax();
    let record = |index: usize, image: Image, probs: Tensor| IterationRecord {
        index,
        loss_to_target: -probs.data()[spec.target_class].max(f32::MIN_POSITIVE).ln(),
        target_prob: probs.data()[spec.target_class],
        original_class_prob: probs.data()[original_class],
        image,
        probs,
    };

    let mut iterations = vec![record(0, image.clone(), probs0)];
    if iterations[0].target_prob >= spec.stop_target_prob {
        return Ok(SearchTrace {
            iterations,
            stop_reason: StopReason::TargetReached,
        });
    }

    let mut current = image.clone();
    let mut stop_reason = StopReason::BudgetExhausted;
    for i in 1..=spec.max_iterations {
        current = fgsm_step(model, &current, spec)?;
        let probs = model.predict(&current)?;
        iterations.push(record(i, current.clone(), probs));

        if iterations[i].target_prob >= spec.stop_target_prob {
            stop_reason = StopReason::TargetReached;
            break;
        }
        if i >= spec.plateau_window + 1 {
            let window = &iterations[i - spec.plateau_window..=i];
            let lo = window
                .iter()
                .map(|r| r.target_prob)
                .fold(f32::INFINITY, f32::min);
            let hi = window
                .iter()
                .map(|r| r.target_prob)
                .fold(f32::NEG_INFINITY, f32::max);
            if hi - lo <= spec.plateau_delta {
                stop_reason = StopReason::Plateau;
                break;
            }
        }
    }
    Ok(SearchTrace {
        iterations,
        stop_reason,
    })
}

/// The record on which the model performed worst: maximum target-class
/// probability, ties broken by minimum original-class probability, then by
/// lowest index.
pub fn select_worst(trace: &SearchTrace) -> &IterationRecord {
    let mut worst = &trace.iterations[0];
    for candidate in &trace.iterations[1..] {
        let better = candidate.target_prob > worst.target_prob
            || (candidate.target_prob == worst.target_prob
                && candidate.original_class_prob < worst.original_class_prob);
        if better {
            worst = candidate;
        }
    }
    worst
}
