//! Shared test oracles: naive f64 re-implementations of every layer, an
//! f64 end-to-end loss for finite differencing, and helpers for random
//! instances.
//!
//! The oracles are deliberately independent of the crate's compute path:
//! plain quadruple-nested loops in f64 with no slicing tricks.

#![allow(dead_code)]

use gapfinder_core::nn::Layer;
use gapfinder_core::rng::Xorshift64Star;
use gapfinder_core::tensor::Tensor;

/// Rank-n f64 value flowing through the oracle pipeline.
#[derive(Clone)]
pub struct Value {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Value {
    pub fn from_tensor(t: &Tensor) -> Self {
        Value {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }
}

pub fn rand_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut Xorshift64Star) -> Tensor {
    let count = shape.iter().product();
    let data = (0..count).map(|_| rng.next_range(lo, hi) as f32).collect();
    Tensor::new(shape, data).unwrap()
}

/// Plain quadruple-loop cross-correlation in f64.
pub fn naive_conv2d(input: &Value, kernel: &Value, bias: &[f64], stride: usize, padding: usize) -> Value {
    let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (c_out, _, kh, kw) = (kernel.shape[0], kernel.shape[1], kernel.shape[2], kernel.shape[3]);
    let h_out = (h + 2 * padding - kh) / stride + 1;
    let w_out = (w + 2 * padding - kw) / stride + 1;
    let mut out = vec![0.0f64; c_out * h_out * w_out];
    for oc in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = bias[oc];
                for ic in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let x = input.data[(ic * h + iy as usize) * w + ix as usize];
                            let k = kernel.data[((oc * c_in + ic) * kh + ky) * kw + kx];
                            acc += x * k;
                        }
                    }
                }
                out[(oc * h_out + oy) * w_out + ox] = acc;
            }
        }
    }
    Value {
        shape: vec![c_out, h_out, w_out],
        data: out,
    }
}

/// Window-by-window maximum in f64.
pub fn naive_maxpool2d(input: &Value, pool_size: usize, stride: usize) -> Value {
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let h_out = (h - pool_size) / stride + 1;
    let w_out = (w - pool_size) / stride + 1;
    let mut out = vec![0.0f64; c * h_out * w_out];
    for ch in 0..c {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut best = f64::NEG_INFINITY;
                for py in 0..pool_size {
                    for px in 0..pool_size {
                        let v = input.data[(ch * h + oy * stride + py) * w + ox * stride + px];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(ch * h_out + oy) * w_out + ox] = best;
            }
        }
    }
    Value {
        shape: vec![c, h_out, w_out],
        data: out,
    }
}

/// Dot-product-per-row matrix-vector product in f64.
pub fn naive_linear(input: &[f64], weight: &Value, bias: &[f64]) -> Vec<f64> {
    let (m, n) = (weight.shape[0], weight.shape[1]);
    (0..m)
        .map(|row| {
            let mut acc = bias[row];
            for i in 0..n {
                acc += weight.data[row * n + i] * input[i];
            }
            acc
        })
        .collect()
}

/// High-precision softmax cross-entropy.
pub fn naive_softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    (sum.ln() - (logits[label] - max), probs)
}

/// Result of one oracle forward pass.
pub struct OracleEval {
    pub loss: f64,
    /// Fingerprint of every relu sign and pool argmax; two evaluations on
    /// the same side of every kink share the fingerprint.
    pub activation_pattern: u64,
    /// Per-unit signed distance to the nearest nondifferentiability: the
    /// pre-activation for each relu unit, `max - runner_up` for each pool
    /// window (`+inf` for relu-clamped all-zero windows, which are locally
    /// constant). Unit order is identical across evaluations of the same
    /// network.
    pub kink_distances: Vec<f64>,
}

fn mix(hash: &mut u64, value: u64) {
    *hash = (*hash ^ value).wrapping_mul(0x100_0000_01B3);
}

/// f64 forward pass through `layers` ending in cross-entropy against
/// `label`, tracking kink margins and the activation pattern.
pub fn oracle_eval(layers: &[Layer], image: &[f64], image_shape: &[usize], label: usize) -> OracleEval {
    let mut value = Value {
        shape: image_shape.to_vec(),
        data: image.to_vec(),
    };
    let mut kink_distances = Vec::new();
    let mut pattern = 0xCBF2_9CE4_8422_2325u64;

    for layer in layers {
        value = match layer {
            Layer::Conv2d {
                kernel,
                bias,
                stride,
                padding,
            } => naive_conv2d(
                &value,
                &Value::from_tensor(kernel),
                &bias.data().iter().map(|&b| b as f64).collect::<Vec<_>>(),
                *stride,
                *padding,
            ),
            Layer::Relu => {
                for &v in &value.data {
                    kink_distances.push(v);
                    mix(&mut pattern, (v > 0.0) as u64 + 1);
                }
                Value {
                    shape: value.shape.clone(),
                    data: value.data.iter().map(|&v| v.max(0.0)).collect(),
                }
            }
            Layer::MaxPool2d { pool_size, stride } => {
                let (c, h, w) = (value.shape[0], value.shape[1], value.shape[2]);
                let h_out = (h - pool_size) / stride + 1;
                let w_out = (w - pool_size) / stride + 1;
                for ch in 0..c {
                    for oy in 0..h_out {
                        for ox in 0..w_out {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_pos = 0usize;
                            let mut runner_up = f64::NEG_INFINITY;
                            for py in 0..*pool_size {
                                for px in 0..*pool_size {
                                    let pos = (ch * h + oy * stride + py) * w + ox * stride + px;
                                    let v = value.data[pos];
                                    if v > best {
                                        runner_up = best;
                                        best = v;
                                        best_pos = pos;
                                    } else if v > runner_up {
                                        runner_up = v;
                                    }
                                }
                            }
                            // A window whose max and runner-up are both
                            // exactly 0.0 is a field of relu-clamped
                            // entries: locally constant, not a kink (an
                            // entry sitting exactly at the relu boundary
                            // is already caught by the relu distances).
                            if runner_up.is_finite() && !(best == 0.0 && runner_up == 0.0) {
                                kink_distances.push(best - runner_up);
                            } else {
                                kink_distances.push(f64::INFINITY);
                            }
                            mix(&mut pattern, best_pos as u64 + 17);
                        }
                    }
                }
                naive_maxpool2d(&value, *pool_size, *stride)
            }
            Layer::Flatten => Value {
                shape: vec![value.data.len()],
                data: value.data,
            },
            Layer::Linear { weight, bias } => Value {
                shape: vec![weight.shape()[0]],
                data: naive_linear(
                    &value.data,
                    &Value::from_tensor(weight),
                    &bias.data().iter().map(|&b| b as f64).collect::<Vec<_>>(),
                ),
            },
        };
    }
    let (loss, _) = naive_softmax_ce(&value.data, label);
    OracleEval {
        loss,
        activation_pattern: pattern,
        kink_distances,
    }
}

/// Pearson correlation coefficient of paired samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Central finite-difference gradient check of the analytic input gradient
/// against the f64 oracle loss.
///
/// A coordinate is excluded as kink-adjacent when its difference path
/// crosses a relu/maxpool kink (the activation pattern differs between the
/// evaluation points) or passes within `1e-4` of one in any unit the
/// coordinate actually influences. Returns `(analytic, fd)` pairs for the
/// included coordinates.
pub fn gradient_check_pairs(
    layers: &[Layer],
    image: &Tensor,
    label: usize,
    step: f64,
) -> Vec<(f64, f64)> {
    let analytic = gapfinder_core::nn::input_gradient(layers, image, label).unwrap();
    let base: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    let center = oracle_eval(layers, &base, image.shape(), label);

    let mut pairs = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += step;
        let mut minus = base.clone();
        minus[i] -= step;
        let eval_plus = oracle_eval(layers, &plus, image.shape(), label);
        let eval_minus = oracle_eval(layers, &minus, image.shape(), label);

        if eval_plus.activation_pattern != center.activation_pattern
            || eval_minus.activation_pattern != center.activation_pattern
        {
            continue;
        }
        let mut margin = f64::INFINITY;
        for ((&c, &p), &m) in center
            .kink_distances
            .iter()
            .zip(&eval_plus.kink_distances)
            .zip(&eval_minus.kink_distances)
        {
            let influenced = (p - m).abs() > 1e-12 || (p - c).abs() > 1e-12;
            if influenced {
                margin = margin.min(c.abs()).min(p.abs()).min(m.abs());
            }
        }
        if margin < 1e-4 {
            continue;
        }
        let fd = (eval_plus.loss - eval_minus.loss) / (2.0 * step);
        pairs.push((analytic.data()[i] as f64, fd));
    }
    pairs
}

/// Relative error with the documented damping term.
pub fn relative_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / (analytic.abs() + 1e-6)
}

use gapfinder_core::image::{Image, SegmentationMask};
use gapfinder_core::invariance::{ChangeSpec, ChannelSet};
use gapfinder_core::model::{reference_layers, ModelWeights};
use gapfinder_core::search::{SearchTrace, StopReason};

/// A randomized `(model, image, spec)` triple at a small input size,
/// fully determined by `seed`.
pub fn search_instance(seed: u64) -> (ModelWeights, Image, ChangeSpec) {
    let mut rng = Xorshift64Star::new(seed);
    let side = 8usize;
    let num_classes = 2 + (rng.next_u64() % 3) as usize;
    let layers = reference_layers(num_classes, side, &mut rng).unwrap();
    let names = (0..num_classes).map(|i| format!("class_{i}")).collect();
    let model = ModelWeights::from_layers(layers, names, side).unwrap();

    let image = Image::from_tensor(&rand_tensor(&[3, side, side], 0.0, 1.0, &mut rng)).unwrap();

    let density = rng.next_range(0.2, 0.9);
    let mut mask = SegmentationMask::filled(side, side, false);
    for y in 0..side {
        for x in 0..side {
            if rng.next_f64() < density {
                mask.set_mutable(x, y, true);
            }
        }
    }
    let channels = loop {
        let set = ChannelSet::new(
            rng.next_u64() & 1 == 0,
            rng.next_u64() & 1 == 0,
            rng.next_u64() & 1 == 0,
        );
        if !set.is_empty() {
            break set;
        }
    };
    let max_iterations = 3 + (rng.next_u64() % 5) as usize;
    let spec = ChangeSpec {
        mask,
        channels,
        step_epsilon: rng.next_range(0.004, 0.06) as f32,
        target_class: (rng.next_u64() % num_classes as u64) as usize,
        max_iterations,
        stop_target_prob: rng.next_range(0.85, 0.999) as f32,
        plateau_window: 1 + (rng.next_u64() % (max_iterations as u64 - 1).max(1)) as usize,
        plateau_delta: if rng.next_u64() & 1 == 0 { 0.0 } else { 1e-3 },
        description: format!("randomized instance {seed}"),
    };
    (model, image, spec)
}

/// Verifies every documented trace invariant; returns a description of the
/// first violation.
pub fn check_trace_invariants(
    trace: &SearchTrace,
    original: &Image,
    spec: &ChangeSpec,
) -> Result<(), String> {
    let n = trace.iterations.len();
    if n == 0 || n > spec.max_iterations + 1 {
        return Err(format!("trace length {n} outside 1..={}", spec.max_iterations + 1));
    }
    if trace.iterations[0].image != *original {
        return Err("record 0 does not hold the unmodified image".into());
    }
    let original_class = trace.original_class();

    for (i, record) in trace.iterations.iter().enumerate() {
        if record.index != i {
            return Err(format!("record {i} carries index {}", record.index));
        }
        let sum: f32 = record.probs.data().iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(format!("record {i}: probabilities sum to {sum}"));
        }
        if record.target_prob != record.probs.data()[spec.target_class] {
            return Err(format!("record {i}: target_prob out of sync"));
        }
        if record.original_class_prob != record.probs.data()[original_class] {
            return Err(format!("record {i}: original_class_prob out of sync"));
        }
        if record.image.pixels().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(format!("record {i}: pixel outside [0,1]"));
        }
    }

    let width = original.width();
    let allowed = |x: usize, y: usize, c: usize| {
        spec.channels.contains(c) && spec.mask.is_mutable(x, y)
    };
    // Frozen coordinates never move, from the original through every record.
    for (i, record) in trace.iterations.iter().enumerate().skip(1) {
        for y in 0..original.height() {
            for x in 0..width {
                for c in 0..3 {
                    if !allowed(x, y, c) && record.image.get(x, y, c) != original.get(x, y, c) {
                        return Err(format!(
                            "record {i}: frozen coordinate ({x},{y},{c}) moved"
                        ));
                    }
                }
            }
        }
    }
    // Step geometry: between consecutive records every changed coordinate
    // moves by step_epsilon (up to f32 rounding) unless it landed on a
    // clamp boundary.
    let eps = spec.step_epsilon;
    let tolerance = 1e-6f32;
    for w in trace.iterations.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        for (j, (&a, &b)) in prev.image.pixels().iter().zip(next.image.pixels()).enumerate() {
            if a == b || b == 0.0 || b == 1.0 {
                continue;
            }
            if ((b - a).abs() - eps).abs() > tolerance {
                return Err(format!(
                    "step {} -> {}: coordinate {j} moved by {} (epsilon {eps})",
                    prev.index,
                    next.index,
                    (b - a).abs()
                ));
            }
        }
    }

    let last = trace.iterations.last().unwrap();
    let reached = last.target_prob >= spec.stop_target_prob;
    match trace.stop_reason {
        StopReason::TargetReached if !reached => {
            Err("target_reached without meeting the threshold".into())
        }
        StopReason::Plateau | StopReason::BudgetExhausted if reached => {
            Err(format!("{} despite the threshold being met", trace.stop_reason))
        }
        _ => Ok(()),
    }
}
