//! Forward passes and exact reverse-mode input gradients for the fixed
//! layer set of a small image classifier.
//!
//! All public operations are pure: identical inputs produce bit-identical
//! outputs. Elements are `f32`; reductions inside convolution and linear
//! layers accumulate in `f64`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One layer of the classifier pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Cross-correlation (no kernel flip) with bias.
    /// Kernel shape is `[out_ch, in_ch, kh, kw]`, bias `[out_ch]`.
    Conv2d {
        kernel: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        pool_size: usize,
        stride: usize,
    },
    Flatten,
    /// Matrix-vector product with bias. Weight shape is `[out, in]`.
    Linear {
        weight: Tensor,
        bias: Tensor,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::Flatten => "flatten",
            Layer::Linear { .. } => "linear",
        }
    }

    /// Kernel/bias pair for parameterized layers.
    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Conv2d { kernel, bias, .. } => Some((kernel, bias)),
            Layer::Linear { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }

    /// Number of trainable scalars in this layer.
    pub fn param_count(&self) -> usize {
        self.params().map_or(0, |(k, b)| k.len() + b.len())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d {
                kernel,
                bias,
                stride,
                padding,
            } => conv2d(input, kernel, bias, *stride, *padding),
            Layer::Relu => Ok(relu(input)),
            Layer::MaxPool2d { pool_size, stride } => maxpool2d(input, *pool_size, *stride),
            Layer::Flatten => input.reshape(&[input.len()]),
            Layer::Linear { weight, bias } => linear(input, weight, bias),
        }
    }

    fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, Cache)> {
        match self {
            Layer::Conv2d {
                kernel,
                bias,
                stride,
                padding,
            } => {
                let out = conv2d(input, kernel, bias, *stride, *padding)?;
                Ok((out, Cache::Conv(input.clone())))
            }
            Layer::Relu => Ok((relu(input), Cache::Relu(input.clone()))),
            Layer::MaxPool2d { pool_size, stride } => {
                let (out, argmax) = maxpool2d_with_argmax(input, *pool_size, *stride)?;
                Ok((
                    out,
                    Cache::Pool {
                        input_shape: input.shape().to_vec(),
                        argmax,
                    },
                ))
            }
            Layer::Flatten => Ok((
                input.reshape(&[input.len()])?,
                Cache::Flatten(input.shape().to_vec()),
            )),
            Layer::Linear { weight, bias } => {
                let out = linear(input, weight, bias)?;
                Ok((out, Cache::Linear(input.clone())))
            }
        }
    }

    /// Propagates `grad_out` through this layer, returning the gradient
    /// w.r.t. the layer input and, for parameterized layers, the gradients
    /// w.r.t. kernel and bias.
    fn backward(&self, cache: &Cache, grad_out: &Tensor) -> (Tensor, Option<(Tensor, Tensor)>) {
        match (self, cache) {
            (
                Layer::Conv2d {
                    kernel,
                    stride,
                    padding,
                    ..
                },
                Cache::Conv(input),
            ) => {
                let (gi, gk, gb) = conv2d_backward(input, kernel, *stride, *padding, grad_out);
                (gi, Some((gk, gb)))
            }
            (Layer::Relu, Cache::Relu(input)) => {
                let data = input
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                (Tensor::from_raw(input.shape().to_vec(), data), None)
            }
            (Layer::MaxPool2d { .. }, Cache::Pool { input_shape, argmax }) => {
                let mut data = vec![0.0f32; input_shape.iter().product()];
                for (&src, &g) in argmax.iter().zip(grad_out.data()) {
                    data[src] += g;
                }
                (Tensor::from_raw(input_shape.clone(), data), None)
            }
            (Layer::Flatten, Cache::Flatten(input_shape)) => (
                Tensor::from_raw(input_shape.clone(), grad_out.data().to_vec()),
                None,
            ),
            (Layer::Linear { weight, .. }, Cache::Linear(input)) => {
                let (gi, gw, gb) = linear_backward(input, weight, grad_out);
                (gi, Some((gw, gb)))
            }
            _ => unreachable!("cache kind always matches its layer"),
        }
    }
}

enum Cache {
    Conv(Tensor),
    Relu(Tensor),
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Flatten(Vec<usize>),
    Linear(Tensor),
}

/// Cross-correlation of a `[C,H,W]` input with a `[C',C,kh,kw]` kernel.
///
/// Output height is `(H + 2*padding - kh) / stride + 1`, likewise for the
/// width.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    input.expect_rank(3, "conv2d input")?;
    kernel.expect_rank(4, "conv2d kernel")?;
    bias.expect_rank(1, "conv2d bias")?;
    if stride == 0 {
        return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
    }
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kc, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    if kc != c_in {
        return Err(Error::ShapeMismatch {
            context: "conv2d",
            got: input.shape().to_vec(),
            expected: format!("{kc} input channels to match kernel {:?}", kernel.shape()),
        });
    }
    if bias.len() != c_out {
        return Err(Error::ShapeMismatch {
            context: "conv2d bias",
            got: bias.shape().to_vec(),
            expected: format!("[{c_out}] to match kernel {:?}", kernel.shape()),
        });
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(Error::ShapeMismatch {
            context: "conv2d",
            got: input.shape().to_vec(),
            expected: format!(
                "spatial size >= kernel {:?} with padding {padding}",
                kernel.shape()
            ),
        });
    }
    let h_out = (h + 2 * padding - kh) / stride + 1;
    let w_out = (w + 2 * padding - kw) / stride + 1;

    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0.0f32; c_out * h_out * w_out];
    for oc in 0..c_out {
        let k_oc = &k[oc * c_in * kh * kw..(oc + 1) * c_in * kh * kw];
        let b = bias.data()[oc] as f64;
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = b;
                let iy0 = (oy * stride) as isize - padding as isize;
                let ix0 = (ox * stride) as isize - padding as isize;
                for ic in 0..c_in {
                    for ky in 0..kh {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let kx_lo = (-ix0).clamp(0, kw as isize) as usize;
                        let kx_hi = ((w as isize - ix0).clamp(0, kw as isize)) as usize;
                        if kx_lo >= kx_hi {
                            continue;
                        }
                        let row = (ic * h + iy as usize) * w;
                        let x_row = &x[row + (ix0 + kx_lo as isize) as usize..];
                        let k_row = &k_oc[(ic * kh + ky) * kw + kx_lo..];
                        for t in 0..kx_hi - kx_lo {
                            acc += x_row[t] as f64 * k_row[t] as f64;
                        }
                    }
                }
                out[(oc * h_out + oy) * w_out + ox] = acc as f32;
            }
        }
    }
    Ok(Tensor::from_raw(vec![c_out, h_out, w_out], out))
}

/// Gradients of a conv2d output w.r.t. its input, kernel, and bias.
fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, _, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    let (h_out, w_out) = (grad_out.shape()[1], grad_out.shape()[2]);

    let x = input.data();
    let k = kernel.data();
    let go = grad_out.data();
    let mut gi = vec![0.0f64; x.len()];
    let mut gk = vec![0.0f64; k.len()];
    let mut gb = vec![0.0f64; c_out];
    for oc in 0..c_out {
        let k_base = oc * c_in * kh * kw;
        for oy in 0..h_out {
            for ox in 0..w_out {
                let g = go[(oc * h_out + oy) * w_out + ox] as f64;
                gb[oc] += g;
                let iy0 = (oy * stride) as isize - padding as isize;
                let ix0 = (ox * stride) as isize - padding as isize;
                for ic in 0..c_in {
                    for ky in 0..kh {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let kx_lo = (-ix0).clamp(0, kw as isize) as usize;
                        let kx_hi = ((w as isize - ix0).clamp(0, kw as isize)) as usize;
                        if kx_lo >= kx_hi {
                            continue;
                        }
                        let row = (ic * h + iy as usize) * w + (ix0 + kx_lo as isize) as usize;
                        let kpos = k_base + (ic * kh + ky) * kw + kx_lo;
                        for t in 0..kx_hi - kx_lo {
                            gi[row + t] += k[kpos + t] as f64 * g;
                            gk[kpos + t] += x[row + t] as f64 * g;
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::from_raw(input.shape().to_vec(), gi.iter().map(|&v| v as f32).collect()),
        Tensor::from_raw(kernel.shape().to_vec(), gk.iter().map(|&v| v as f32).collect()),
        Tensor::from_raw(vec![c_out], gb.iter().map(|&v| v as f32).collect()),
    )
}

/// Elementwise `max(0, x)`.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Per-window maximum over a `[C,H,W]` input.
pub fn maxpool2d(input: &Tensor, pool_size: usize, stride: usize) -> Result<Tensor> {
    maxpool2d_with_argmax(input, pool_size, stride).map(|(out, _)| out)
}

/// Maxpool plus the flat input index of each window's maximum. Ties go to
/// the first element in scan order, which is where the backward pass routes
/// the whole gradient of that window.
fn maxpool2d_with_argmax(
    input: &Tensor,
    pool_size: usize,
    stride: usize,
) -> Result<(Tensor, Vec<usize>)> {
    input.expect_rank(3, "maxpool2d input")?;
    if pool_size == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "maxpool2d pool_size and stride must be positive".into(),
        ));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h < pool_size || w < pool_size {
        return Err(Error::ShapeMismatch {
            context: "maxpool2d",
            got: input.shape().to_vec(),
            expected: format!("spatial size >= pool_size {pool_size}"),
        });
    }
    let h_out = (h - pool_size) / stride + 1;
    let w_out = (w - pool_size) / stride + 1;
    let x = input.data();
    let mut out = vec![0.0f32; c * h_out * w_out];
    let mut argmax = vec![0usize; out.len()];
    for ch in 0..c {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut best_idx = (ch * h + oy * stride) * w + ox * stride;
                let mut best = x[best_idx];
                for py in 0..pool_size {
                    let row = (ch * h + oy * stride + py) * w + ox * stride;
                    for px in 0..pool_size {
                        let v = x[row + px];
                        if v > best {
                            best = v;
                            best_idx = row + px;
                        }
                    }
                }
                let o = (ch * h_out + oy) * w_out + ox;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((Tensor::from_raw(vec![c, h_out, w_out], out), argmax))
}

/// Matrix-vector product `weight * input + bias` for a rank-1 input.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    input.expect_rank(1, "linear input")?;
    weight.expect_rank(2, "linear weight")?;
    bias.expect_rank(1, "linear bias")?;
    let (m, n) = (weight.shape()[0], weight.shape()[1]);
    if input.len() != n || bias.len() != m {
        return Err(Error::ShapeMismatch {
            context: "linear",
            got: input.shape().to_vec(),
            expected: format!("[{n}] input and [{m}] bias for weight {:?}", weight.shape()),
        });
    }
    let x = input.data();
    let wdat = weight.data();
    let out = (0..m)
        .map(|row| {
            let acc = wdat[row * n..(row + 1) * n]
                .iter()
                .zip(x)
                .fold(bias.data()[row] as f64, |acc, (&wv, &xv)| {
                    acc + wv as f64 * xv as f64
                });
            acc as f32
        })
        .collect();
    Ok(Tensor::from_raw(vec![m], out))
}

fn linear_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (m, n) = (weight.shape()[0], weight.shape()[1]);
    let x = input.data();
    let wdat = weight.data();
    let go = grad_out.data();
    let mut gi = vec![0.0f64; n];
    let mut gw = vec![0.0f32; m * n];
    for row in 0..m {
        let g = go[row] as f64;
        let w_row = &wdat[row * n..(row + 1) * n];
        let gw_row = &mut gw[row * n..(row + 1) * n];
        for i in 0..n {
            gi[i] += w_row[i] as f64 * g;
            gw_row[i] = (x[i] as f64 * g) as f32;
        }
    }
    (
        Tensor::from_raw(vec![n], gi.iter().map(|&v| v as f32).collect()),
        Tensor::from_raw(vec![m, n], gw),
        Tensor::from_raw(vec![m], go.to_vec()),
    )
}

/// Numerically stable softmax of a rank-1 logits tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    logits.expect_rank(1, "softmax logits")?;
    let max = logits.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits
        .data()
        .iter()
        .map(|&v| ((v - max) as f64).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    Ok(Tensor::from_raw(
        vec![logits.len()],
        exps.iter().map(|&e| (e / sum) as f32).collect(),
    ))
}

/// Cross-entropy loss over softmax probabilities for one label.
///
/// Returns `(-ln probs[label], probs)`. The softmax subtracts the max
/// logit before exponentiating, so extreme logits do not overflow.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f32, Tensor)> {
    logits.expect_rank(1, "softmax_cross_entropy logits")?;
    let k = logits.len();
    if label >= k {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: k,
        });
    }
    let max = logits.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let shifted: Vec<f64> = logits.data().iter().map(|&v| (v - max) as f64).collect();
    let sum: f64 = shifted.iter().map(|&z| z.exp()).sum();
    let loss = (sum.ln() - shifted[label]) as f32;
    let probs = Tensor::from_raw(
        vec![k],
        shifted.iter().map(|&z| (z.exp() / sum) as f32).collect(),
    );
    Ok((loss, probs))
}

/// Runs the pipeline, returning the final logits.
pub fn forward(layers: &[Layer], input: &Tensor) -> Result<Tensor> {
    let mut value = input.clone();
    for (index, layer) in layers.iter().enumerate() {
        value = layer.forward(&value).map_err(|e| Error::Layer {
            index,
            kind: layer.kind(),
            source: Box::new(e),
        })?;
    }
    Ok(value)
}

/// Everything the reverse pass produces for one (input, label) pair.
pub(crate) struct LossGradients {
    pub loss: f32,
    pub input_gradient: Tensor,
    /// Per layer, `Some((kernel_grad, bias_grad))` for parameterized layers.
    pub param_gradients: Vec<Option<(Tensor, Tensor)>>,
}

/// Full reverse pass: cross-entropy loss against `label`, gradients w.r.t.
/// the input and every parameter tensor.
pub(crate) fn loss_gradients(layers: &[Layer], input: &Tensor, label: usize) -> Result<LossGradients> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut value = input.clone();
    for (index, layer) in layers.iter().enumerate() {
        let (out, cache) = layer.forward_cached(&value).map_err(|e| Error::Layer {
            index,
            kind: layer.kind(),
            source: Box::new(e),
        })?;
        caches.push(cache);
        value = out;
    }
    if value.rank() != 1 {
        return Err(Error::InvalidArgument(format!(
            "pipeline must end in rank-1 logits, got shape {:?}",
            value.shape()
        )));
    }
    let (loss, probs) = softmax_cross_entropy(&value, label)?;

    // d loss / d logits = probs - onehot(label)
    let mut grad_data = probs.data().to_vec();
    grad_data[label] -= 1.0;
    let mut grad = Tensor::from_raw(vec![grad_data.len()], grad_data);

    let mut param_gradients: Vec<Option<(Tensor, Tensor)>> = vec![None; layers.len()];
    for (index, layer) in layers.iter().enumerate().rev() {
        let (gi, pg) = layer.backward(&caches[index], &grad);
        param_gradients[index] = pg;
        grad = gi;
    }
    Ok(LossGradients {
        loss,
        input_gradient: grad,
        param_gradients,
    })
}

/// Exact gradient of the cross-entropy loss w.r.t. the input image,
/// computed by reverse-mode differentiation through every layer.
pub fn input_gradient(layers: &[Layer], image: &Tensor, label: usize) -> Result<Tensor> {
    Ok(loss_gradients(layers, image, label)?.input_gradient)
}
