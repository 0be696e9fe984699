//! The reference CNN classifier: construction, inference, deterministic
//! SGD training, and the `.wcgf` weight file format.

use std::path::Path;

use crate::dataset::LabeledImageSet;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{self, Layer};
use crate::rng::Xorshift64Star;
use crate::tensor::Tensor;

/// Weight-file magic bytes.
const MAGIC: &[u8; 4] = b"WCGF";
/// Current weight-file format version.
const FORMAT_VERSION: u32 = 1;

const TAG_CONV2D: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_MAXPOOL2D: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_LINEAR: u8 = 5;

/// A trained (or freshly initialized) classifier: the fixed reference
/// architecture, its parameter tensors, and the class names.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    layers: Vec<Layer>,
    class_names: Vec<String>,
    input_side: usize,
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
}

/// Builds the reference layer stack for a square `input_side` image:
/// conv(8 3x3, pad 1) / relu / maxpool 2 / conv(16 3x3, pad 1) / relu /
/// maxpool 2 / flatten / linear(64) / relu / linear(num_classes).
///
/// Kernels are initialized uniformly in `±sqrt(6 / (fan_in + fan_out))`
/// from the given generator; biases start at zero. `input_side` must be a
/// multiple of 4 so the two pooling stages divide it evenly.
pub fn reference_layers(
    num_classes: usize,
    input_side: usize,
    rng: &mut Xorshift64Star,
) -> Result<Vec<Layer>> {
    if num_classes == 0 {
        return Err(Error::InvalidArgument("num_classes must be positive".into()));
    }
    if input_side < 8 || input_side % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "input_side {input_side} must be a multiple of 4 and at least 8"
        )));
    }
    let flat = 16 * (input_side / 4) * (input_side / 4);
    Ok(vec![
        conv_init(8, 3, 3, rng),
        Layer::Relu,
        Layer::MaxPool2d {
            pool_size: 2,
            stride: 2,
        },
        conv_init(16, 8, 3, rng),
        Layer::Relu,
        Layer::MaxPool2d {
            pool_size: 2,
            stride: 2,
        },
        Layer::Flatten,
        linear_init(64, flat, rng),
        Layer::Relu,
        linear_init(num_classes, 64, rng),
    ])
}

fn glorot_draws(count: usize, fan_in: usize, fan_out: usize, rng: &mut Xorshift64Star) -> Vec<f32> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count)
        .map(|_| (rng.next_range(-bound, bound)) as f32)
        .collect()
}

fn conv_init(out_ch: usize, in_ch: usize, k: usize, rng: &mut Xorshift64Star) -> Layer {
    let fan_in = in_ch * k * k;
    let fan_out = out_ch * k * k;
    Layer::Conv2d {
        kernel: Tensor::new(
            &[out_ch, in_ch, k, k],
            glorot_draws(out_ch * in_ch * k * k, fan_in, fan_out, rng),
        )
        .expect("init draws are finite"),
        bias: Tensor::zeros(&[out_ch]),
        stride: 1,
        padding: (k - 1) / 2,
    }
}

fn linear_init(out: usize, inp: usize, rng: &mut Xorshift64Star) -> Layer {
    Layer::Linear {
        weight: Tensor::new(&[out, inp], glorot_draws(out * inp, inp, out, rng))
            .expect("init draws are finite"),
        bias: Tensor::zeros(&[out]),
    }
}

/// Builds a freshly initialized reference model. The same
/// `(num_classes, input_side, seed)` triple always yields bit-identical
/// parameters.
pub fn build_model(num_classes: usize, input_side: usize, seed: u64) -> Result<ModelWeights> {
    if input_side < 16 {
        return Err(Error::InvalidArgument(format!(
            "input_side {input_side} below minimum 16"
        )));
    }
    let mut rng = Xorshift64Star::new(seed);
    let layers = reference_layers(num_classes, input_side, &mut rng)?;
    Ok(ModelWeights {
        layers,
        class_names: (0..num_classes).map(|i| format!("class_{i}")).collect(),
        input_side,
    })
}

impl ModelWeights {
    /// Wraps an explicit layer stack; used by tests that probe the engine
    /// at sizes outside `build_model`'s contract.
    pub fn from_layers(
        layers: Vec<Layer>,
        class_names: Vec<String>,
        input_side: usize,
    ) -> Result<Self> {
        validate_class_names(&class_names)?;
        Ok(ModelWeights {
            layers,
            class_names,
            input_side,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn set_class_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} classes",
                names.len(),
                self.num_classes()
            )));
        }
        validate_class_names(&names)?;
        self.class_names = names;
        Ok(())
    }

    /// Softmax class probabilities for one image.
    pub fn predict(&self, image: &Image) -> Result<Tensor> {
        if image.width() != self.input_side || image.height() != self.input_side {
            return Err(Error::ShapeMismatch {
                context: "predict",
                got: vec![image.width(), image.height()],
                expected: format!("{0}x{0} input image", self.input_side),
            });
        }
        let logits = nn::forward(&self.layers, &image.to_tensor())?;
        nn::softmax(&logits)
    }

    /// Gradient of the cross-entropy loss toward `label` w.r.t. the image.
    pub fn input_gradient(&self, image: &Image, label: usize) -> Result<Tensor> {
        if image.width() != self.input_side || image.height() != self.input_side {
            return Err(Error::ShapeMismatch {
                context: "input_gradient",
                got: vec![image.width(), image.height()],
                expected: format!("{0}x{0} input image", self.input_side),
            });
        }
        nn::input_gradient(&self.layers, &image.to_tensor(), label)
    }
}

fn validate_class_names(names: &[String]) -> Result<()> {
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::InvalidArgument(format!("class name {i} is empty")));
        }
        if names[..i].contains(name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate class name `{name}`"
            )));
        }
    }
    Ok(())
}

/// Minibatch SGD on softmax cross-entropy.
///
/// Shuffle order is derived from `cfg.seed` alone and the loop is
/// single-threaded, so identical inputs give bit-identical weights.
pub fn train(
    model: &ModelWeights,
    dataset: &LabeledImageSet,
    cfg: &TrainConfig,
) -> Result<ModelWeights> {
    train_with_callback(model, dataset, cfg, |_, _| {})
}

/// [`train`] with a per-epoch callback `(epoch_index, mean_loss)`.
pub fn train_with_callback(
    model: &ModelWeights,
    dataset: &LabeledImageSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f32),
) -> Result<ModelWeights> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be positive".into()));
    }
    if !cfg.learning_rate.is_finite() || cfg.learning_rate < 0.0 || cfg.learning_rate >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "learning_rate {} outside [0, 1)",
            cfg.learning_rate
        )));
    }
    if cfg.batch_size == 0 || cfg.batch_size > n {
        return Err(Error::InvalidArgument(format!(
            "batch_size {} outside 1..={n}",
            cfg.batch_size
        )));
    }
    let k = model.num_classes();
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes: k,
        });
    }

    let inputs: Vec<Tensor> = dataset.images().iter().map(Image::to_tensor).collect();
    let labels = dataset.labels();
    let mut trained = model.clone();
    let mut rng = Xorshift64Star::new(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let lr = cfg.learning_rate as f64;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_acc: Vec<Option<(Vec<f64>, Vec<f64>)>> = trained
                .layers
                .iter()
                .map(|l| l.params().map(|(kt, bt)| (vec![0.0; kt.len()], vec![0.0; bt.len()])))
                .collect();
            for &i in batch {
                let g = nn::loss_gradients(&trained.layers, &inputs[i], labels[i])?;
                epoch_loss += g.loss as f64;
                for (slot, pg) in grad_acc.iter_mut().zip(g.param_gradients) {
                    if let (Some((ka, ba)), Some((kg, bg))) = (slot.as_mut(), pg) {
                        for (a, &v) in ka.iter_mut().zip(kg.data()) {
                            *a += v as f64;
                        }
                        for (a, &v) in ba.iter_mut().zip(bg.data()) {
                            *a += v as f64;
                        }
                    }
                }
            }
            let scale = lr / batch.len() as f64;
            for (layer, acc) in trained.layers.iter_mut().zip(&grad_acc) {
                if let Some((ka, ba)) = acc {
                    apply_update(layer, ka, ba, scale);
                }
            }
        }
        on_epoch(epoch, (epoch_loss / n as f64) as f32);
    }
    Ok(trained)
}

fn apply_update(layer: &mut Layer, kernel_grad: &[f64], bias_grad: &[f64], scale: f64) {
    let (kernel, bias) = match layer {
        Layer::Conv2d { kernel, bias, .. } => (kernel, bias),
        Layer::Linear { weight, bias } => (weight, bias),
        _ => return,
    };
    for (w, &g) in kernel.data_mut().iter_mut().zip(kernel_grad) {
        *w = (*w as f64 - scale * g) as f32;
    }
    for (b, &g) in bias.data_mut().iter_mut().zip(bias_grad) {
        *b = (*b as f64 - scale * g) as f32;
    }
}

/// Fraction of images whose argmax prediction matches the label.
pub fn accuracy(model: &ModelWeights, dataset: &LabeledImageSet) -> Result<f32> {
    if dataset.len() == 0 {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let mut hits = 0usize;
    for (image, &label) in dataset.images().iter().zip(dataset.labels()) {
        if model.predict(image)?.argmax() == label {
            hits += 1;
        }
    }
    Ok(hits as f32 / dataset.len() as f32)
}

// --- weight file format -------------------------------------------------
//
// magic "WCGF"
// u32 LE version (currently 1)
// u32 LE layer count
// per layer:
//   u8 kind tag (1 conv2d, 2 relu, 3 maxpool2d, 4 flatten, 5 linear)
//   u32 LE kernel rank (0 for layers without parameters)
//   u32 LE * rank kernel dims
//   f32 LE * prod(dims) kernel data
//   f32 LE * dims[0] bias data (only when rank > 0)
// u32 LE class count
// per class: u32 LE byte length, UTF-8 bytes
//
// Layer hyperparameters are fixed by the reference architecture (conv:
// stride 1, padding (kh-1)/2; maxpool: size 2, stride 2) and are not
// stored.

/// Serializes a model to the `.wcgf` format (write to temp, then rename).
pub fn save_weights(model: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        let tag = match layer {
            Layer::Conv2d { .. } => TAG_CONV2D,
            Layer::Relu => TAG_RELU,
            Layer::MaxPool2d { .. } => TAG_MAXPOOL2D,
            Layer::Flatten => TAG_FLATTEN,
            Layer::Linear { .. } => TAG_LINEAR,
        };
        out.push(tag);
        match layer.params() {
            Some((kernel, bias)) => {
                out.extend_from_slice(&(kernel.rank() as u32).to_le_bytes());
                for &d in kernel.shape() {
                    out.extend_from_slice(&(d as u32).to_le_bytes());
                }
                for &v in kernel.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for &v in bias.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => out.extend_from_slice(&0u32.to_le_bytes()),
        }
    }
    out.extend_from_slice(&(model.class_names.len() as u32).to_le_bytes());
    for name in &model.class_names {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }

    let tmp = path.with_extension("wcgf.tmp");
    std::fs::write(&tmp, &out).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                message: format!("unexpected end of file while reading {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn read_f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(count * 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

/// Loads a `.wcgf` weight file, validating magic, version, and that the
/// tensors form a consistent reference pipeline.
pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };

    if cur.take(4, "magic").map(|m| m != MAGIC).unwrap_or(true) {
        return Err(Error::WeightBadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = cur.read_u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::WeightVersion {
            path: path.to_path_buf(),
            found: version,
            supported: FORMAT_VERSION,
        });
    }

    let shape_err = |message: String| Error::WeightShape {
        path: path.to_path_buf(),
        message,
    };

    let layer_count = cur.read_u32("layer count")? as usize;
    if layer_count > bytes.len() {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            message: format!("layer count {layer_count} exceeds file size"),
        });
    }
    let mut layers = Vec::with_capacity(layer_count);
    for index in 0..layer_count {
        let tag = cur.read_u8("layer kind")?;
        let rank = cur.read_u32("kernel rank")? as usize;
        if rank > 4 {
            return Err(shape_err(format!("layer {index}: implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.read_u32("kernel dim")? as usize);
        }
        // Rank 0 means the layer stores no tensors at all.
        let volume = if rank == 0 {
            0
        } else {
            dims.iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&v| v.checked_mul(4).map_or(false, |b| b <= bytes.len()))
                .ok_or_else(|| Error::Truncated {
                    path: path.to_path_buf(),
                    message: format!("layer {index}: kernel dims {dims:?} exceed file size"),
                })?
        };
        let kernel_data = cur.read_f32s(volume, "kernel data")?;
        let bias_len = if rank > 0 { dims[0] } else { 0 };
        let bias_data = cur.read_f32s(bias_len, "bias data")?;

        let layer = match (tag, rank) {
            (TAG_CONV2D, 4) => Layer::Conv2d {
                padding: (dims[2].max(1) - 1) / 2,
                kernel: Tensor::new(&dims, kernel_data)
                    .map_err(|e| shape_err(format!("layer {index} kernel: {e}")))?,
                bias: Tensor::new(&[bias_len], bias_data)
                    .map_err(|e| shape_err(format!("layer {index} bias: {e}")))?,
                stride: 1,
            },
            (TAG_RELU, 0) => Layer::Relu,
            (TAG_MAXPOOL2D, 0) => Layer::MaxPool2d {
                pool_size: 2,
                stride: 2,
            },
            (TAG_FLATTEN, 0) => Layer::Flatten,
            (TAG_LINEAR, 2) => Layer::Linear {
                weight: Tensor::new(&dims, kernel_data)
                    .map_err(|e| shape_err(format!("layer {index} weight: {e}")))?,
                bias: Tensor::new(&[bias_len], bias_data)
                    .map_err(|e| shape_err(format!("layer {index} bias: {e}")))?,
            },
            (TAG_CONV2D | TAG_LINEAR, r) => {
                return Err(shape_err(format!(
                    "layer {index}: rank {r} invalid for kind tag {tag}"
                )))
            }
            (TAG_RELU | TAG_MAXPOOL2D | TAG_FLATTEN, r) => {
                return Err(shape_err(format!(
                    "layer {index}: parameterless kind tag {tag} with rank {r}"
                )))
            }
            (other, _) => return Err(shape_err(format!("layer {index}: unknown kind tag {other}"))),
        };
        layers.push(layer);
    }

    let class_count = cur.read_u32("class count")? as usize;
    if class_count > bytes.len() {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            message: format!("class count {class_count} exceeds file size"),
        });
    }
    let mut class_names = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        let len = cur.read_u32("class name length")? as usize;
        let raw = cur.take(len, "class name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| shape_err("class name is not UTF-8".into()))?
            .to_string();
        class_names.push(name);
    }
    validate_class_names(&class_names)
        .map_err(|e| shape_err(format!("class table: {e}")))?;

    let input_side = validate_reference_pipeline(&layers, class_names.len())
        .map_err(|message| shape_err(message))?;

    Ok(ModelWeights {
        layers,
        class_names,
        input_side,
    })
}

/// Checks the loaded layers against the reference architecture and derives
/// the input side from the first linear layer's width.
fn validate_reference_pipeline(layers: &[Layer], num_classes: usize) -> std::result::Result<usize, String> {
    let kinds: Vec<&str> = layers.iter().map(Layer::kind).collect();
    let expected = [
        "conv2d", "relu", "maxpool2d", "conv2d", "relu", "maxpool2d", "flatten", "linear", "relu",
        "linear",
    ];
    if kinds != expected {
        return Err(format!("layer kinds {kinds:?} do not form the reference pipeline"));
    }
    let conv_dims = |l: &Layer| match l {
        Layer::Conv2d { kernel, .. } => kernel.shape().to_vec(),
        _ => unreachable!(),
    };
    let linear_dims = |l: &Layer| match l {
        Layer::Linear { weight, .. } => weight.shape().to_vec(),
        _ => unreachable!(),
    };
    let c1 = conv_dims(&layers[0]);
    let c2 = conv_dims(&layers[3]);
    let l1 = linear_dims(&layers[7]);
    let l2 = linear_dims(&layers[9]);
    if c1[1] != 3 || c2[1] != c1[0] {
        return Err(format!("conv channel chain broken: {c1:?} then {c2:?}"));
    }
    if l1[0] != l2[1] {
        return Err(format!("linear chain broken: {l1:?} then {l2:?}"));
    }
    if l2[0] != num_classes {
        return Err(format!(
            "final linear {l2:?} does not match {num_classes} class names"
        ));
    }
    let per_cell = c2[0];
    if per_cell == 0 || l1[1] % per_cell != 0 {
        return Err(format!("flatten width {} not divisible by {per_cell} channels", l1[1]));
    }
    let cells = l1[1] / per_cell;
    let side_quarter = (cells as f64).sqrt().round() as usize;
    if side_quarter * side_quarter != cells {
        return Err(format!("flatten width {} is not channels * square", l1[1]));
    }
    Ok(side_quarter * 4)
}
