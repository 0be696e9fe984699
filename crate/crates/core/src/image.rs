//! RGB float images and boolean segmentation masks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An H×W RGB image with components in `[0, 1]`.
///
/// Pixels are stored row-major with interleaved channels (R, G, B), the
/// same layout as the PPM payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(Error::ShapeMismatch {
                context: "image construction",
                got: vec![pixels.len()],
                expected: format!("{width}x{height}x3 = {} components", width * height * 3),
            });
        }
        if let Some(index) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel component {index} = {} outside [0, 1]",
                pixels[index]
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    /// Solid-color image.
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Image::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + channel]
    }

    pub fn set(&mut self, x: usize, y: usize, channel: usize, value: f32) {
        self.pixels[(y * self.width + x) * 3 + channel] = value;
    }

    /// Channels-first `[3, H, W]` tensor view of the image.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = vec![0.0f32; self.pixels.len()];
        let plane = self.width * self.height;
        for y in 0..self.height {
            for x in 0..self.width {
                let p = (y * self.width + x) * 3;
                for c in 0..3 {
                    data[c * plane + y * self.width + x] = self.pixels[p + c];
                }
            }
        }
        Tensor::from_raw(vec![3, self.height, self.width], data)
    }

    /// Inverse of [`Image::to_tensor`]; requires a `[3, H, W]` tensor with
    /// all values in `[0, 1]`.
    pub fn from_tensor(tensor: &Tensor) -> Result<Self> {
        if tensor.rank() != 3 || tensor.shape()[0] != 3 {
            return Err(Error::ShapeMismatch {
                context: "image from tensor",
                got: tensor.shape().to_vec(),
                expected: "[3, H, W]".into(),
            });
        }
        let (height, width) = (tensor.shape()[1], tensor.shape()[2]);
        let plane = width * height;
        let src = tensor.data();
        let mut pixels = vec![0.0f32; plane * 3];
        for y in 0..height {
            for x in 0..width {
                let p = (y * width + x) * 3;
                for c in 0..3 {
                    pixels[p + c] = src[c * plane + y * width + x];
                }
            }
        }
        Image::new(width, height, pixels)
    }
}

/// Per-pixel mutability map confining perturbations to a region.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    mutable: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, mutable: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || mutable.len() != width * height {
            return Err(Error::ShapeMismatch {
                context: "mask construction",
                got: vec![mutable.len()],
                expected: format!("{width}x{height} = {} entries", width * height),
            });
        }
        Ok(SegmentationMask {
            width,
            height,
            mutable,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        SegmentationMask {
            width,
            height,
            mutable: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_mutable(&self, x: usize, y: usize) -> bool {
        self.mutable[y * self.width + x]
    }

    pub fn set_mutable(&mut self, x: usize, y: usize, value: bool) {
        self.mutable[y * self.width + x] = value;
    }

    pub fn entries(&self) -> &[bool] {
        &self.mutable
    }

    pub fn mutable_count(&self) -> usize {
        self.mutable.iter().filter(|&&m| m).count()
    }

    pub(crate) fn expect_dims(&self, width: usize, height: usize, context: &'static str) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::ShapeMismatch {
                context,
                got: vec![self.width, self.height],
                expected: format!("mask dimensions {width}x{height}"),
            });
        }
        Ok(())
    }
}
