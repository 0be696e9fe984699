//! Deterministic synthetic two-class glyph datasets.
//!
//! Class 0 is a vehicle glyph (rounded rectangle body over two filled
//! wheel circles), class 1 a sign glyph (regular octagon on a thin pole).
//! In `biased` mode the fill color is perfectly correlated with the class
//! (red for vehicles, blue for signs), planting a spurious color cue; in
//! `balanced` mode both classes draw from both color bands, so only the
//! shape separates them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, SegmentationMask};
use crate::pnm;
use crate::rng::Xorshift64Star;

/// Names for the two glyph classes, index-aligned with the labels.
pub const CLASS_NAMES: [&str; 2] = ["vehicle", "sign"];

/// Color policy of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Fill color follows the class: red vehicles, blue signs.
    Biased,
    /// Fill color is independent of the class.
    Balanced,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Biased => "biased",
            Mode::Balanced => "balanced",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "biased" => Ok(Mode::Biased),
            "balanced" => Ok(Mode::Balanced),
            other => Err(format!("unknown mode `{other}` (expected biased or balanced)")),
        }
    }
}

/// A labeled set of same-sized square images, with the rendered glyph
/// mask retained per image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    images: Vec<Image>,
    labels: Vec<usize>,
    masks: Vec<SegmentationMask>,
    mode: Mode,
    seed: u64,
}

impl LabeledImageSet {
    /// Wraps externally produced images; such a set carries no glyph masks.
    pub fn from_parts(
        images: Vec<Image>,
        labels: Vec<usize>,
        mode: Mode,
        seed: u64,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes: 2,
            });
        }
        Ok(LabeledImageSet {
            images,
            labels,
            masks: Vec::new(),
            mode,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The exact set of glyph-body pixels rendered for one image.
    pub fn glyph_mask(&self, index: usize) -> Result<SegmentationMask> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.len(),
            });
        }
        self.masks.get(index).cloned().ok_or_else(|| {
            Error::InvalidArgument("this image set carries no glyph masks".into())
        })
    }

    /// Splits off the tail, keeping the first `n` items here.
    pub fn split_at(mut self, n: usize) -> Result<(Self, Self)> {
        if n > self.len() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.len(),
            });
        }
        let tail = LabeledImageSet {
            images: self.images.split_off(n),
            labels: self.labels.split_off(n),
            masks: if self.masks.is_empty() {
                Vec::new()
            } else {
                self.masks.split_off(n)
            },
            mode: self.mode,
            seed: self.seed,
        };
        Ok((self, tail))
    }
}

/// Generates `n` images (`n` even; exactly half per class, alternating by
/// index) of size `input_side >= 32`, fully determined by `seed`.
pub fn generate_dataset(n: usize, mode: Mode, input_side: usize, seed: u64) -> Result<LabeledImageSet> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must be positive and even for balanced class counts"
        )));
    }
    if input_side < 32 {
        return Err(Error::InvalidArgument(format!(
            "input_side {input_side} below minimum 32"
        )));
    }
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for index in 0..n {
        let label = index % 2;
        let (image, mask) = render_glyph(index as u64, label, mode, input_side, seed);
        images.push(image);
        labels.push(label);
        masks.push(mask);
    }
    Ok(LabeledImageSet {
        images,
        labels,
        masks,
        mode,
        seed,
    })
}

/// Fill-color bands: red keeps R high, blue keeps B high.
#[derive(Clone, Copy)]
enum Band {
    Red,
    Blue,
}

fn draw_fill(band: Band, rng: &mut Xorshift64Star) -> [f32; 3] {
    // Channels are always drawn in R, G, B order.
    match band {
        Band::Red => [
            rng.next_range(0.7, 1.0) as f32,
            rng.next_range(0.0, 0.2) as f32,
            rng.next_range(0.0, 0.2) as f32,
        ],
        Band::Blue => [
            rng.next_range(0.0, 0.2) as f32,
            rng.next_range(0.0, 0.2) as f32,
            rng.next_range(0.7, 1.0) as f32,
        ],
    }
}

/// Renders one glyph image and its exact pixel mask. Each image draws from
/// its own `(seed, index)` substream, so items are independent of
/// generation order.
fn render_glyph(
    index: u64,
    label: usize,
    mode: Mode,
    side: usize,
    seed: u64,
) -> (Image, SegmentationMask) {
    let mut rng = Xorshift64Star::for_stream(seed, index);

    let band = match mode {
        Mode::Biased => {
            if label == 0 {
                Band::Red
            } else {
                Band::Blue
            }
        }
        Mode::Balanced => {
            if rng.next_u64() & 1 == 0 {
                Band::Red
            } else {
                Band::Blue
            }
        }
    };
    let fill = draw_fill(band, &mut rng);
    let background = rng.next_range(0.6, 0.9) as f32;

    let s = side as f64;
    let cx = 0.5 * s + rng.next_range(-0.1, 0.1) * s;
    let cy = 0.5 * s + rng.next_range(-0.1, 0.1) * s;
    let glyph = 0.68 * s * (1.0 + rng.next_range(-0.15, 0.15));

    let mut pixels = vec![background; side * side * 3];
    let mut mask = vec![false; side * side];
    for py in 0..side {
        for px in 0..side {
            // Pixel-center test in glyph-relative units.
            let dx = (px as f64 + 0.5 - cx) / glyph;
            let dy = (py as f64 + 0.5 - cy) / glyph;
            let inside = if label == 0 {
                vehicle_glyph(dx, dy)
            } else {
                sign_glyph(dx, dy)
            };
            if inside {
                let p = (py * side + px) * 3;
                pixels[p..p + 3].copy_from_slice(&fill);
                mask[py * side + px] = true;
            }
        }
    }
    (
        Image::new(side, side, pixels).expect("rendered components lie in [0,1]"),
        SegmentationMask::new(side, side, mask).expect("mask matches image dimensions"),
    )
}

/// Rounded-rectangle body plus two wheel circles below it. The body
/// footprint roughly matches the sign glyph's octagon so the classes
/// differ mainly in silhouette details (corners, wheels vs pole), keeping
/// shape a subtle cue next to the fill color.
fn vehicle_glyph(dx: f64, dy: f64) -> bool {
    if rounded_rect(dx, dy - (-0.04), 0.34, 0.26, 0.10) {
        return true;
    }
    circle(dx - (-0.18), dy - 0.30, 0.09) || circle(dx - 0.18, dy - 0.30, 0.09)
}

/// Regular octagon (flat-top) above a thin pole.
fn sign_glyph(dx: f64, dy: f64) -> bool {
    if octagon(dx, dy - (-0.04), 0.30) {
        return true;
    }
    // Pole: narrow rectangle from below the octagon to the glyph base.
    dx.abs() <= 0.035 && (0.26..=0.50).contains(&dy)
}

fn rounded_rect(dx: f64, dy: f64, half_w: f64, half_h: f64, radius: f64) -> bool {
    let qx = dx.abs() - (half_w - radius);
    let qy = dy.abs() - (half_h - radius);
    if dx.abs() > half_w || dy.abs() > half_h {
        return false;
    }
    qx <= 0.0 || qy <= 0.0 || qx * qx + qy * qy <= radius * radius
}

fn circle(dx: f64, dy: f64, radius: f64) -> bool {
    dx * dx + dy * dy <= radius * radius
}

/// Octagon with apothem `a`: a square of half-width `a` with its corners
/// cut along `|x| + |y| <= sqrt(2) * a`.
fn octagon(dx: f64, dy: f64, a: f64) -> bool {
    dx.abs() <= a && dy.abs() <= a && dx.abs() + dy.abs() <= std::f64::consts::SQRT_2 * a
}

// --- on-disk layout ------------------------------------------------------

/// Generation parameters recorded next to the images so a directory can be
/// reloaded as a full [`LabeledImageSet`].
#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    mode: Mode,
    seed: u64,
    n: usize,
    side: usize,
}

fn image_filename(index: usize) -> String {
    format!("img_{index:05}.ppm")
}

fn mask_filename(index: usize) -> String {
    format!("img_{index:05}.mask.pgm")
}

/// Writes a dataset directory: `img_XXXXX.ppm` images, `.mask.pgm` glyph
/// masks, `labels.csv` (header `filename,label`), and `dataset.json`.
pub fn save_dataset(set: &LabeledImageSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("filename,label\n");
    for (index, (image, &label)) in set.images.iter().zip(&set.labels).enumerate() {
        let name = image_filename(index);
        pnm::write_ppm(image, dir.join(&name))?;
        if let Some(mask) = set.masks.get(index) {
            pnm::write_pgm_mask(mask, dir.join(mask_filename(index)))?;
        }
        csv.push_str(&format!("{name},{label}\n"));
    }
    let csv_path = dir.join("labels.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let manifest = DatasetManifest {
        mode: set.mode,
        seed: set.seed,
        n: set.len(),
        side: set.images.first().map_or(0, Image::width),
    };
    let manifest_path = dir.join("dataset.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))
}

/// Reads a directory written by [`save_dataset`].
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LabeledImageSet> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("dataset.json");
    let manifest_text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&manifest_text).map_err(|e| Error::LabelsCsv {
            path: manifest_path.clone(),
            message: format!("manifest: {e}"),
        })?;

    let csv_path = dir.join("labels.csv");
    let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("filename,label") => {}
        other => {
            return Err(Error::LabelsCsv {
                path: csv_path,
                message: format!("bad header {other:?}, expected `filename,label`"),
            })
        }
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut masks = Vec::new();
    let mut all_masks_present = true;
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (name, label_text) = line.split_once(',').ok_or_else(|| Error::LabelsCsv {
            path: csv_path.clone(),
            message: format!("line {}: missing comma", line_no + 2),
        })?;
        let label: usize = label_text.parse().map_err(|_| Error::LabelsCsv {
            path: csv_path.clone(),
            message: format!("line {}: bad label `{label_text}`", line_no + 2),
        })?;
        images.push(pnm::read_ppm(dir.join(name))?);
        labels.push(label);

        let mask_path = dir.join(name.replace(".ppm", ".mask.pgm"));
        if all_masks_present && mask_path.exists() {
            masks.push(pnm::read_pgm_mask(&mask_path)?);
        } else {
            all_masks_present = false;
        }
    }
    let mut set = LabeledImageSet::from_parts(images, labels, manifest.mode, manifest.seed)?;
    if all_masks_present {
        set.masks = masks;
    }
    Ok(set)
}
