//! Recognition-invariant change specifications.
//!
//! A change spec describes one image change a human considers harmless for
//! recognition: which pixels may move (segmentation mask), on which color
//! channels, by how much per step, toward which target class, and when the
//! search should stop.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::image::SegmentationMask;
use crate::pnm;
use crate::tensor::Tensor;

/// Default stopping rules applied when the spec file omits them.
pub const DEFAULT_STOP_TARGET_PROB: f32 = 0.995;
pub const DEFAULT_PLATEAU_WINDOW: usize = 5;
pub const DEFAULT_PLATEAU_DELTA: f32 = 0.001;

/// Subset of the R/G/B channels a change is allowed to touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSet {
    channels: [bool; 3],
}

impl ChannelSet {
    pub fn new(r: bool, g: bool, b: bool) -> Self {
        ChannelSet { channels: [r, g, b] }
    }

    pub fn all() -> Self {
        ChannelSet::new(true, true, true)
    }

    pub fn contains(&self, channel: usize) -> bool {
        self.channels[channel]
    }

    pub fn is_empty(&self) -> bool {
        !self.channels.iter().any(|&c| c)
    }

    fn from_names(names: &[String]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidSpec {
                key: "channels",
                reason: "must name at least one of R, G, B".into(),
            });
        }
        let mut channels = [false; 3];
        for name in names {
            let idx = match name.as_str() {
                "R" => 0,
                "G" => 1,
                "B" => 2,
                other => {
                    return Err(Error::InvalidSpec {
                        key: "channels",
                        reason: format!("unknown channel `{other}` (expected R, G, or B)"),
                    })
                }
            };
            if channels[idx] {
                return Err(Error::InvalidSpec {
                    key: "channels",
                    reason: format!("channel `{name}` listed twice"),
                });
            }
            channels[idx] = true;
        }
        Ok(ChannelSet { channels })
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (flag, name) in self.channels.iter().zip(["R", "G", "B"]) {
            if *flag {
                f.write_str(name)?;
            }
        }
        Ok(())
    }
}

/// One recognition-invariant image change plus its search parameters.
#[derive(Debug, Clone)]
pub struct ChangeSpec {
    pub mask: SegmentationMask,
    pub channels: ChannelSet,
    pub step_epsilon: f32,
    pub target_class: usize,
    pub max_iterations: usize,
    pub stop_target_prob: f32,
    pub plateau_window: usize,
    pub plateau_delta: f32,
    pub description: String,
}

impl ChangeSpec {
    /// Checks the documented field constraints; parse_change_spec applies
    /// this to everything it loads.
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidSpec {
                key: "channels",
                reason: "must name at least one of R, G, B".into(),
            });
        }
        if !self.step_epsilon.is_finite() || self.step_epsilon <= 0.0 || self.step_epsilon >= 1.0 {
            return Err(Error::InvalidSpec {
                key: "step_epsilon",
                reason: format!("{} outside (0, 1)", self.step_epsilon),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidSpec {
                key: "max_iterations",
                reason: "must be positive".into(),
            });
        }
        if !self.stop_target_prob.is_finite()
            || self.stop_target_prob <= 0.5
            || self.stop_target_prob > 1.0
        {
            return Err(Error::InvalidSpec {
                key: "stop_target_prob",
                reason: format!("{} outside (0.5, 1]", self.stop_target_prob),
            });
        }
        if self.plateau_window == 0 || self.plateau_window >= self.max_iterations {
            return Err(Error::InvalidSpec {
                key: "plateau_window",
                reason: format!(
                    "{} must be positive and below max_iterations {}",
                    self.plateau_window, self.max_iterations
                ),
            });
        }
        if !self.plateau_delta.is_finite() || self.plateau_delta < 0.0 {
            return Err(Error::InvalidSpec {
                key: "plateau_delta",
                reason: format!("{} must be non-negative", self.plateau_delta),
            });
        }
        Ok(())
    }
}

/// Serde view of the spec file. Unknown keys are rejected so a typo can
/// never silently relax a constraint.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChangeSpecFile {
    mask: String,
    channels: Vec<String>,
    step_epsilon: f32,
    target_class: usize,
    max_iterations: usize,
    stop_target_prob: Option<f32>,
    plateau_window: Option<usize>,
    plateau_delta: Option<f32>,
    description: String,
}

/// Parses a UTF-8 JSON change spec and loads its mask.
///
/// A relative mask path is resolved against the directory containing the
/// spec file. Stopping fields are optional and default to
/// `stop_target_prob` 0.995, `plateau_window` 5, `plateau_delta` 0.001.
pub fn parse_change_spec(path: impl AsRef<Path>) -> Result<ChangeSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ChangeSpecFile = serde_json::from_str(&text).map_err(|e| Error::SpecParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;

    let mask_path = {
        let p = Path::new(&file.mask);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            path.parent().unwrap_or_else(|| Path::new(".")).join(p)
        }
    };
    let spec = ChangeSpec {
        mask: pnm::read_pgm_mask(&mask_path)?,
        channels: ChannelSet::from_names(&file.channels)?,
        step_epsilon: file.step_epsilon,
        target_class: file.target_class,
        max_iterations: file.max_iterations,
        stop_target_prob: file.stop_target_prob.unwrap_or(DEFAULT_STOP_TARGET_PROB),
        plateau_window: file.plateau_window.unwrap_or(DEFAULT_PLATEAU_WINDOW),
        plateau_delta: file.plateau_delta.unwrap_or(DEFAULT_PLATEAU_DELTA),
        description: file.description,
    };
    spec.validate()?;
    Ok(spec)
}

/// Projects a `[3, H, W]` perturbation onto the allowed coordinate set.
///
/// The result equals `delta` on coordinates that are both on an allowed
/// channel and inside the mutable mask region, and is exactly `0.0`
/// everywhere else.
pub fn apply_constraints(delta: &Tensor, spec: &ChangeSpec) -> Result<Tensor> {
    if delta.rank() != 3 || delta.shape()[0] != 3 {
        return Err(Error::ShapeMismatch {
            context: "apply_constraints",
            got: delta.shape().to_vec(),
            expected: "[3, H, W] perturbation".into(),
        });
    }
    let (height, width) = (delta.shape()[1], delta.shape()[2]);
    spec.mask.expect_dims(width, height, "apply_constraints")?;

    let plane = width * height;
    let src = delta.data();
    let mut out = vec![0.0f32; src.len()];
    for c in 0..3 {
        if !spec.channels.contains(c) {
            continue;
        }
        for y in 0..height {
            for x in 0..width {
                if spec.mask.is_mutable(x, y) {
                    let i = c * plane + y * width + x;
                    out[i] = src[i];
                }
            }
        }
    }
    Ok(Tensor::from_raw(delta.shape().to_vec(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::SegmentationMask;

    fn spec_with(mask: SegmentationMask, channels: ChannelSet) -> ChangeSpec {
        ChangeSpec {
            mask,
            channels,
            step_epsilon: 0.01,
            target_class: 1,
            max_iterations: 15,
            stop_target_prob: DEFAULT_STOP_TARGET_PROB,
            plateau_window: DEFAULT_PLATEAU_WINDOW,
            plateau_delta: DEFAULT_PLATEAU_DELTA,
            description: "test change".into(),
        }
    }

    fn ramp_delta(width: usize, height: usize) -> Tensor {
        let data = (0..3 * width * height)
            .map(|i| (i as f32 - 5.0) * 0.01)
            .collect();
        Tensor::new(&[3, height, width], data).unwrap()
    }

    #[test]
    fn full_mask_all_channels_is_identity() {
        let spec = spec_with(SegmentationMask::filled(4, 3, true), ChannelSet::all());
        let delta = ramp_delta(4, 3);
        assert_eq!(apply_constraints(&delta, &spec).unwrap(), delta);
    }

    #[test]
    fn empty_mask_zeroes_everything() {
        let spec = spec_with(SegmentationMask::filled(4, 3, false), ChannelSet::all());
        let out = apply_constraints(&ramp_delta(4, 3), &spec).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_keeps_exactly_the_allowed_set() {
        let mut mask = SegmentationMask::filled(4, 4, false);
        for y in 0..4 {
            for x in 0..2 {
                mask.set_mutable(x, y, true);
            }
        }
        let spec = spec_with(mask, ChannelSet::new(true, false, false));
        let delta = ramp_delta(4, 4);
        let out = apply_constraints(&delta, &spec).unwrap();
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    let i = c * 16 + y * 4 + x;
                    let allowed = c == 0 && x < 2;
                    if allowed {
                        assert_eq!(out.data()[i], delta.data()[i]);
                    } else {
                        assert_eq!(out.data()[i], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let mut mask = SegmentationMask::filled(3, 3, false);
        mask.set_mutable(1, 1, true);
        mask.set_mutable(2, 0, true);
        let spec = spec_with(mask, ChannelSet::new(true, false, true));
        let once = apply_constraints(&ramp_delta(3, 3), &spec).unwrap();
        let twice = apply_constraints(&once, &spec).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn mask_dimension_mismatch_is_rejected() {
        let spec = spec_with(SegmentationMask::filled(5, 5, true), ChannelSet::all());
        let err = apply_constraints(&ramp_delta(4, 4), &spec).unwrap_err();
        assert!(err.to_string().contains("mask dimensions"));
    }

    #[test]
    fn channel_names_validate() {
        assert!(ChannelSet::from_names(&[]).is_err());
        assert!(ChannelSet::from_names(&["R".into(), "R".into()]).is_err());
        assert!(ChannelSet::from_names(&["X".into()]).is_err());
        let set = ChannelSet::from_names(&["B".into(), "R".into()]).unwrap();
        assert!(set.contains(0) && !set.contains(1) && set.contains(2));
    }

    #[test]
    fn validate_rejects_out_of_range_fields() {
        let base = spec_with(SegmentationMask::filled(2, 2, true), ChannelSet::all());
        assert!(base.validate().is_ok());

        let mut bad = base.clone();
        bad.step_epsilon = 1.5;
        assert!(bad.validate().is_err());

        let mut bad = base.clone();
        bad.step_epsilon = 0.0;
        assert!(bad.validate().is_err());

        let mut bad = base.clone();
        bad.stop_target_prob = 0.5;
        assert!(bad.validate().is_err());

        let mut bad = base.clone();
        bad.plateau_window = 15;
        assert!(bad.validate().is_err());

        let mut bad = base;
        bad.plateau_delta = -0.1;
        assert!(bad.validate().is_err());
    }
}
