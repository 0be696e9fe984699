//! Worst-case test image search for small CNN image classifiers.
//!
//! The toolkit checks whether a classifier's decision survives an image
//! change a human considers irrelevant for recognition (for example: "the
//! fill color of an object does not determine what it is"). The change is
//! described by a [`invariance::ChangeSpec`] — a segmentation mask, an
//! allowed color-channel subset, a per-step budget, and a target class —
//! and [`search::worst_case_search`] drives a targeted sign-gradient
//! attack inside those constraints. If the prediction collapses under a
//! change that should not matter, the model has learned something it
//! should not have, and [`report`] renders that as a `gap_found` verdict.
//!
//! The crate is self-contained: [`tensor`] and [`nn`] provide the forward
//! passes and exact input gradients, [`model`] the reference classifier
//! with deterministic training and serialization, [`dataset`] a synthetic
//! glyph dataset with an optional planted color bias that makes the gap
//! reproducible by construction.

pub mod dataset;
pub mod error;
pub mod image;
pub mod invariance;
pub mod model;
pub mod nn;
pub mod pnm;
pub mod report;
pub mod rng;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
pub use image::{Image, SegmentationMask};
pub use invariance::{apply_constraints, parse_change_spec, ChangeSpec, ChannelSet};
pub use model::{build_model, load_weights, save_weights, train, ModelWeights, TrainConfig};
pub use report::{gap_verdict, render_report, run_attack, top_k, GapReport, ReportFormat, Verdict};
pub use search::{fgsm_step, select_worst, worst_case_search, SearchTrace, StopReason};
pub use tensor::Tensor;
