//! `gapfinder` — generate data, train the reference classifier, attack it
//! under a recognition-invariant change spec, and render the verdict.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use gapfinder_core::dataset::{self, Mode};
use gapfinder_core::model::{self, TrainConfig};
use gapfinder_core::report::{self, AttackOptions, ReportFormat};

#[derive(Parser)]
#[command(name = "gapfinder", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Biased,
    Balanced,
}

impl From<ModeArg> for Mode {
    fn from(arg: ModeArg) -> Mode {
        match arg {
            ModeArg::Biased => Mode::Biased,
            ModeArg::Balanced => Mode::Balanced,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic glyph dataset directory.
    Dataset {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Color policy: biased plants a color-class correlation.
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Number of images (even; half per class).
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 32)]
        side: usize,
        /// Generation seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train the reference classifier on a dataset directory.
    Train {
        /// Dataset directory produced by `dataset`.
        #[arg(long)]
        data: PathBuf,
        /// Output weight file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f32,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Run the worst-case image search against a trained model.
    Attack {
        /// Weight file from `train`.
        #[arg(long)]
        model: PathBuf,
        /// Start image (PPM).
        #[arg(long)]
        image: PathBuf,
        /// Change-spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Directory for the per-iteration dump, trace, and report.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Probability drop above which a gap is declared.
        #[arg(long = "drop-threshold", default_value_t = report::DEFAULT_DROP_THRESHOLD)]
        drop_threshold: f32,
        /// Rows per probability table (default: min(10, classes)).
        #[arg(long = "top-k")]
        top_k: Option<usize>,
    },
    /// Re-render the report stored in an attack output directory.
    Report {
        /// Attack output directory.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Dataset {
            out,
            mode,
            n,
            side,
            seed,
        } => {
            let set = dataset::generate_dataset(n, mode.into(), side, seed)?;
            dataset::save_dataset(&set, &out)?;
            println!(
                "wrote {} images ({}, side {side}, seed {seed}) to {}",
                set.len(),
                set.mode(),
                out.display()
            );
        }
        Command::Train {
            data,
            out,
            epochs,
            lr,
            batch,
            seed,
        } => {
            let set = dataset::load_dataset(&data)
                .with_context(|| format!("loading dataset from {}", data.display()))?;
            let side = set
                .images()
                .first()
                .map(|i| i.width())
                .context("dataset is empty")?;
            let mut model = model::build_model(dataset::CLASS_NAMES.len(), side, seed)?;
            model.set_class_names(dataset::CLASS_NAMES.iter().map(|s| s.to_string()).collect())?;
            let cfg = TrainConfig {
                epochs,
                learning_rate: lr,
                batch_size: batch,
                seed,
            };
            let trained = model::train_with_callback(&model, &set, &cfg, |epoch, loss| {
                println!("epoch {:>3}/{epochs}  mean loss {loss:.6}", epoch + 1);
            })?;
            let accuracy = model::accuracy(&trained, &set)?;
            model::save_weights(&trained, &out)?;
            println!("train accuracy {accuracy:.4}; weights written to {}", out.display());
        }
        Command::Attack {
            model,
            image,
            spec,
            out_dir,
            drop_threshold,
            top_k,
        } => {
            let options = AttackOptions {
                drop_threshold,
                top_k,
            };
            let report = report::run_attack(&model, &image, &spec, &out_dir, &options)?;
            print!("{}", report::render_report(&report, ReportFormat::Text));
            println!("elapsed: {:.3}s (artifacts in {})", report.elapsed_seconds, out_dir.display());
        }
        Command::Report { trace, format } => {
            let report = report::load_report(&trace)?;
            let format = match format {
                FormatArg::Text => ReportFormat::Text,
                FormatArg::Csv => ReportFormat::Csv,
            };
            print!("{}", report::render_report(&report, format));
        }
    }
    Ok(())
}
