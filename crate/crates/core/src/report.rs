//! Engineer-facing attack artifacts: top-k probability tables, the
//! per-iteration image dump, the machine-readable trace, and the final
//! gap verdict.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::parse_change_spec;
use crate::model::load_weights;
use crate::pnm;
use crate::search::{select_worst, worst_case_search, StopReason};
use crate::tensor::Tensor;

/// Default probability-drop threshold separating "changed drastically"
/// from "dropped by a few percent".
pub const DEFAULT_DROP_THRESHOLD: f32 = 0.5;

/// Outcome of comparing the worst-case prediction with the initial one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    GapFound,
    NoGap,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::GapFound => "gap_found",
            Verdict::NoGap => "no_gap",
        })
    }
}

/// One row of a top-k table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProb {
    pub name: String,
    pub prob: f32,
}

/// Everything the engineer needs to judge one attack run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub spec_description: String,
    pub initial_topk: Vec<ClassProb>,
    pub worst_topk: Vec<ClassProb>,
    pub worst_iteration_index: usize,
    pub original_class_prob_drop: f32,
    pub verdict: Verdict,
    pub stop_reason: StopReason,
    /// Wall-clock seconds for the search and artifact writes. Console-only:
    /// excluded from serialized reports so identical runs stay
    /// byte-identical.
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

/// Output format for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

/// The `k` highest-probability classes, sorted by descending probability
/// with ties broken by ascending class index.
pub fn top_k(probs: &Tensor, class_names: &[String], k: usize) -> Result<Vec<ClassProb>> {
    if probs.len() != class_names.len() {
        return Err(Error::ShapeMismatch {
            context: "top_k",
            got: vec![probs.len()],
            expected: format!("{} probabilities for the class names", class_names.len()),
        });
    }
    if k == 0 || k > probs.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={}",
            probs.len()
        )));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    // Stable sort keeps ascending class index for equal probabilities.
    order.sort_by(|&a, &b| probs.data()[b].partial_cmp(&probs.data()[a]).unwrap());
    Ok(order[..k]
        .iter()
        .map(|&i| ClassProb {
            name: class_names[i].clone(),
            prob: probs.data()[i],
        })
        .collect())
}

/// A gap is declared when the original class lost strictly more than
/// `drop_threshold` of its probability on the worst-case image.
pub fn gap_verdict(
    initial_probs: &Tensor,
    worst_probs: &Tensor,
    original_class: usize,
    drop_threshold: f32,
) -> Verdict {
    let drop = initial_probs.data()[original_class] - worst_probs.data()[original_class];
    if drop > drop_threshold {
        Verdict::GapFound
    } else {
        Verdict::NoGap
    }
}

/// Optional knobs for [`run_attack`].
#[derive(Debug, Clone)]
pub struct AttackOptions {
    pub drop_threshold: f32,
    /// Table length; defaults to `min(10, num_classes)`.
    pub top_k: Option<usize>,
}

impl Default for AttackOptions {
    fn default() -> Self {
        AttackOptions {
            drop_threshold: DEFAULT_DROP_THRESHOLD,
            top_k: None,
        }
    }
}

/// Loads the model, the start image, and the change spec, runs the search,
/// and writes all artifacts into `out_dir`:
///
/// - `iter_0000.ppm` .. `iter_NNNN.ppm`: every evaluated image,
/// - `worst.ppm`: the selected worst-case image,
/// - `trace.csv`: `index,target_prob,original_class_prob,loss_to_target`,
/// - `report.txt`: the text rendering of the returned report,
/// - `report.json`: the machine-readable report.
///
/// Files are written to a temp name and renamed into place; on failure all
/// artifacts already written by this call are removed.
pub fn run_attack(
    model_path: impl AsRef<Path>,
    image_path: impl AsRef<Path>,
    spec_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    options: &AttackOptions,
) -> Result<GapReport> {
    let model = load_weights(model_path.as_ref())?;
    let image = pnm::read_ppm(image_path.as_ref())?;
    let spec = parse_change_spec(spec_path.as_ref())?;
    let out_dir = out_dir.as_ref();

    let started = Instant::now();
    let trace = worst_case_search(&model, &image, &spec)?;
    let worst = select_worst(&trace);
    let initial = &trace.iterations[0];
    let original_class = trace.original_class();

    let k = match options.top_k {
        Some(k) => k,
        None => model.num_classes().min(10),
    };
    let mut report = GapReport {
        spec_description: spec.description.clone(),
        initial_topk: top_k(&initial.probs, model.class_names(), k)?,
        worst_topk: top_k(&worst.probs, model.class_names(), k)?,
        worst_iteration_index: worst.index,
        original_class_prob_drop: (initial.original_class_prob - worst.original_class_prob)
            .max(0.0),
        verdict: gap_verdict(
            &initial.probs,
            &worst.probs,
            original_class,
            options.drop_threshold,
        ),
        stop_reason: trace.stop_reason,
        elapsed_seconds: 0.0,
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_artifacts(out_dir, &trace, worst.index, &report, &mut written);
    if let Err(e) = result {
        for path in written {
            let _ = std::fs::remove_file(path);
        }
        return Err(e);
    }
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

fn write_artifacts(
    out_dir: &Path,
    trace: &crate::search::SearchTrace,
    worst_index: usize,
    report: &GapReport,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    for record in &trace.iterations {
        write_atomic(
            out_dir.join(format!("iter_{:04}.ppm", record.index)),
            &pnm::encode_ppm(&record.image),
            written,
        )?;
    }
    write_atomic(
        out_dir.join("worst.ppm"),
        &pnm::encode_ppm(&trace.iterations[worst_index].image),
        written,
    )?;
    write_atomic(out_dir.join("trace.csv"), trace_csv(trace).as_bytes(), written)?;
    write_atomic(
        out_dir.join("report.txt"),
        render_report(report, ReportFormat::Text).as_bytes(),
        written,
    )?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_atomic(out_dir.join("report.json"), json.as_bytes(), written)?;
    Ok(())
}

fn write_atomic(path: PathBuf, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    let mut tmp = path.clone().into_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = std::fs::rename(&tmp, &path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(&path, e));
    }
    written.push(path);
    Ok(())
}

/// The per-iteration probabilities as CSV with 6-decimal fixed-point
/// floats and LF line endings.
pub fn trace_csv(trace: &crate::search::SearchTrace) -> String {
    let mut out = String::from("index,target_prob,original_class_prob,loss_to_target\n");
    for r in &trace.iterations {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.index, r.target_prob, r.original_class_prob, r.loss_to_target
        ));
    }
    out
}

/// Reads the `report.json` produced by [`run_attack`] back from a trace
/// directory.
pub fn load_report(trace_dir: impl AsRef<Path>) -> Result<GapReport> {
    let path = trace_dir.as_ref().join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::SpecParse {
        path,
        message: e.to_string(),
    })
}

/// Renders a report.
///
/// Text: both top-k tables side by side plus a `VERDICT:` line. Csv: one
/// row per top-k entry plus one summary row (`2k + 1` rows, no header),
/// all floats formatted to 6 decimals.
pub fn render_report(report: &GapReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_text(report: &GapReport) -> String {
    let name_width = report
        .initial_topk
        .iter()
        .chain(&report.worst_topk)
        .map(|e| e.name.len())
        .max()
        .unwrap_or(0)
        .max("(none)".len());
    let column = name_width + 14;

    let mut out = String::new();
    out.push_str(&format!("Change: {}\n", report.spec_description));
    out.push_str(&format!(
        "Stop reason: {} (worst at iteration {})\n\n",
        report.stop_reason, report.worst_iteration_index
    ));
    out.push_str(&format!(
        "  {:<column$}  {}\n",
        "Initial prediction", "Worst-case prediction"
    ));
    let rows = report.initial_topk.len().max(report.worst_topk.len());
    for row in 0..rows {
        let cell = |entries: &[ClassProb]| match entries.get(row) {
            Some(e) => format!("{}. {:<name_width$}  {:.6}", row + 1, e.name, e.prob),
            None => String::new(),
        };
        out.push_str(&format!(
            "  {:<column$}  {}\n",
            cell(&report.initial_topk),
            cell(&report.worst_topk)
        ));
    }
    out.push_str(&format!(
        "\nOriginal-class probability drop: {:.6}\n",
        report.original_class_prob_drop
    ));
    out.push_str(match report.verdict {
        Verdict::GapFound => "VERDICT: GAP FOUND\n",
        Verdict::NoGap => "VERDICT: NO GAP\n",
    });
    out
}

fn render_csv(report: &GapReport) -> String {
    let mut out = String::new();
    for (section, entries) in [
        ("initial", &report.initial_topk),
        ("worst", &report.worst_topk),
    ] {
        for (rank, entry) in entries.iter().enumerate() {
            out.push_str(&format!(
                "{section},{},{},{:.6}\n",
                rank + 1,
                entry.name,
                entry.prob
            ));
        }
    }
    out.push_str(&format!(
        "summary,{},{},{},{:.6}\n",
        report.verdict, report.stop_reason, report.worst_iteration_index, report.original_class_prob_drop
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(values: &[f32]) -> Tensor {
        Tensor::new(&[values.len()], values.to_vec()).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn top_k_uniform_ties_break_by_class_index() {
        let p = probs(&[0.25, 0.25, 0.25, 0.25]);
        let top = top_k(&p, &names(4), 3).unwrap();
        let got: Vec<&str> = top.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(got, ["c0", "c1", "c2"]);
    }

    #[test]
    fn top_k_one_hot_puts_that_class_first() {
        let p = probs(&[0.0, 1.0, 0.0]);
        let top = top_k(&p, &names(3), 3).unwrap();
        assert_eq!(top[0].name, "c1");
        assert_eq!(top[0].prob, 1.0);
    }

    #[test]
    fn top_k_validates_k() {
        let p = probs(&[0.5, 0.5]);
        assert!(top_k(&p, &names(2), 0).is_err());
        assert!(top_k(&p, &names(2), 3).is_err());
    }

    #[test]
    fn verdict_few_percent_drop_is_no_gap() {
        let v = gap_verdict(&probs(&[0.97, 0.03]), &probs(&[0.94, 0.06]), 0, 0.5);
        assert_eq!(v, Verdict::NoGap);
    }

    #[test]
    fn verdict_collapse_is_gap_found() {
        let v = gap_verdict(&probs(&[0.96, 0.04]), &probs(&[0.003, 0.997]), 0, 0.5);
        assert_eq!(v, Verdict::GapFound);
    }

    #[test]
    fn verdict_boundary_is_strict() {
        // Drop of exactly the threshold stays no_gap.
        let v = gap_verdict(&probs(&[0.9, 0.1]), &probs(&[0.4, 0.6]), 0, 0.5);
        assert_eq!(v, Verdict::NoGap);
    }

    fn sample_report(verdict: Verdict) -> GapReport {
        GapReport {
            spec_description: "fill color change".into(),
            initial_topk: vec![
                ClassProb {
                    name: "vehicle".into(),
                    prob: 0.93,
                },
                ClassProb {
                    name: "sign".into(),
                    prob: 0.07,
                },
            ],
            worst_topk: vec![
                ClassProb {
                    name: "sign".into(),
                    prob: 0.995,
                },
                ClassProb {
                    name: "vehicle".into(),
                    prob: 0.005,
                },
            ],
            worst_iteration_index: 12,
            original_class_prob_drop: 0.925,
            verdict,
            stop_reason: StopReason::TargetReached,
            elapsed_seconds: 0.1,
        }
    }

    #[test]
    fn text_report_carries_verdict_line() {
        let gap = render_report(&sample_report(Verdict::GapFound), ReportFormat::Text);
        assert!(gap.contains("VERDICT: GAP FOUND"), "{gap}");
        let none = render_report(&sample_report(Verdict::NoGap), ReportFormat::Text);
        assert!(none.contains("VERDICT: NO GAP"), "{none}");
        assert!(none.contains("Initial prediction"));
        assert!(none.contains("Worst-case prediction"));
    }

    #[test]
    fn csv_report_has_two_k_plus_one_rows() {
        let csv = render_report(&sample_report(Verdict::GapFound), ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 2 * 2 + 1);
        assert!(csv.lines().last().unwrap().starts_with("summary,gap_found,"));
    }

    #[test]
    fn csv_report_parses_back_exactly() {
        let report = sample_report(Verdict::GapFound);
        let csv = render_report(&report, ReportFormat::Csv);
        for line in csv.lines() {
            let fields: Vec<&str> = line.split(',').collect();
            let numeric = *fields.last().unwrap();
            let value: f32 = numeric.parse().unwrap();
            assert_eq!(format!("{value:.6}"), numeric);
        }
    }
}
