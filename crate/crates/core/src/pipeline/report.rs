use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::rundir::{Manifest, RunDir};
use super::PipelineError;
use crate::annotator::PromptVersion;
use crate::cdm::{FitReport, SplitResult};
use crate::qmatrix::{ConfidenceTier, ConfusionStats, QMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    /// Expert reference matrix cross-validated as the baseline.
    Expert,
    /// Built from an LLM annotation set at one tier.
    Annotation,
    /// A ready-made candidate matrix file.
    File,
}

/// The deterministic part of a [`FitReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub auc_mean: f64,
    pub auc_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub per_split: Vec<SplitResult>,
}

impl From<&FitReport> for FitSummary {
    fn from(r: &FitReport) -> Self {
        Self {
            auc_mean: r.auc_mean,
            auc_std: r.auc_std,
            rmse_mean: r.rmse_mean,
            rmse_std: r.rmse_std,
            per_split: r.per_split.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub rank: usize,
    pub name: String,
    pub label: String,
    pub source: RowSource,
    pub tier: Option<ConfidenceTier>,
    pub model_name: Option<String>,
    pub prompt_version: Option<PromptVersion>,
    pub ones: Option<usize>,
    pub degenerate_items: Vec<String>,
    pub comparison: Option<ConfusionStats>,
    pub fit: Option<FitSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_name: String,
    /// Name of the expert baseline row, when one was fitted.
    pub baseline: Option<String>,
    /// Ranked best first.
    pub rows: Vec<CandidateRow>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn row(&self, name: &str) -> Option<&CandidateRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Fitted rows by `auc_mean` descending, then `rmse_mean` ascending, then
/// name; rows without a fit go last, by name.
pub fn compare_rows(a: &CandidateRow, b: &CandidateRow) -> Ordering {
    match (&a.fit, &b.fit) {
        (Some(fa), Some(fb)) => fb
            .auc_mean
            .total_cmp(&fa.auc_mean)
            .then_with(|| fa.rmse_mean.total_cmp(&fb.rmse_mean))
            .then_with(|| a.name.cmp(&b.name)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.name.cmp(&b.name),
    }
}

/// Sorts rows with [`compare_rows`] and numbers them from 1.
pub fn rank_rows(rows: &mut [CandidateRow]) {
    rows.sort_by(compare_rows);
    for (n, row) in rows.iter_mut().enumerate() {
        row.rank = n + 1;
    }
}

fn read_json<T: serde::de::DeserializeOwned>(run: &RunDir, rel: &str) -> Result<T, PipelineError> {
    let text = run.read(rel)?;
    serde_json::from_str(&text).map_err(|e| PipelineError::input(run.path(rel), e))
}

/// Rebuilds the report from the manifest and the artifacts it points to.
pub fn assemble_report(run: &RunDir) -> Result<RunReport, PipelineError> {
    let Manifest { run_name, entries } = run.manifest()?;
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let (ones, degenerate_items) = match &e.qmatrix {
            Some(rel) => {
                let q = QMatrix::parse_csv(&run.read(rel)?).map_err(|err| PipelineError::input(run.path(rel), err))?;
                (Some(q.ones()), q.degenerate_items())
            }
            None => (None, Vec::new()),
        };
        let comparison = e.comparison.as_deref().map(|rel| read_json::<ConfusionStats>(run, rel)).transpose()?;
        let fit =
            e.fit.as_deref().map(|rel| read_json::<FitReport>(run, rel).map(|f| FitSummary::from(&f))).transpose()?;
        rows.push(CandidateRow {
            rank: 0,
            name: e.name,
            label: e.label,
            source: e.source,
            tier: e.tier,
            model_name: e.model_name,
            prompt_version: e.prompt_version,
            ones,
            degenerate_items,
            comparison,
            fit,
            error: e.error,
        });
    }
    rank_rows(&mut rows);
    let baseline = rows.iter().find(|r| r.source == RowSource::Expert && r.fit.is_some()).map(|r| r.name.clone());
    Ok(RunReport { run_name, baseline, rows })
}

/// Writes `report.json` and `report.md` into the run directory.
pub fn write_report(run: &RunDir, report: &RunReport) -> Result<(), PipelineError> {
    run.write("report.json", &report.to_json())?;
    run.write("report.md", &render_markdown(report))?;
    Ok(())
}

fn tier_column(tier: Option<ConfidenceTier>) -> &'static str {
    match tier {
        Some(ConfidenceTier::High) => "High only",
        Some(ConfidenceTier::Medium) => "High+Medium",
        Some(ConfidenceTier::Low) => "All tiers",
        None => "Full matrix",
    }
}

fn fit_cell(fit: &Option<FitSummary>) -> String {
    match fit {
        Some(f) => format!("{:.3} ± {:.3} / {:.3} ± {:.3}", f.auc_mean, f.auc_std, f.rmse_mean, f.rmse_std),
        None => "failed".into(),
    }
}

/// Markdown with a ranking, a label × tier fit grid and a confusion grid.
pub fn render_markdown(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Run `{}`\n", report.run_name);

    out.push_str("## Ranking\n\n");
    out.push_str("| Rank | Candidate | Tier | Ones | AUC | RMSE | Degenerate items |\n");
    out.push_str("|---:|---|---|---:|---|---|---|\n");
    for r in &report.rows {
        let ones = r.ones.map_or("-".to_string(), |n| n.to_string());
        let (auc, rmse) = match &r.fit {
            Some(f) => {
                (format!("{:.4} ± {:.4}", f.auc_mean, f.auc_std), format!("{:.4} ± {:.4}", f.rmse_mean, f.rmse_std))
            }
            None => ("-".into(), "-".into()),
        };
        let degenerate = if r.degenerate_items.is_empty() {
            "-".to_string()
        } else {
            format!("{} ({})", r.degenerate_items.len(), r.degenerate_items.join(", "))
        };
        let marker = if report.baseline.as_deref() == Some(r.name.as_str()) { " (baseline)" } else { "" };
        let _ = writeln!(
            out,
            "| {} | {}{} | {} | {} | {} | {} | {} |",
            r.rank,
            r.label,
            marker,
            tier_column(r.tier),
            ones,
            auc,
            rmse,
            degenerate
        );
    }

    // label × tier grid, labels in order of their best row
    let mut columns: Vec<Option<ConfidenceTier>> = Vec::new();
    for t in [None, Some(ConfidenceTier::High), Some(ConfidenceTier::Medium), Some(ConfidenceTier::Low)] {
        if report.rows.iter().any(|r| r.tier == t) {
            columns.push(t);
        }
    }
    let mut labels: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    out.push_str("\n## Fit by tier (AUC ± std / RMSE ± std)\n\n| Candidate |");
    for c in &columns {
        let _ = write!(out, " {} |", tier_column(*c));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');
    for label in &labels {
        let _ = write!(out, "| {label} |");
        for c in &columns {
            let cell = report
                .rows
                .iter()
                .find(|r| r.label == *label && r.tier == *c)
                .map_or("-".to_string(), |r| fit_cell(&r.fit));
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }

    let compared: Vec<&CandidateRow> = report.rows.iter().filter(|r| r.comparison.is_some()).collect();
    if !compared.is_empty() {
        out.push_str("\n## Agreement with the expert matrix\n\n");
        out.push_str(
            "| Candidate | Tier | TP | FP | FN | TN | TPR | TNR | Precision | Recall | Micro F1 | Macro F1 |\n",
        );
        out.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        let mut sorted = compared;
        sorted.sort_by(|a, b| a.label.cmp(&b.label).then_with(|| b.tier.cmp(&a.tier)));
        for r in sorted {
            let s = r.comparison.as_ref().expect("filtered");
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                r.label,
                tier_column(r.tier),
                s.tp,
                s.fp,
                s.fn_,
                s.tn,
                s.tpr,
                s.tnr,
                s.precision,
                s.recall,
                s.micro_f1,
                s.macro_f1
            );
        }
    }

    let failed: Vec<&CandidateRow> = report.rows.iter().filter(|r| r.error.is_some()).collect();
    if !failed.is_empty() {
        out.push_str("\n## Failures\n\n");
        for r in failed {
            let _ = writeln!(out, "- `{}`: {}", r.name, r.error.as_deref().unwrap_or_default());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(name: &str, fit: Option<(f64, f64)>) -> CandidateRow {
        CandidateRow {
            rank: 0,
            name: name.into(),
            label: name.into(),
            source: RowSource::File,
            tier: None,
            model_name: None,
            prompt_version: None,
            ones: None,
            degenerate_items: Vec::new(),
            comparison: None,
            fit: fit.map(|(auc, rmse)| FitSummary {
                auc_mean: auc,
                auc_std: 0.0,
                rmse_mean: rmse,
                rmse_std: 0.0,
                per_split: Vec::new(),
            }),
            error: None,
        }
    }

    #[test]
    fn ties_fall_through_to_rmse_then_name() {
        let mut rows = vec![
            row("c", Some((0.7, 0.40))),
            row("failed", None),
            row("b", Some((0.7, 0.39))),
            row("a", Some((0.7, 0.40))),
            row("top", Some((0.8, 0.50))),
        ];
        rank_rows(&mut rows);
        let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["top", "b", "a", "c", "failed"]);
        assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    }

    proptest! {
        #[test]
        fn ranking_is_a_permutation_independent_of_input_order(
            fits in prop::collection::vec(prop::option::of((0u8..5, 0u8..5)), 1..12),
            rotate in 0usize..12,
        ) {
            let rows: Vec<CandidateRow> = fits
                .iter()
                .enumerate()
                .map(|(n, f)| row(&format!("r{n:02}"), f.map(|(a, r)| (a as f64 / 10.0, r as f64 / 10.0))))
                .collect();
            let mut forward = rows.clone();
            rank_rows(&mut forward);
            let mut rotated = rows.clone();
            rotated.rotate_left(rotate % rows.len());
            rank_rows(&mut rotated);
            prop_assert_eq!(&forward, &rotated);
            let mut names: Vec<_> = forward.iter().map(|r| r.name.clone()).collect();
            names.sort();
            let mut original: Vec<_> = rows.iter().map(|r| r.name.clone()).collect();
            original.sort();
            prop_assert_eq!(names, original);
            for w in forward.windows(2) {
                prop_assert_ne!(compare_rows(&w[0], &w[1]), Ordering::Greater);
            }
        }
    }

    #[test]
    fn markdown_has_both_grids() {
        let mut a = row("gpt-V3-High", Some((0.78, 0.386)));
        a.label = "gpt-V3".into();
        a.tier = Some(ConfidenceTier::High);
        a.comparison = Some(ConfusionStats::from_counts(41, 52, 35, 756));
        let mut e = row("expert", Some((0.717, 0.4)));
        e.source = RowSource::Expert;
        let mut rows = vec![a, e];
        rank_rows(&mut rows);
        let report = RunReport { run_name: "demo".into(), baseline: Some("expert".into()), rows };
        let md = render_markdown(&report);
        assert!(md.contains("| 1 | gpt-V3 | High only | - | 0.7800 ± 0.0000"));
        assert!(md.contains("| expert | 0.717 ± 0.000 / 0.400 ± 0.000 | - |"));
        assert!(md.contains("| gpt-V3 | High only | 41 | 52 | 35 | 756 | 0.5395 | 0.9356 | 0.4409 | 0.5395 | 0.4852 |"));
        assert!(md.contains("expert (baseline)"));
    }
}
