//! Tables summarizing one or more reduction runs, shaped like a
//! target-density sweep: one row per target with the included fraction
//! and, when trial accuracies are given, mean, spread and p-value.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use clap::ValueEnum;
use densekit_core::ingest::TrialTable;
use densekit_core::quality::quality_of_values;
use densekit_core::{pooled_t_test, ReductionManifest, TrialSummary, QUALITY_THRESHOLD};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Markdown => "markdown",
            ReportFormat::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReportInput {
    pub manifests: Vec<ReductionManifest>,
    pub trials: Option<TrialTable>,
    /// Class sizes of the unreduced embedding set, if supplied.
    pub class_sizes: Option<BTreeMap<u32, usize>>,
    pub densities: Option<BTreeMap<u32, f64>>,
}

struct Row {
    target: String,
    included: Option<f64>,
    saturated: Option<usize>,
    trial: Option<TrialSummary>,
    p: Cell,
}

enum Cell {
    Missing,
    Baseline,
    Na,
    Value(f64),
}

fn inconsistent(what: String) -> CliError {
    CliError::Data(format!("report: inconsistent class sets: {what}"))
}

fn class_sizes(m: &ReductionManifest) -> BTreeMap<u32, usize> {
    m.classes
        .iter()
        .map(|c| (c.class_id, c.original_count))
        .collect()
}

fn check_consistency(input: &ReportInput) -> Result<(), CliError> {
    let Some(first) = input.manifests.first() else {
        return Err(CliError::Usage("report needs at least one manifest".into()));
    };
    let reference = class_sizes(first);
    for (i, m) in input.manifests.iter().enumerate().skip(1) {
        if class_sizes(m) != reference {
            return Err(inconsistent(format!(
                "manifest {} differs from manifest 1",
                i + 1
            )));
        }
    }
    if let Some(sizes) = &input.class_sizes {
        if *sizes != reference {
            return Err(inconsistent("embeddings differ from the manifests".into()));
        }
    }
    if let Some(d) = &input.densities {
        if d.keys().ne(reference.keys()) {
            return Err(inconsistent("densities differ from the manifests".into()));
        }
    }
    Ok(())
}

/// `1` -> `1.0`, `0.075` -> `0.075`.
fn format_target(t: f64) -> String {
    let s = t.to_string();
    if s.contains(['.', 'e', 'E']) || !t.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

fn format_p(p: f64) -> String {
    if p > 0.0 && p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.9}")
    }
}

fn build_rows(input: &ReportInput) -> Result<Vec<Row>, CliError> {
    let mut rows = Vec::new();
    let baseline = input.trials.as_ref().and_then(|t| t.baseline);
    if let Some(b) = baseline {
        rows.push(Row {
            target: "N/A".into(),
            included: Some(1.0),
            saturated: None,
            trial: Some(b),
            p: Cell::Baseline,
        });
    }
    let mut manifests: Vec<&ReductionManifest> = input.manifests.iter().collect();
    manifests.sort_by(|a, b| b.target.total_cmp(&a.target));
    for m in manifests {
        let total: usize = m.classes.iter().map(|c| c.original_count).sum();
        let kept: usize = m.classes.iter().map(|c| c.kept()).sum();
        let trial = input
            .trials
            .as_ref()
            .and_then(|t| t.for_target(m.target))
            .copied();
        let p = match (baseline, trial) {
            (Some(b), Some(t)) => match pooled_t_test(&b, &t)?.p_one_tailed {
                Some(p) => Cell::Value(p),
                None => Cell::Na,
            },
            _ => Cell::Missing,
        };
        rows.push(Row {
            target: format_target(m.target),
            included: Some(kept as f64 / total as f64),
            saturated: Some(m.classes.iter().filter(|c| c.saturated).count()),
            trial,
            p,
        });
    }
    Ok(rows)
}

/// Renders the report. Errors when the inputs disagree on the class set.
pub fn render_report(input: &ReportInput, format: ReportFormat) -> Result<String, CliError> {
    check_consistency(input)?;
    let rows = build_rows(input)?;
    Ok(match format {
        ReportFormat::Markdown => markdown(input, &rows),
        ReportFormat::Csv => csv(&rows),
    })
}

fn markdown(input: &ReportInput, rows: &[Row]) -> String {
    let mut out = String::from("## Reduction summary\n\n");
    let with_trials = input.trials.is_some();
    if with_trials {
        out.push_str("| Target Density | # Samples Included | Accuracy | Std. Dev. | p-value |\n");
        out.push_str("|---|---:|---:|---:|---:|\n");
    } else {
        out.push_str("| Target Density | # Samples Included | Saturated Classes |\n");
        out.push_str("|---|---:|---:|\n");
    }
    for r in rows {
        let included = r
            .included
            .map_or("---".into(), |f| format!("{:.1}%", f * 100.0));
        if with_trials {
            let (acc, std) = match r.trial {
                Some(t) => (
                    format!("{:.3}%", t.mean * 100.0),
                    format!("{:.9}", t.std_pop),
                ),
                None => ("---".into(), "---".into()),
            };
            let p = match r.p {
                Cell::Value(p) => format_p(p),
                Cell::Na => "N/A".into(),
                Cell::Baseline | Cell::Missing => "---".into(),
            };
            let _ = writeln!(out, "| {} | {included} | {acc} | {std} | {p} |", r.target);
        } else {
            let sat = r.saturated.map_or("---".into(), |s| s.to_string());
            let _ = writeln!(out, "| {} | {included} | {sat} |", r.target);
        }
    }
    if let Some(d) = &input.densities {
        out.push_str("\n## Class densities\n\n| Class | Density |\n|---|---:|\n");
        for (class, v) in d {
            let _ = writeln!(out, "| {class} | {v:.6} |");
        }
        let values: Vec<f64> = d.values().copied().collect();
        if let Ok(q) = quality_of_values(&values, QUALITY_THRESHOLD) {
            let quality = if q.q.is_finite() {
                format!("{:.6}", q.q)
            } else {
                "inf".into()
            };
            let _ = writeln!(
                out,
                "\nsigma_d = {:.9}, range = {:.9}, quality = {quality} ({})",
                q.sigma_d,
                q.range,
                if q.candidate {
                    "reduction candidate"
                } else {
                    "not a candidate"
                }
            );
        }
    }
    out
}

fn csv(rows: &[Row]) -> String {
    let mut out = String::from("target,included_fraction,saturated_classes,accuracy,std,p_value\n");
    for r in rows {
        let target = if r.target == "N/A" {
            "baseline"
        } else {
            r.target.as_str()
        };
        let included = r.included.map_or(String::new(), |f| format!("{f:.9}"));
        let sat = r.saturated.map_or(String::new(), |s| s.to_string());
        let (acc, std) = r.trial.map_or((String::new(), String::new()), |t| {
            (format!("{:.9}", t.mean), format!("{:.9}", t.std_pop))
        });
        let p = match r.p {
            Cell::Value(p) => p.to_string(),
            Cell::Na => "NA".into(),
            Cell::Baseline | Cell::Missing => String::new(),
        };
        let _ = writeln!(out, "{target},{included},{sat},{acc},{std},{p}");
    }
    out
}
