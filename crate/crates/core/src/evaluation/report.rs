use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::importance::ImportanceReport;
use super::metrics::MetricsReport;

pub const COMBINED: &str = "combined";

/// Models × datasets, individual deployments first and the pooled run last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonGrid {
    pub models: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[m][c]` for model `m` and column `c`.
    pub cells: Vec<Vec<Option<MetricsReport>>>,
    pub deltas: Vec<CombinedDelta>,
}

/// How the mean of the individual runs compares with the pooled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedDelta {
    pub model: String,
    pub mean_individual_weighted_f1: f64,
    pub combined_weighted_f1: f64,
    /// Individual mean minus combined.
    pub difference: f64,
    /// Difference relative to the combined score.
    pub relative: f64,
}

impl ComparisonGrid {
    pub fn build(reports: &[MetricsReport]) -> ComparisonGrid {
        let mut models: Vec<String> = reports.iter().map(|r| r.model.clone()).collect();
        models.sort();
        models.dedup();
        let mut columns: Vec<String> = reports
            .iter()
            .map(|r| r.dataset.clone())
            .filter(|d| d != COMBINED)
            .collect();
        columns.sort();
        columns.dedup();
        if reports.iter().any(|r| r.dataset == COMBINED) {
            columns.push(COMBINED.into());
        }
        let lookup: BTreeMap<(&str, &str), &MetricsReport> = reports
            .iter()
            .map(|r| ((r.model.as_str(), r.dataset.as_str()), r))
            .collect();
        let cells: Vec<Vec<Option<MetricsReport>>> = models
            .iter()
            .map(|m| {
                columns
                    .iter()
                    .map(|c| lookup.get(&(m.as_str(), c.as_str())).map(|r| (*r).clone()))
                    .collect()
            })
            .collect();
        let mut deltas = Vec::new();
        for (m, row) in models.iter().zip(&cells) {
            let individual: Vec<f64> = columns
                .iter()
                .zip(row)
                .filter(|(c, _)| *c != COMBINED)
                .filter_map(|(_, r)| r.as_ref().map(|r| r.weighted_f1))
                .collect();
            let combined = columns
                .iter()
                .zip(row)
                .find(|(c, _)| *c == COMBINED)
                .and_then(|(_, r)| r.as_ref().map(|r| r.weighted_f1));
            if let (Some(comb), false) = (combined, individual.is_empty()) {
                let mean = individual.iter().sum::<f64>() / individual.len() as f64;
                deltas.push(CombinedDelta {
                    model: m.clone(),
                    mean_individual_weighted_f1: mean,
                    combined_weighted_f1: comb,
                    difference: mean - comb,
                    relative: if comb > 0.0 {
                        (mean - comb) / comb
                    } else {
                        0.0
                    },
                });
            }
        }
        ComparisonGrid {
            models,
            columns,
            cells,
            deltas,
        }
    }

    pub fn cell(&self, model: &str, column: &str) -> Option<&MetricsReport> {
        let m = self.models.iter().position(|x| x == model)?;
        let c = self.columns.iter().position(|x| x == column)?;
        self.cells[m][c].as_ref()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let heading = |c: &str| {
            if c == COMBINED {
                "Combined".to_string()
            } else {
                c.to_string()
            }
        };
        let _ = write!(s, "| Model | Metric |");
        for c in &self.columns {
            let _ = write!(s, " {} |", heading(c));
        }
        let _ = write!(s, "\n|---|---|");
        for _ in &self.columns {
            s.push_str("---|");
        }
        s.push('\n');
        type Pick = fn(&MetricsReport) -> f64;
        let rows: [(&str, Pick); 4] = [
            ("F_w", |r| r.weighted_f1),
            ("Accuracy", |r| r.accuracy),
            ("Precision", |r| r.precision),
            ("Recall", |r| r.recall),
        ];
        for (m, cells) in self.models.iter().zip(&self.cells) {
            for (label, pick) in rows {
                let _ = write!(s, "| {} | {label} |", m.to_uppercase());
                for cell in cells {
                    match cell {
                        Some(r) => {
                            let _ = write!(s, " {:.2} |", pick(r));
                        }
                        None => s.push_str(" - |"),
                    }
                }
                s.push('\n');
            }
        }
        if !self.deltas.is_empty() {
            s.push_str(
                "\n| Model | Mean individual F_w | Combined F_w | Difference | Relative |\n",
            );
            s.push_str("|---|---|---|---|---|\n");
            for d in &self.deltas {
                let _ = writeln!(
                    s,
                    "| {} | {:.3} | {:.3} | {:+.3} | {:+.1}% |",
                    d.model.to_uppercase(),
                    d.mean_individual_weighted_f1,
                    d.combined_weighted_f1,
                    d.difference,
                    100.0 * d.relative
                );
            }
        }
        s
    }
}

pub fn metrics_markdown(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} on {}\n", r.model.to_uppercase(), r.dataset);
    let _ = writeln!(s, "Seed {}, {} test observations.\n", r.seed, r.n);
    s.push_str("| Metric | Value |\n|---|---|\n");
    let precision_note = if r.precision_undefined {
        " (no positive predictions)"
    } else {
        ""
    };
    let rows = [
        ("Accuracy", format!("{:.4}", r.accuracy)),
        ("Precision", format!("{:.4}{precision_note}", r.precision)),
        ("Recall", format!("{:.4}", r.recall)),
        ("F1 agitation", format!("{:.4}", r.f1_positive)),
        ("F1 non-agitation", format!("{:.4}", r.f1_negative)),
        ("Weighted F1", format!("{:.4}", r.weighted_f1)),
        (
            "Majority-class accuracy",
            format!("{:.4}", r.majority_baseline_accuracy),
        ),
        ("Chance weighted F1", format!("{:.4}", r.chance_weighted_f1)),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "| {k} | {v} |");
    }
    let c = r.confusion;
    let _ = writeln!(
        s,
        "\nConfusion: tp {}, fp {}, tn {}, fn {}.",
        c.tp, c.fp, c.tn, c.fn_
    );
    s
}

pub fn importance_markdown(r: &ImportanceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# Importance, {} on {}\n\nBaseline weighted F1 {:.4}, {} repeats.\n",
        r.model.to_uppercase(),
        r.dataset,
        r.baseline_weighted_f1,
        r.repeats
    );
    s.push_str("| Channel | F_w drop | std |\n|---|---|---|\n");
    for e in &r.channels {
        let _ = writeln!(s, "| {} | {:.4} | {:.4} |", e.name, e.drop_mean, e.drop_std);
    }
    s.push_str("\n| Feature type | F_w drop | std |\n|---|---|---|\n");
    for e in &r.feature_kinds {
        let _ = writeln!(s, "| {} | {:.4} | {:.4} |", e.name, e.drop_mean, e.drop_std);
    }
    if !r.gain_by_channel.is_empty() {
        s.push_str("\n| Channel | Gain | Splits |\n|---|---|---|\n");
        for e in &r.gain_by_channel {
            let _ = writeln!(s, "| {} | {:.3} | {} |", e.name, e.gain, e.splits);
        }
    }
    s
}
