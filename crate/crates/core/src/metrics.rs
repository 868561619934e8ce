//! Confusion matrices, per-stage precision/recall/F1 and the hybrid
//! error-correction statistic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{StageLabel, NUM_STAGES};

/// Rows are true stages, columns predicted stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_STAGES]; NUM_STAGES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_STAGES).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, stage: usize) -> u64 {
        self.counts[stage].iter().sum()
    }

    pub fn predicted(&self, stage: usize) -> u64 {
        (0..NUM_STAGES).map(|t| self.counts[t][stage]).sum()
    }
}

pub fn confusion_matrix(preds: &[StageLabel], labels: &[StageLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut counts = [[0u64; NUM_STAGES]; NUM_STAGES];
    for (p, l) in preds.iter().zip(labels) {
        counts[l.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Same as [`confusion_matrix`] but from raw integers, validating the range.
pub fn confusion_matrix_from_indices(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    let conv = |v: &[usize]| v.iter().map(|&s| StageLabel::from_index(s)).collect::<Result<Vec<_>>>();
    confusion_matrix(&conv(preds)?, &conv(labels)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// How many of the unimodal models' mistakes the hybrid model gets right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCorrection {
    /// Fixed / both-wrong; 0 when undefined.
    pub both_wrong_corrected: f64,
    pub both_wrong_defined: bool,
    pub both_wrong_count: u64,
    pub both_wrong_fixed: u64,
    /// Fixed / either-wrong; 0 when undefined.
    pub either_wrong_corrected: f64,
    pub either_wrong_defined: bool,
    pub either_wrong_count: u64,
    pub either_wrong_fixed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub per_stage: Vec<StageMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub error_correction: Option<ErrorCorrection>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-stage and macro metrics. Macro averages skip stages with zero support.
pub fn metrics_report(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let per_stage: Vec<StageMetrics> = (0..NUM_STAGES)
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            StageMetrics {
                stage: c as u8,
                precision,
                recall,
                f1,
                support: cm.support(c),
            }
        })
        .collect();
    let present: Vec<&StageMetrics> = per_stage.iter().filter(|m| m.support > 0).collect();
    let mean = |f: fn(&StageMetrics) -> f64| present.iter().map(|m| f(m)).sum::<f64>() / present.len() as f64;
    Ok(EvalReport {
        confusion: cm.clone(),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: ratio(cm.trace(), total),
        per_stage,
        error_correction: None,
    })
}

pub fn error_correction_rate(
    hybrid: &[StageLabel],
    symptoms: &[StageLabel],
    image: &[StageLabel],
    labels: &[StageLabel],
) -> Result<ErrorCorrection> {
    for other in [symptoms.len(), image.len(), labels.len()] {
        if other != hybrid.len() {
            return Err(Error::LengthMismatch {
                left: hybrid.len(),
                right: other,
            });
        }
    }
    let (mut both, mut both_fixed, mut either, mut either_fixed) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..labels.len() {
        let s_wrong = symptoms[i] != labels[i];
        let m_wrong = image[i] != labels[i];
        let fixed = hybrid[i] == labels[i];
        if s_wrong && m_wrong {
            both += 1;
            both_fixed += u64::from(fixed);
        }
        if s_wrong || m_wrong {
            either += 1;
            either_fixed += u64::from(fixed);
        }
    }
    Ok(ErrorCorrection {
        both_wrong_corrected: ratio(both_fixed, both),
        both_wrong_defined: both > 0,
        both_wrong_count: both,
        both_wrong_fixed: both_fixed,
        either_wrong_corrected: ratio(either_fixed, either),
        either_wrong_defined: either > 0,
        either_wrong_count: either,
        either_wrong_fixed: either_fixed,
    })
}

/// Per-stage table: one row per stage with P/R/F1/support, then macro and accuracy.
pub fn render_stage_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "stage  precision  recall     f1  support");
    for m in &report.per_stage {
        let _ = writeln!(
            out,
            "{:>5}  {:>9.3}  {:>6.3}  {:>5.3}  {:>7}",
            m.stage, m.precision, m.recall, m.f1, m.support
        );
    }
    let _ = writeln!(
        out,
        "macro  {:>9.3}  {:>6.3}  {:>5.3}  {:>7}",
        report.macro_precision,
        report.macro_recall,
        report.macro_f1,
        report.confusion.total()
    );
    let _ = writeln!(out, "accuracy {:.3}", report.accuracy);
    if let Some(ec) = &report.error_correction {
        let _ = writeln!(
            out,
            "hybrid corrected {}/{} joint unimodal errors ({:.3}), {}/{} of any unimodal error ({:.3})",
            ec.both_wrong_fixed,
            ec.both_wrong_count,
            ec.both_wrong_corrected,
            ec.either_wrong_fixed,
            ec.either_wrong_count,
            ec.either_wrong_corrected
        );
    }
    out
}

/// One summary row per model: name, train accuracy, test accuracy, macro precision and recall.
pub fn render_model_summary(rows: &[(&str, Option<f64>, &EvalReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9} {:>9}", "model", "train acc", "test acc", "precision", "recall");
    for (name, train, report) in rows {
        let train = train.map(|a| format!("{a:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<10} {:>9} {:>9.3} {:>9.3} {:>9.3}",
            name, train, report.accuracy, report.macro_precision, report.macro_recall
        );
    }
    out
}
