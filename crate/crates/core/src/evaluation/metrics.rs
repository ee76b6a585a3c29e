use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[u8], y_pred: &[u8]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Shape {
                expected: format!("{} predictions", y_true.len()),
                found: y_pred.len().to_string(),
            });
        }
        if y_true.is_empty() {
            return Err(Error::invalid("cannot score an empty prediction set"));
        }
        let mut m = ConfusionMatrix::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == 1, p == 1) {
                (true, true) => m.tp += 1,
                (false, true) => m.fp += 1,
                (false, false) => m.tn += 1,
                (true, false) => m.fn_ += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// F1 of one class as 2tp / (2tp + fp + fn); zero when the class never
/// occurs and is never predicted.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    /// Set when nothing was predicted positive and precision is reported as 0.
    pub precision_undefined: bool,
    pub recall: f64,
    /// Set when the set holds no positives and recall is reported as 0.
    pub recall_undefined: bool,
    pub f1_positive: f64,
    pub f1_negative: f64,
    pub weighted_f1: f64,
    /// Accuracy of always predicting the larger class.
    pub majority_baseline_accuracy: f64,
    /// Expected weighted F1 of guessing at the class prior, p² + (1 − p)².
    pub chance_weighted_f1: f64,
}

impl MetricsReport {
    pub fn with_context(mut self, model: &str, dataset: &str, seed: u64) -> Self {
        self.model = model.to_string();
        self.dataset = dataset.to_string();
        self.seed = seed;
        self
    }
}

/// (pos·F1₊ + neg·F1₋) / n over a common integer denominator, so the result
/// is a single rounding of the exact value for realistic set sizes.
fn support_weighted_f1(m: &ConfusionMatrix) -> f64 {
    let d_pos = (2 * m.tp + m.fp + m.fn_).max(1) as u128;
    let d_neg = (2 * m.tn + m.fp + m.fn_).max(1) as u128;
    let num = m.positives() as u128 * 2 * m.tp as u128 * d_neg
        + m.negatives() as u128 * 2 * m.tn as u128 * d_pos;
    let den = m.total() as u128 * d_pos * d_neg;
    num as f64 / den as f64
}

/// Accuracy, positive-class precision and recall, per-class F1, and the
/// support-weighted F1.
pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<MetricsReport> {
    let m = ConfusionMatrix::from_labels(y_true, y_pred)?;
    let n = m.total();
    let (precision, precision_undefined) = ratio(m.tp, m.tp + m.fp);
    let (recall, recall_undefined) = ratio(m.tp, m.positives());
    let f1_positive = f1(m.tp, m.fp, m.fn_);
    let f1_negative = f1(m.tn, m.fn_, m.fp);
    let p = m.positives() as f64 / n as f64;
    let weighted_f1 = support_weighted_f1(&m);
    Ok(MetricsReport {
        model: String::new(),
        dataset: String::new(),
        seed: 0,
        n,
        confusion: m,
        accuracy: (m.tp + m.tn) as f64 / n as f64,
        precision,
        precision_undefined,
        recall,
        recall_undefined,
        f1_positive,
        f1_negative,
        weighted_f1,
        majority_baseline_accuracy: m.positives().max(m.negatives()) as f64 / n as f64,
        chance_weighted_f1: p * p + (1.0 - p) * (1.0 - p),
    })
}

pub fn weighted_f1(y_true: &[u8], y_pred: &[u8]) -> Result<f64> {
    compute_metrics(y_true, y_pred).map(|r| r.weighted_f1)
}
