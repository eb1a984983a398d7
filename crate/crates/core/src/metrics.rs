//! Confusion matrices and accuracy / precision / recall / F1 at class and
//! category level.
//!
//! Counting is exact (integers); division happens only when a metric is
//! produced. Empty-set conventions: precision is 0 for a label that is never
//! predicted, recall is 0 for a label that never occurs, and F1 is 0 whenever
//! precision + recall is 0.

use serde::{Deserialize, Serialize};

use crate::dataset::{CLASSES_PER_CATEGORY, N_CATEGORIES, N_CLASSES};
use crate::error::{invalid, Result};

/// Rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_labels: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_labels: usize) -> Self {
        Self {
            n_labels,
            counts: vec![vec![0; n_labels]; n_labels],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|row| row.len() != n) {
            return Err(invalid("confusion matrix must be square"));
        }
        Ok(Self { n_labels: n, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_labels).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, label: usize) -> u64 {
        self.counts[label].iter().sum()
    }

    pub fn col_sum(&self, label: usize) -> u64 {
        self.counts.iter().map(|row| row[label]).sum()
    }
}

fn check_labels(labels: &[usize], n_labels: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= n_labels) {
        Some(bad) => Err(invalid(format!("label {bad} outside 0..{n_labels}"))),
        None => Ok(()),
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_labels: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(invalid(format!(
            "label vectors differ in length: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    check_labels(y_true, n_labels)?;
    check_labels(y_pred, n_labels)?;
    let mut cm = ConfusionMatrix::zeros(n_labels);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(invalid("label vectors differ in length"));
    }
    if y_true.is_empty() {
        return Err(invalid("accuracy of an empty label set"));
    }
    let correct = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
    Ok(correct as f64 / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn per_label_precision_recall_f1(cm: &ConfusionMatrix) -> Vec<LabelScores> {
    (0..cm.n_labels)
        .map(|l| {
            let tp = cm.counts[l][l];
            let precision = ratio(tp, cm.col_sum(l));
            let recall = ratio(tp, cm.row_sum(l));
            LabelScores {
                precision,
                recall,
                f1: f1_score(precision, recall),
            }
        })
        .collect()
}

/// Unweighted mean over labels.
pub fn macro_average(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("macro average of an empty list"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sums 10×10 class blocks into the 5×5 category matrix.
pub fn to_category_level(class_cm: &ConfusionMatrix) -> Result<ConfusionMatrix> {
    if class_cm.n_labels != N_CLASSES as usize {
        return Err(invalid(format!(
            "category aggregation needs a {N_CLASSES}-label matrix, got {}",
            class_cm.n_labels
        )));
    }
    let per = CLASSES_PER_CATEGORY as usize;
    let mut out = ConfusionMatrix::zeros(N_CATEGORIES as usize);
    for (t, row) in class_cm.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            out.counts[t / per][p / per] += c;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    /// One-vs-rest accuracy, `(TP + TN) / total`.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub per_category: Vec<CategoryScores>,
    pub mean_accuracy: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
}

/// One-vs-rest accuracy plus precision/recall/F1 for every label of `cm`,
/// and their arithmetic means. Works for any square matrix; used on the
/// 5×5 category matrix.
pub fn per_category_metrics(cm: &ConfusionMatrix) -> Result<CategoryMetrics> {
    if cm.n_labels == 0 {
        return Err(invalid("empty confusion matrix"));
    }
    let total = cm.total();
    let scores = per_label_precision_recall_f1(cm);
    let per_category: Vec<CategoryScores> = scores
        .iter()
        .enumerate()
        .map(|(l, s)| {
            let tp = cm.counts[l][l];
            let fp = cm.col_sum(l) - tp;
            let fn_ = cm.row_sum(l) - tp;
            let tn = total - tp - fp - fn_;
            CategoryScores {
                accuracy: ratio(tp + tn, total),
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
            }
        })
        .collect();
    let mean = |f: fn(&CategoryScores) -> f64| macro_average(&per_category.iter().map(f).collect::<Vec<_>>());
    Ok(CategoryMetrics {
        mean_accuracy: mean(|c| c.accuracy)?,
        mean_precision: mean(|c| c.precision)?,
        mean_recall: mean(|c| c.recall)?,
        mean_f1: mean(|c| c.f1)?,
        per_category,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Everything the evaluation step reports. The category block is present
/// only for 50-class matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: u64,
    pub accuracy: f64,
    pub class_confusion: ConfusionMatrix,
    pub class_scores: Vec<LabelScores>,
    pub class_macro: MacroScores,
    pub category_confusion: Option<ConfusionMatrix>,
    pub category: Option<CategoryMetrics>,
}

impl EvalReport {
    pub fn from_class_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let total = cm.total();
        if total == 0 {
            return Err(invalid("no evaluated samples"));
        }
        let scores = per_label_precision_recall_f1(&cm);
        let class_macro = MacroScores {
            precision: macro_average(&scores.iter().map(|s| s.precision).collect::<Vec<_>>())?,
            recall: macro_average(&scores.iter().map(|s| s.recall).collect::<Vec<_>>())?,
            f1: macro_average(&scores.iter().map(|s| s.f1).collect::<Vec<_>>())?,
        };
        let (category_confusion, category) = if cm.n_labels == N_CLASSES as usize {
            let cat = to_category_level(&cm)?;
            let metrics = per_category_metrics(&cat)?;
            (Some(cat), Some(metrics))
        } else {
            (None, None)
        };
        Ok(Self {
            n_samples: total,
            accuracy: ratio(cm.trace(), total),
            class_scores: scores,
            class_macro,
            class_confusion: cm,
            category_confusion,
            category,
        })
    }

    pub fn from_labels(y_true: &[usize], y_pred: &[usize], n_labels: usize) -> Result<Self> {
        Self::from_class_confusion(confusion_matrix(y_true, y_pred, n_labels)?)
    }

    /// Class precisions as a vector, the per-class heatmap source.
    pub fn class_precisions(&self) -> Vec<f64> {
        self.class_scores.iter().map(|s| s.precision).collect()
    }
}

/// Writes a confusion matrix as CSV with a `true\pred` header row.
pub fn confusion_to_csv(cm: &ConfusionMatrix, labels: &[String]) -> String {
    let mut out = String::from("true\\pred");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (l, row) in labels.iter().zip(&cm.counts) {
        out.push_str(l);
        for c in row {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}
