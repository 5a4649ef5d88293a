use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::corpus::Intent;

/// Binary confusion counts with `ChangeTopic` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Intent, Intent)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (gold, predicted) in pairs {
            cm.record(gold, predicted);
        }
        cm
    }

    pub fn record(&mut self, gold: Intent, predicted: Intent) {
        match (gold.is_positive(), predicted.is_positive()) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Scaled sum, used when resampling clusters.
    pub fn add_scaled(&mut self, other: &ConfusionMatrix, times: u64) {
        self.tp += other.tp * times;
        self.fp += other.fp * times;
        self.fn_ += other.fn_ * times;
        self.tn += other.tn * times;
    }
}

/// Per-class and macro-averaged scores. Ratios with a zero denominator are
/// reported as 0 and named in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub change_precision: f64,
    pub change_recall: f64,
    pub change_f1: f64,
    pub continue_precision: f64,
    pub continue_recall: f64,
    pub continue_f1: f64,
    pub undefined: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if p + r == 0.0 {
        undefined.push(name.to_string());
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<Metrics, BenchError> {
    if cm.total() == 0 {
        return Err(BenchError::EmptyMatrix);
    }
    let mut undefined = Vec::new();
    let u = &mut undefined;
    let change_precision = ratio(cm.tp, cm.tp + cm.fp, "change_precision", u);
    let change_recall = ratio(cm.tp, cm.tp + cm.fn_, "change_recall", u);
    let change_f1 = harmonic(change_precision, change_recall, "change_f1", u);
    let continue_precision = ratio(cm.tn, cm.tn + cm.fn_, "continue_precision", u);
    let continue_recall = ratio(cm.tn, cm.tn + cm.fp, "continue_recall", u);
    let continue_f1 = harmonic(continue_precision, continue_recall, "continue_f1", u);
    Ok(Metrics {
        macro_f1: (change_f1 + continue_f1) / 2.0,
        macro_precision: (change_precision + continue_precision) / 2.0,
        macro_recall: (change_recall + continue_recall) / 2.0,
        change_precision,
        change_recall,
        change_f1,
        continue_precision,
        continue_recall,
        continue_f1,
        undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let m = metrics_from_confusion(&ConfusionMatrix::new(5, 4, 7, 146)).unwrap();
        assert!((m.change_precision - 5.0 / 9.0).abs() < 1e-15);
        assert!((m.change_recall - 5.0 / 12.0).abs() < 1e-15);
        assert_eq!(format!("{:.4}/{:.4}", m.change_precision, m.change_recall), "0.5556/0.4167");
        assert_eq!(format!("{:.2}/{:.2}", m.change_precision, m.change_recall), "0.56/0.42");
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn perfect_classifier() {
        let m = metrics_from_confusion(&ConfusionMatrix::new(3, 0, 0, 9)).unwrap();
        for v in [m.macro_f1, m.macro_precision, m.macro_recall, m.change_precision, m.change_recall] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn zero_denominator_flagged() {
        let m = metrics_from_confusion(&ConfusionMatrix::new(0, 0, 4, 6)).unwrap();
        assert_eq!(m.change_precision, 0.0);
        assert!(m.undefined.contains(&"change_precision".to_string()));
        assert!(!m.undefined.contains(&"change_recall".to_string()));
    }

    #[test]
    fn empty_matrix() {
        assert_eq!(metrics_from_confusion(&ConfusionMatrix::default()), Err(BenchError::EmptyMatrix));
    }

    #[test]
    fn record_counts() {
        use Intent::{ChangeTopic as K, Continue as C};
        let cm = ConfusionMatrix::from_pairs([(K, K), (C, K), (K, C), (C, C), (C, C)]);
        assert_eq!(cm, ConfusionMatrix::new(1, 1, 1, 2));
    }
}
