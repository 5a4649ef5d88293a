//! Evaluation harness: confusion-matrix metrics, per-message latency,
//! clustered bootstrap uncertainty, ROC AUC and comparison reports.
//!
//! "F1" in reports is macro-F1, the unweighted mean of the two per-class F1
//! scores (not the F1 of macro precision and macro recall).

mod bootstrap;
mod metrics;
mod report;
mod roc;

pub use bootstrap::{clustered_bootstrap, BootstrapMethod, UncertaintyReport};
pub use metrics::{metrics_from_confusion, ConfusionMatrix, Metrics};
pub use report::{render_report, ReportFormat, REPORT_COLUMNS};
pub use roc::{roc_auc, roc_auc_from_confidences};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::IntentClassifier;
use crate::corpus::{Dataset, Intent};
use crate::dialogue::{lesson_context, PhaseScript};
use crate::forest::decide;

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("{errors} of {total} messages failed to classify (more than 10%)")]
    EvaluationDegraded { errors: usize, total: usize },
    #[error("need at least 2 conversations for a clustered bootstrap, got {0}")]
    TooFewClusters(usize),
    #[error("n_resamples must be >= 1")]
    InvalidResamples,
    #[error("ROC AUC needs both classes")]
    SingleClass,
    #[error("ROC AUC needs a score for every message")]
    NoScores,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("report needs at least one result")]
    NoResults,
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model_label: String,
    pub n_messages: usize,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub change_precision: f64,
    pub change_recall: f64,
    pub mean_inference_seconds: f64,
    /// Metrics that hit a zero denominator and were reported as 0.
    pub undefined_metrics: Vec<String>,
}

impl EvalResult {
    pub fn new(model_label: impl Into<String>, metrics: &Metrics, n_messages: usize, mean_inference_seconds: f64) -> Self {
        EvalResult {
            model_label: model_label.into(),
            n_messages,
            macro_f1: metrics.macro_f1,
            macro_precision: metrics.macro_precision,
            macro_recall: metrics.macro_recall,
            change_precision: metrics.change_precision,
            change_recall: metrics.change_recall,
            mean_inference_seconds,
            undefined_metrics: metrics.undefined.clone(),
        }
    }
}

/// Per-message outcome, written as JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub message_id: String,
    pub gold: Intent,
    pub predicted: Intent,
    pub confidence: Option<f64>,
    pub latency_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Applied to the confidence when the backend reports one.
    pub decision_threshold: f64,
    /// Issue one untimed call before measuring.
    pub warm_up: bool,
    /// Lesson scripts used to build each message's chat context.
    pub scripts: Vec<PhaseScript>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            decision_threshold: 0.5,
            warm_up: true,
            scripts: crate::dialogue::default_scripts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub result: EvalResult,
    pub confusion: ConfusionMatrix,
    pub records: Vec<MessageRecord>,
}

impl Evaluation {
    pub fn records_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn pairs(&self) -> Vec<(Intent, Intent)> {
        self.records.iter().map(|r| (r.gold, r.predicted)).collect()
    }
}

/// Classifies every message once, in dataset order. A failed call is
/// recorded and counted as a `Continue` prediction; more than 10% failures
/// aborts with `EvaluationDegraded`.
pub fn evaluate(classifier: &dyn IntentClassifier, test_set: &Dataset, options: &EvalOptions) -> Result<Evaluation, BenchError> {
    if test_set.is_empty() {
        return Err(BenchError::EmptyTestSet);
    }
    if options.warm_up {
        classifier.warm_up();
    }
    let mut confusion = ConfusionMatrix::default();
    let mut records = Vec::with_capacity(test_set.len());
    let mut errors = 0usize;
    for m in &test_set.messages {
        let context = lesson_context(&options.scripts, m.phase_index.unwrap_or(1));
        let start = Instant::now();
        let outcome = classifier.classify(&context, &m.text);
        let wall = start.elapsed().as_secs_f64();
        let record = match outcome {
            Ok(p) => {
                let predicted = match p.confidence {
                    Some(c) => decide(c, options.decision_threshold),
                    None => p.intent,
                };
                MessageRecord {
                    message_id: m.message_id.clone(),
                    gold: m.label,
                    predicted,
                    confidence: p.confidence,
                    latency_seconds: p.latency_seconds,
                    error: None,
                }
            }
            Err(e) => {
                errors += 1;
                log::warn!("{}: classification failed: {e}", m.message_id);
                MessageRecord {
                    message_id: m.message_id.clone(),
                    gold: m.label,
                    predicted: Intent::Continue,
                    confidence: None,
                    latency_seconds: wall,
                    error: Some(e.to_string()),
                }
            }
        };
        confusion.record(record.gold, record.predicted);
        records.push(record);
    }
    if errors * 10 > records.len() {
        return Err(BenchError::EvaluationDegraded {
            errors,
            total: records.len(),
        });
    }
    let metrics = metrics_from_confusion(&confusion)?;
    let mean = records.iter().map(|r| r.latency_seconds).sum::<f64>() / records.len() as f64;
    Ok(Evaluation {
        result: EvalResult::new(classifier.label(), &metrics, records.len(), mean),
        confusion,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;
    use crate::llm::{ScriptEntry, ScriptedClassifier};

    #[test]
    fn oracle_classifier_scores_perfectly() {
        let ds = generate_synthetic_corpus(60, 0.25, 2).unwrap();
        let script = ds.labels().into_iter().map(ScriptEntry::intent).collect();
        let mock = ScriptedClassifier::new("oracle", script).unwrap();
        let ev = evaluate(&mock, &ds, &EvalOptions::default()).unwrap();
        assert_eq!(ev.result.macro_f1, 1.0);
        assert_eq!(ev.confusion.total(), 60);
        assert_eq!(ev.records.len(), 60);
        assert_eq!(ev.records_jsonl().lines().count(), 60);
    }

    #[test]
    fn too_many_errors_degrade() {
        let ds = generate_synthetic_corpus(20, 0.25, 2).unwrap();
        // 17 answers for 20 messages: 3 exhausted = 15% errors
        let script = ds.labels().into_iter().take(17).map(ScriptEntry::intent).collect();
        let mock = ScriptedClassifier::new("short", script).unwrap();
        assert_eq!(
            evaluate(&mock, &ds, &EvalOptions::default()),
            Err(BenchError::EvaluationDegraded { errors: 3, total: 20 })
        );
        // 2 of 20 (10%) is tolerated
        let script = ds.labels().into_iter().take(18).map(ScriptEntry::intent).collect();
        let mock = ScriptedClassifier::new("short", script).unwrap();
        let ev = evaluate(&mock, &ds, &EvalOptions::default()).unwrap();
        assert_eq!(ev.records.iter().filter(|r| r.error.is_some()).count(), 2);
    }

    #[test]
    fn threshold_applies_to_confidence() {
        let ds = generate_synthetic_corpus(20, 0.5, 3).unwrap();
        let script = (0..20).map(|_| ScriptEntry::scored(Intent::ChangeTopic, 0.6)).collect();
        let mock = ScriptedClassifier::new("m", script).unwrap();
        let opts = EvalOptions {
            decision_threshold: 0.7,
            ..EvalOptions::default()
        };
        let ev = evaluate(&mock, &ds, &opts).unwrap();
        assert!(ev.records.iter().all(|r| r.predicted == Intent::Continue));
    }
}
