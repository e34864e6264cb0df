//! Candidate ranking and MAP/MRR evaluation.
//!
//! Average precision is the mean of precision-at-k over the ranks k of the
//! relevant candidates; reciprocal rank is one over the rank of the first
//! relevant candidate, ranks 1-based throughout. Questions with no relevant
//! candidate are skipped by default (and counted in the report); an optional
//! policy scores them as zero instead.

use serde::Serialize;

use crate::error::{Error, Result};

/// One scored candidate; `index` is its position in the original list so
/// that ties stay stable and callers can recover the candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCandidate {
    pub index: usize,
    pub score: f64,
    pub label: u8,
}

/// Candidates of one question in non-increasing score order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub question_id: String,
    pub candidates: Vec<RankedCandidate>,
}

/// Stable descending sort by score; ties keep their original order.
pub fn rank_candidates(question_id: &str, scores: &[f64], labels: &[u8]) -> Result<RankedList> {
    if scores.len() != labels.len() {
        return Err(Error::data(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::data("cannot rank an empty candidate list"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::data("non-finite candidate score"));
    }
    for &label in labels {
        if label > 1 {
            return Err(Error::data(format!("label must be 0 or 1, got {label}")));
        }
    }
    let mut candidates: Vec<RankedCandidate> = scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(index, (&score, &label))| RankedCandidate {
            index,
            score,
            label,
        })
        .collect();
    candidates.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));
    Ok(RankedList {
        question_id: question_id.to_string(),
        candidates,
    })
}

/// Mean precision at the relevant ranks; `None` when nothing is relevant.
pub fn average_precision(list: &RankedList) -> Option<f64> {
    let relevant_total = list.candidates.iter().filter(|c| c.label == 1).count();
    if relevant_total == 0 {
        return None;
    }
    let mut seen = 0usize;
    let mut sum = 0.0;
    for (k, candidate) in list.candidates.iter().enumerate() {
        if candidate.label == 1 {
            seen += 1;
            sum += seen as f64 / (k + 1) as f64;
        }
    }
    Some(sum / relevant_total as f64)
}

/// Inverse rank of the first relevant candidate; `None` when nothing is
/// relevant.
pub fn reciprocal_rank(list: &RankedList) -> Option<f64> {
    list.candidates
        .iter()
        .position(|c| c.label == 1)
        .map(|pos| 1.0 / (pos + 1) as f64)
}

/// Treatment of questions with no relevant candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyPolicy {
    /// Exclude them from the averages but count them in the report.
    Skip,
    /// Score them as zero and include them.
    CountAsZero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionMetrics {
    pub question_id: String,
    pub average_precision: Option<f64>,
    pub reciprocal_rank: Option<f64>,
}

/// MAP/MRR over the evaluated questions plus the per-question detail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub map: f64,
    pub mrr: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub per_question: Vec<QuestionMetrics>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table with one row per architecture label.
    pub fn text_table(&self, architecture: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16}{:>8}{:>8}{:>12}{:>9}\n",
            "Architecture", "MAP", "MRR", "Evaluated", "Skipped"
        ));
        out.push_str(&format!(
            "{:<16}{:>8.3}{:>8.3}{:>12}{:>9}\n",
            architecture, self.map, self.mrr, self.evaluated, self.skipped
        ));
        out
    }
}

/// Averages per-question metrics into a report. Errors when every question
/// was skipped, since MAP is undefined on an empty set.
pub fn aggregate(lists: &[RankedList], policy: EmptyPolicy) -> Result<MetricsReport> {
    if lists.is_empty() {
        return Err(Error::data("cannot evaluate an empty dataset"));
    }
    let mut per_question = Vec::with_capacity(lists.len());
    let mut ap_sum = 0.0;
    let mut rr_sum = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for list in lists {
        let (ap, rr) = (average_precision(list), reciprocal_rank(list));
        match (ap, rr, policy) {
            (Some(ap), Some(rr), _) => {
                ap_sum += ap;
                rr_sum += rr;
                evaluated += 1;
                per_question.push(QuestionMetrics {
                    question_id: list.question_id.clone(),
                    average_precision: Some(ap),
                    reciprocal_rank: Some(rr),
                });
            }
            (None, None, EmptyPolicy::CountAsZero) => {
                evaluated += 1;
                per_question.push(QuestionMetrics {
                    question_id: list.question_id.clone(),
                    average_precision: Some(0.0),
                    reciprocal_rank: Some(0.0),
                });
            }
            (None, None, EmptyPolicy::Skip) => {
                skipped += 1;
                per_question.push(QuestionMetrics {
                    question_id: list.question_id.clone(),
                    average_precision: None,
                    reciprocal_rank: None,
                });
            }
            _ => unreachable!("AP and RR are defined together"),
        }
    }
    if evaluated == 0 {
        return Err(Error::data(format!(
            "MAP undefined: no question has a relevant candidate ({skipped} skipped)"
        )));
    }
    Ok(MetricsReport {
        map: ap_sum / evaluated as f64,
        mrr: rr_sum / evaluated as f64,
        evaluated,
        skipped,
        per_question,
    })
}
