//! Question/answer dataset ingestion.
//!
//! The on-disk format is UTF-8 TSV, one candidate per line:
//! `question_id<TAB>question<TAB>answer<TAB>label` with a binary label.
//! Lines sharing a question id are grouped; they need not be contiguous and
//! groups keep the order of first appearance.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// One candidate row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAInstance {
    pub question_id: String,
    pub question: String,
    pub answer: String,
    pub label: u8,
}

/// A question with its ordered candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionGroup {
    pub question_id: String,
    pub question: String,
    pub candidates: Vec<QAInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub questions: usize,
    pub pairs: usize,
}

/// Questions grouped with their labeled candidate answers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QADataset {
    pub questions: Vec<QuestionGroup>,
}

impl QADataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let dataset = Self::from_tsv(&text)?;
        let stats = dataset.stats();
        log::info!(
            "loaded {}: {} questions, {} pairs",
            path.as_ref().display(),
            stats.questions,
            stats.pairs
        );
        Ok(dataset)
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut questions: Vec<QuestionGroup> = Vec::new();
        let mut by_id: HashMap<String, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let row = raw.strip_suffix('\r').unwrap_or(raw);
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::format_at(
                    line,
                    format!("expected 4 tab-separated columns, got {}", fields.len()),
                ));
            }
            let (id, question, answer, label_text) = (fields[0], fields[1], fields[2], fields[3]);
            if id.is_empty() {
                return Err(Error::format_at(line, "empty question_id"));
            }
            let label = match label_text {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(Error::format_at(
                        line,
                        format!("label must be 0 or 1, got '{other}'"),
                    ))
                }
            };
            let instance = QAInstance {
                question_id: id.to_string(),
                question: question.to_string(),
                answer: answer.to_string(),
                label,
            };
            match by_id.get(id) {
                Some(&idx) => {
                    if questions[idx].question != question {
                        return Err(Error::format_at(
                            line,
                            format!(
                                "question text for id '{id}' differs from its first occurrence"
                            ),
                        ));
                    }
                    questions[idx].candidates.push(instance);
                }
                None => {
                    by_id.insert(id.to_string(), questions.len());
                    questions.push(QuestionGroup {
                        question_id: id.to_string(),
                        question: question.to_string(),
                        candidates: vec![instance],
                    });
                }
            }
        }
        if questions.is_empty() {
            return Err(Error::format("dataset contains no candidate rows"));
        }
        Ok(Self { questions })
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            questions: self.questions.len(),
            pairs: self.questions.iter().map(|q| q.candidates.len()).sum(),
        }
    }

    /// Serializes back to the TSV schema (used by the preprocess command).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for group in &self.questions {
            for candidate in &group.candidates {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    candidate.question_id, candidate.question, candidate.answer, candidate.label
                ));
            }
        }
        out
    }
}

/// Sizes of the standard benchmark splits (question count, pair count).
pub const BENCHMARK_SPLITS: &[(&str, usize, usize)] = &[
    ("trecqa-raw-train", 1229, 53417),
    ("trecqa-raw-validation", 82, 1148),
    ("trecqa-raw-test", 100, 1517),
    ("trecqa-clean-train", 1229, 53417),
    ("trecqa-clean-validation", 65, 1117),
    ("trecqa-clean-test", 68, 1142),
    ("wikiqa-train", 873, 8672),
    ("wikiqa-validation", 126, 1130),
    ("wikiqa-test", 243, 2351),
];

pub fn expected_stats(split: &str) -> Option<DatasetStats> {
    BENCHMARK_SPLITS
        .iter()
        .find(|(name, _, _)| *name == split)
        .map(|&(_, questions, pairs)| DatasetStats { questions, pairs })
}

/// Compares loaded stats against a named benchmark split. Unknown split
/// names are a configuration error; a mismatch returns a warning message for
/// the caller to surface.
pub fn verify_against_benchmark(split: &str, stats: DatasetStats) -> Result<Option<String>> {
    let expected = expected_stats(split).ok_or_else(|| {
        Error::config(format!(
            "unknown benchmark split '{split}' (known: {})",
            BENCHMARK_SPLITS
                .iter()
                .map(|(n, _, _)| *n)
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;
    if expected == stats {
        Ok(None)
    } else {
        Ok(Some(format!(
            "{split}: expected {} questions / {} pairs, found {} / {}",
            expected.questions, expected.pairs, stats.questions, stats.pairs
        )))
    }
}
