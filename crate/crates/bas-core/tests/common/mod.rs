//! Shared fixtures for the integration suites.

use bas_core::config::RunConfig;
use bas_core::dataset::QADataset;
use bas_core::heads::HeadKind;
use bas_core::model::ModelConfig;
use bas_core::pipeline::BasPipeline;
use bas_core::preprocess::{GazetteerTagger, Preprocessor};
use bas_core::tensor::Scalar;
use bas_core::tokenizer::Vocabulary;

pub const FIXTURE_VOCAB: &[&str] = &[
    "[PAD]",
    "[UNK]",
    "[CLS]",
    "[SEP]",
    "SPECIAL_TOKEN",
    "who",
    "invented",
    "the",
    "?",
    "it",
    "was",
    "by",
    "in",
    "made",
    ".",
    "1875",
    "1901",
    "telephone",
    "radio",
    "camera",
    "piano",
    "engine",
    "clock",
    "rocket",
    "laser",
];

pub fn fixture_vocab() -> Vocabulary {
    Vocabulary::from_lines(FIXTURE_VOCAB.iter().copied()).unwrap()
}

pub fn fixture_gazetteer_text() -> String {
    let names = [
        "Alexander Bell",
        "Guglielmo Marconi",
        "Johann Zahn",
        "Bartolomeo Cristofori",
        "Karl Benz",
        "Peter Henlein",
        "Robert Goddard",
        "Theodore Maiman",
        "Elisha Gray",
        "Nikola Tesla",
        "Thomas Sutton",
        "Gottfried Silbermann",
        "Rudolf Diesel",
        "John Harrison",
        "Wernher Braun",
        "Gordon Gould",
    ];
    let mut text = String::new();
    for name in names {
        text.push_str(name);
        text.push_str("\tPERSON\n");
    }
    text
}

pub fn fixture_preprocessor() -> Preprocessor {
    Preprocessor::rule_based(GazetteerTagger::from_text(&fixture_gazetteer_text()).unwrap())
}

/// Eight questions with four candidates each; exactly the candidates naming
/// a person (highlighted to SPECIAL_TOKEN) are correct.
pub fn overfit_dataset_tsv() -> String {
    let objects = [
        ("telephone", "Alexander Bell", "Elisha Gray"),
        ("radio", "Guglielmo Marconi", "Nikola Tesla"),
        ("camera", "Johann Zahn", "Thomas Sutton"),
        ("piano", "Bartolomeo Cristofori", "Gottfried Silbermann"),
        ("engine", "Karl Benz", "Rudolf Diesel"),
        ("clock", "Peter Henlein", "John Harrison"),
        ("rocket", "Robert Goddard", "Wernher Braun"),
        ("laser", "Theodore Maiman", "Gordon Gould"),
    ];
    let mut out = String::new();
    for (i, (object, inventor, rival)) in objects.iter().enumerate() {
        let qid = format!("q{}", i + 1);
        let question = format!("who invented the {object} ?");
        let rows = [
            (format!("it was invented by {inventor} ."), 1),
            (format!("it was made by {rival} ."), 1),
            ("it was invented in 1875 .".to_string(), 0),
            ("it was made in 1901 .".to_string(), 0),
        ];
        for (answer, label) in rows {
            out.push_str(&format!("{qid}\t{question}\t{answer}\t{label}\n"));
        }
    }
    out
}

pub fn overfit_dataset() -> QADataset {
    QADataset::from_tsv(&overfit_dataset_tsv()).unwrap()
}

/// Toy geometry for the overfit run: 2 layers, width 32, two heads.
pub fn overfit_model_config(kind: HeadKind, vocab_size: usize) -> ModelConfig {
    let mut run = RunConfig::default();
    run.set("layers", "2").unwrap();
    run.set("hidden", "32").unwrap();
    run.set("heads", "2").unwrap();
    run.set("max_len", "16").unwrap();
    run.set("head", kind.name()).unwrap();
    run.set("head_hidden", "256").unwrap();
    run.model_config(vocab_size)
}

pub fn overfit_pipeline<F: Scalar>(kind: HeadKind, seed: u64) -> BasPipeline<F> {
    let vocab = fixture_vocab();
    let config = overfit_model_config(kind, vocab.size());
    BasPipeline::initialize(vocab, fixture_preprocessor(), config, seed).unwrap()
}
