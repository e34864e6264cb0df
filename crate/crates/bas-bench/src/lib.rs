//! Fixture builders shared by the benchmarks.

use bas_core::dataset::QADataset;
use bas_core::heads::HeadKind;
use bas_core::model::ModelConfig;
use bas_core::pipeline::BasPipeline;
use bas_core::preprocess::{GazetteerTagger, Preprocessor};
use bas_core::tokenizer::Vocabulary;

pub fn bench_vocab() -> Vocabulary {
    Vocabulary::from_lines(
        [
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
            "telephone",
            "radio",
            "camera",
        ]
        .into_iter(),
    )
    .expect("bench vocabulary")
}

pub fn bench_config(
    kind: HeadKind,
    vocab_size: usize,
    layers: usize,
    hidden: usize,
) -> ModelConfig {
    let mut run = bas_core::config::RunConfig::default();
    run.set("layers", &layers.to_string()).unwrap();
    run.set("hidden", &hidden.to_string()).unwrap();
    run.set("heads", "2").unwrap();
    run.set("max_len", "32").unwrap();
    run.set("head", kind.name()).unwrap();
    run.set("head_hidden", "64").unwrap();
    run.model_config(vocab_size)
}

pub fn bench_pipeline(kind: HeadKind, layers: usize, hidden: usize) -> BasPipeline<f64> {
    let vocab = bench_vocab();
    let config = bench_config(kind, vocab.size(), layers, hidden);
    let gazetteer = GazetteerTagger::from_text("Alexander Bell\tPERSON\n").unwrap();
    BasPipeline::initialize(vocab, Preprocessor::rule_based(gazetteer), config, 7)
        .expect("bench pipeline")
}

pub fn bench_dataset() -> QADataset {
    let mut tsv = String::new();
    for (i, object) in ["telephone", "radio", "camera"].iter().enumerate() {
        let qid = format!("q{i}");
        let question = format!("who invented the {object} ?");
        tsv.push_str(&format!(
            "{qid}\t{question}\tit was invented by Alexander Bell .\t1\n"
        ));
        tsv.push_str(&format!(
            "{qid}\t{question}\tit was invented in 1875 .\t0\n"
        ));
    }
    QADataset::from_tsv(&tsv).expect("bench dataset")
}
