//! End-to-end composition: preprocess a pair, tokenize it into the template,
//! encode, score with the configured head, and evaluate rankings.

use std::time::Duration;

use crate::config::RunConfig;
use crate::dataset::QADataset;
use crate::error::{Error, Result};
use crate::graph::{grad_check, Graph, Mode};
use crate::heads::HeadKind;
use crate::metrics::{self, EmptyPolicy, MetricsReport, RankedList};
use crate::model::{forward_pair, BasModel, ModelConfig, ModelVars};
use crate::preprocess::{
    CommandTagger, EatDetector, EntityTagger, GazetteerTagger, HttpEatDetector, Preprocessor,
    RuleEatDetector,
};
use crate::tensor::Scalar;
use crate::tokenizer::{PairEncoding, Vocabulary};
use crate::training::{train_encoded, BatchLoss, TrainConfig};

/// Everything needed to score a question/answer pair.
pub struct BasPipeline<F: Scalar> {
    pub vocab: Vocabulary,
    pub preprocessor: Preprocessor,
    pub model: BasModel<F>,
}

/// Builds the preprocessing stage from a run config: external adapters when
/// configured, rule/gazetteer fallbacks otherwise.
pub fn build_preprocessor(config: &RunConfig) -> Result<Preprocessor> {
    let gazetteer = if config.gazetteers.is_empty() {
        GazetteerTagger::empty()
    } else {
        GazetteerTagger::load(&config.gazetteers)?
    };
    let detector: Box<dyn EatDetector> = match &config.eat_endpoint {
        Some(endpoint) => Box::new(HttpEatDetector::new(
            endpoint.clone(),
            Duration::from_millis(config.eat_timeout_ms),
        )),
        None => Box::new(RuleEatDetector),
    };
    let tagger: Box<dyn EntityTagger> = match &config.ner_command {
        Some(command) => Box::new(CommandTagger::new(command.clone(), gazetteer)),
        None => Box::new(gazetteer),
    };
    Ok(Preprocessor::new(detector, tagger))
}

impl<F: Scalar> BasPipeline<F> {
    /// Fresh pipeline with randomly initialized weights.
    pub fn initialize(
        vocab: Vocabulary,
        preprocessor: Preprocessor,
        config: ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        let model = BasModel::init(config, seed)?;
        Ok(Self {
            vocab,
            preprocessor,
            model,
        })
    }

    fn max_len(&self) -> usize {
        self.model.config.encoder.max_len
    }

    /// Preprocesses and tokenizes one pair into the padded template.
    pub fn encode_example(&self, question: &str, answer: &str) -> Result<PairEncoding> {
        let (highlighted, _) = self.preprocessor.preprocess_pair(question, answer)?;
        self.vocab
            .encode_pair(question, &highlighted, self.max_len())
    }

    /// Probability that the answer is correct, in evaluation mode.
    pub fn score_pair(&self, question: &str, answer: &str) -> Result<f64> {
        let encoding = self.encode_example(question, answer)?;
        let mut graph = Graph::new();
        let vars = self.model.bind(&mut graph);
        let probs = forward_pair(
            &mut graph,
            &vars,
            &encoding,
            &self.model.config,
            &mut Mode::Eval,
        )?;
        Ok(graph.value(probs).data()[0].as_f64())
    }

    /// Preprocesses and tokenizes every candidate in dataset order.
    pub fn prepare_dataset(&self, dataset: &QADataset) -> Result<Vec<(PairEncoding, u8)>> {
        let mut examples = Vec::new();
        for group in &dataset.questions {
            for candidate in &group.candidates {
                let encoding = self.encode_example(&group.question, &candidate.answer)?;
                examples.push((encoding, candidate.label));
            }
        }
        Ok(examples)
    }

    /// Runs the training loop over the dataset.
    pub fn train(&mut self, dataset: &QADataset, config: &TrainConfig) -> Result<Vec<BatchLoss>> {
        let examples = self.prepare_dataset(dataset)?;
        train_encoded(&mut self.model, &examples, config)
    }

    /// Scores and ranks every question's candidates, then averages AP/RR.
    pub fn evaluate(&self, dataset: &QADataset, policy: EmptyPolicy) -> Result<MetricsReport> {
        if dataset.questions.is_empty() {
            return Err(Error::data("cannot evaluate an empty dataset"));
        }
        let mut lists = Vec::with_capacity(dataset.questions.len());
        for group in &dataset.questions {
            lists.push(self.rank_group(group)?);
        }
        metrics::aggregate(&lists, policy)
    }

    fn rank_group(&self, group: &crate::dataset::QuestionGroup) -> Result<RankedList> {
        let mut scores = Vec::with_capacity(group.candidates.len());
        let mut labels = Vec::with_capacity(group.candidates.len());
        for candidate in &group.candidates {
            scores.push(self.score_pair(&group.question, &candidate.answer)?);
            labels.push(candidate.label);
        }
        metrics::rank_candidates(&group.question_id, &scores, &labels)
    }

    /// Orders free-form candidate answers by score, descending; returns
    /// (original index, score).
    pub fn rank_answers(&self, question: &str, answers: &[String]) -> Result<Vec<(usize, f64)>> {
        if answers.is_empty() {
            return Err(Error::data("no candidate answers to rank"));
        }
        let scores: Vec<f64> = answers
            .iter()
            .map(|a| self.score_pair(question, a))
            .collect::<Result<_>>()?;
        let labels = vec![0u8; answers.len()];
        let ranked = metrics::rank_candidates("query", &scores, &labels)?;
        Ok(ranked
            .candidates
            .into_iter()
            .map(|c| (c.index, c.score))
            .collect())
    }

    /// Fraction of candidates whose predicted class matches the label.
    pub fn training_accuracy(&self, dataset: &QADataset) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for group in &dataset.questions {
            for candidate in &group.candidates {
                let score = self.score_pair(&group.question, &candidate.answer)?;
                let predicted = if score > 0.5 { 1 } else { 0 };
                if predicted == candidate.label {
                    correct += 1;
                }
                total += 1;
            }
        }
        Ok(correct as f64 / total as f64)
    }

    /// Rewrites every candidate answer through the highlighter; questions and
    /// labels pass through unchanged.
    pub fn preprocess_dataset(&self, dataset: &QADataset) -> Result<QADataset> {
        let mut out = dataset.clone();
        for group in &mut out.questions {
            for candidate in &mut group.candidates {
                let (highlighted, _) = self
                    .preprocessor
                    .preprocess_pair(&group.question, &candidate.answer)?;
                candidate.answer = highlighted;
            }
        }
        Ok(out)
    }
}

/// Toy geometry used by the gradient-check command: 2 layers, width 8, two
/// heads, 16-token template.
pub fn grad_check_config(kind: HeadKind) -> ModelConfig {
    ModelConfig {
        encoder: crate::encoder::EncoderConfig {
            layers: 2,
            hidden: 8,
            heads: 2,
            vocab_size: 12,
            max_len: 16,
            dropout: 0.0,
            bert_compat: false,
        },
        head: crate::heads::HeadConfig {
            kind,
            fc_hidden: 6,
            cnn_filters: 3,
            cnn_window: 3,
        },
        init_std: 1.0,
    }
}

/// Central-difference check of the whole scoring path (encode + head +
/// cross-entropy) for one head kind at the toy geometry. Returns the maximum
/// relative error across every parameter coordinate.
pub fn grad_check_head(kind: HeadKind, seed: u64, step: f64) -> Result<f64> {
    let config = grad_check_config(kind);
    let model = BasModel::<f64>::init(config.clone(), seed)?;

    // Two fixed examples with distinct labels, spans, and padding.
    let fixtures = vec![
        (
            PairEncoding {
                token_ids: vec![2, 4, 5, 6, 3, 7, 8, 9, 10, 3, 0, 0, 0, 0, 0, 0],
                segment_ids: vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0],
                attention_mask: vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0],
                question_span: 1..4,
                answer_span: 5..9,
            },
            1u8,
        ),
        (
            PairEncoding {
                token_ids: vec![2, 6, 3, 11, 7, 3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
                segment_ids: vec![0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
                attention_mask: vec![1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
                question_span: 1..2,
                answer_span: 3..5,
            },
            0u8,
        ),
    ];

    let params = model.param_tensors();
    grad_check(
        &params,
        move |graph, vars| {
            let model_vars = ModelVars::from_slice(&config, vars)?;
            let mut total = None;
            for (encoding, label) in &fixtures {
                let probs = forward_pair(graph, &model_vars, encoding, &config, &mut Mode::Eval)?;
                let loss = graph.cross_entropy(probs, *label)?;
                total = Some(match total {
                    None => loss,
                    Some(acc) => graph.add(acc, loss)?,
                });
            }
            Ok(graph.scale(total.expect("fixtures non-empty"), 0.5))
        },
        step,
    )
}
