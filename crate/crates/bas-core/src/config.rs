//! Run configuration: a flat `key = value` UTF-8 file with `#` comments.
//!
//! Every training hyperparameter has a key (defaults: learning rate 1e-4,
//! 4 epochs, batch size 32, dropout 0.2). Keys can be overridden
//! individually (the CLI exposes `--set key=value`) and the `BAS_SEED`
//! environment variable overrides the seed.

use std::path::{Path, PathBuf};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::heads::{HeadConfig, HeadKind};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Numeric precision of the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::config(format!(
                "precision must be f32 or f64, got '{other}'"
            ))),
        }
    }
}

/// Aggregated settings for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // Paths.
    pub vocab: Option<PathBuf>,
    pub gazetteers: Vec<PathBuf>,
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub loss_csv: Option<PathBuf>,
    // Encoder geometry.
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub bert_compat: bool,
    pub init_std: f64,
    // Head.
    pub head: HeadKind,
    pub head_hidden: usize,
    pub cnn_filters: usize,
    pub cnn_window: usize,
    // Training.
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub precision: Precision,
    // External adapters, optional.
    pub eat_endpoint: Option<String>,
    pub eat_timeout_ms: u64,
    pub ner_command: Option<Vec<String>>,
    /// Benchmark split name to validate dataset statistics against.
    pub expect_split: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            vocab: None,
            gazetteers: Vec::new(),
            train: None,
            validation: None,
            test: None,
            checkpoint: None,
            loss_csv: None,
            layers: 12,
            hidden: 768,
            heads: 12,
            max_len: 128,
            dropout: 0.2,
            bert_compat: false,
            init_std: 1.0,
            head: HeadKind::Baseline,
            head_hidden: 1024,
            cnn_filters: 200,
            cnn_window: 3,
            learning_rate: 1e-4,
            epochs: 4,
            batch_size: 32,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 0.0,
            seed: 42,
            precision: Precision::F64,
            eat_endpoint: None,
            eat_timeout_ms: 1000,
            ner_command: None,
            expect_split: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                Error::format_at(line, format!("expected 'key = value', got '{content}'"))
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::format_at(line, e.to_string()))?;
        }
        Ok(config)
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(format!("invalid value '{value}' for key '{key}'")))
        }
        match key {
            "vocab" => self.vocab = Some(PathBuf::from(value)),
            "gazetteer" => {
                self.gazetteers = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "train" => self.train = Some(PathBuf::from(value)),
            "validation" => self.validation = Some(PathBuf::from(value)),
            "test" => self.test = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "loss_csv" => self.loss_csv = Some(PathBuf::from(value)),
            "layers" => self.layers = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "bert_compat" => self.bert_compat = parse(key, value)?,
            "init_std" => self.init_std = parse(key, value)?,
            "head" => self.head = HeadKind::parse(value)?,
            "head_hidden" => self.head_hidden = parse(key, value)?,
            "cnn_filters" => self.cnn_filters = parse(key, value)?,
            "cnn_window" => self.cnn_window = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "warmup_fraction" => self.warmup_fraction = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "precision" => self.precision = Precision::parse(value)?,
            "eat_endpoint" => self.eat_endpoint = (!value.is_empty()).then(|| value.to_string()),
            "eat_timeout_ms" => self.eat_timeout_ms = parse(key, value)?,
            "ner_command" => {
                let parts: Vec<String> = value.split_whitespace().map(str::to_string).collect();
                self.ner_command = (!parts.is_empty()).then_some(parts);
            }
            "expect_split" => self.expect_split = (!value.is_empty()).then(|| value.to_string()),
            other => {
                return Err(Error::config(format!(
                    "unknown configuration key '{other}'"
                )))
            }
        }
        Ok(())
    }

    /// `BAS_SEED` overrides the configured seed.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(value) = std::env::var("BAS_SEED") {
            self.seed = value.parse().map_err(|_| {
                Error::config(format!("BAS_SEED must be an integer, got '{value}'"))
            })?;
        }
        Ok(())
    }

    /// Model geometry for a vocabulary of the given size.
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                layers: self.layers,
                hidden: self.hidden,
                heads: self.heads,
                vocab_size,
                max_len: self.max_len,
                dropout: self.dropout,
                bert_compat: self.bert_compat,
            },
            head: HeadConfig {
                kind: self.head,
                fc_hidden: self.head_hidden,
                cnn_filters: self.cnn_filters,
                cnn_window: self.cnn_window,
            },
            init_std: self.init_std,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            warmup_fraction: self.warmup_fraction,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }

    /// Errors unless the named path keys are set and exist on disk.
    pub fn require_existing(&self, keys: &[&str]) -> Result<()> {
        for &key in keys {
            let path = match key {
                "vocab" => self.vocab.as_deref(),
                "train" => self.train.as_deref(),
                "validation" => self.validation.as_deref(),
                "test" => self.test.as_deref(),
                "checkpoint" => self.checkpoint.as_deref(),
                other => return Err(Error::config(format!("unknown required path '{other}'"))),
            };
            let path =
                path.ok_or_else(|| Error::config(format!("missing required path key '{key}'")))?;
            if !path.exists() {
                return Err(Error::config(format!(
                    "{key} path '{}' does not exist",
                    path.display()
                )));
            }
        }
        for path in &self.gazetteers {
            if !path.exists() {
                return Err(Error::config(format!(
                    "gazetteer path '{}' does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_standard_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.epochs, 4);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.dropout, 0.2);
        assert_eq!(c.head_hidden, 1024);
        assert_eq!(c.cnn_filters, 200);
        assert_eq!((c.layers, c.hidden, c.heads), (12, 768, 12));
        assert_eq!(c.precision, Precision::F64);
    }

    #[test]
    fn parses_keys_comments_and_blanks() {
        let c = RunConfig::from_text(
            "# run settings\n\
             layers = 2\n\
             hidden = 32   # toy width\n\
             head = cnn\n\
             gazetteer = a.tsv, b.tsv\n\
             seed = 7\n\
             precision = f32\n\
             ner_command = python3 tag.py --fast\n\
             \n",
        )
        .unwrap();
        assert_eq!(c.layers, 2);
        assert_eq!(c.hidden, 32);
        assert_eq!(c.head, HeadKind::Cnn);
        assert_eq!(
            c.gazetteers,
            vec![PathBuf::from("a.tsv"), PathBuf::from("b.tsv")]
        );
        assert_eq!(c.seed, 7);
        assert_eq!(c.precision, Precision::F32);
        assert_eq!(
            c.ner_command,
            Some(vec![
                "python3".to_string(),
                "tag.py".to_string(),
                "--fast".to_string()
            ])
        );
    }

    #[test]
    fn unknown_keys_and_bad_values_error_with_line() {
        let err = RunConfig::from_text("layers = 2\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(2), .. }), "{err}");
        let err = RunConfig::from_text("epochs = many\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(1), .. }));
        let err = RunConfig::from_text("no equals sign\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(1), .. }));
    }

    #[test]
    fn set_override_behaves_like_file_keys() {
        let mut c = RunConfig::default();
        c.set("batch_size", "8").unwrap();
        assert_eq!(c.batch_size, 8);
        assert!(c.set("nonsense", "1").is_err());
    }

    #[test]
    fn env_seed_override() {
        // Serialize access to the env var against other tests.
        let mut c = RunConfig::default();
        std::env::set_var("BAS_SEED", "123");
        c.apply_env().unwrap();
        std::env::remove_var("BAS_SEED");
        assert_eq!(c.seed, 123);
    }

    #[test]
    fn config_feeds_model_and_train_configs() {
        let mut c = RunConfig::default();
        c.set("layers", "2").unwrap();
        c.set("hidden", "16").unwrap();
        c.set("heads", "2").unwrap();
        let mc = c.model_config(31);
        assert_eq!(mc.encoder.vocab_size, 31);
        assert_eq!(mc.encoder.head_dim(), 8);
        let tc = c.train_config();
        assert_eq!(tc.epochs, 4);
        tc.validate().unwrap();
    }
}
