//! Model assembly: encoder plus head weights, initialization, the canonical
//! parameter registry, and parameter counting.
//!
//! Every trainable tensor has a unique dotted name and a kind (weight matrix,
//! bias, or embedding table). The same canonical ordering backs checkpoint
//! serialization, optimizer state, gradient extraction, and the
//! finite-difference harness, so a single walk function defines it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::encoder::{
    self, AttentionHeadVars, AttentionHeadWeights, EncoderConfig, EncoderVars, EncoderWeights,
    LayerVars, LayerWeights,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, Var};
use crate::heads::{
    head_forward, FcVars, FcWeights, HeadConfig, HeadKind, HeadVars, HeadWeights, RnnCell,
    RnnCellVars,
};
use crate::tensor::{Scalar, Tensor};
use crate::tokenizer::PairEncoding;

/// Geometry of the whole model plus the weight-initialization scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
    pub init_std: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.head.validate()?;
        if self.init_std <= 0.0 || !self.init_std.is_finite() {
            return Err(Error::config(format!(
                "init_std must be positive, got {}",
                self.init_std
            )));
        }
        Ok(())
    }
}

/// What a parameter is, for weight-decay and bias-exclusion policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Matrix,
    Bias,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
    /// Encoder section vs classifier head.
    pub in_encoder: bool,
}

/// Encoder and head weights under one roof. All parameters are trainable;
/// preprocessing has none.
#[derive(Debug, Clone)]
pub struct BasModel<F> {
    pub config: ModelConfig,
    pub encoder: EncoderWeights<F>,
    pub head: HeadWeights<F>,
}

fn truncated_normal<F: Scalar>(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    std: f64,
) -> Tensor<F> {
    let mut data = Vec::with_capacity(rows * cols);
    while data.len() < rows * cols {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            data.push(F::from_f64(z * std));
        }
    }
    Tensor::new(vec![rows, cols], data).expect("truncated normal shape")
}

/// Weight matrices are drawn at `init_std / sqrt(fan_in)`. The encoder layer
/// is a plain sequence of linear maps, so a width-independent scale either
/// collapses activations toward zero or saturates the classifier softmax
/// within a layer or two; normalizing by fan-in keeps the forward signal and
/// the initial logits at unit order for any geometry.
fn matrix_init<F: Scalar>(
    rng: &mut ChaCha8Rng,
    fan_in: usize,
    fan_out: usize,
    init_std: f64,
) -> Tensor<F> {
    truncated_normal(rng, fan_in, fan_out, init_std / (fan_in as f64).sqrt())
}

impl<F: Scalar> BasModel<F> {
    /// Fresh model: embeddings from a truncated normal (mean 0, `init_std`,
    /// cut at two standard deviations), weight matrices likewise at
    /// fan-in-normalized scale, biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = &config.encoder;
        let std = config.init_std;

        let encoder = EncoderWeights {
            token_embedding: truncated_normal(&mut rng, e.vocab_size, e.hidden, std),
            position_embedding: truncated_normal(&mut rng, e.max_len, e.hidden, std),
            segment_embedding: truncated_normal(&mut rng, 2, e.hidden, std),
            layers: (0..e.layers)
                .map(|_| LayerWeights {
                    heads: (0..e.heads)
                        .map(|_| AttentionHeadWeights {
                            wq: matrix_init(&mut rng, e.hidden, e.head_dim(), std),
                            wk: matrix_init(&mut rng, e.hidden, e.head_dim(), std),
                            wv: matrix_init(&mut rng, e.hidden, e.head_dim(), std),
                        })
                        .collect(),
                    wo: matrix_init(&mut rng, e.hidden, e.hidden, std),
                    wf: matrix_init(&mut rng, e.hidden, e.hidden, std),
                    bf: Tensor::zeros(vec![1, e.hidden]),
                })
                .collect(),
        };

        let h = &config.head;
        let input = h.input_width(e.hidden);
        let fc = FcWeights {
            w1: matrix_init(&mut rng, input, h.fc_hidden, std),
            b1: Tensor::zeros(vec![1, h.fc_hidden]),
            w2: matrix_init(&mut rng, h.fc_hidden, 2, std),
            b2: Tensor::zeros(vec![1, 2]),
        };
        let head = match h.kind {
            HeadKind::Baseline => HeadWeights::Baseline { fc },
            HeadKind::Bow => HeadWeights::Bow { fc },
            HeadKind::Cnn => HeadWeights::Cnn {
                filters: matrix_init(&mut rng, h.cnn_window * e.hidden, h.cnn_filters, std),
                fc,
            },
            HeadKind::Rnn => HeadWeights::Rnn {
                cells: (0..2)
                    .map(|_| RnnCell {
                        wx: matrix_init(&mut rng, e.hidden, e.hidden, std),
                        wh: matrix_init(&mut rng, e.hidden, e.hidden, std),
                        b: Tensor::zeros(vec![1, e.hidden]),
                    })
                    .collect(),
                fc,
            },
        };

        Ok(Self {
            config,
            encoder,
            head,
        })
    }

    /// Walks every parameter in canonical order.
    pub fn for_each_param(&self, f: &mut impl FnMut(ParamInfo, &Tensor<F>)) {
        let enc = |name: &str, kind: ParamKind| ParamInfo {
            name: name.to_string(),
            kind,
            in_encoder: true,
        };
        f(
            enc("encoder.token_embedding", ParamKind::Embedding),
            &self.encoder.token_embedding,
        );
        f(
            enc("encoder.position_embedding", ParamKind::Embedding),
            &self.encoder.position_embedding,
        );
        f(
            enc("encoder.segment_embedding", ParamKind::Embedding),
            &self.encoder.segment_embedding,
        );
        for (l, layer) in self.encoder.layers.iter().enumerate() {
            for (i, head) in layer.heads.iter().enumerate() {
                f(
                    enc(&format!("encoder.layer{l}.head{i}.wq"), ParamKind::Matrix),
                    &head.wq,
                );
                f(
                    enc(&format!("encoder.layer{l}.head{i}.wk"), ParamKind::Matrix),
                    &head.wk,
                );
                f(
                    enc(&format!("encoder.layer{l}.head{i}.wv"), ParamKind::Matrix),
                    &head.wv,
                );
            }
            f(
                enc(&format!("encoder.layer{l}.wo"), ParamKind::Matrix),
                &layer.wo,
            );
            f(
                enc(&format!("encoder.layer{l}.wf"), ParamKind::Matrix),
                &layer.wf,
            );
            f(
                enc(&format!("encoder.layer{l}.bf"), ParamKind::Bias),
                &layer.bf,
            );
        }

        let head = |name: &str, kind: ParamKind| ParamInfo {
            name: name.to_string(),
            kind,
            in_encoder: false,
        };
        let visit_fc = |fc: &FcWeights<F>, f: &mut dyn FnMut(ParamInfo, &Tensor<F>)| {
            f(head("head.fc.w1", ParamKind::Matrix), &fc.w1);
            f(head("head.fc.b1", ParamKind::Bias), &fc.b1);
            f(head("head.fc.w2", ParamKind::Matrix), &fc.w2);
            f(head("head.fc.b2", ParamKind::Bias), &fc.b2);
        };
        match &self.head {
            HeadWeights::Baseline { fc } | HeadWeights::Bow { fc } => visit_fc(fc, f),
            HeadWeights::Cnn { filters, fc } => {
                f(head("head.cnn.filters", ParamKind::Matrix), filters);
                visit_fc(fc, f);
            }
            HeadWeights::Rnn { cells, fc } => {
                for (i, cell) in cells.iter().enumerate() {
                    f(
                        head(&format!("head.rnn.cell{i}.wx"), ParamKind::Matrix),
                        &cell.wx,
                    );
                    f(
                        head(&format!("head.rnn.cell{i}.wh"), ParamKind::Matrix),
                        &cell.wh,
                    );
                    f(
                        head(&format!("head.rnn.cell{i}.b"), ParamKind::Bias),
                        &cell.b,
                    );
                }
                visit_fc(fc, f);
            }
        }
    }

    /// Mutable walk in the same order as [`BasModel::for_each_param`].
    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(ParamInfo, &mut Tensor<F>)) {
        let enc = |name: String, kind: ParamKind| ParamInfo {
            name,
            kind,
            in_encoder: true,
        };
        f(
            enc("encoder.token_embedding".into(), ParamKind::Embedding),
            &mut self.encoder.token_embedding,
        );
        f(
            enc("encoder.position_embedding".into(), ParamKind::Embedding),
            &mut self.encoder.position_embedding,
        );
        f(
            enc("encoder.segment_embedding".into(), ParamKind::Embedding),
            &mut self.encoder.segment_embedding,
        );
        for (l, layer) in self.encoder.layers.iter_mut().enumerate() {
            for (i, head) in layer.heads.iter_mut().enumerate() {
                f(
                    enc(format!("encoder.layer{l}.head{i}.wq"), ParamKind::Matrix),
                    &mut head.wq,
                );
                f(
                    enc(format!("encoder.layer{l}.head{i}.wk"), ParamKind::Matrix),
                    &mut head.wk,
                );
                f(
                    enc(format!("encoder.layer{l}.head{i}.wv"), ParamKind::Matrix),
                    &mut head.wv,
                );
            }
            f(
                enc(format!("encoder.layer{l}.wo"), ParamKind::Matrix),
                &mut layer.wo,
            );
            f(
                enc(format!("encoder.layer{l}.wf"), ParamKind::Matrix),
                &mut layer.wf,
            );
            f(
                enc(format!("encoder.layer{l}.bf"), ParamKind::Bias),
                &mut layer.bf,
            );
        }

        let hd = |name: String, kind: ParamKind| ParamInfo {
            name,
            kind,
            in_encoder: false,
        };
        match &mut self.head {
            HeadWeights::Baseline { fc } | HeadWeights::Bow { fc } => {
                f(hd("head.fc.w1".into(), ParamKind::Matrix), &mut fc.w1);
                f(hd("head.fc.b1".into(), ParamKind::Bias), &mut fc.b1);
                f(hd("head.fc.w2".into(), ParamKind::Matrix), &mut fc.w2);
                f(hd("head.fc.b2".into(), ParamKind::Bias), &mut fc.b2);
            }
            HeadWeights::Cnn { filters, fc } => {
                f(hd("head.cnn.filters".into(), ParamKind::Matrix), filters);
                f(hd("head.fc.w1".into(), ParamKind::Matrix), &mut fc.w1);
                f(hd("head.fc.b1".into(), ParamKind::Bias), &mut fc.b1);
                f(hd("head.fc.w2".into(), ParamKind::Matrix), &mut fc.w2);
                f(hd("head.fc.b2".into(), ParamKind::Bias), &mut fc.b2);
            }
            HeadWeights::Rnn { cells, fc } => {
                for (i, cell) in cells.iter_mut().enumerate() {
                    f(
                        hd(format!("head.rnn.cell{i}.wx"), ParamKind::Matrix),
                        &mut cell.wx,
                    );
                    f(
                        hd(format!("head.rnn.cell{i}.wh"), ParamKind::Matrix),
                        &mut cell.wh,
                    );
                    f(
                        hd(format!("head.rnn.cell{i}.b"), ParamKind::Bias),
                        &mut cell.b,
                    );
                }
                f(hd("head.fc.w1".into(), ParamKind::Matrix), &mut fc.w1);
                f(hd("head.fc.b1".into(), ParamKind::Bias), &mut fc.b1);
                f(hd("head.fc.w2".into(), ParamKind::Matrix), &mut fc.w2);
                f(hd("head.fc.b2".into(), ParamKind::Bias), &mut fc.b2);
            }
        }
    }

    /// Parameter metadata in canonical order.
    pub fn param_infos(&self) -> Vec<ParamInfo> {
        let mut infos = Vec::new();
        self.for_each_param(&mut |info, _| infos.push(info));
        infos
    }

    /// Clones of every parameter tensor in canonical order.
    pub fn param_tensors(&self) -> Vec<Tensor<F>> {
        let mut tensors = Vec::new();
        self.for_each_param(&mut |_, t| tensors.push(t.clone()));
        tensors
    }

    /// Binds all weights into the graph as trainable leaves.
    pub fn bind(&self, graph: &mut Graph<F>) -> ModelVars {
        ModelVars {
            encoder: self.encoder.bind(graph),
            head: self.head.bind(graph),
        }
    }

    /// Exact trainable-scalar counts by section, with and without biases.
    pub fn count_parameters(&self) -> ParameterCounts {
        let mut counts = ParameterCounts::default();
        self.for_each_param(&mut |info, tensor| {
            let n = tensor.len();
            let (total, no_bias) = if info.in_encoder {
                (&mut counts.encoder, &mut counts.encoder_excluding_biases)
            } else {
                (&mut counts.head, &mut counts.head_excluding_biases)
            };
            *total += n;
            if info.kind != ParamKind::Bias {
                *no_bias += n;
            }
        });
        counts
    }
}

/// Graph handles for every model parameter.
pub struct ModelVars {
    pub encoder: EncoderVars,
    pub head: HeadVars,
}

impl ModelVars {
    /// Handles in the canonical parameter order.
    pub fn in_param_order(&self) -> Vec<Var> {
        let mut out = vec![
            self.encoder.token_embedding,
            self.encoder.position_embedding,
            self.encoder.segment_embedding,
        ];
        for layer in &self.encoder.layers {
            for head in &layer.heads {
                out.extend([head.wq, head.wk, head.wv]);
            }
            out.extend([layer.wo, layer.wf, layer.bf]);
        }
        let fc = match &self.head {
            HeadVars::Baseline { fc } | HeadVars::Bow { fc } => fc,
            HeadVars::Cnn { filters, fc } => {
                out.push(*filters);
                fc
            }
            HeadVars::Rnn { cells, fc } => {
                for cell in cells {
                    out.extend([cell.wx, cell.wh, cell.b]);
                }
                fc
            }
        };
        out.extend([fc.w1, fc.b1, fc.w2, fc.b2]);
        out
    }

    /// Rebuilds the structure from a flat list in canonical order (the
    /// inverse of [`ModelVars::in_param_order`]); used by the
    /// finite-difference harness.
    pub fn from_slice(config: &ModelConfig, vars: &[Var]) -> Result<Self> {
        let expected = param_layout(config).len();
        if vars.len() != expected {
            return Err(Error::data(format!(
                "expected {expected} parameter vars, got {}",
                vars.len()
            )));
        }
        let mut cursor = vars.iter().copied();
        let mut next = || cursor.next().expect("length checked");

        let encoder = EncoderVars {
            token_embedding: next(),
            position_embedding: next(),
            segment_embedding: next(),
            layers: (0..config.encoder.layers)
                .map(|_| LayerVars {
                    heads: (0..config.encoder.heads)
                        .map(|_| AttentionHeadVars {
                            wq: next(),
                            wk: next(),
                            wv: next(),
                        })
                        .collect(),
                    wo: next(),
                    wf: next(),
                    bf: next(),
                })
                .collect(),
        };
        let head = match config.head.kind {
            HeadKind::Baseline => HeadVars::Baseline {
                fc: FcVars {
                    w1: next(),
                    b1: next(),
                    w2: next(),
                    b2: next(),
                },
            },
            HeadKind::Bow => HeadVars::Bow {
                fc: FcVars {
                    w1: next(),
                    b1: next(),
                    w2: next(),
                    b2: next(),
                },
            },
            HeadKind::Cnn => HeadVars::Cnn {
                filters: next(),
                fc: FcVars {
                    w1: next(),
                    b1: next(),
                    w2: next(),
                    b2: next(),
                },
            },
            HeadKind::Rnn => HeadVars::Rnn {
                cells: (0..2)
                    .map(|_| RnnCellVars {
                        wx: next(),
                        wh: next(),
                        b: next(),
                    })
                    .collect(),
                fc: FcVars {
                    w1: next(),
                    b1: next(),
                    w2: next(),
                    b2: next(),
                },
            },
        };
        Ok(ModelVars { encoder, head })
    }
}

/// (name, kind, shape) of every parameter a config implies, in canonical
/// order, without materializing weights.
pub fn param_layout(config: &ModelConfig) -> Vec<(String, ParamKind, Vec<usize>)> {
    let e = &config.encoder;
    let mut out = vec![
        (
            "encoder.token_embedding".to_string(),
            ParamKind::Embedding,
            vec![e.vocab_size, e.hidden],
        ),
        (
            "encoder.position_embedding".to_string(),
            ParamKind::Embedding,
            vec![e.max_len, e.hidden],
        ),
        (
            "encoder.segment_embedding".to_string(),
            ParamKind::Embedding,
            vec![2, e.hidden],
        ),
    ];
    for l in 0..e.layers {
        for i in 0..e.heads {
            for w in ["wq", "wk", "wv"] {
                out.push((
                    format!("encoder.layer{l}.head{i}.{w}"),
                    ParamKind::Matrix,
                    vec![e.hidden, e.head_dim()],
                ));
            }
        }
        out.push((
            format!("encoder.layer{l}.wo"),
            ParamKind::Matrix,
            vec![e.hidden, e.hidden],
        ));
        out.push((
            format!("encoder.layer{l}.wf"),
            ParamKind::Matrix,
            vec![e.hidden, e.hidden],
        ));
        out.push((
            format!("encoder.layer{l}.bf"),
            ParamKind::Bias,
            vec![1, e.hidden],
        ));
    }
    let h = &config.head;
    match h.kind {
        HeadKind::Cnn => out.push((
            "head.cnn.filters".to_string(),
            ParamKind::Matrix,
            vec![h.cnn_window * e.hidden, h.cnn_filters],
        )),
        HeadKind::Rnn => {
            for i in 0..2 {
                out.push((
                    format!("head.rnn.cell{i}.wx"),
                    ParamKind::Matrix,
                    vec![e.hidden, e.hidden],
                ));
                out.push((
                    format!("head.rnn.cell{i}.wh"),
                    ParamKind::Matrix,
                    vec![e.hidden, e.hidden],
                ));
                out.push((
                    format!("head.rnn.cell{i}.b"),
                    ParamKind::Bias,
                    vec![1, e.hidden],
                ));
            }
        }
        _ => {}
    }
    let input = h.input_width(e.hidden);
    out.push((
        "head.fc.w1".to_string(),
        ParamKind::Matrix,
        vec![input, h.fc_hidden],
    ));
    out.push((
        "head.fc.b1".to_string(),
        ParamKind::Bias,
        vec![1, h.fc_hidden],
    ));
    out.push((
        "head.fc.w2".to_string(),
        ParamKind::Matrix,
        vec![h.fc_hidden, 2],
    ));
    out.push(("head.fc.b2".to_string(), ParamKind::Bias, vec![1, 2]));
    out
}

/// Full forward pass: encode the pair, run the head, return the 1x2
/// probability row.
pub fn forward_pair<F: Scalar>(
    graph: &mut Graph<F>,
    vars: &ModelVars,
    encoding: &PairEncoding,
    config: &ModelConfig,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let encoded = encoder::encode(graph, &vars.encoder, encoding, &config.encoder, mode)?;
    head_forward(graph, &vars.head, &encoded, &config.head, mode)
}

/// Trainable-scalar totals; `total = encoder + head`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCounts {
    pub encoder: usize,
    pub head: usize,
    pub encoder_excluding_biases: usize,
    pub head_excluding_biases: usize,
}

impl ParameterCounts {
    pub fn total(&self) -> usize {
        self.encoder + self.head
    }
}

/// Closed-form parameter counts from the config alone. The enumeration in
/// [`BasModel::count_parameters`] must agree exactly.
pub fn closed_form_counts(config: &ModelConfig) -> ParameterCounts {
    let e = &config.encoder;
    let (v, m, h, a, d, l) = (
        e.vocab_size,
        e.max_len,
        e.hidden,
        e.heads,
        e.head_dim(),
        e.layers,
    );
    let encoder = v * h + m * h + 2 * h + l * (3 * h * d * a + h * h + h * h + h);
    let encoder_excluding_biases = encoder - l * h;

    let hc = &config.head;
    let input = hc.input_width(h);
    let fc = input * hc.fc_hidden + hc.fc_hidden + hc.fc_hidden * 2 + 2;
    let fc_no_bias = input * hc.fc_hidden + hc.fc_hidden * 2;
    let (extra, extra_no_bias) = match hc.kind {
        HeadKind::Baseline | HeadKind::Bow => (0, 0),
        HeadKind::Cnn => {
            let filters = hc.cnn_window * h * hc.cnn_filters;
            (filters, filters)
        }
        HeadKind::Rnn => (2 * (2 * h * h + h), 2 * (2 * h * h)),
    };
    ParameterCounts {
        encoder,
        head: fc + extra,
        encoder_excluding_biases,
        head_excluding_biases: fc_no_bias + extra_no_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn config(kind: HeadKind) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                layers: 2,
                hidden: 8,
                heads: 2,
                vocab_size: 13,
                max_len: 12,
                dropout: 0.1,
                bert_compat: false,
            },
            head: HeadConfig {
                kind,
                fc_hidden: 6,
                cnn_filters: 3,
                cnn_window: 3,
            },
            init_std: 0.02,
        }
    }

    #[test]
    fn init_is_deterministic_and_respects_truncation() {
        let a = BasModel::<f64>::init(config(HeadKind::Cnn), 7).unwrap();
        let b = BasModel::<f64>::init(config(HeadKind::Cnn), 7).unwrap();
        let c = BasModel::<f64>::init(config(HeadKind::Cnn), 8).unwrap();
        let flat = |m: &BasModel<f64>| {
            let mut v = Vec::new();
            m.for_each_param(&mut |_, t| v.extend_from_slice(t.data()));
            v
        };
        assert_eq!(flat(&a), flat(&b));
        assert_ne!(flat(&a), flat(&c));
        a.for_each_param(&mut |info, t| match info.kind {
            ParamKind::Bias => {
                assert!(t.data().iter().all(|&x| x == 0.0), "{} not zero", info.name);
            }
            ParamKind::Embedding => {
                assert!(
                    t.data().iter().all(|&x| x.abs() <= 2.0 * 0.02 + 1e-12),
                    "{} exceeds truncation",
                    info.name
                );
            }
            ParamKind::Matrix => {
                let bound = 2.0 * 0.02 / (t.shape()[0] as f64).sqrt() + 1e-12;
                assert!(
                    t.data().iter().all(|&x| x.abs() <= bound),
                    "{} exceeds truncation",
                    info.name
                );
            }
        });
    }

    #[test]
    fn parameter_names_are_unique_and_match_layout() {
        for kind in HeadKind::ALL {
            let model = BasModel::<f64>::init(config(kind), 3).unwrap();
            let infos = model.param_infos();
            let names: HashSet<&str> = infos.iter().map(|i| i.name.as_str()).collect();
            assert_eq!(names.len(), infos.len(), "duplicate names for {kind:?}");

            let layout = param_layout(&model.config);
            assert_eq!(layout.len(), infos.len());
            let mut idx = 0;
            model.for_each_param(&mut |info, tensor| {
                assert_eq!(layout[idx].0, info.name);
                assert_eq!(layout[idx].1, info.kind);
                assert_eq!(layout[idx].2, tensor.shape());
                idx += 1;
            });

            // The mutable walk visits the same parameters in the same order.
            let mut model = model;
            let mut mut_names = Vec::new();
            model.for_each_param_mut(&mut |info, _| mut_names.push(info.name));
            assert_eq!(
                mut_names,
                infos.iter().map(|i| i.name.clone()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn bind_order_matches_param_order() {
        for kind in HeadKind::ALL {
            let model = BasModel::<f64>::init(config(kind), 5).unwrap();
            let mut graph = Graph::new();
            let vars = model.bind(&mut graph);
            let ordered = vars.in_param_order();
            let tensors = model.param_tensors();
            assert_eq!(ordered.len(), tensors.len());
            for (var, tensor) in ordered.iter().zip(&tensors) {
                assert_eq!(graph.value(*var).data(), tensor.data());
            }
            // from_slice reproduces the same assignment.
            let rebuilt = ModelVars::from_slice(&model.config, &ordered).unwrap();
            assert_eq!(rebuilt.in_param_order(), ordered);
        }
    }

    #[test]
    fn full_scale_head_counts() {
        let full_scale = |kind| ModelConfig {
            encoder: EncoderConfig {
                layers: 12,
                hidden: 768,
                heads: 12,
                vocab_size: 30522,
                max_len: 512,
                dropout: 0.2,
                bert_compat: false,
            },
            head: HeadConfig {
                kind,
                fc_hidden: 1024,
                cnn_filters: 200,
                cnn_window: 3,
            },
            init_std: 0.02,
        };
        let baseline = closed_form_counts(&full_scale(HeadKind::Baseline));
        assert_eq!(baseline.head_excluding_biases, 788_480);
        assert_eq!(baseline.head, 789_506);

        let bow = closed_form_counts(&full_scale(HeadKind::Bow));
        assert_eq!(bow.head_excluding_biases, 2_361_344);

        let cnn = closed_form_counts(&full_scale(HeadKind::Cnn));
        // 1168-wide concat vector feeding the hidden layer.
        assert_eq!(
            cnn.head_excluding_biases,
            3 * 768 * 200 + 1168 * 1024 + 1024 * 2
        );
    }

    #[test]
    fn closed_form_matches_enumeration_on_random_configs() {
        let mut r = crate::testutil::rng(99);
        for trial in 0..20 {
            let kind = HeadKind::ALL[trial % 4];
            let heads = 1 + rand::Rng::random_range(&mut r, 0..3usize);
            let hidden = heads * (1 + rand::Rng::random_range(&mut r, 0..4usize));
            let cfg = ModelConfig {
                encoder: EncoderConfig {
                    layers: rand::Rng::random_range(&mut r, 0..3usize),
                    hidden,
                    heads,
                    vocab_size: 5 + rand::Rng::random_range(&mut r, 0..20usize),
                    max_len: 8 + rand::Rng::random_range(&mut r, 0..16usize),
                    dropout: 0.0,
                    bert_compat: false,
                },
                head: HeadConfig {
                    kind,
                    fc_hidden: 1 + rand::Rng::random_range(&mut r, 0..8usize),
                    cnn_filters: 1 + rand::Rng::random_range(&mut r, 0..6usize),
                    cnn_window: 2 + rand::Rng::random_range(&mut r, 0..3usize),
                },
                init_std: 0.02,
            };
            let model = BasModel::<f64>::init(cfg.clone(), trial as u64).unwrap();
            let enumerated = model.count_parameters();
            let closed = closed_form_counts(&cfg);
            assert_eq!(enumerated, closed, "trial {trial} {kind:?}");
        }
    }

    #[test]
    fn forward_pair_produces_probabilities() {
        let cfg = config(HeadKind::Rnn);
        let model = BasModel::<f64>::init(cfg.clone(), 11).unwrap();
        let encoding = PairEncoding {
            token_ids: vec![1, 2, 3, 4, 5, 6, 7, 0, 0, 0, 0, 0],
            segment_ids: vec![0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0],
            attention_mask: vec![1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0],
            question_span: 1..3,
            answer_span: 4..6,
        };
        let mut graph = Graph::new();
        let vars = model.bind(&mut graph);
        let out = forward_pair(&mut graph, &vars, &encoding, &cfg, &mut Mode::Eval).unwrap();
        let probs = graph.value(out);
        assert_eq!(probs.shape(), &[1, 2]);
        let s: f64 = probs.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
