//! Transformer encoder stack: per-head scaled dot-product self-attention,
//! head concatenation through an output projection, and a per-layer affine
//! map, fed by summed token/position/segment embeddings.
//!
//! The default layer is exactly attention -> W_O -> W_F + b_F with no
//! residual connections or normalization. The `bert_compat` flag wraps both
//! sublayers with residual additions and parameterless row normalization for
//! importing externally trained weights; all defaults and fixtures use the
//! literal form.
//!
//! Padding is handled by masking key positions to -1e9 before the softmax.
//! Row sums of the attention probabilities are then 1 up to elementwise
//! rounding: ~1e-15 in f64 and ~1e-7 in f32 (the f32 figure is the storage
//! resolution limit; tests bound it at 1e-6).

use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, Var};
use crate::tensor::{Scalar, Tensor};
use crate::tokenizer::PairEncoding;

/// Stack geometry: `layers`/`hidden`/`heads` are the depth, width, and
/// attention-head count; `head_dim = hidden / heads`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub bert_compat: bool,
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    // A zero-layer stack is legal (embeddings only); tests use it.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
        ] {
            if value == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "hidden ({}) must be divisible by heads ({})",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Query/key/value projections of one attention head, each `hidden x head_dim`.
#[derive(Debug, Clone)]
pub struct AttentionHeadWeights<F> {
    pub wq: Tensor<F>,
    pub wk: Tensor<F>,
    pub wv: Tensor<F>,
}

/// One encoder layer: per-head projections, the `hidden x hidden` output
/// projection, and the `hidden x hidden` affine map with bias.
#[derive(Debug, Clone)]
pub struct LayerWeights<F> {
    pub heads: Vec<AttentionHeadWeights<F>>,
    pub wo: Tensor<F>,
    pub wf: Tensor<F>,
    pub bf: Tensor<F>,
}

/// Embedding tables plus the layer stack.
#[derive(Debug, Clone)]
pub struct EncoderWeights<F> {
    pub token_embedding: Tensor<F>,
    pub position_embedding: Tensor<F>,
    pub segment_embedding: Tensor<F>,
    pub layers: Vec<LayerWeights<F>>,
}

/// Graph handles mirroring [`AttentionHeadWeights`].
pub struct AttentionHeadVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
}

pub struct LayerVars {
    pub heads: Vec<AttentionHeadVars>,
    pub wo: Var,
    pub wf: Var,
    pub bf: Var,
}

pub struct EncoderVars {
    pub token_embedding: Var,
    pub position_embedding: Var,
    pub segment_embedding: Var,
    pub layers: Vec<LayerVars>,
}

/// Final encoder rows split per the pair layout. `question`/`answer` are
/// `None` when the corresponding span is empty; `[SEP]` and `[PAD]` rows are
/// discarded.
pub struct EncodedVars {
    pub cls: Var,
    pub question: Option<Var>,
    pub answer: Option<Var>,
}

/// Token, position, and segment table rows summed per position.
pub fn embed<F: Scalar>(
    graph: &mut Graph<F>,
    weights: &EncoderVars,
    encoding: &PairEncoding,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let n = encoding.max_len();
    let tok = graph.gather_rows(weights.token_embedding, &encoding.token_ids)?;
    let positions: Vec<usize> = (0..n).collect();
    let pos = graph.gather_rows(weights.position_embedding, &positions)?;
    let segments: Vec<usize> = encoding.segment_ids.iter().map(|&s| s as usize).collect();
    let seg = graph.gather_rows(weights.segment_embedding, &segments)?;
    let sum = graph.add(tok, pos)?;
    let sum = graph.add(sum, seg)?;
    mode.dropout(graph, sum)
}

/// Attention output of one head along with its probability matrix.
pub struct AttentionOut {
    pub z: Var,
    pub probs: Var,
}

/// Additive bias masking padded key positions before the softmax.
const MASK_BIAS: f64 = -1e9;

fn mask_bias_matrix<F: Scalar>(n: usize, mask: &[u8]) -> Tensor<F> {
    let mut bias = Tensor::zeros(vec![n, n]);
    let neg = F::from_f64(MASK_BIAS);
    for i in 0..n {
        for (j, &m) in mask.iter().enumerate() {
            if m == 0 {
                bias.set(i, j, neg);
            }
        }
    }
    bias
}

/// Scaled dot-product attention for one head: project to queries, keys, and
/// values, score as `Q K^T / sqrt(head_dim)` with padded keys pushed to -1e9,
/// and weight the values by the row softmax. If every key is masked the
/// output rows are zero.
pub fn self_attention_head<F: Scalar>(
    graph: &mut Graph<F>,
    x: Var,
    head: &AttentionHeadVars,
    mask: &[u8],
) -> Result<AttentionOut> {
    let n = graph.value(x).rows();
    if mask.len() != n {
        return Err(Error::shape(format!(
            "attention mask has {} entries for {} rows",
            mask.len(),
            n
        )));
    }
    let q = graph.matmul(x, head.wq)?;
    let k = graph.matmul(x, head.wk)?;
    let v = graph.matmul(x, head.wv)?;
    let head_dim = graph.value(q).cols();
    let scores = graph.matmul_nt(q, k)?;
    let scores = graph.scale(scores, F::from_f64(1.0 / (head_dim as f64).sqrt()));
    let scores = if mask.contains(&0) {
        let bias = graph.input(mask_bias_matrix(n, mask));
        graph.add(scores, bias)?
    } else {
        scores
    };
    let probs = graph.softmax_rows(scores)?;
    let probs = if mask.iter().all(|&m| m == 0) {
        graph.scale(probs, F::zero())
    } else {
        probs
    };
    let z = graph.matmul(probs, v)?;
    Ok(AttentionOut { z, probs })
}

/// One encoder layer: concatenated head outputs through the output
/// projection, then the affine map.
pub fn encoder_layer<F: Scalar>(
    graph: &mut Graph<F>,
    x: Var,
    layer: &LayerVars,
    mask: &[u8],
    config: &EncoderConfig,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let mut zs = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        zs.push(self_attention_head(graph, x, head, mask)?.z);
    }
    let concat = if zs.len() == 1 {
        zs[0]
    } else {
        graph.concat_cols(&zs)?
    };
    let projected = graph.matmul(concat, layer.wo)?;

    let out = if config.bert_compat {
        let attn = graph.add(x, projected)?;
        let attn = graph.layernorm_rows(attn, 1e-12)?;
        let ffn = graph.matmul(attn, layer.wf)?;
        let ffn = graph.add_row(ffn, layer.bf)?;
        let sum = graph.add(attn, ffn)?;
        graph.layernorm_rows(sum, 1e-12)?
    } else {
        let ffn = graph.matmul(projected, layer.wf)?;
        graph.add_row(ffn, layer.bf)?
    };
    mode.dropout(graph, out)
}

/// Runs the full stack over a pair encoding and splits the final rows into
/// the `[CLS]` vector and the question/answer token vectors.
pub fn encode<F: Scalar>(
    graph: &mut Graph<F>,
    weights: &EncoderVars,
    encoding: &PairEncoding,
    config: &EncoderConfig,
    mode: &mut Mode<'_>,
) -> Result<EncodedVars> {
    let mut x = embed(graph, weights, encoding, mode)?;
    for layer in &weights.layers {
        x = encoder_layer(graph, x, layer, &encoding.attention_mask, config, mode)?;
    }
    let cls = graph.slice_rows(x, 0, 1)?;
    let question = if encoding.question_span.is_empty() {
        None
    } else {
        Some(graph.slice_rows(x, encoding.question_span.start, encoding.question_span.end)?)
    };
    let answer = if encoding.answer_span.is_empty() {
        None
    } else {
        Some(graph.slice_rows(x, encoding.answer_span.start, encoding.answer_span.end)?)
    };
    Ok(EncodedVars {
        cls,
        question,
        answer,
    })
}

/// Per-token output vectors as plain tensors (evaluation convenience).
pub struct EncodedPair<F> {
    pub e_cls: Tensor<F>,
    pub question_vectors: Option<Tensor<F>>,
    pub answer_vectors: Option<Tensor<F>>,
}

impl<F: Scalar> EncoderWeights<F> {
    /// Binds every weight tensor into the graph as a trainable leaf.
    pub fn bind(&self, graph: &mut Graph<F>) -> EncoderVars {
        EncoderVars {
            token_embedding: graph.param(self.token_embedding.clone()),
            position_embedding: graph.param(self.position_embedding.clone()),
            segment_embedding: graph.param(self.segment_embedding.clone()),
            layers: self
                .layers
                .iter()
                .map(|layer| LayerVars {
                    heads: layer
                        .heads
                        .iter()
                        .map(|h| AttentionHeadVars {
                            wq: graph.param(h.wq.clone()),
                            wk: graph.param(h.wk.clone()),
                            wv: graph.param(h.wv.clone()),
                        })
                        .collect(),
                    wo: graph.param(layer.wo.clone()),
                    wf: graph.param(layer.wf.clone()),
                    bf: graph.param(layer.bf.clone()),
                })
                .collect(),
        }
    }

    /// Evaluation-mode encode into plain tensors.
    pub fn encode_pair(
        &self,
        encoding: &PairEncoding,
        config: &EncoderConfig,
    ) -> Result<EncodedPair<F>> {
        let mut graph = Graph::new();
        let vars = self.bind(&mut graph);
        let out = encode(&mut graph, &vars, encoding, config, &mut Mode::Eval)?;
        Ok(EncodedPair {
            e_cls: graph.value(out.cls).clone(),
            question_vectors: out.question.map(|v| graph.value(v).clone()),
            answer_vectors: out.answer.map(|v| graph.value(v).clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_matrix, rng};

    fn toy_config(layers: usize, hidden: usize, heads: usize, max_len: usize) -> EncoderConfig {
        EncoderConfig {
            layers,
            hidden,
            heads,
            vocab_size: 11,
            max_len,
            dropout: 0.0,
            bert_compat: false,
        }
    }

    fn random_weights(cfg: &EncoderConfig, seed: u64) -> EncoderWeights<f64> {
        let mut r = rng(seed);
        let scale = 0.4;
        EncoderWeights {
            token_embedding: random_matrix(&mut r, cfg.vocab_size, cfg.hidden, scale),
            position_embedding: random_matrix(&mut r, cfg.max_len, cfg.hidden, scale),
            segment_embedding: random_matrix(&mut r, 2, cfg.hidden, scale),
            layers: (0..cfg.layers)
                .map(|_| LayerWeights {
                    heads: (0..cfg.heads)
                        .map(|_| AttentionHeadWeights {
                            wq: random_matrix(&mut r, cfg.hidden, cfg.head_dim(), scale),
                            wk: random_matrix(&mut r, cfg.hidden, cfg.head_dim(), scale),
                            wv: random_matrix(&mut r, cfg.hidden, cfg.head_dim(), scale),
                        })
                        .collect(),
                    wo: random_matrix(&mut r, cfg.hidden, cfg.hidden, scale),
                    wf: random_matrix(&mut r, cfg.hidden, cfg.hidden, scale),
                    bf: random_matrix(&mut r, 1, cfg.hidden, scale),
                })
                .collect(),
        }
    }

    fn encoding(
        token_ids: Vec<usize>,
        real: usize,
        q: std::ops::Range<usize>,
        a: std::ops::Range<usize>,
    ) -> PairEncoding {
        let n = token_ids.len();
        let mut mask = vec![0u8; n];
        for m in mask.iter_mut().take(real) {
            *m = 1;
        }
        let mut segs = vec![0u8; n];
        for seg in segs.iter_mut().take(real).skip(a.start.saturating_sub(1)) {
            *seg = 1;
        }
        PairEncoding {
            token_ids,
            segment_ids: segs,
            attention_mask: mask,
            question_span: q,
            answer_span: a,
        }
    }

    #[test]
    fn config_validation() {
        assert!(toy_config(2, 8, 2, 16).validate().is_ok());
        assert!(toy_config(2, 9, 2, 16).validate().is_err());
        let mut bad = toy_config(2, 8, 2, 16);
        bad.dropout = 1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_token_attention_is_identity_weighting() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_rows(&[&[0.3, -1.2]]));
        let mut r = rng(3);
        let head = AttentionHeadVars {
            wq: g.input(random_matrix(&mut r, 2, 2, 1.0)),
            wk: g.input(random_matrix(&mut r, 2, 2, 1.0)),
            wv: g.input(random_matrix(&mut r, 2, 2, 1.0)),
        };
        let out = self_attention_head(&mut g, x, &head, &[1]).unwrap();
        assert_eq!(g.value(out.probs).data(), &[1.0]);
        // Z equals the value projection of the lone token.
        let v = g.matmul(x, head.wv).unwrap();
        assert_eq!(g.value(out.z).data(), g.value(v).data());
    }

    #[test]
    fn two_token_identity_fixture() {
        // X = I2, all projections I2, head_dim 2: scores = I/sqrt(2), so each
        // row puts e^(1/sqrt 2) : 1 odds on its own position.
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::identity(2));
        let id = Tensor::identity(2);
        let head = AttentionHeadVars {
            wq: g.input(id.clone()),
            wk: g.input(id.clone()),
            wv: g.input(id.clone()),
        };
        let out = self_attention_head(&mut g, x, &head, &[1, 1]).unwrap();
        let probs = g.value(out.probs);
        assert!((probs.at(0, 0) - 0.6698).abs() < 1e-4, "{}", probs.at(0, 0));
        assert!((probs.at(0, 1) - 0.3302).abs() < 1e-4);
        let z = g.value(out.z);
        assert!((z.at(0, 0) - 0.6698).abs() < 1e-4);
        assert!((z.at(0, 1) - 0.3302).abs() < 1e-4);
    }

    #[test]
    fn masked_key_gets_zero_attention() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_rows(&[&[2.0, 1.0], &[-1.0, 3.0]]));
        let id = Tensor::identity(2);
        let head = AttentionHeadVars {
            wq: g.input(id.clone()),
            wk: g.input(id.clone()),
            wv: g.input(id.clone()),
        };
        let out = self_attention_head(&mut g, x, &head, &[1, 0]).unwrap();
        let probs = g.value(out.probs);
        assert_eq!(probs.at(0, 0), 1.0);
        assert_eq!(probs.at(0, 1), 0.0);
        assert_eq!(probs.at(1, 0), 1.0);
    }

    #[test]
    fn fully_masked_input_yields_zero_rows() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_rows(&[&[2.0, 1.0]]));
        let id = Tensor::identity(2);
        let head = AttentionHeadVars {
            wq: g.input(id.clone()),
            wk: g.input(id.clone()),
            wv: g.input(id),
        };
        let out = self_attention_head(&mut g, x, &head, &[0]).unwrap();
        assert_eq!(g.value(out.z).data(), &[0.0, 0.0]);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut r = rng(21);
        let cfg = toy_config(1, 8, 2, 12);
        for _ in 0..100 {
            let mut g = Graph::<f64>::new();
            let x = g.input(random_matrix::<f64>(&mut r, 12, 8, 2.0));
            let head = AttentionHeadVars {
                wq: g.input(random_matrix(&mut r, 8, 4, 1.0)),
                wk: g.input(random_matrix(&mut r, 8, 4, 1.0)),
                wv: g.input(random_matrix(&mut r, 8, 4, 1.0)),
            };
            let real = rand::Rng::random_range(&mut r, 1..=12usize);
            let mut mask = vec![0u8; 12];
            for m in mask.iter_mut().take(real) {
                *m = 1;
            }
            let out = self_attention_head(&mut g, x, &head, &mask).unwrap();
            let probs = g.value(out.probs);
            for row in 0..probs.rows() {
                let s: f64 = probs.row_slice(row).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
            }
        }
        let _ = cfg;
    }

    #[test]
    fn zero_weights_layer_broadcasts_bias() {
        let cfg = toy_config(1, 4, 2, 3);
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_rows(&[
            &[1.0, 2.0, 3.0, 4.0],
            &[5.0, 6.0, 7.0, 8.0],
            &[0.5, 0.5, 0.5, 0.5],
        ]));
        let bf = Tensor::from_rows(&[&[9.0, -1.0, 2.5, 0.0]]);
        let layer = LayerVars {
            heads: (0..2)
                .map(|_| AttentionHeadVars {
                    wq: g.input(Tensor::zeros(vec![4, 2])),
                    wk: g.input(Tensor::zeros(vec![4, 2])),
                    wv: g.input(Tensor::zeros(vec![4, 2])),
                })
                .collect(),
            wo: g.input(Tensor::zeros(vec![4, 4])),
            wf: g.input(Tensor::zeros(vec![4, 4])),
            bf: g.input(bf.clone()),
        };
        let out = encoder_layer(&mut g, x, &layer, &[1, 1, 1], &cfg, &mut Mode::Eval).unwrap();
        let value = g.value(out);
        for row in 0..3 {
            assert_eq!(value.row_slice(row), bf.data());
        }
    }

    // Independent scalar-arithmetic trace of the layer equations at
    // hidden 2, one head.
    #[test]
    fn hand_traced_layer_matches() {
        let x = [[0.5, -0.25], [1.0, 0.75]];
        let wq = [[0.2, -0.1], [0.4, 0.3]];
        let wk = [[-0.3, 0.5], [0.1, 0.2]];
        let wv = [[0.6, 0.0], [-0.2, 0.7]];
        let wo = [[1.0, 0.5], [-0.5, 0.25]];
        let wf = [[0.3, -0.6], [0.8, 0.1]];
        let bf = [0.05, -0.15];

        let matmul2 = |a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]| {
            let mut out = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for p in 0..2 {
                        out[i][j] += a[i][p] * b[p][j];
                    }
                }
            }
            out
        };
        let q = matmul2(&x, &wq);
        let k = matmul2(&x, &wk);
        let v = matmul2(&x, &wv);
        let scale = 1.0 / 2.0f64.sqrt();
        let mut probs = [[0.0; 2]; 2];
        for i in 0..2 {
            let s0 = (q[i][0] * k[0][0] + q[i][1] * k[0][1]) * scale;
            let s1 = (q[i][0] * k[1][0] + q[i][1] * k[1][1]) * scale;
            let m = s0.max(s1);
            let (e0, e1) = ((s0 - m).exp(), (s1 - m).exp());
            probs[i][0] = e0 / (e0 + e1);
            probs[i][1] = e1 / (e0 + e1);
        }
        let z = matmul2(&probs, &v);
        let zo = matmul2(&z, &wo);
        let ff = matmul2(&zo, &wf);
        let expected = [
            [ff[0][0] + bf[0], ff[0][1] + bf[1]],
            [ff[1][0] + bf[0], ff[1][1] + bf[1]],
        ];

        let cfg = toy_config(1, 2, 1, 2);
        let mut g = Graph::<f64>::new();
        let to_t = |m: &[[f64; 2]; 2]| Tensor::from_rows(&[&m[0], &m[1]]);
        let xv = g.input(to_t(&x));
        let layer = LayerVars {
            heads: vec![AttentionHeadVars {
                wq: g.input(to_t(&wq)),
                wk: g.input(to_t(&wk)),
                wv: g.input(to_t(&wv)),
            }],
            wo: g.input(to_t(&wo)),
            wf: g.input(to_t(&wf)),
            bf: g.input(Tensor::from_rows(&[&bf])),
        };
        let out = encoder_layer(&mut g, xv, &layer, &[1, 1], &cfg, &mut Mode::Eval).unwrap();
        let got = g.value(out);
        for (i, row) in expected.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert!(
                    (got.at(i, j) - want).abs() < 1e-10,
                    "({i},{j}): {} vs {want}",
                    got.at(i, j)
                );
            }
        }
    }

    #[test]
    fn empty_stack_returns_embedding_rows() {
        let cfg = toy_config(0, 6, 2, 6);
        let w = random_weights(&cfg, 9);
        let enc = encoding(vec![2, 5, 3, 7, 3, 0], 6, 1..2, 3..5);
        let pair = w.encode_pair(&enc, &cfg).unwrap();

        // Recompute the embedding sum directly.
        let row = |t: usize| -> Vec<f64> {
            let id = enc.token_ids[t];
            (0..6)
                .map(|j| {
                    w.token_embedding.at(id, j)
                        + w.position_embedding.at(t, j)
                        + w.segment_embedding.at(enc.segment_ids[t] as usize, j)
                })
                .collect()
        };
        assert_eq!(pair.e_cls.row_slice(0), row(0).as_slice());
        let qv = pair.question_vectors.unwrap();
        assert_eq!(qv.row_slice(0), row(1).as_slice());
        let av = pair.answer_vectors.unwrap();
        assert_eq!(av.row_slice(0), row(3).as_slice());
        assert_eq!(av.row_slice(1), row(4).as_slice());
    }

    #[test]
    fn encode_shapes_follow_the_spans() {
        let cfg = toy_config(2, 8, 2, 16);
        let w = random_weights(&cfg, 17);
        let enc = encoding(
            vec![1, 2, 3, 4, 2, 5, 6, 7, 8, 9, 3, 10, 9, 0, 0, 0],
            13,
            1..5,
            6..12,
        );
        let pair = w.encode_pair(&enc, &cfg).unwrap();
        assert_eq!(pair.e_cls.shape(), &[1, 8]);
        assert_eq!(pair.question_vectors.unwrap().shape(), &[4, 8]);
        assert_eq!(pair.answer_vectors.unwrap().shape(), &[6, 8]);
    }

    #[test]
    fn permutation_equivariance_with_zeroed_positions() {
        let cfg = toy_config(2, 8, 2, 6);
        let mut w = random_weights(&cfg, 31);
        w.position_embedding = Tensor::zeros(vec![cfg.max_len, cfg.hidden]);

        let ids = vec![1, 4, 7, 2, 9, 5];
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permuted: Vec<usize> = perm.iter().map(|&p| ids[p]).collect();
        // All-question layout so segments are uniform.
        let enc_a = encoding(ids, 6, 1..5, 0..0);
        let enc_b = encoding(permuted, 6, 1..5, 0..0);

        let run = |enc: &PairEncoding| -> Tensor<f64> {
            let mut g = Graph::<f64>::new();
            let vars = w.bind(&mut g);
            let mut x = embed(&mut g, &vars, enc, &mut Mode::Eval).unwrap();
            for layer in &vars.layers {
                x = encoder_layer(&mut g, x, layer, &enc.attention_mask, &cfg, &mut Mode::Eval)
                    .unwrap();
            }
            g.value(x).clone()
        };
        let out_a = run(&enc_a);
        let out_b = run(&enc_b);
        for (t, &p) in perm.iter().enumerate() {
            for j in 0..cfg.hidden {
                assert!(
                    (out_b.at(t, j) - out_a.at(p, j)).abs() < 1e-10,
                    "t={t} j={j}"
                );
            }
        }
    }

    #[test]
    fn padding_does_not_change_real_outputs() {
        let short_cfg = toy_config(2, 8, 2, 8);
        let long_cfg = toy_config(2, 8, 2, 12);
        let w = random_weights(&long_cfg, 55);
        // Same weights for both configs; the shorter run uses a prefix of the
        // position table, so gather indices stay in range either way.
        let short = encoding(vec![1, 2, 3, 4, 5, 6, 0, 0], 6, 1..3, 4..5);
        let long = encoding(vec![1, 2, 3, 4, 5, 6, 0, 0, 0, 0, 0, 0], 6, 1..3, 4..5);

        let run = |enc: &PairEncoding, cfg: &EncoderConfig| w.encode_pair(enc, cfg).unwrap();
        let a = run(&short, &short_cfg);
        let b = run(&long, &long_cfg);
        for (x, y) in a.e_cls.data().iter().zip(b.e_cls.data()) {
            assert!((x - y).abs() < 1e-10);
        }
        let (qa, qb) = (a.question_vectors.unwrap(), b.question_vectors.unwrap());
        for (x, y) in qa.data().iter().zip(qb.data()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn bert_compat_layer_normalizes_rows() {
        let mut cfg = toy_config(1, 4, 1, 3);
        cfg.bert_compat = true;
        let w = random_weights(&cfg, 77);
        let enc = encoding(vec![1, 2, 3], 3, 1..2, 0..0);
        let pair = w.encode_pair(&enc, &cfg).unwrap();
        // Row-normalized output: mean ~0, variance ~1.
        let row = pair.e_cls.row_slice(0);
        let mean: f64 = row.iter().sum::<f64>() / 4.0;
        let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_token_id_is_a_data_error() {
        let cfg = toy_config(1, 4, 1, 3);
        let w = random_weights(&cfg, 91);
        let enc = encoding(vec![1, 99, 3], 3, 1..2, 0..0);
        assert!(matches!(w.encode_pair(&enc, &cfg), Err(Error::Data(_))));
    }
}
