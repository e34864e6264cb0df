//! The four classifier heads mapping encoder outputs to a two-class
//! probability: `[CLS]`-only (baseline), bag-of-words sums, a windowed
//! convolution with max pooling, and a two-layer tanh recurrence.
//!
//! All heads share the same fully connected tail
//! `softmax(W2 * relu(W1 * input + b1) + b2)`; class index 0 is the
//! probability that the candidate answer is correct. The CNN filter bank and
//! the RNN cells are shared between the question and answer streams. An empty
//! stream (a fully truncated answer) contributes a zero vector.

use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, Var};
use crate::tensor::{Activation, Scalar, Tensor};

use crate::encoder::EncodedVars;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Baseline,
    Bow,
    Cnn,
    Rnn,
}

impl HeadKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "baseline" => Ok(HeadKind::Baseline),
            "bow" => Ok(HeadKind::Bow),
            "cnn" => Ok(HeadKind::Cnn),
            "rnn" => Ok(HeadKind::Rnn),
            other => Err(Error::config(format!(
                "unknown head '{other}' (expected baseline|bow|cnn|rnn)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Baseline => "baseline",
            HeadKind::Bow => "bow",
            HeadKind::Cnn => "cnn",
            HeadKind::Rnn => "rnn",
        }
    }

    pub const ALL: [HeadKind; 4] = [
        HeadKind::Baseline,
        HeadKind::Bow,
        HeadKind::Cnn,
        HeadKind::Rnn,
    ];
}

/// Head hyperparameters. `fc_hidden` is 1024 at full scale; the convolution
/// runs `cnn_filters` filters over windows of `cnn_window` tokens with
/// `cnn_window - 1` zero rows of padding per side, so every partial window is
/// scored.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub fc_hidden: usize,
    pub cnn_filters: usize,
    pub cnn_window: usize,
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("head_hidden", self.fc_hidden),
            ("cnn_filters", self.cnn_filters),
            ("cnn_window", self.cnn_window),
        ] {
            if value == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Width of the fully connected input vector for encoder width `hidden`:
    /// H, 3H, H + 2*filters, and 3H for the four kinds respectively.
    pub fn input_width(&self, hidden: usize) -> usize {
        match self.kind {
            HeadKind::Baseline => hidden,
            HeadKind::Bow | HeadKind::Rnn => 3 * hidden,
            HeadKind::Cnn => hidden + 2 * self.cnn_filters,
        }
    }
}

/// Shared fully connected tail.
#[derive(Debug, Clone)]
pub struct FcWeights<F> {
    pub w1: Tensor<F>,
    pub b1: Tensor<F>,
    pub w2: Tensor<F>,
    pub b2: Tensor<F>,
}

/// One tanh recurrence layer: `h_t = tanh(x_t Wx + h_(t-1) Wh + b)`.
#[derive(Debug, Clone)]
pub struct RnnCell<F> {
    pub wx: Tensor<F>,
    pub wh: Tensor<F>,
    pub b: Tensor<F>,
}

#[derive(Debug, Clone)]
pub enum HeadWeights<F> {
    Baseline {
        fc: FcWeights<F>,
    },
    Bow {
        fc: FcWeights<F>,
    },
    Cnn {
        filters: Tensor<F>,
        fc: FcWeights<F>,
    },
    Rnn {
        cells: Vec<RnnCell<F>>,
        fc: FcWeights<F>,
    },
}

impl<F: Scalar> HeadWeights<F> {
    pub fn kind(&self) -> HeadKind {
        match self {
            HeadWeights::Baseline { .. } => HeadKind::Baseline,
            HeadWeights::Bow { .. } => HeadKind::Bow,
            HeadWeights::Cnn { .. } => HeadKind::Cnn,
            HeadWeights::Rnn { .. } => HeadKind::Rnn,
        }
    }

    pub fn bind(&self, graph: &mut Graph<F>) -> HeadVars {
        let bind_fc = |graph: &mut Graph<F>, fc: &FcWeights<F>| FcVars {
            w1: graph.param(fc.w1.clone()),
            b1: graph.param(fc.b1.clone()),
            w2: graph.param(fc.w2.clone()),
            b2: graph.param(fc.b2.clone()),
        };
        match self {
            HeadWeights::Baseline { fc } => HeadVars::Baseline {
                fc: bind_fc(graph, fc),
            },
            HeadWeights::Bow { fc } => HeadVars::Bow {
                fc: bind_fc(graph, fc),
            },
            HeadWeights::Cnn { filters, fc } => HeadVars::Cnn {
                filters: graph.param(filters.clone()),
                fc: bind_fc(graph, fc),
            },
            HeadWeights::Rnn { cells, fc } => HeadVars::Rnn {
                cells: cells
                    .iter()
                    .map(|c| RnnCellVars {
                        wx: graph.param(c.wx.clone()),
                        wh: graph.param(c.wh.clone()),
                        b: graph.param(c.b.clone()),
                    })
                    .collect(),
                fc: bind_fc(graph, fc),
            },
        }
    }
}

pub struct FcVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub struct RnnCellVars {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
}

pub enum HeadVars {
    Baseline { fc: FcVars },
    Bow { fc: FcVars },
    Cnn { filters: Var, fc: FcVars },
    Rnn { cells: Vec<RnnCellVars>, fc: FcVars },
}

fn zeros_row<F: Scalar>(graph: &mut Graph<F>, width: usize) -> Var {
    graph.input(Tensor::zeros(vec![1, width]))
}

/// Sum of the stream's token vectors; zeros when the stream is empty.
fn bow_vector<F: Scalar>(graph: &mut Graph<F>, stream: Option<Var>, hidden: usize) -> Result<Var> {
    match stream {
        Some(s) => graph.sum_rows(s),
        None => Ok(zeros_row(graph, hidden)),
    }
}

/// Convolution along the token axis followed by max pooling over positions.
fn cnn_features<F: Scalar>(
    graph: &mut Graph<F>,
    filters: Var,
    stream: Option<Var>,
    window: usize,
    n_filters: usize,
) -> Result<Var> {
    match stream {
        Some(s) => {
            let padded = graph.pad_rows(s, window - 1, window - 1)?;
            let windows = graph.window_rows(padded, window)?;
            let responses = graph.matmul(windows, filters)?;
            graph.max_rows(responses)
        }
        None => Ok(zeros_row(graph, n_filters)),
    }
}

/// Final top-layer state of the stacked recurrence, zero-initialized states.
fn rnn_final_state<F: Scalar>(
    graph: &mut Graph<F>,
    cells: &[RnnCellVars],
    stream: Option<Var>,
    hidden: usize,
) -> Result<Var> {
    let Some(s) = stream else {
        return Ok(zeros_row(graph, hidden));
    };
    let steps = graph.value(s).rows();
    let mut inputs: Vec<Var> = (0..steps)
        .map(|t| graph.slice_rows(s, t, t + 1))
        .collect::<Result<_>>()?;
    let mut last = zeros_row(graph, hidden);
    for cell in cells {
        let mut state = zeros_row(graph, hidden);
        let mut outputs = Vec::with_capacity(steps);
        for &x_t in &inputs {
            let from_input = graph.matmul(x_t, cell.wx)?;
            let from_state = graph.matmul(state, cell.wh)?;
            let pre = graph.add(from_input, from_state)?;
            let pre = graph.add_row(pre, cell.b)?;
            state = graph.activation(Activation::Tanh, pre)?;
            outputs.push(state);
        }
        last = state;
        inputs = outputs;
    }
    Ok(last)
}

fn fc_tail<F: Scalar>(
    graph: &mut Graph<F>,
    fc: &FcVars,
    input: Var,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let input = mode.dropout(graph, input)?;
    let pre = graph.matmul(input, fc.w1)?;
    let pre = graph.add_row(pre, fc.b1)?;
    let hidden = graph.activation(Activation::Relu, pre)?;
    let logits = graph.matmul(hidden, fc.w2)?;
    let logits = graph.add_row(logits, fc.b2)?;
    graph.softmax_rows(logits)
}

/// Runs the head over encoded pair vectors, returning the 1x2 probability
/// row (index 0 = correct).
pub fn head_forward<F: Scalar>(
    graph: &mut Graph<F>,
    head: &HeadVars,
    encoded: &EncodedVars,
    config: &HeadConfig,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let hidden = graph.value(encoded.cls).cols();
    match head {
        HeadVars::Baseline { fc } => fc_tail(graph, fc, encoded.cls, mode),
        HeadVars::Bow { fc } => {
            let q = bow_vector(graph, encoded.question, hidden)?;
            let a = bow_vector(graph, encoded.answer, hidden)?;
            let input = graph.concat_cols(&[encoded.cls, q, a])?;
            fc_tail(graph, fc, input, mode)
        }
        HeadVars::Cnn { filters, fc } => {
            let q = cnn_features(
                graph,
                *filters,
                encoded.question,
                config.cnn_window,
                config.cnn_filters,
            )?;
            let a = cnn_features(
                graph,
                *filters,
                encoded.answer,
                config.cnn_window,
                config.cnn_filters,
            )?;
            let input = graph.concat_cols(&[encoded.cls, q, a])?;
            fc_tail(graph, fc, input, mode)
        }
        HeadVars::Rnn { cells, fc } => {
            let q = rnn_final_state(graph, cells, encoded.question, hidden)?;
            let a = rnn_final_state(graph, cells, encoded.answer, hidden)?;
            let input = graph.concat_cols(&[encoded.cls, q, a])?;
            fc_tail(graph, fc, input, mode)
        }
    }
}
