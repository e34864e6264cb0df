//! Reverse-mode differentiation over a recorded operation graph.
//!
//! Every operation records its output value plus a closure computing the
//! vector-Jacobian product for each operand. [`Graph::backward`] walks the
//! tape in reverse creation order, which is a valid topological order because
//! operands always exist before their consumers.
//!
//! The same forward code serves evaluation (build the graph, read values) and
//! training (build, then backpropagate); there is no separate inference path
//! to drift out of sync.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{self, Activation, Scalar, Tensor, PROBABILITY_FLOOR};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

type Vjp<F> = Box<dyn Fn(&Tensor<F>) -> Vec<Tensor<F>>>;

struct Node<F: Scalar> {
    value: Tensor<F>,
    parents: Vec<Var>,
    needs_grad: bool,
    vjp: Option<Vjp<F>>,
}

/// Recorded computation: values during the forward pass, adjoints on demand.
#[derive(Default)]
pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<F: Scalar> {
    adjoints: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient of the loss with respect to `var`, if any path reached it.
    pub fn get(&self, var: Var) -> Option<&Tensor<F>> {
        self.adjoints.get(var.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but returns zeros of the given shape when the
    /// variable was never reached.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor<F>) -> Tensor<F> {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(like.shape().to_vec()),
        }
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, var: Var) -> F {
        debug_assert_eq!(self.value(var).len(), 1);
        self.value(var).data()[0]
    }

    fn push(&mut self, value: Tensor<F>, parents: Vec<Var>, vjp: Option<Vjp<F>>) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            parents,
            needs_grad,
            vjp,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; no gradient is collected for it.
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Vec::new(), None)
    }

    /// Trainable leaf; [`Graph::backward`] accumulates its adjoint.
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        let var = self.push(value, Vec::new(), None);
        self.nodes[var.0].needs_grad = true;
        var
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        Ok(self.push(
            out,
            vec![a, b],
            Some(Box::new(move |g| {
                vec![
                    tensor::matmul_nt(g, &tb).expect("matmul vjp"),
                    tensor::matmul_tn(&ta, g).expect("matmul vjp"),
                ]
            })),
        ))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_nt(self.value(a), self.value(b))?;
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        Ok(self.push(
            out,
            vec![a, b],
            Some(Box::new(move |g| {
                vec![
                    tensor::matmul(g, &tb).expect("matmul_nt vjp"),
                    tensor::matmul_tn(g, &ta).expect("matmul_nt vjp"),
                ]
            })),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(
            out,
            vec![a, b],
            Some(Box::new(move |g| vec![g.clone(), g.clone()])),
        ))
    }

    /// Adds a single-row matrix to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = tensor::add_row(self.value(a), self.value(row))?;
        Ok(self.push(
            out,
            vec![a, row],
            Some(Box::new(move |g| {
                vec![g.clone(), tensor::sum_rows(g).expect("add_row vjp")]
            })),
        ))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let out = tensor::scale(self.value(a), c);
        self.push(
            out,
            vec![a],
            Some(Box::new(move |g| vec![tensor::scale(g, c)])),
        )
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::mul_elem(self.value(a), self.value(b))?;
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        Ok(self.push(
            out,
            vec![a, b],
            Some(Box::new(move |g| {
                vec![
                    tensor::mul_elem(g, &tb).expect("mul_elem vjp"),
                    tensor::mul_elem(g, &ta).expect("mul_elem vjp"),
                ]
            })),
        ))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = tensor::softmax_rows(self.value(x))?;
        let y = out.clone();
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g| {
                // dx_row = y_row * (g_row - <g_row, y_row>)
                let (r, c) = (y.rows(), y.cols());
                let mut dx = Tensor::zeros(vec![r, c]);
                for i in 0..r {
                    let yr = y.row_slice(i);
                    let gr = g.row_slice(i);
                    let mut dot = F::zero();
                    for j in 0..c {
                        dot = dot + yr[j] * gr[j];
                    }
                    for j in 0..c {
                        dx.data_mut()[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![dx]
            })),
        ))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Result<Var> {
        let out = tensor::activation(kind, self.value(x))?;
        let tx = self.value(x).clone();
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g| {
                let deriv = tx.map(|v| kind.derivative(v));
                vec![tensor::mul_elem(g, &deriv).expect("activation vjp")]
            })),
        ))
    }

    /// Negative log-likelihood of a 1x2 probability row; see
    /// [`tensor::cross_entropy`] for the clamping rule.
    pub fn cross_entropy(&mut self, probabilities: Var, label: u8) -> Result<Var> {
        let loss = tensor::cross_entropy(self.value(probabilities), label)?;
        let idx = tensor::label_class_index(label)?;
        let p = self.value(probabilities).data()[idx];
        let shape = self.value(probabilities).shape().to_vec();
        Ok(self.push(
            Tensor::new(vec![1, 1], vec![loss])?,
            vec![probabilities],
            Some(Box::new(move |g| {
                let mut dp = Tensor::zeros(shape.clone());
                let floor = F::from_f64(PROBABILITY_FLOOR);
                // Gradient vanishes once the probability is clamped.
                if p > floor {
                    dp.data_mut()[idx] = -g.data()[0] / p;
                }
                vec![dp]
            })),
        ))
    }

    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let out = tensor::sum_rows(self.value(x))?;
        let rows = self.value(x).rows();
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g| {
                let c = g.cols();
                let mut dx = Tensor::zeros(vec![rows, c]);
                for r in 0..rows {
                    dx.data_mut()[r * c..(r + 1) * c].copy_from_slice(g.row_slice(0));
                }
                vec![dx]
            })),
        ))
    }

    /// Total of all entries as a 1x1 node.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::shape("sum_all expects a matrix"));
        }
        let total = t.data().iter().fold(F::zero(), |acc, &v| acc + v);
        let shape = t.shape().to_vec();
        Ok(self.push(
            Tensor::new(vec![1, 1], vec![total])?,
            vec![x],
            Some(Box::new(move |g| {
                let s = g.data()[0];
                let n: usize = shape.iter().product();
                vec![Tensor::new(shape.clone(), vec![s; n]).expect("sum_all vjp")]
            })),
        ))
    }

    /// Column-wise max pooling; gradient routes to the first argmax row.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = tensor::max_rows(self.value(x))?;
        let rows = self.value(x).rows();
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g| {
                let c = g.cols();
                let mut dx = Tensor::zeros(vec![rows, c]);
                for (j, &row) in argmax.iter().enumerate() {
                    dx.data_mut()[row * c + j] = g.data()[j];
                }
                vec![dx]
            })),
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let out = tensor::slice_rows(self.value(x), start, end)?;
        let rows = self.value(x).rows();
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g| {
                let c = g.cols();
                let mut dx = Tensor::zeros(vec![rows, c]);
                dx.data_mut()[start * c..end * c].copy_from_slice(g.data());
                vec![dx]
            })),
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor<F>> = parts.iter().map(|&v| self.value(v)).collect();
        let out = tensor::concat_cols(&tensors)?;
        let widths: Vec<usize> = tensors.iter().map(|t| t.cols()).collect();
        Ok(self.push(
            out,
            parts.to_vec(),
            Some(Box::new(move |g| {
                let rows = g.rows();
                let total = g.cols();
                let mut grads = Vec::with_capacity(widths.len());
                let mut offset = 0;
                for &w in &widths {
                    let mut part = Tensor::zeros(vec![rows, w]);
                    for r in 0..rows {
                        part.data_mut()[r * w..(r + 1) * w]
                            .copy_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    grads.push(part);
                    offset += w;
                }
                grads
            })),
        ))
    }

    pub fn pad_rows(&mut self, x: Var, before: usize, after: usize) -> Result<Var> {
        let out = tensor::pad_rows(self.value(x), before, after)?;
        let rows = self.value(x).rows();
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g| {
                vec![tensor::slice_rows(g, before, before + rows).expect("pad_rows vjp")]
            })),
        ))
    }

    pub fn window_rows(&mut self, x: Var, window: usize) -> Result<Var> {
        let out = tensor::window_rows(self.value(x), window)?;
        let (rows, cols) = (self.value(x).rows(), self.value(x).cols());
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g| {
                let mut dx = Tensor::zeros(vec![rows, cols]);
                let n_out = rows - window + 1;
                for t in 0..n_out {
                    for i in 0..window {
                        let grow = &g.data()
                            [t * window * cols + i * cols..t * window * cols + (i + 1) * cols];
                        let drow = &mut dx.data_mut()[(t + i) * cols..(t + i + 1) * cols];
                        for j in 0..cols {
                            drow[j] = drow[j] + grow[j];
                        }
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Embedding lookup; the gradient scatter-adds into the table rows.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let out = tensor::gather_rows(self.value(table), ids)?;
        let (rows, cols) = (self.value(table).rows(), self.value(table).cols());
        let ids = ids.to_vec();
        Ok(self.push(
            out,
            vec![table],
            Some(Box::new(move |g| {
                let mut dt = Tensor::zeros(vec![rows, cols]);
                for (t, &id) in ids.iter().enumerate() {
                    let grow = g.row_slice(t);
                    let drow = &mut dt.data_mut()[id * cols..(id + 1) * cols];
                    for j in 0..cols {
                        drow[j] = drow[j] + grow[j];
                    }
                }
                vec![dt]
            })),
        ))
    }

    /// Row-wise standardization `(x - mean) / sqrt(var + eps)`; used only by
    /// the `bert_compat` encoder variant.
    pub fn layernorm_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::shape("layernorm_rows expects a matrix"));
        }
        let (r, c) = (t.rows(), t.cols());
        let nf = F::from_f64(c as f64);
        let epsf = F::from_f64(eps);
        let mut out = Tensor::zeros(vec![r, c]);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = t.row_slice(i);
            let mean = row.iter().fold(F::zero(), |a, &v| a + v) / nf;
            let var = row
                .iter()
                .fold(F::zero(), |a, &v| a + (v - mean) * (v - mean))
                / nf;
            let inv = F::one() / (var + epsf).sqrt();
            inv_std.push(inv);
            for (j, &value) in row.iter().enumerate() {
                out.data_mut()[i * c + j] = (value - mean) * inv;
            }
        }
        let y = out.clone();
        Ok(self.push(
            out,
            vec![x],
            Some(Box::new(move |g| {
                let mut dx = Tensor::zeros(vec![r, c]);
                for (i, &inv) in inv_std.iter().enumerate() {
                    let yr = y.row_slice(i);
                    let gr = g.row_slice(i);
                    let mean_g = gr.iter().fold(F::zero(), |a, &v| a + v) / nf;
                    let mean_gy = gr
                        .iter()
                        .zip(yr)
                        .fold(F::zero(), |a, (&gv, &yv)| a + gv * yv)
                        / nf;
                    for j in 0..c {
                        dx.data_mut()[i * c + j] = (gr[j] - mean_g - yr[j] * mean_gy) * inv;
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Backpropagates from a 1x1 loss node, returning adjoints for every
    /// reachable gradient-bearing leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward expects a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adjoints: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss.0] = Some(Tensor::new(vec![1, 1], vec![F::one()])?);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if node.vjp.is_none() {
                continue; // leaf: keep its adjoint for the caller
            }
            let Some(g) = adjoints[id].take() else {
                continue;
            };
            let vjp = node.vjp.as_ref().expect("checked above");
            let contributions = vjp(&g);
            debug_assert_eq!(contributions.len(), node.parents.len());
            for (parent, contribution) in node.parents.iter().zip(contributions) {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut adjoints[parent.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(contribution.data()) {
                            *a = *a + *b;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(Gradients { adjoints })
    }
}

/// Forward-pass mode: training samples dropout masks from the run's seeded
/// generator, evaluation applies none.
pub enum Mode<'a> {
    Eval,
    Train {
        rng: &'a mut rand_chacha::ChaCha8Rng,
        dropout: f64,
    },
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    /// Applies dropout to `x` in training mode; identity in evaluation.
    pub fn dropout<F: Scalar>(&mut self, graph: &mut Graph<F>, x: Var) -> Result<Var> {
        match self {
            Mode::Eval => Ok(x),
            Mode::Train { rng, dropout } => {
                if *dropout == 0.0 {
                    return Ok(x);
                }
                let mask = dropout_mask(*rng, *dropout, graph.value(x).shape());
                let mask = graph.input(mask);
                graph.mul_elem(x, mask)
            }
        }
    }
}

/// Inverted dropout mask: entries are `1/(1-rate)` with probability
/// `1-rate`, else 0. Multiplying by it keeps activations unbiased in
/// expectation while zeroing a `rate` fraction of them.
pub fn dropout_mask<F: Scalar>(rng: &mut impl Rng, rate: f64, shape: &[usize]) -> Tensor<F> {
    debug_assert!((0.0..1.0).contains(&rate));
    let keep = F::from_f64(1.0 / (1.0 - rate));
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("dropout mask shape")
}

/// Verifies analytic gradients against central differences.
///
/// `build` assembles a scalar output from the given parameter leaves; it is
/// re-invoked at every perturbed point, so it must be a pure function of the
/// parameter values. Returns the maximum relative error over all coordinates
/// with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<B>(params: &[Tensor<f64>], build: B, h: f64) -> Result<f64>
where
    B: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    // Analytic gradients at the center point.
    let mut graph = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| graph.param(p.clone())).collect();
    let out = build(&mut graph, &vars)?;
    if graph.value(out).len() != 1 {
        return Err(Error::shape("grad_check target must be scalar"));
    }
    if !graph.scalar(out).is_finite() {
        return Err(Error::numeric("grad_check: non-finite function value"));
    }
    let grads = graph.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p))
        .collect();

    let eval = |point: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vs: Vec<Var> = point.iter().map(|p| g.input(p.clone())).collect();
        let out = build(&mut g, &vs)?;
        let value = g.scalar(out);
        if !value.is_finite() {
            return Err(Error::numeric("grad_check: non-finite function value"));
        }
        Ok(value)
    };

    let mut point: Vec<Tensor<f64>> = params.to_vec();
    let mut max_rel = 0.0f64;
    for (pi, param) in params.iter().enumerate() {
        for ci in 0..param.len() {
            let original = param.data()[ci];
            point[pi].data_mut()[ci] = original + h;
            let plus = eval(&point)?;
            point[pi].data_mut()[ci] = original - h;
            let minus = eval(&point)?;
            point[pi].data_mut()[ci] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let exact = analytic[pi].data()[ci];
            let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
