//! Batched cross-entropy training: shuffled batches, reverse-mode gradients,
//! AdamW with decoupled weight decay, and a warmup-linear learning-rate
//! schedule. Fully deterministic given the seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Mode};
use crate::model::{forward_pair, BasModel, ParamKind};
use crate::tensor::{Scalar, Tensor};
use crate::tokenizer::PairEncoding;

/// Optimization hyperparameters. Defaults: learning rate 1e-4, 4 epochs,
/// batches of 32, 10% linear warmup, decay 0.01, Adam moments 0.9/0.999.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
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
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be non-negative"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config(format!(
                "warmup_fraction must be in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
            ("clip_norm", self.clip_norm),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Warmup-linear learning-rate factor: linear 0 -> 1 over the first
/// `round(warmup_fraction * total_steps)` steps, then linear 1 -> 0 by
/// `total_steps`.
pub fn lr_multiplier(step: usize, total_steps: usize, warmup_fraction: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::config("schedule needs at least one step"));
    }
    if step > total_steps {
        return Err(Error::config(format!(
            "step {step} beyond total {total_steps}"
        )));
    }
    let warmup = (warmup_fraction * total_steps as f64).round() as usize;
    if step < warmup {
        Ok(step as f64 / warmup as f64)
    } else if total_steps > warmup {
        Ok((total_steps - step) as f64 / (total_steps - warmup) as f64)
    } else {
        Ok(1.0)
    }
}

/// One AdamW coordinate-wise update over a tensor:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected, then
/// `theta <- theta - lr_eff * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
/// Decay is decoupled: it never enters the moments.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update_tensor<F: Scalar>(
    theta: &mut Tensor<F>,
    grad: &Tensor<F>,
    m: &mut Tensor<F>,
    v: &mut Tensor<F>,
    step: u64,
    cfg: &TrainConfig,
    lr_mult: f64,
    apply_decay: bool,
) {
    debug_assert_eq!(theta.shape(), grad.shape());
    let b1 = F::from_f64(cfg.beta1);
    let b2 = F::from_f64(cfg.beta2);
    let one = F::one();
    let eps = F::from_f64(cfg.epsilon);
    let lr = F::from_f64(cfg.learning_rate * lr_mult);
    let wd = if apply_decay {
        F::from_f64(cfg.weight_decay)
    } else {
        F::zero()
    };
    let bc1 = F::from_f64(1.0 - cfg.beta1.powi(step as i32));
    let bc2 = F::from_f64(1.0 - cfg.beta2.powi(step as i32));

    let td = theta.data_mut();
    let gd = grad.data();
    let md = m.data_mut();
    let vd = v.data_mut();
    for i in 0..td.len() {
        let g = gd[i];
        md[i] = b1 * md[i] + (one - b1) * g;
        vd[i] = b2 * vd[i] + (one - b2) * g * g;
        let m_hat = md[i] / bc1;
        let v_hat = vd[i] / bc2;
        td[i] = td[i] - lr * (m_hat / (v_hat.sqrt() + eps) + wd * td[i]);
    }
}

/// Per-parameter first/second moments plus the shared step counter.
pub struct AdamW<F: Scalar> {
    step: u64,
    slots: Vec<(String, ParamKind, Tensor<F>, Tensor<F>)>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(model: &BasModel<F>) -> Self {
        let mut slots = Vec::new();
        model.for_each_param(&mut |info, tensor| {
            let shape = tensor.shape().to_vec();
            slots.push((
                info.name,
                info.kind,
                Tensor::zeros(shape.clone()),
                Tensor::zeros(shape),
            ));
        });
        Self { step: 0, slots }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one optimizer step. `grads` must follow the canonical
    /// parameter order; weight decay touches weight matrices only.
    pub fn step(
        &mut self,
        model: &mut BasModel<F>,
        grads: &[Tensor<F>],
        cfg: &TrainConfig,
        lr_mult: f64,
    ) -> Result<()> {
        if grads.len() != self.slots.len() {
            return Err(Error::data(format!(
                "expected {} gradients, got {}",
                self.slots.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let step = self.step;
        let slots = &mut self.slots;
        let mut idx = 0;
        let mut failure: Option<Error> = None;
        model.for_each_param_mut(&mut |_, tensor| {
            let (name, kind, m, v) = &mut slots[idx];
            let grad = &grads[idx];
            idx += 1;
            if failure.is_some() {
                return;
            }
            if grad.data().iter().any(|g| !g.is_finite()) {
                failure = Some(Error::numeric(format!(
                    "non-finite gradient for parameter '{name}'"
                )));
                return;
            }
            adamw_update_tensor(
                tensor,
                grad,
                m,
                v,
                step,
                cfg,
                lr_mult,
                *kind == ParamKind::Matrix,
            );
        });
        match failure {
            Some(err) => Err(err),
            None => Ok(()),
        }
    }
}

/// Loss-trace entry: mean batch cross-entropy at (epoch, batch).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

/// Mean cross-entropy over examples in evaluation mode (no dropout).
pub fn mean_loss<F: Scalar>(model: &BasModel<F>, examples: &[(PairEncoding, u8)]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::data("no examples to score"));
    }
    let mut total = 0.0;
    for (encoding, label) in examples {
        let mut graph = Graph::new();
        let vars = model.bind(&mut graph);
        let probs = forward_pair(&mut graph, &vars, encoding, &model.config, &mut Mode::Eval)?;
        let loss = graph.cross_entropy(probs, *label)?;
        total += graph.scalar(loss).as_f64();
    }
    Ok(total / examples.len() as f64)
}

/// Writes a loss trace as `epoch,batch,loss` CSV.
pub fn write_loss_csv(trace: &[BatchLoss], mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "epoch,batch,loss")?;
    for entry in trace {
        writeln!(out, "{},{},{}", entry.epoch, entry.batch, entry.loss)?;
    }
    Ok(())
}

/// Trains on pre-tokenized examples: per epoch, shuffle with the seeded
/// generator, split into batches (last may be short), minimize the mean
/// batch cross-entropy with AdamW under the warmup-linear schedule.
pub fn train_encoded<F: Scalar>(
    model: &mut BasModel<F>,
    examples: &[(PairEncoding, u8)],
    cfg: &TrainConfig,
) -> Result<Vec<BatchLoss>> {
    train_encoded_with(model, examples, cfg, |_, _| {})
}

/// [`train_encoded`] with an observer invoked after every epoch; used for
/// report-only monitoring (it cannot influence the run).
pub fn train_encoded_with<F: Scalar>(
    model: &mut BasModel<F>,
    examples: &[(PairEncoding, u8)],
    cfg: &TrainConfig,
    mut at_epoch_end: impl FnMut(usize, &BasModel<F>),
) -> Result<Vec<BatchLoss>> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::data("training dataset is empty"));
    }
    let dropout = model.config.encoder.dropout;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = AdamW::new(model);

    let batches_per_epoch = examples.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = Vec::with_capacity(total_steps);
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut graph = Graph::new();
            let vars = model.bind(&mut graph);
            let total = {
                let mut mode = Mode::Train {
                    rng: &mut rng,
                    dropout,
                };
                let mut total = None;
                for &i in chunk {
                    let (encoding, label) = &examples[i];
                    let probs =
                        forward_pair(&mut graph, &vars, encoding, &model.config, &mut mode)?;
                    let loss = graph.cross_entropy(probs, *label)?;
                    total = Some(match total {
                        None => loss,
                        Some(acc) => graph.add(acc, loss)?,
                    });
                }
                total.expect("non-empty batch")
            };
            let mean = graph.scale(total, F::from_f64(1.0 / chunk.len() as f64));
            let loss_value = graph.scalar(mean).as_f64();
            if !loss_value.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss in epoch {epoch}, batch {batch_idx}"
                )));
            }
            trace.push(BatchLoss {
                epoch,
                batch: batch_idx,
                loss: loss_value,
            });

            let grads_by_var = graph.backward(mean)?;
            let ordered = vars.in_param_order();
            let mut grads: Vec<Tensor<F>> = ordered
                .iter()
                .map(|&v| grads_by_var.get_or_zeros(v, graph.value(v)))
                .collect();

            if cfg.clip_norm > 0.0 {
                let norm: f64 = grads
                    .iter()
                    .flat_map(|g| g.data().iter())
                    .map(|v| v.as_f64() * v.as_f64())
                    .sum::<f64>()
                    .sqrt();
                if norm > cfg.clip_norm {
                    let factor = F::from_f64(cfg.clip_norm / norm);
                    for g in &mut grads {
                        for x in g.data_mut() {
                            *x = *x * factor;
                        }
                    }
                }
            }

            let mult = lr_multiplier(global_step, total_steps, cfg.warmup_fraction)?;
            optimizer.step(model, &grads, cfg, mult)?;
            global_step += 1;
        }
        at_epoch_end(epoch, model);
    }
    Ok(trace)
}
