//! Loss, optimization, the training loop, greedy decoding and checkpoints.

mod checkpoint;
mod decode;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use decode::{evaluate_exact_match, greedy_decode, greedy_decode_ids, Decoded};
pub use optim::{adam_step, clip_grad_norm, global_norm, OptimizerState};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{collate, Batch, EncodedSample, Sample, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{random_point, ModelConfig, ParamVars, TokenBatch, TpTransformer};
use crate::rng::{self, streams};
use crate::tensor::{grad_check, GradCheckReport, Graph, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.995,
            adam_eps: 1e-8,
            clip_norm: 0.1,
            batch_size: 64,
            max_steps: 20_000,
            eval_every: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.clip_norm > 0.0
            && self.batch_size > 0
            && self.eval_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }
}

/// Mean negative log-probability of `tgt_out` over positions where
/// `loss_mask` is true; `logits` is `[batch·len, vocab]`.
pub fn masked_cross_entropy(
    g: &mut Graph,
    logits: Var,
    tgt_out: &[usize],
    loss_mask: &[bool],
) -> Result<Var> {
    g.cross_entropy(logits, tgt_out, loss_mask)
}

/// Teacher-forced loss of `model` on one batch, recorded in `g`.
pub fn batch_loss(
    g: &mut Graph,
    model: &TpTransformer,
    batch: &Batch,
    trainable: bool,
) -> Result<Var> {
    let p = model.bind(g, trainable);
    let fwd = model.forward(g, &p, &batch.src, &batch.tgt_in, None)?;
    masked_cross_entropy(g, fwd.logits, &batch.tgt_out, &batch.loss_mask)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Owns the model, its optimizer state and the tokenized training set.
///
/// The batch used at step `s` depends only on `(seed, s)`: each epoch is a
/// fresh permutation drawn from a stream keyed by the epoch number, and a
/// trailing partial batch is dropped. Resuming therefore needs only the step.
pub struct Trainer {
    pub model: TpTransformer,
    pub optimizer: OptimizerState,
    pub config: TrainConfig,
    data: Vec<EncodedSample>,
}

impl Trainer {
    pub fn new(
        model: TpTransformer,
        config: TrainConfig,
        data: Vec<EncodedSample>,
    ) -> Result<Self> {
        let optimizer = OptimizerState::new(&model.params);
        Self::resume(model, optimizer, config, data)
    }

    pub fn resume(
        model: TpTransformer,
        optimizer: OptimizerState,
        config: TrainConfig,
        data: Vec<EncodedSample>,
    ) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        Ok(Self {
            model,
            optimizer,
            config,
            data,
        })
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    fn batches_per_epoch(&self) -> u64 {
        (self.data.len() / self.config.batch_size).max(1) as u64
    }

    pub fn batch_at(&self, step: u64) -> Result<Batch> {
        let per_epoch = self.batches_per_epoch();
        let (epoch, j) = (step / per_epoch, (step % per_epoch) as usize);
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut rng::substream(
            self.config.seed,
            streams::SHUFFLE,
            epoch,
        ));
        let b = self.config.batch_size.min(self.data.len());
        let rows: Vec<&EncodedSample> = order[j * b..(j + 1) * b]
            .iter()
            .map(|&i| &self.data[i])
            .collect();
        collate(&rows)
    }

    /// forward → loss → backward → clip → Adam. On a numerical failure the
    /// parameters and optimizer state are left untouched.
    pub fn train_step(&mut self) -> Result<StepStats> {
        let step = self.optimizer.step;
        let batch = self.batch_at(step)?;
        let mut g = Graph::new();
        let loss = batch_loss(&mut g, &self.model, &batch, true)?;
        let loss_value = g.value(loss).data()[0];
        let mut grads = g.backward(loss)?.into_named();
        drop(g);
        let grad_norm = clip_grad_norm(&mut grads, self.config.clip_norm)?;
        adam_step(
            &mut self.model.params,
            &grads,
            &mut self.optimizer,
            &self.config,
        )?;
        Ok(StepStats {
            step: step + 1,
            loss: loss_value,
            grad_norm,
        })
    }
}

/// One metrics-log record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    /// Mean training loss over the steps since the previous record.
    pub loss: f64,
    /// Held-out exact match, when an evaluation set is given.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Runs until `config.max_steps`, recording metrics every `eval_every` steps
/// and at the end. `hook` sees each record and may stop the run early.
///
/// A non-finite loss or gradient aborts with the error while the trainer
/// still holds the last good parameters, ready to be checkpointed.
pub fn train<F>(
    trainer: &mut Trainer,
    eval: Option<(&Vocabulary, &[Sample])>,
    mut hook: F,
) -> Result<Vec<EvalRecord>>
where
    F: FnMut(&Trainer, &EvalRecord) -> Result<Control>,
{
    let mut records = Vec::new();
    let (mut loss_sum, mut loss_n) = (0.0, 0u64);
    while trainer.step() < trainer.config.max_steps {
        let stats = trainer.train_step()?;
        loss_sum += stats.loss;
        loss_n += 1;
        if stats.step % trainer.config.eval_every == 0 || stats.step == trainer.config.max_steps {
            let accuracy = match eval {
                Some((vocab, samples)) => {
                    Some(evaluate_exact_match(&trainer.model, vocab, samples)?)
                }
                None => None,
            };
            let record = EvalRecord {
                step: stats.step,
                loss: loss_sum / loss_n as f64,
                accuracy,
            };
            (loss_sum, loss_n) = (0.0, 0);
            let control = hook(trainer, &record)?;
            records.push(record);
            if control == Control::Stop {
                break;
            }
        }
    }
    Ok(records)
}

/// Finite-difference check of every parameter of a tiny model
/// (`d_model=16`, two heads, two layers) on a padded two-sequence batch.
///
/// Parameters are drawn at a generic point (see [`random_point`]) rather
/// than the fresh initialization, whose large residual stream leaves many
/// gradients below the roundoff of the difference quotient.
pub fn tiny_grad_check(seed: u64, role_binding: bool) -> Result<GradCheckReport> {
    let cfg = ModelConfig {
        role_binding,
        ..ModelConfig::tiny(10)
    };
    let params = random_point(&cfg, seed)?;
    let model = TpTransformer::from_parts(cfg, params)?;
    let src = TokenBatch::new(vec![3, 4, 5, 6, 7, 2, 8, 9, 3, 2, 0, 0], 2, 6, vec![6, 4])?;
    let tgt_in = TokenBatch::new(vec![1, 5, 6, 7, 8, 1, 9, 4, 0, 0], 2, 5, vec![5, 3])?;
    let tgt_out = vec![5, 6, 7, 8, 2, 9, 4, 2, 0, 0];
    let mask: Vec<bool> = tgt_out.iter().map(|&t| t != 0).collect();
    grad_check(model.params.named(), 1e-5, |g, vars| {
        let p = ParamVars::from_vars(vars.clone());
        let fwd = model.forward(g, &p, &src, &tgt_in, None)?;
        masked_cross_entropy(g, fwd.logits, &tgt_out, &mask)
    })
}
