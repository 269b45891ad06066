use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{TaggerModel, TrainExample};
use super::optim::{lr_at, Adam};
use super::{Head, Scalar};
use crate::decode::{window_targets, TagScheme};
use crate::doc::Document;
use crate::error::{Error, Result};
use crate::pretrain::PretrainBatch;
use crate::tokenizer::{window_document, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Peak learning rate; about 1e-5 matches large-model practice, small
    /// models train faster at 3e-4.
    pub lr: f64,
    pub warmup: usize,
    /// Micro-batches whose gradients are averaged before one update.
    pub accum: usize,
    pub micro_batch: usize,
    /// Optimizer updates.
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            warmup: 200,
            accum: 6,
            micro_batch: 8,
            steps: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.accum == 0 || self.micro_batch == 0 {
            return Err(Error::Validation("steps, accum and micro_batch must be positive".into()));
        }
        if self.warmup > self.steps {
            return Err(Error::Validation(format!(
                "warmup {} exceeds total steps {}",
                self.warmup, self.steps
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    pub fn effective_batch(&self) -> usize {
        self.accum * self.micro_batch
    }
}

/// Mean loss of one task within one optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub step: usize,
    pub task: String,
    pub loss: f64,
    pub lr: f64,
}

pub fn write_log_csv(mut w: impl Write, rows: &[LogRow]) -> Result<()> {
    writeln!(w, "step,task,loss,lr")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.step, r.task, r.loss, r.lr)?;
    }
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn dropout_seed(seed: u64, step: usize, micro: usize) -> u64 {
    splitmix(seed ^ splitmix(((step as u64) << 16) | micro as u64))
}

/// Runs `cfg.steps` updates, each averaging `cfg.accum` micro-batches drawn
/// by `next_batch`.
fn train_loop<T: Scalar>(
    model: &mut TaggerModel<T>,
    cfg: &TrainConfig,
    mut next_batch: impl FnMut() -> Result<(Head, Vec<TrainExample>)>,
    mut hook: impl FnMut(usize, &TaggerModel<T>) -> Result<()>,
) -> Result<Vec<LogRow>> {
    cfg.validate()?;
    let mut adam = Adam::new(&model.params);
    let mut log = Vec::new();
    let scale = T::one() / T::from_usize(cfg.accum).unwrap();
    for step in 1..=cfg.steps {
        let mut total = model.params.zeros_like();
        let mut per_task: Vec<(Head, f64, usize)> = Vec::new();
        for micro in 0..cfg.accum {
            let (head, batch) = next_batch()?;
            let (loss, grads) = model.loss_and_grad(&batch, head, Some(dropout_seed(cfg.seed, step, micro)))?;
            let loss = loss.to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    task: head.name().to_string(),
                });
            }
            total.add_scaled(&grads, scale);
            match per_task.iter_mut().find(|(h, _, _)| *h == head) {
                Some(slot) => {
                    slot.1 += loss;
                    slot.2 += 1;
                }
                None => per_task.push((head, loss, 1)),
            }
        }
        let lr = lr_at(step, cfg.lr, cfg.warmup);
        adam.step(&mut model.params, &total, lr);
        for (head, sum, n) in per_task {
            log.push(LogRow {
                step,
                task: head.name().to_string(),
                loss: sum / n as f64,
                lr,
            });
        }
        hook(step, model)?;
    }
    Ok(log)
}

/// Pre-trains on single-task batches from a stream such as
/// [`crate::pretrain::make_pretrain_stream`].
pub fn pretrain<T: Scalar>(
    model: &mut TaggerModel<T>,
    stream: impl Iterator<Item = Result<PretrainBatch>>,
    cfg: &TrainConfig,
) -> Result<Vec<LogRow>> {
    let mut stream = stream;
    train_loop(
        model,
        cfg,
        || {
            let batch = stream
                .next()
                .ok_or_else(|| Error::Validation("pre-training stream produced no batch".into()))??;
            Ok((batch.task.into(), batch.examples.iter().map(TrainExample::from).collect()))
        },
        |_, _| Ok(()),
    )
}

/// Tagging examples for every window of every document.
///
/// Each document must annotate every field of the scheme; annotations
/// without a word span train as all-O.
pub fn finetune_examples(docs: &[Document], vocab: &Vocab, scheme: &TagScheme, max_len: usize) -> Result<Vec<TrainExample>> {
    let mut out = Vec::new();
    for doc in docs {
        if let Some(f) = scheme.fields().iter().find(|f| doc.annotation(f).is_none()) {
            return Err(Error::Validation(format!("document {} has no annotation for field {f}", doc.id)));
        }
        for seq in window_document(doc, vocab, max_len)? {
            let targets = window_targets(&seq, &doc.annotations, scheme)?;
            out.push(TrainExample {
                ids: seq.ids(),
                boxes: seq.boxes(),
                loss_mask: seq.tokens.iter().map(|t| t.is_content()).collect(),
                targets,
            });
        }
    }
    Ok(out)
}

/// Fine-tunes the tag head and the body; `hook` runs after every update.
pub fn finetune_with_hook<T: Scalar>(
    model: &mut TaggerModel<T>,
    examples: &[TrainExample],
    cfg: &TrainConfig,
    hook: impl FnMut(usize, &TaggerModel<T>) -> Result<()>,
) -> Result<Vec<LogRow>> {
    if examples.is_empty() {
        return Err(Error::Validation("no fine-tuning examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    train_loop(
        model,
        cfg,
        || {
            let mut batch = Vec::with_capacity(cfg.micro_batch);
            while batch.len() < cfg.micro_batch {
                if cursor == order.len() {
                    order = (0..examples.len()).collect();
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                batch.push(examples[order[cursor]].clone());
                cursor += 1;
            }
            Ok((Head::Tag, batch))
        },
        hook,
    )
}

pub fn finetune<T: Scalar>(
    model: &mut TaggerModel<T>,
    docs: &[Document],
    vocab: &Vocab,
    scheme: &TagScheme,
    cfg: &TrainConfig,
) -> Result<Vec<LogRow>> {
    if model.config.num_tags != scheme.num_tags() {
        return Err(Error::Validation(format!(
            "model has {} tags but the scheme needs {}",
            model.config.num_tags,
            scheme.num_tags()
        )));
    }
    let examples = finetune_examples(docs, vocab, scheme, model.config.max_len)?;
    finetune_with_hook(model, &examples, cfg, |_, _| Ok(()))
}
