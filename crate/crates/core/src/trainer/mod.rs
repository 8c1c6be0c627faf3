//! Distillation training loop.
//!
//! Each step embeds a batch of source sentences with the student, compares
//! them against the frozen teacher rows of the same pairs, backpropagates the
//! selected loss and applies one AdamW update at the scheduled learning rate.

mod checkpoint;
mod optim;
mod schedule;

use std::io::Write;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::ParallelCorpus;
use crate::encoder::{backward, forward, EmbeddingBatch, EncoderConfig, EncoderParams, ParamGrads};
use crate::error::{Error, Result};
use crate::losses::{mnr_loss, mse_loss, LossKind};
use crate::real::Real;
use crate::teacher::TeacherTable;
use crate::tokenizer::{TokenSeq, Vocab};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta};
pub use optim::{AdamW, OptimizerState};
pub use schedule::lr_at;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Cosine scale for the ranking loss; unused by MSE.
    pub scale: f64,
    pub max_len: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Mse,
            epochs: 10,
            batch_size: 4,
            base_lr: 5e-5,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            betas: (0.9, 0.999),
            eps: 1e-8,
            scale: 20.0,
            max_len: 64,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs < 1 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1".into());
        }
        if self.loss == LossKind::Mnr && self.batch_size < 2 {
            return fail("the mnr loss needs batch_size >= 2 for in-batch negatives".into());
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1.0) {
            return fail(format!("warmup_ratio must lie in (0, 1), got {}", self.warmup_ratio));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return fail(format!("base_lr must be positive, got {}", self.base_lr));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return fail(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 || self.weight_decay < 0.0 {
            return fail("eps must be positive and weight_decay non-negative".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return fail(format!("scale must be positive, got {}", self.scale));
        }
        if self.max_len < 1 {
            return fail("max_len must be >= 1".into());
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// One optimizer step as written to the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

impl StepRecord {
    /// `step\tepoch\tlr\tloss`
    pub fn to_log_line(&self) -> String {
        format!("{}\t{}\t{:e}\t{:.9}", self.step, self.epoch, self.lr, self.loss)
    }
}

pub fn write_log<W: Write>(mut out: W, records: &[StepRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_log_line())?;
    }
    Ok(())
}

/// Loss and parameter gradients of the student on one batch.
pub fn loss_and_grads<T: Real>(
    params: &EncoderParams<T>,
    batch: &[TokenSeq],
    teacher: &EmbeddingBatch<T>,
    loss: LossKind,
    scale: f64,
) -> Result<(f64, ParamGrads<T>)> {
    let (student, cache) = forward(params, batch)?;
    let result = match loss {
        LossKind::Mse => mse_loss(teacher, &student)?,
        LossKind::Mnr => mnr_loss(teacher, &student, scale)?,
    };
    if !result.value.is_finite() {
        return Err(Error::NonFinite(format!("{loss} loss is {}", result.value)));
    }
    let grads = backward(params, &cache, &result.grad_student)?;
    Ok((result.value, grads))
}

/// Batches of pair indices for each epoch. A trailing singleton batch is
/// dropped for the ranking loss since it has no negatives.
pub fn epoch_batches(n_pairs: usize, cfg: &TrainingConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_pairs).collect();
    if cfg.shuffle {
        order.shuffle(rng);
    }
    order
        .chunks(cfg.batch_size)
        .filter(|chunk| !(cfg.loss == LossKind::Mnr && chunk.len() < 2))
        .map(<[usize]>::to_vec)
        .collect()
}

fn steps_per_epoch(n_pairs: usize, cfg: &TrainingConfig) -> usize {
    let full = n_pairs / cfg.batch_size;
    let rest = n_pairs % cfg.batch_size;
    full + usize::from(rest > 1 || (rest == 1 && cfg.loss == LossKind::Mse))
}

/// Trains a fresh student (initialized from `enc_config.seed`) against the
/// teacher rows aligned with `corpus`. `on_step` sees every optimizer step.
pub fn train(
    corpus: &ParallelCorpus,
    teacher: &TeacherTable,
    vocab: &Vocab,
    enc_config: &EncoderConfig,
    cfg: &TrainingConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Checkpoint> {
    cfg.validate()?;
    enc_config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus has no pairs".into()));
    }
    if teacher.count() != corpus.len() {
        return Err(Error::Alignment {
            expected: corpus.len(),
            found: teacher.count(),
        });
    }
    if teacher.dim() != enc_config.dim {
        return Err(Error::ShapeMismatch(format!(
            "teacher dim {} differs from student dim {}",
            teacher.dim(),
            enc_config.dim
        )));
    }
    if cfg.max_len > enc_config.max_len {
        return Err(Error::InvalidConfig(format!(
            "training max_len {} exceeds the encoder's {}",
            cfg.max_len, enc_config.max_len
        )));
    }
    let mut params = EncoderParams::<f32>::init(enc_config)?;
    params.check_vocab(vocab)?;
    let sequences = vocab.encode_batch(&corpus.sources(), cfg.max_len)?;

    if cfg.loss == LossKind::Mnr && corpus.len() % cfg.batch_size == 1 {
        warn!("last batch of each epoch holds a single pair and is skipped (no in-batch negatives)");
    }
    let total_steps = steps_per_epoch(corpus.len(), cfg) * cfg.epochs;
    if total_steps == 0 {
        return Err(Error::Empty("no batch has enough pairs to train on".into()));
    }

    let optimizer = cfg.optimizer();
    let mut state = OptimizerState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut step = 0usize;
    let mut last_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        for indices in epoch_batches(corpus.len(), cfg, &mut rng) {
            let batch: Vec<TokenSeq> = indices.iter().map(|&i| sequences[i].clone()).collect();
            let targets = teacher.rows(&indices)?;
            let (loss, grads) = loss_and_grads(&params, &batch, &targets, cfg.loss, cfg.scale)?;
            let lr = lr_at(step, total_steps, cfg.warmup_ratio, cfg.base_lr);
            optimizer.step(&mut params, &grads, &mut state, lr)?;
            on_step(&StepRecord { step, epoch, lr, loss });
            last_loss = loss;
            step += 1;
        }
    }

    Ok(Checkpoint {
        config: enc_config.clone(),
        vocab_hash: vocab.content_hash(),
        params,
        meta: TrainingMeta {
            loss: cfg.loss,
            steps: step as u64,
            final_loss: last_loss,
        },
    })
}
