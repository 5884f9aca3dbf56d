//! Configuration profiles, batching and the dialogue training loop.

use std::fmt;
use std::str::FromStr;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::emotion::NUM_EMOTIONS;
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::seq2seq::{Batch, Seq2Seq};
use crate::text::{DialoguePair, PAD, PADDING_LENGTH};
use crate::variants::{ModelDims, ModelKind};

/// How the `dropout` field of a config is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutMeaning {
    /// The field is the probability of keeping a unit.
    Keep,
    /// The field is the probability of zeroing a unit.
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::contract(format!(
                "unknown profile {other:?} (expected paper or desk)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub profile: Profile,
    /// LSTM width of encoder and decoder.
    pub hidden: usize,
    /// Word embedding width.
    pub embed: usize,
    pub vocab_cap: usize,
    /// Maximum content tokens per utterance.
    pub padding: usize,
    pub dropout: f64,
    pub dropout_meaning: DropoutMeaning,
    /// Number of emotions with their own parameters, Non-emotion included.
    pub emotions: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Optimizer steps. Must be set before training.
    pub max_steps: Option<usize>,
    /// Dev loss is computed every this many steps and after the last one.
    pub eval_every: usize,
    pub clip_norm: f64,
    /// Share of labeled pairs used for training; the rest is dev data.
    pub train_ratio: f64,
    pub min_words: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Published hyperparameters. The dropout field is kept verbatim and
    /// read as a keep probability. The step budget is not published.
    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            hidden: 600,
            embed: 300,
            vocab_cap: 25_000,
            padding: PADDING_LENGTH,
            dropout: 0.75,
            dropout_meaning: DropoutMeaning::Keep,
            emotions: NUM_EMOTIONS,
            lr: 1e-4,
            batch_size: 64,
            max_steps: None,
            eval_every: 1000,
            clip_norm: 5.0,
            train_ratio: 0.95,
            min_words: 6,
            seed: 1,
        }
    }

    /// Small dimensions at which every property can be checked on a laptop.
    pub fn desk() -> Self {
        Self {
            profile: Profile::Desk,
            hidden: 64,
            embed: 32,
            vocab_cap: 2000,
            dropout: 0.0,
            dropout_meaning: DropoutMeaning::Drop,
            lr: 3e-3,
            batch_size: 16,
            max_steps: Some(3000),
            eval_every: 250,
            min_words: 1,
            ..Self::paper()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => Self::paper(),
            Profile::Desk => Self::desk(),
        }
    }

    /// Probability of zeroing a unit during training.
    pub fn drop_probability(&self) -> f64 {
        match self.dropout_meaning {
            DropoutMeaning::Keep => 1.0 - self.dropout,
            DropoutMeaning::Drop => self.dropout,
        }
    }

    pub fn dims(&self, vocab_len: usize) -> ModelDims {
        ModelDims {
            vocab: vocab_len,
            embed: self.embed,
            hidden: self.hidden,
            emotions: self.emotions,
            max_len: self.padding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.drop_probability();
        if !(0.0..1.0).contains(&p) {
            return Err(Error::contract(format!("drop probability {p} outside [0, 1)")));
        }
        if self.batch_size == 0 || self.hidden == 0 || self.embed == 0 || self.eval_every == 0 {
            return Err(Error::contract("batch size, widths and eval interval must be positive"));
        }
        if self.emotions != NUM_EMOTIONS {
            return Err(Error::contract(format!(
                "models condition on {NUM_EMOTIONS} emotions, config says {}",
                self.emotions
            )));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::contract("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Seeded per-epoch shuffling into fixed-size batches (the last one may
/// be short).
#[derive(Clone, Copy, Debug)]
pub struct Batcher {
    n: usize,
    batch_size: usize,
    seed: u64,
}

impl Batcher {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        Ok(Self { n, batch_size, seed })
    }

    /// Index batches for `epoch`; each epoch has its own permutation.
    pub fn epoch(&self, epoch: u64) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Row-major `B×width` ids right-padded with PAD; `mask` is true at PAD.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedBatch {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub width: usize,
}

pub fn pad_batch(seqs: &[Vec<usize>]) -> PaddedBatch {
    let width = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(seqs.len() * width);
    let mut mask = Vec::with_capacity(seqs.len() * width);
    for s in seqs {
        for t in 0..width {
            ids.push(s.get(t).copied().unwrap_or(PAD));
            mask.push(t >= s.len());
        }
    }
    PaddedBatch { ids, mask, width }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training loss of every step, in order.
    pub losses: Vec<f64>,
    /// `(step, loss)` on the dev pairs with dropout disabled.
    pub dev: Vec<(usize, f64)>,
    pub steps: usize,
    pub epochs: u64,
}

impl TrainReport {
    /// Mean of the last `k` step losses.
    pub fn tail_mean(&self, k: usize) -> f64 {
        let tail = &self.losses[self.losses.len().saturating_sub(k)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

fn check_labels(pairs: &[DialoguePair], what: &str) -> Result<()> {
    match pairs.iter().position(|p| p.emotion.is_none()) {
        Some(i) => Err(Error::Data(format!(
            "{what} pair {} has no emotion label",
            i + 1
        ))),
        None => Ok(()),
    }
}

/// Mean token loss over `pairs`, dropout off.
pub fn dataset_loss(model: &Seq2Seq<f32>, pairs: &[DialoguePair], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for chunk in pairs.chunks(batch_size.max(1)) {
        let refs: Vec<&DialoguePair> = chunk.iter().collect();
        let batch = Batch::from_pairs(&refs)?;
        let tape = Tape::new();
        let (loss, count) = model.loss(&tape, &batch, None)?;
        total += loss.item() as f64 * count as f64;
        tokens += count;
    }
    Ok(total / tokens.max(1) as f64)
}

/// Trains a fresh model of `kind` with teacher forcing, Adam and global
/// gradient clipping. Deterministic for a fixed config seed.
pub fn train_dialogue(
    kind: ModelKind,
    train: &[DialoguePair],
    dev: &[DialoguePair],
    dims: ModelDims,
    config: &ModelConfig,
) -> Result<(Seq2Seq<f32>, TrainReport)> {
    config.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = Seq2Seq::new(kind, dims, config.drop_probability(), &mut init_rng);
    train_from(model, train, dev, config)
}

/// Continues training `model` (e.g. a variant warm-started from a
/// baseline).
pub fn train_from(
    mut model: Seq2Seq<f32>,
    train: &[DialoguePair],
    dev: &[DialoguePair],
    config: &ModelConfig,
) -> Result<(Seq2Seq<f32>, TrainReport)> {
    config.validate()?;
    check_labels(train, "training")?;
    check_labels(dev, "dev")?;
    if train.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    let max_steps = config
        .max_steps
        .ok_or_else(|| Error::contract("the config does not set max_steps"))?;
    model.dropout = config.drop_probability();
    let batcher = Batcher::new(train.len(), config.batch_size, config.seed)?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut report = TrainReport::default();
    let mut epoch = 0;
    'outer: loop {
        for indices in batcher.epoch(epoch) {
            if report.steps == max_steps {
                break 'outer;
            }
            let refs: Vec<&DialoguePair> = indices.iter().map(|&i| &train[i]).collect();
            let batch = Batch::from_pairs(&refs)?;
            let tape = Tape::new();
            let (loss, _) = model.loss(&tape, &batch, Some(&mut dropout_rng))?;
            let value = loss.item() as f64;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at step {}",
                    report.steps
                )));
            }
            let grads = tape.backward(loss)?;
            model.params.zero_grad();
            model.params.accumulate(&grads);
            model.params.clip_grad_norm(config.clip_norm);
            opt.step(&mut model.params)?;
            report.losses.push(value);
            report.steps += 1;
            if report.steps % config.eval_every == 0 && !dev.is_empty() {
                let d = dataset_loss(&model, dev, config.batch_size)?;
                info!("{} step {} loss {value:.4} dev {d:.4}", model.kind, report.steps);
                report.dev.push((report.steps, d));
            }
        }
        epoch += 1;
        if max_steps == 0 {
            break;
        }
    }
    report.epochs = epoch;
    if !dev.is_empty() && report.dev.last().map(|d| d.0) != Some(report.steps) {
        report.dev.push((report.steps, dataset_loss(&model, dev, config.batch_size)?));
    }
    Ok((model, report))
}
