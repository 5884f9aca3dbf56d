//! Bidirectional LSTM emotion classifier with additive self-attention
//! pooling, the Non-emotion threshold, and corpus labeling.

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{concat, Tape, Var};
use crate::emotion::{Emotion, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::LstmCell;
use crate::optim::{AdamConfig, AdamState};
use crate::params::{uniform, ParamStore};
use crate::tensor::{argmax, Scalar, Tensor};
use crate::text::{split, LexicalOracle, TextPair, Vocabulary, PAD};

/// Confidence below which a sentence is labeled Non-emotion.
pub const DEFAULT_THRESHOLD: f64 = 0.35;

/// Macro scores reported for the classifier this design follows, on a
/// corpus not available here. Kept in reports for context only.
pub const REFERENCE_PRECISION: f64 = 0.6620;
pub const REFERENCE_RECALL: f64 = 0.5129;
pub const REFERENCE_F1: f64 = 0.5433;

const EMBEDDING: &str = "cls.embedding";
const ATTN_W: &str = "cls.attn.w";
const ATTN_V: &str = "cls.attn.v";
const OUT_W: &str = "cls.out.w";
const OUT_B: &str = "cls.out.b";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDims {
    pub vocab: usize,
    pub embed: usize,
    /// State width per direction.
    pub hidden: usize,
    /// Width of the attention scorer's hidden layer.
    pub attention: usize,
    pub hops: usize,
}

impl ClassifierDims {
    fn forward_cell(&self) -> LstmCell {
        LstmCell::new("cls.fwd", &[("x", self.embed), ("h", self.hidden)], self.hidden)
    }

    fn backward_cell(&self) -> LstmCell {
        LstmCell::new("cls.bwd", &[("x", self.embed), ("h", self.hidden)], self.hidden)
    }

    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let two_d = 2 * self.hidden;
        let mut out = vec![(EMBEDDING.to_string(), vec![self.vocab, self.embed])];
        out.extend(self.forward_cell().shapes());
        out.extend(self.backward_cell().shapes());
        out.push((ATTN_W.into(), vec![two_d, self.attention]));
        out.push((ATTN_V.into(), vec![self.attention, self.hops]));
        out.push((OUT_W.into(), vec![two_d * self.hops, NUM_CLASSES]));
        out.push((OUT_B.into(), vec![NUM_CLASSES]));
        out
    }
}

/// Scores token sequences over the nine classifier emotions.
pub trait EmotionScorer: Send + Sync {
    fn probabilities(&self, tokens: &[String]) -> Result<[f64; NUM_CLASSES]>;
}

impl EmotionScorer for LexicalOracle {
    fn probabilities(&self, tokens: &[String]) -> Result<[f64; NUM_CLASSES]> {
        if tokens.is_empty() {
            return Err(Error::contract("cannot classify an empty token list"));
        }
        Ok(LexicalOracle::probabilities(self, tokens))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmotionDistribution {
    pub probs: [f64; NUM_CLASSES],
    pub argmax: Emotion,
    /// `argmax`, or Non-emotion when its probability is below the
    /// threshold.
    pub label: Emotion,
}

impl EmotionDistribution {
    pub fn new(probs: [f64; NUM_CLASSES], threshold: f64) -> Self {
        Self {
            probs,
            argmax: Emotion::CLASSES[argmax(&probs)],
            label: apply_threshold(&probs, threshold),
        }
    }
}

/// Non-emotion when the largest probability is below `threshold`,
/// otherwise the most probable emotion (first one on ties).
pub fn apply_threshold(probs: &[f64; NUM_CLASSES], threshold: f64) -> Emotion {
    let best = argmax(probs);
    if probs[best] < threshold {
        Emotion::NonEmotion
    } else {
        Emotion::CLASSES[best]
    }
}

pub fn classify(scorer: &dyn EmotionScorer, tokens: &[String]) -> Result<EmotionDistribution> {
    Ok(EmotionDistribution::new(
        scorer.probabilities(tokens)?,
        DEFAULT_THRESHOLD,
    ))
}

#[derive(Clone, Debug)]
pub struct ClassifierModel<T> {
    pub dims: ClassifierDims,
    pub vocab: Vocabulary,
    pub params: ParamStore<T>,
}

/// Forward pass of a batch: logits `[B×9]` and per-hop attention weights
/// `[B×m]`.
pub struct ClassifierForward<'t, T> {
    pub logits: Var<'t, T>,
    pub attention: Vec<Var<'t, T>>,
}

impl<T: Scalar> ClassifierModel<T> {
    pub fn new(dims: ClassifierDims, vocab: Vocabulary, rng: &mut impl Rng) -> Result<Self> {
        if dims.vocab != vocab.len() {
            return Err(Error::contract(format!(
                "classifier vocabulary has {} tokens, dims say {}",
                vocab.len(),
                dims.vocab
            )));
        }
        if dims.hops == 0 {
            return Err(Error::contract("attention needs at least one hop"));
        }
        let bound = 1.0 / (dims.hidden as f64).sqrt();
        let mut params = ParamStore::new();
        params.insert(EMBEDDING, uniform(&[dims.vocab, dims.embed], 0.1, rng));
        dims.forward_cell().init(&mut params, rng);
        dims.backward_cell().init(&mut params, rng);
        params.insert(ATTN_W, uniform(&[2 * dims.hidden, dims.attention], bound, rng));
        params.insert(ATTN_V, uniform(&[dims.attention, dims.hops], bound, rng));
        params.insert(
            OUT_W,
            uniform(&[2 * dims.hidden * dims.hops, NUM_CLASSES], bound, rng),
        );
        params.insert(OUT_B, Tensor::zeros(&[NUM_CLASSES]));
        Ok(Self {
            dims,
            vocab,
            params,
        })
    }

    pub fn from_params(dims: ClassifierDims, vocab: Vocabulary, params: ParamStore<T>) -> Result<Self> {
        let got: Vec<(String, Vec<usize>)> = params
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        if got != dims.layout() || vocab.len() != dims.vocab {
            return Err(Error::contract("parameters do not match the classifier layout"));
        }
        Ok(Self {
            dims,
            vocab,
            params,
        })
    }

    fn run_direction<'t>(
        &self,
        tape: &'t Tape<T>,
        cell: &LstmCell,
        sequences: &[Vec<usize>],
    ) -> Result<Var<'t, T>> {
        let lengths: Vec<usize> = sequences.iter().map(Vec::len).collect();
        let m = *lengths.iter().max().unwrap();
        let (b, d) = (sequences.len(), self.dims.hidden);
        let emb = tape.param(&self.params, EMBEDDING)?;
        let mut h = tape.constant(Tensor::zeros(&[b, d]));
        let mut c = tape.constant(Tensor::zeros(&[b, d]));
        let mut states = Vec::with_capacity(m);
        for t in 0..m {
            let ids: Vec<usize> = sequences.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect();
            let active: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
            let x = emb.gather_rows(&ids)?;
            let (h2, c2) = cell.step(tape, &self.params, &[x, h], c)?;
            if active.iter().all(|&a| a) {
                (h, c) = (h2, c2);
            } else {
                h = h2.select_rows(&active, h)?;
                c = c2.select_rows(&active, c)?;
            }
            states.push(h.reshape(&[b, 1, d])?);
        }
        if states.len() == 1 {
            Ok(states[0])
        } else {
            concat(&states, 1)
        }
    }

    /// Forward pass over a batch of id sequences (right-padded internally).
    pub fn forward<'t>(&self, tape: &'t Tape<T>, sequences: &[Vec<usize>]) -> Result<ClassifierForward<'t, T>> {
        if sequences.is_empty() || sequences.iter().any(Vec::is_empty) {
            return Err(Error::contract("cannot classify an empty token list"));
        }
        let (b, d) = (sequences.len(), self.dims.hidden);
        let lengths: Vec<usize> = sequences.iter().map(Vec::len).collect();
        let m = *lengths.iter().max().unwrap();
        let forward = self.run_direction(tape, &self.dims.forward_cell(), sequences)?;
        let reversed: Vec<Vec<usize>> = sequences
            .iter()
            .map(|s| s.iter().rev().copied().collect())
            .collect();
        let backward = self.run_direction(tape, &self.dims.backward_cell(), &reversed)?;
        // Row (b, t) of the reversed run belongs to original position len−1−t.
        let realign: Vec<usize> = lengths
            .iter()
            .enumerate()
            .flat_map(|(i, &l)| (0..m).map(move |t| i * m + if t < l { l - 1 - t } else { t }))
            .collect();
        let backward = backward
            .reshape(&[b * m, d])?
            .gather_rows(&realign)?
            .reshape(&[b, m, d])?;
        let states = concat(&[forward, backward], 2)?;
        let keep: Vec<bool> = lengths
            .iter()
            .flat_map(|&l| (0..m).map(move |t| t < l))
            .collect();
        let hidden = states
            .reshape(&[b * m, 2 * d])?
            .matmul(tape.param(&self.params, ATTN_W)?)?
            .tanh();
        let scores = hidden.matmul(tape.param(&self.params, ATTN_V)?)?;
        let mut pooled = Vec::with_capacity(self.dims.hops);
        let mut attention = Vec::with_capacity(self.dims.hops);
        for hop in 0..self.dims.hops {
            let s = scores.narrow(hop, 1)?.reshape(&[b, m])?;
            let alpha = s.masked_softmax(Some(&keep))?;
            pooled.push(alpha.reshape(&[b, 1, m])?.bmm(states)?.reshape(&[b, 2 * d])?);
            attention.push(alpha);
        }
        let pooled = if pooled.len() == 1 {
            pooled[0]
        } else {
            concat(&pooled, 1)?
        };
        let logits = pooled
            .matmul(tape.param(&self.params, OUT_W)?)?
            .add(tape.param(&self.params, OUT_B)?)?;
        Ok(ClassifierForward { logits, attention })
    }

    /// Mean cross-entropy over a labeled batch.
    pub fn loss<'t>(
        &self,
        tape: &'t Tape<T>,
        sequences: &[Vec<usize>],
        labels: &[Emotion],
    ) -> Result<Var<'t, T>> {
        if labels.iter().any(|e| !e.is_class()) {
            return Err(Error::Data("classifier labels must be one of the 9 emotions".into()));
        }
        let fwd = self.forward(tape, sequences)?;
        let targets: Vec<Option<usize>> = labels.iter().map(|e| Some(e.index())).collect();
        fwd.logits
            .cross_entropy(&targets, T::of(1.0 / labels.len() as f64))
    }

    /// Class probabilities and first-hop attention weights for one text.
    pub fn distribution(&self, tokens: &[String]) -> Result<([f64; NUM_CLASSES], Vec<f64>)> {
        let ids = self.vocab.encode(tokens);
        let tape = Tape::new();
        let fwd = self.forward(&tape, &[ids])?;
        let probs = fwd.logits.softmax()?.value().to_f64_vec();
        let mut out = [0.0; NUM_CLASSES];
        out.copy_from_slice(&probs);
        Ok((out, fwd.attention[0].value().to_f64_vec()))
    }
}

impl<T: Scalar + Send + Sync> EmotionScorer for ClassifierModel<T> {
    fn probabilities(&self, tokens: &[String]) -> Result<[f64; NUM_CLASSES]> {
        Ok(self.distribution(tokens)?.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub embed: usize,
    pub hidden: usize,
    pub attention: usize,
    pub hops: usize,
    pub vocab_cap: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dev_ratio: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            embed: 300,
            hidden: 300,
            attention: 300,
            hops: 1,
            vocab_cap: 25_000,
            lr: 1e-3,
            batch_size: 32,
            epochs: 10,
            dev_ratio: 0.1,
            seed: 1,
        }
    }
}

impl ClassifierConfig {
    pub fn desk() -> Self {
        Self {
            embed: 16,
            hidden: 16,
            attention: 16,
            vocab_cap: 2000,
            batch_size: 16,
            ..Self::default()
        }
    }
}

/// Counts indexed `[gold][predicted]` over the nine emotions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts(pub [[u64; NUM_CLASSES]; NUM_CLASSES]);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ConfusionCounts {
    pub fn add(&mut self, gold: Emotion, predicted: Emotion) {
        self.0[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..NUM_CLASSES).map(|i| self.0[i][i]).sum();
        correct as f64 / self.total().max(1) as f64
    }

    /// Precision, recall and F1 of class `i`. Zero denominators give 0.
    pub fn class_scores(&self, i: usize) -> ClassScores {
        let tp = self.0[i][i] as f64;
        let predicted: u64 = (0..NUM_CLASSES).map(|g| self.0[g][i]).sum();
        let support: u64 = self.0[i].iter().sum();
        let ratio = |n: f64, d: u64| if d == 0 { 0.0 } else { n / d as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            precision,
            recall,
            f1,
        }
    }

    /// Unweighted mean over the classes with gold support.
    pub fn macro_scores(&self) -> ClassScores {
        let present: Vec<usize> = (0..NUM_CLASSES)
            .filter(|&i| self.0[i].iter().sum::<u64>() > 0)
            .collect();
        let n = present.len().max(1) as f64;
        let mut acc = ClassScores {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
        for i in present {
            let s = self.class_scores(i);
            acc.precision += s.precision / n;
            acc.recall += s.recall / n;
            acc.f1 += s.f1 / n;
        }
        acc
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionCounts,
    pub n_train: usize,
    pub n_dev: usize,
    pub epoch_losses: Vec<f64>,
    pub reference: ClassScores,
}

/// One labeled sentence for classifier training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledText {
    pub tokens: Vec<String>,
    pub emotion: Emotion,
}

/// Trains a classifier with Adam on cross-entropy and reports macro
/// metrics on a held-out slice.
pub fn train_classifier(
    data: &[LabeledText],
    config: &ClassifierConfig,
) -> Result<(ClassifierModel<f32>, ClassifierMetrics)> {
    if let Some(i) = data.iter().position(|d| !d.emotion.is_class()) {
        return Err(Error::Data(format!(
            "example {} is labeled {}, which is not a classifier emotion",
            i + 1,
            data[i].emotion
        )));
    }
    if let Some(i) = data.iter().position(|d| d.tokens.is_empty()) {
        return Err(Error::Data(format!("example {} has no tokens", i + 1)));
    }
    let mut classes: Vec<Emotion> = data.iter().map(|d| d.emotion).collect();
    classes.sort_by_key(|e| e.index());
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Data(
            "classifier training needs at least two emotions in the data".into(),
        ));
    }
    let (train, dev) = split(data, 1.0 - config.dev_ratio, config.seed)?;
    let vocab = Vocabulary::build(train.iter().map(|d| d.tokens.as_slice()), config.vocab_cap)?;
    let dims = ClassifierDims {
        vocab: vocab.len(),
        embed: config.embed,
        hidden: config.hidden,
        attention: config.attention,
        hops: config.hops,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ClassifierModel::<f32>::new(dims, vocab, &mut rng)?;
    let encoded: Vec<(Vec<usize>, Emotion)> = train
        .iter()
        .map(|d| (model.vocab.encode(&d.tokens), d.emotion))
        .collect();
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut opt = AdamState::new(adam, &model.params);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let seqs: Vec<Vec<usize>> = chunk.iter().map(|&i| encoded[i].0.clone()).collect();
            let labels: Vec<Emotion> = chunk.iter().map(|&i| encoded[i].1).collect();
            let tape = Tape::new();
            let loss = model.loss(&tape, &seqs, &labels)?;
            total += loss.item() as f64;
            batches += 1;
            let grads = tape.backward(loss)?;
            model.params.zero_grad();
            model.params.accumulate(&grads);
            model.params.clip_grad_norm(5.0);
            opt.step(&mut model.params)?;
        }
        let mean = total / batches as f64;
        info!("classifier epoch {} loss {mean:.4}", epoch + 1);
        epoch_losses.push(mean);
    }
    let mut confusion = ConfusionCounts::default();
    for d in &dev {
        let (probs, _) = model.distribution(&d.tokens)?;
        confusion.add(d.emotion, Emotion::CLASSES[argmax(&probs)]);
    }
    let macro_scores = confusion.macro_scores();
    let metrics = ClassifierMetrics {
        accuracy: confusion.accuracy(),
        macro_precision: macro_scores.precision,
        macro_recall: macro_scores.recall,
        macro_f1: macro_scores.f1,
        confusion,
        n_train: train.len(),
        n_dev: dev.len(),
        epoch_losses,
        reference: ClassScores {
            precision: REFERENCE_PRECISION,
            recall: REFERENCE_RECALL,
            f1: REFERENCE_F1,
        },
    };
    Ok((model, metrics))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub total: usize,
    pub non_emotion: usize,
    /// Share of targets whose top probability fell below the threshold.
    pub below_threshold: f64,
    pub per_emotion: Vec<(Emotion, usize)>,
}

/// Labels every pair from its target utterance. Pairs with an empty
/// target are labeled Non-emotion.
pub fn label_corpus(
    scorer: &dyn EmotionScorer,
    pairs: &[TextPair],
    threshold: f64,
) -> Result<(Vec<TextPair>, LabelStats)> {
    let mut counts = [0usize; crate::emotion::NUM_EMOTIONS];
    let mut labeled = Vec::with_capacity(pairs.len());
    for p in pairs {
        let label = if p.target.is_empty() {
            Emotion::NonEmotion
        } else {
            apply_threshold(&scorer.probabilities(&p.target)?, threshold)
        };
        counts[label.index()] += 1;
        labeled.push(TextPair {
            emotion: Some(label),
            ..p.clone()
        });
    }
    let non_emotion = counts[Emotion::NonEmotion.index()];
    let stats = LabelStats {
        total: pairs.len(),
        non_emotion,
        below_threshold: non_emotion as f64 / pairs.len().max(1) as f64,
        per_emotion: Emotion::ALL.iter().map(|&e| (e, counts[e.index()])).collect(),
    };
    Ok((labeled, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(hops: usize) -> ClassifierModel<f64> {
        let texts = [vec!["a".to_string(), "b".into(), "c".into()]];
        let vocab = Vocabulary::build(texts.iter().map(|t| t.as_slice()), 100).unwrap();
        let dims = ClassifierDims {
            vocab: vocab.len(),
            embed: 4,
            hidden: 5,
            attention: 3,
            hops,
        };
        ClassifierModel::new(dims, vocab, &mut ChaCha8Rng::seed_from_u64(2)).unwrap()
    }

    fn words(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_string).collect()
    }

    #[test]
    fn threshold_rule() {
        let mut p = [0.0875; 9];
        p[3] = 0.30;
        assert_eq!(apply_threshold(&p, 0.35), Emotion::NonEmotion);
        let mut q = [0.0625; 9];
        q[5] = 0.50;
        assert_eq!(apply_threshold(&q, 0.35), Emotion::Surprise);
        assert_eq!(apply_threshold(&[1.0 / 9.0; 9], 0.35), Emotion::NonEmotion);
        assert_eq!(apply_threshold(&[1.0 / 9.0; 9], 0.0), Emotion::Anger);
    }

    #[test]
    fn distribution_and_attention_sum_to_one() {
        for hops in [1, 2] {
            let m = toy(hops);
            let (p, a) = m.distribution(&words("a c b a zzz")).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|x| *x >= 0.0));
            assert_eq!(a.len(), 5);
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_text_rejected() {
        assert!(toy(1).distribution(&[]).is_err());
        assert!(classify(&LexicalOracle::new(), &[]).is_err());
    }

    #[test]
    fn deterministic_and_order_sensitive() {
        let m = toy(1);
        let a = m.distribution(&words("a b c")).unwrap();
        assert_eq!(a, m.distribution(&words("a b c")).unwrap());
        assert_ne!(a.0, m.distribution(&words("c b a")).unwrap().0);
    }

    #[test]
    fn padding_does_not_change_prediction() {
        let m = toy(1);
        let tape = Tape::new();
        let short = vec![15, 16];
        let alone = m.forward(&tape, std::slice::from_ref(&short)).unwrap().logits.value();
        let batched = m
            .forward(&tape, &[short, vec![14, 15, 16, 14, 15]])
            .unwrap()
            .logits
            .value();
        for (x, y) in alone.data().iter().zip(&batched.data()[..9]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn f1_from_confusion() {
        let mut c = ConfusionCounts::default();
        for _ in 0..3 {
            c.add(Emotion::Joy, Emotion::Joy);
        }
        c.add(Emotion::Joy, Emotion::Thankfulness);
        c.add(Emotion::Thankfulness, Emotion::Joy);
        let s = c.class_scores(Emotion::Joy.index());
        assert!((s.precision - 0.75).abs() < 1e-15);
        assert!((s.recall - 0.75).abs() < 1e-15);
        assert!((s.f1 - 2.0 * s.precision * s.recall / (s.precision + s.recall)).abs() < 1e-15);
        assert_eq!(c.class_scores(Emotion::Thankfulness.index()).f1, 0.0);
        assert!((c.macro_scores().f1 - 0.375).abs() < 1e-15);
        assert!((c.accuracy() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<LabeledText> = (0..5)
            .map(|_| LabeledText {
                tokens: words("so happy"),
                emotion: Emotion::Joy,
            })
            .collect();
        assert!(matches!(
            train_classifier(&data, &ClassifierConfig::desk()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn labeling_thresholds() {
        let oracle = LexicalOracle::new();
        let pairs = vec![
            TextPair::from_text("x y", "i am so happy", None),
            TextPair::from_text("x y", "nothing to see", None),
            TextPair::from_text("x y", "", None),
        ];
        let (labeled, stats) = label_corpus(&oracle, &pairs, 0.35).unwrap();
        assert_eq!(labeled[0].emotion, Some(Emotion::Joy));
        assert_eq!(labeled[1].emotion, Some(Emotion::NonEmotion));
        assert_eq!(stats.non_emotion, 2);
        let (_, zero) = label_corpus(&oracle, &pairs[..2], 0.0).unwrap();
        assert_eq!(zero.non_emotion, 0);
    }
}
