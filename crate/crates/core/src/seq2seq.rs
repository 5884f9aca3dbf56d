//! LSTM encoder-decoder with global attention, plus the hooks through
//! which each emotion variant conditions it.
//!
//! The encoder runs left to right from a zero state. Attention scores are
//! `s_j = h_deᵀ·tanh(W·h_j)` over unpadded source positions and the
//! attended vector `ĥ_t = Σ_j α_j h_j` is fed back as the decoder's
//! recurrent hidden input on the next step, starting from `ĥ_0 = h_m`,
//! `c_0 = c_m`. Parameter tensors use the row-vector convention, so `W·h`
//! is stored and computed as `h·W`.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, RngCore};

use crate::autograd::{concat, Tape, Var};
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::nn::{dropout, LstmCell};
use crate::params::{normal, uniform, ParamStore};
use crate::tensor::{argmax, Scalar, Tensor};
use crate::text::{DialoguePair, EmbeddingTable, BOS, EOS, NUM_SPECIAL, PAD};
use crate::variants::{
    decoder_cell, encoder_cell, layout, record_read, InjectionSite, ModelDims, ModelKind,
    VariantTag, ATTENTION, ATTENTION_EMOTION, EMBEDDING, EMOTION_VECTORS, PROJ_B, PROJ_EMOTION_B,
    PROJ_EMOTION_W, PROJ_W, TRANS_EMOTION,
};

/// Vocabulary id of an emotion's token.
pub fn emotion_token(e: Emotion) -> usize {
    NUM_SPECIAL - crate::emotion::NUM_EMOTIONS + e.index()
}

fn is_emotion_token(id: usize) -> bool {
    (NUM_SPECIAL - crate::emotion::NUM_EMOTIONS..NUM_SPECIAL).contains(&id)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenPosition {
    Before,
    After,
}

static ENC_TOKEN_TRUNCATIONS: AtomicUsize = AtomicUsize::new(0);

/// How many sources lost their last content token to make room for an
/// emotion token.
pub fn enc_token_truncations() -> usize {
    ENC_TOKEN_TRUNCATIONS.load(Ordering::Relaxed)
}

/// Adds the emotion token before or after the source. A source already at
/// `max_len` loses its last content token first. Sources that already hold
/// an emotion token are rejected.
pub fn apply_enc_token(
    source: &[usize],
    e: Emotion,
    position: TokenPosition,
    max_len: usize,
) -> Result<Vec<usize>> {
    if source.iter().any(|&t| is_emotion_token(t)) {
        return Err(Error::contract("source already carries an emotion token"));
    }
    let mut content = source.to_vec();
    if content.len() >= max_len {
        ENC_TOKEN_TRUNCATIONS.fetch_add(1, Ordering::Relaxed);
        content.truncate(max_len - 1);
    }
    let token = emotion_token(e);
    Ok(match position {
        TokenPosition::Before => std::iter::once(token).chain(content).collect(),
        TokenPosition::After => content.into_iter().chain(std::iter::once(token)).collect(),
    })
}

/// First decoder input for the start-token variant.
pub fn decstart_first_input(e: Emotion) -> usize {
    emotion_token(e)
}

/// Teacher-forced training batch. Targets hold content ids only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub sources: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
    pub emotions: Vec<Emotion>,
}

impl Batch {
    pub fn from_pairs(pairs: &[&DialoguePair]) -> Result<Self> {
        let mut batch = Batch {
            sources: Vec::with_capacity(pairs.len()),
            targets: Vec::with_capacity(pairs.len()),
            emotions: Vec::with_capacity(pairs.len()),
        };
        for (i, p) in pairs.iter().enumerate() {
            let e = p
                .emotion
                .ok_or_else(|| Error::Data(format!("pair {i} of the batch has no emotion label")))?;
            batch.sources.push(p.source.clone());
            batch.targets.push(p.target.clone());
            batch.emotions.push(e);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

pub struct EncoderOutput<'t, T> {
    /// `[B×m×D]` hidden states.
    pub states: Var<'t, T>,
    /// `[B×D]` state after each sequence's last real token.
    pub final_h: Var<'t, T>,
    pub final_c: Var<'t, T>,
    /// `B×m` flags, false at PAD positions.
    pub keep: Vec<bool>,
    pub lengths: Vec<usize>,
}

impl<T> EncoderOutput<'_, T> {
    pub fn max_len(&self) -> usize {
        self.keep.len() / self.lengths.len()
    }
}

#[derive(Clone, Copy)]
pub struct DecoderState<'t, T> {
    /// Attended vector from the previous step, `[B×D]`.
    pub attended: Var<'t, T>,
    pub cell: Var<'t, T>,
    pub step: usize,
}

/// Per-sequence state that stays fixed over decoding steps.
pub struct DecodeContext<'t, T> {
    pub encoder: EncoderOutput<'t, T>,
    /// `[B×m×D]` attention keys `tanh(h_j·W)`.
    pub keys: Var<'t, T>,
    emotion_idx: Option<Vec<usize>>,
    emotion_vectors: Option<Var<'t, T>>,
}

pub struct StepOutput<'t, T> {
    pub hidden: Var<'t, T>,
    pub logits: Var<'t, T>,
    pub alpha: Var<'t, T>,
    pub state: DecoderState<'t, T>,
}

pub struct TeacherForced<'t, T> {
    pub logits: Vec<Var<'t, T>>,
    pub targets: Vec<Vec<Option<usize>>>,
    pub alphas: Vec<Var<'t, T>>,
}

/// Greedy decoding result. `attention[i]` is the distribution over
/// `source` positions when `tokens[i]` was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub source: Vec<usize>,
    pub tokens: Vec<usize>,
    pub attention: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Seq2Seq<T> {
    pub kind: ModelKind,
    pub dims: ModelDims,
    /// Drop probability applied to embeddings and to decoder outputs.
    pub dropout: f64,
    pub params: ParamStore<T>,
}

pub type RngOpt<'a> = Option<&'a mut (dyn RngCore + 'static)>;

impl<T: Scalar> Seq2Seq<T> {
    pub fn new(kind: ModelKind, dims: ModelDims, dropout: f64, rng: &mut impl Rng) -> Self {
        let (d, v, s) = (dims.hidden, dims.vocab, dims.emotions);
        let bound = 1.0 / (d as f64).sqrt();
        let mut params = ParamStore::new();
        params.insert(EMBEDDING, uniform(&[v, dims.embed], 0.1, rng));
        encoder_cell(&dims).init(&mut params, rng);
        decoder_cell(kind, &dims).init(&mut params, rng);
        if kind.is(VariantTag::DecRep) {
            params.insert(EMOTION_VECTORS, uniform(&[s, d], bound, rng));
        }
        if kind.is(VariantTag::EncAtt) {
            params.insert(ATTENTION_EMOTION, uniform(&[s, d, d], bound, rng));
        } else {
            params.insert(ATTENTION, uniform(&[d, d], bound, rng));
        }
        if kind.is(VariantTag::DecTrans) {
            let mut trans = normal::<T>(&[s, d, d], 1e-3, rng);
            for e in 0..s {
                for i in 0..d {
                    let x = &mut trans.data_mut()[e * d * d + i * d + i];
                    *x = *x + T::one();
                }
            }
            params.insert(TRANS_EMOTION, trans);
        }
        if kind.is(VariantTag::DecProj) {
            let one = uniform::<T>(&[d, v], bound, rng);
            let data = one.data().repeat(s);
            params.insert(PROJ_EMOTION_W, Tensor::new(&[s, d, v], data).expect("shape"));
            params.insert(PROJ_EMOTION_B, Tensor::zeros(&[s, v]));
        } else {
            params.insert(PROJ_W, uniform(&[d, v], bound, rng));
            params.insert(PROJ_B, Tensor::zeros(&[v]));
        }
        debug_assert!(Self::check_layout(kind, &dims, &params).is_ok());
        Self {
            kind,
            dims,
            dropout,
            params,
        }
    }

    /// Wraps loaded parameters after checking they match the kind's layout.
    pub fn from_params(
        kind: ModelKind,
        dims: ModelDims,
        dropout: f64,
        params: ParamStore<T>,
    ) -> Result<Self> {
        Self::check_layout(kind, &dims, &params)?;
        Ok(Self {
            kind,
            dims,
            dropout,
            params,
        })
    }

    /// A variant initialized from a trained baseline: shared tensors are
    /// copied and the emotion parameters take their neutral values (zero
    /// emotion vectors, identity transforms, copies of the shared
    /// projection and attention matrix, emotion tokens embedded like BOS),
    /// so before any training it computes exactly what the baseline does.
    /// Tensors without a neutral value (the extra recurrent block) keep the
    /// values drawn from `rng`.
    pub fn from_baseline(
        baseline: &Seq2Seq<T>,
        tag: VariantTag,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if baseline.kind != ModelKind::Baseline {
            return Err(Error::contract("from_baseline needs a baseline model"));
        }
        let kind = ModelKind::Variant(tag);
        let dims = baseline.dims;
        let (d, s) = (dims.hidden, dims.emotions);
        let mut model = Self::new(kind, dims, baseline.dropout, rng);
        for (name, t) in baseline.params.iter() {
            if let Some(dst) = model.params.get_mut(name) {
                dst.data_mut().copy_from_slice(t.data());
            }
        }
        let base = &baseline.params;
        let stacked = |name: &str| -> Result<Vec<T>> { Ok(base.require(name)?.data().repeat(s)) };
        match tag {
            VariantTag::DecRep => {
                let v = model.params.require_mut(EMOTION_VECTORS)?;
                v.data_mut().iter_mut().for_each(|x| *x = T::zero());
            }
            VariantTag::DecTrans => {
                let eye = Tensor::<T>::identity(d).into_data().repeat(s);
                model.params.require_mut(TRANS_EMOTION)?.data_mut().copy_from_slice(&eye);
            }
            VariantTag::DecProj => {
                let w = stacked(PROJ_W)?;
                let b = stacked(PROJ_B)?;
                model.params.require_mut(PROJ_EMOTION_W)?.data_mut().copy_from_slice(&w);
                model.params.require_mut(PROJ_EMOTION_B)?.data_mut().copy_from_slice(&b);
            }
            VariantTag::EncAtt => {
                let w = stacked(ATTENTION)?;
                model.params.require_mut(ATTENTION_EMOTION)?.data_mut().copy_from_slice(&w);
            }
            VariantTag::DecStart => {
                let emb = model.params.require_mut(EMBEDDING)?;
                let width = dims.embed;
                let bos = emb.data()[BOS * width..(BOS + 1) * width].to_vec();
                for e in crate::emotion::Emotion::ALL {
                    let row = emotion_token(e) * width;
                    emb.data_mut()[row..row + width].copy_from_slice(&bos);
                }
            }
            VariantTag::EncBef | VariantTag::EncAft => {}
        }
        Ok(model)
    }

    fn check_layout(kind: ModelKind, dims: &ModelDims, params: &ParamStore<T>) -> Result<()> {
        let expected = layout(kind, dims);
        let got: Vec<(String, Vec<usize>)> = params
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        if got != expected {
            return Err(Error::contract(format!(
                "parameters do not match the {kind} layout"
            )));
        }
        Ok(())
    }

    /// Replaces the embedding table, e.g. with pretrained vectors.
    pub fn set_embeddings(&mut self, table: &EmbeddingTable<T>) -> Result<()> {
        let current = self.params.require_mut(EMBEDDING)?;
        if current.shape() != table.table.shape() {
            return Err(Error::dim(
                "set_embeddings",
                current.shape(),
                table.table.shape(),
            ));
        }
        *current = table.table.clone().with_grad();
        current.requires_grad = table.trainable;
        Ok(())
    }

    /// The source the encoder actually sees for this emotion.
    pub fn prepare_source(&self, source: &[usize], e: Emotion) -> Result<Vec<usize>> {
        let position = match self.kind.tag() {
            Some(VariantTag::EncBef) => TokenPosition::Before,
            Some(VariantTag::EncAft) => TokenPosition::After,
            _ => return Ok(source.to_vec()),
        };
        record_read(InjectionSite::SourceToken);
        apply_enc_token(source, e, position, self.dims.max_len)
    }

    fn start_tokens(&self, emotions: &[Emotion]) -> Vec<usize> {
        if self.kind.is(VariantTag::DecStart) {
            record_read(InjectionSite::StartToken);
            emotions.iter().map(|&e| decstart_first_input(e)).collect()
        } else {
            vec![BOS; emotions.len()]
        }
    }

    fn embed<'t>(&self, tape: &'t Tape<T>, ids: &[usize], rng: RngOpt<'_>) -> Result<Var<'t, T>> {
        let emb = tape.param(&self.params, EMBEDDING)?;
        dropout(emb.gather_rows(ids)?, self.dropout, rng)
    }

    /// Runs the encoder over right-padded sources. Padding never changes
    /// a sequence's states.
    pub fn encode<'t>(
        &self,
        tape: &'t Tape<T>,
        sources: &[Vec<usize>],
        mut rng: RngOpt<'_>,
    ) -> Result<EncoderOutput<'t, T>> {
        let lengths: Vec<usize> = sources.iter().map(Vec::len).collect();
        if sources.is_empty() || lengths.contains(&0) {
            return Err(Error::contract("cannot encode an empty source"));
        }
        let m = *lengths.iter().max().unwrap();
        if m > self.dims.max_len {
            return Err(Error::contract(format!(
                "source length {m} exceeds the padding length"
            )));
        }
        let (b, d) = (sources.len(), self.dims.hidden);
        let cell = encoder_cell(&self.dims);
        let mut h = tape.constant(Tensor::zeros(&[b, d]));
        let mut c = tape.constant(Tensor::zeros(&[b, d]));
        let mut states = Vec::with_capacity(m);
        for t in 0..m {
            let ids: Vec<usize> = sources.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect();
            let active: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
            let x = self.embed(tape, &ids, rng.as_deref_mut())?;
            let (h2, c2) = cell.step(tape, &self.params, &[x, h], c)?;
            if active.iter().all(|&a| a) {
                h = h2;
                c = c2;
            } else {
                h = h2.select_rows(&active, h)?;
                c = c2.select_rows(&active, c)?;
            }
            states.push(h.reshape(&[b, 1, d])?);
        }
        let states = if states.len() == 1 {
            states[0]
        } else {
            concat(&states, 1)?
        };
        let keep = lengths
            .iter()
            .flat_map(|&l| (0..m).map(move |t| t < l))
            .collect();
        Ok(EncoderOutput {
            states,
            final_h: h,
            final_c: c,
            keep,
            lengths,
        })
    }

    /// Builds the fixed per-sequence decoding context, reading emotions
    /// for the variants that condition the decoder or attention.
    pub fn context<'t>(
        &self,
        tape: &'t Tape<T>,
        encoder: EncoderOutput<'t, T>,
        emotions: &[Emotion],
    ) -> Result<DecodeContext<'t, T>> {
        let (b, m, d) = (encoder.lengths.len(), encoder.max_len(), self.dims.hidden);
        if emotions.len() != b {
            return Err(Error::contract("one emotion per sequence required"));
        }
        let site = self.kind.tag().map(VariantTag::site).filter(|s| {
            matches!(
                s,
                InjectionSite::RecurrentVector
                    | InjectionSite::OutputTransform
                    | InjectionSite::Projection
                    | InjectionSite::AttentionMatrix
            )
        });
        let emotion_idx = site.map(|s| {
            record_read(s);
            emotions.iter().map(|e| e.index()).collect::<Vec<_>>()
        });
        let projected = if self.kind.is(VariantTag::EncAtt) {
            let w = tape.param(&self.params, ATTENTION_EMOTION)?;
            encoder
                .states
                .gather_matmul(w, emotion_idx.as_deref().expect("emotion read"))?
        } else {
            let w = tape.param(&self.params, ATTENTION)?;
            encoder
                .states
                .reshape(&[b * m, d])?
                .matmul(w)?
                .reshape(&[b, m, d])?
        };
        let emotion_vectors = if self.kind.is(VariantTag::DecRep) {
            let table = tape.param(&self.params, EMOTION_VECTORS)?;
            Some(table.gather_rows(emotion_idx.as_deref().expect("emotion read"))?)
        } else {
            None
        };
        Ok(DecodeContext {
            keys: projected.tanh(),
            encoder,
            emotion_idx,
            emotion_vectors,
        })
    }

    pub fn initial_state<'t>(&self, ctx: &DecodeContext<'t, T>) -> DecoderState<'t, T> {
        DecoderState {
            attended: ctx.encoder.final_h,
            cell: ctx.encoder.final_c,
            step: 0,
        }
    }

    /// Attention weights `[B×m]` and attended vectors `[B×D]` for decoder
    /// hidden states `[B×D]`.
    pub fn attend<'t>(
        &self,
        ctx: &DecodeContext<'t, T>,
        hidden: Var<'t, T>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let enc = &ctx.encoder;
        let (b, m, d) = (enc.lengths.len(), enc.max_len(), self.dims.hidden);
        let scores = ctx.keys.bmm(hidden.reshape(&[b, d, 1])?)?.reshape(&[b, m])?;
        let alpha = scores.masked_softmax(Some(&enc.keep))?;
        let attended = alpha
            .reshape(&[b, 1, m])?
            .bmm(enc.states)?
            .reshape(&[b, d])?;
        Ok((alpha, attended))
    }

    /// Vocabulary logits from decoder hidden states.
    pub fn logits<'t>(
        &self,
        tape: &'t Tape<T>,
        ctx: &DecodeContext<'t, T>,
        hidden: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        match self.kind.tag() {
            Some(VariantTag::DecProj) => {
                let idx = ctx.emotion_idx.as_deref().expect("emotion read");
                let w = tape.param(&self.params, PROJ_EMOTION_W)?;
                let bias = tape.param(&self.params, PROJ_EMOTION_B)?.gather_rows(idx)?;
                hidden.gather_matmul(w, idx)?.add(bias)
            }
            kind => {
                let hidden = if kind == Some(VariantTag::DecTrans) {
                    let idx = ctx.emotion_idx.as_deref().expect("emotion read");
                    hidden.gather_matmul(tape.param(&self.params, TRANS_EMOTION)?, idx)?
                } else {
                    hidden
                };
                let w = tape.param(&self.params, PROJ_W)?;
                hidden.matmul(w)?.add(tape.param(&self.params, PROJ_B)?)
            }
        }
    }

    /// One decoder step consuming `inputs` (one token id per sequence).
    pub fn decode_step<'t>(
        &self,
        tape: &'t Tape<T>,
        ctx: &DecodeContext<'t, T>,
        inputs: &[usize],
        state: DecoderState<'t, T>,
        mut rng: RngOpt<'_>,
    ) -> Result<StepOutput<'t, T>> {
        if state.step > self.dims.max_len {
            return Err(Error::contract(format!(
                "decoder step {} beyond the padding length {}",
                state.step, self.dims.max_len
            )));
        }
        if inputs.iter().any(|&i| i >= self.dims.vocab) {
            return Err(Error::contract("decoder input id outside the vocabulary"));
        }
        let cell: LstmCell = decoder_cell(self.kind, &self.dims);
        let x = self.embed(tape, inputs, rng.as_deref_mut())?;
        let mut channels = vec![x, state.attended];
        if let Some(v) = ctx.emotion_vectors {
            channels.push(v);
        }
        let (hidden, c) = cell.step(tape, &self.params, &channels, state.cell)?;
        let (alpha, attended) = self.attend(ctx, hidden)?;
        let out = dropout(hidden, self.dropout, rng)?;
        let logits = self.logits(tape, ctx, out)?;
        Ok(StepOutput {
            hidden,
            logits,
            alpha,
            state: DecoderState {
                attended,
                cell: c,
                step: state.step + 1,
            },
        })
    }

    /// Teacher-forced pass: step `t` consumes the gold token `t−1` (the
    /// start token at `t = 0`) and is scored against gold token `t`, with
    /// EOS after the last content token.
    pub fn teacher_forced<'t>(
        &self,
        tape: &'t Tape<T>,
        batch: &Batch,
        mut rng: RngOpt<'_>,
    ) -> Result<TeacherForced<'t, T>> {
        if batch.is_empty() || batch.targets.iter().any(|t| t.len() > self.dims.max_len) {
            return Err(Error::contract("empty batch or target beyond the padding length"));
        }
        let sources = batch
            .sources
            .iter()
            .zip(&batch.emotions)
            .map(|(s, &e)| self.prepare_source(s, e))
            .collect::<Result<Vec<_>>>()?;
        let encoder = self.encode(tape, &sources, rng.as_deref_mut())?;
        let ctx = self.context(tape, encoder, &batch.emotions)?;
        let mut state = self.initial_state(&ctx);
        let steps = batch.targets.iter().map(Vec::len).max().unwrap() + 1;
        let mut inputs = self.start_tokens(&batch.emotions);
        let mut out = TeacherForced {
            logits: Vec::with_capacity(steps),
            targets: Vec::with_capacity(steps),
            alphas: Vec::with_capacity(steps),
        };
        for t in 0..steps {
            let step = self.decode_step(tape, &ctx, &inputs, state, rng.as_deref_mut())?;
            let targets: Vec<Option<usize>> = batch
                .targets
                .iter()
                .map(|y| match t.cmp(&y.len()) {
                    std::cmp::Ordering::Less => Some(y[t]),
                    std::cmp::Ordering::Equal => Some(EOS),
                    std::cmp::Ordering::Greater => None,
                })
                .collect();
            inputs = targets.iter().map(|t| t.unwrap_or(PAD)).collect();
            out.logits.push(step.logits);
            out.alphas.push(step.alpha);
            out.targets.push(targets);
            state = step.state;
        }
        Ok(out)
    }

    /// Mean token cross-entropy of a batch, with the token count.
    pub fn loss<'t>(
        &self,
        tape: &'t Tape<T>,
        batch: &Batch,
        rng: RngOpt<'_>,
    ) -> Result<(Var<'t, T>, usize)> {
        let tf = self.teacher_forced(tape, batch, rng)?;
        let count = tf.targets.iter().flatten().filter(|t| t.is_some()).count();
        Ok((masked_sequence_loss(&tf.logits, &tf.targets)?, count))
    }

    /// Greedy argmax decoding, stopping at EOS or after `max_len` tokens.
    pub fn greedy_decode(&self, source: &[usize], e: Emotion, max_len: usize) -> Result<Decoded> {
        let tape = Tape::new();
        let prepared = self.prepare_source(source, e)?;
        let encoder = self.encode(&tape, std::slice::from_ref(&prepared), None)?;
        let ctx = self.context(&tape, encoder, &[e])?;
        let mut state = self.initial_state(&ctx);
        let mut input = self.start_tokens(&[e]);
        let mut decoded = Decoded {
            source: prepared,
            tokens: Vec::new(),
            attention: Vec::new(),
        };
        for _ in 0..max_len.min(self.dims.max_len) {
            let step = self.decode_step(&tape, &ctx, &input, state, None)?;
            let next = argmax(&step.logits.data());
            if next == EOS {
                break;
            }
            decoded.tokens.push(next);
            decoded.attention.push(step.alpha.value().to_f64_vec());
            input = vec![next];
            state = step.state;
        }
        Ok(decoded)
    }
}

/// Mean categorical cross-entropy over every present target.
/// `logits[t]` is `[B×V]`, `targets[t]` has one entry per row.
pub fn masked_sequence_loss<'t, T: Scalar>(
    logits: &[Var<'t, T>],
    targets: &[Vec<Option<usize>>],
) -> Result<Var<'t, T>> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::contract(format!(
            "{} logit steps for {} target steps",
            logits.len(),
            targets.len()
        )));
    }
    let count = targets.iter().flatten().filter(|t| t.is_some()).count();
    if count == 0 {
        return Err(Error::contract("no target tokens"));
    }
    let scale = T::of(1.0 / count as f64);
    let mut total: Option<Var<'t, T>> = None;
    for (l, t) in logits.iter().zip(targets) {
        let ce = l.cross_entropy(t, scale)?;
        total = Some(match total {
            None => ce,
            Some(acc) => acc.add(ce)?,
        });
    }
    Ok(total.unwrap())
}

/// Mean cross-entropy of one sequence: one `[1×V]` (or `[V]`) logit row
/// per target token; the target must end with EOS.
pub fn sequence_loss<'t, T: Scalar>(logits: &[Var<'t, T>], target: &[usize]) -> Result<Var<'t, T>> {
    if target.last() != Some(&EOS) {
        return Err(Error::contract("target must end with EOS"));
    }
    if logits.len() != target.len() {
        return Err(Error::contract(format!(
            "{} logit rows for {} target tokens",
            logits.len(),
            target.len()
        )));
    }
    let rows = logits
        .iter()
        .map(|l| {
            let v = l.numel();
            l.reshape(&[1, v])
        })
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<Option<usize>>> = target.iter().map(|&t| vec![Some(t)]).collect();
    masked_sequence_loss(&rows, &targets)
}
