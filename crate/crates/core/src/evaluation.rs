//! Estimated accuracy: generate one response per (source, instructed
//! emotion), classify it, and count how often the classifier detects the
//! instructed emotion.

use std::fmt::Write as _;
use std::thread;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{tokenizer_digest, DialogueModel};
use crate::classifier::EmotionScorer;
use crate::emotion::{Emotion, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::argmax;
use crate::variants::VariantTag;

/// Published per-emotion accuracies (emotion order) and averages, from a
/// corpus and classifier not available here. Reported for context only.
pub fn reference_accuracy(tag: VariantTag) -> ([f64; NUM_CLASSES], f64) {
    let column = match tag {
        VariantTag::EncBef => 0,
        VariantTag::EncAft => 1,
        VariantTag::DecRep => 2,
        VariantTag::DecStart => 3,
        VariantTag::DecTrans => 4,
        VariantTag::DecProj => 5,
        VariantTag::EncAtt => 6,
    };
    const ROWS: [[f64; 7]; NUM_CLASSES] = [
        [0.6018, 0.6230, 0.6795, 0.6681, 0.6427, 0.7848, 0.6509],
        [0.7798, 0.7679, 0.7902, 0.7842, 0.7833, 0.8643, 0.7829],
        [0.8640, 0.8417, 0.8352, 0.8410, 0.7715, 0.7370, 0.8600],
        [0.4569, 0.4115, 0.4830, 0.4742, 0.4969, 0.5912, 0.3871],
        [0.9419, 0.9398, 0.9421, 0.9418, 0.8842, 0.8983, 0.9509],
        [0.8447, 0.8509, 0.8721, 0.8055, 0.8361, 0.8056, 0.9254],
        [0.5638, 0.5469, 0.5832, 0.5425, 0.6282, 0.8514, 0.6456],
        [0.8769, 0.8931, 0.9083, 0.8944, 0.8203, 0.6180, 0.8911],
        [0.9319, 0.9217, 0.9120, 0.9068, 0.8664, 0.5092, 0.9440],
    ];
    const AVERAGE: [f64; 7] = [0.7624, 0.7552, 0.7784, 0.7621, 0.7477, 0.7400, 0.7820];
    (ROWS.map(|r| r[column]), AVERAGE[column])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub per_emotion_accuracy: IndexMap<String, f64>,
    pub average: f64,
}

/// Evaluation summary. Field order is stable for diffable reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub per_emotion_accuracy: IndexMap<String, f64>,
    pub average: f64,
    /// `[instructed][detected]`.
    pub confusion_counts: Vec<Vec<u64>>,
    pub confusion_normalized: Vec<Vec<f64>>,
    pub n_sources: usize,
    pub seed: u64,
    pub config_digest: String,
    pub tokenizer_digest: String,
    /// Empty responses, scored as a uniform distribution.
    pub empty_responses: usize,
    pub reference: Option<ReferenceValues>,
}

impl EvalReport {
    pub fn from_counts(
        model: &DialogueModel,
        counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
        n_sources: usize,
        seed: u64,
        empty_responses: usize,
    ) -> Self {
        let normalized: Vec<Vec<f64>> = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect();
        let per_emotion_accuracy: IndexMap<String, f64> = Emotion::CLASSES
            .iter()
            .map(|e| (e.name().to_string(), normalized[e.index()][e.index()]))
            .collect();
        let average = per_emotion_accuracy.values().sum::<f64>() / NUM_CLASSES as f64;
        let reference = model.model.kind.tag().map(|tag| {
            let (rows, average) = reference_accuracy(tag);
            ReferenceValues {
                per_emotion_accuracy: Emotion::CLASSES
                    .iter()
                    .map(|e| (e.name().to_string(), rows[e.index()]))
                    .collect(),
                average,
            }
        });
        EvalReport {
            variant: model.model.kind.to_string(),
            per_emotion_accuracy,
            average,
            confusion_counts: counts.iter().map(|r| r.to_vec()).collect(),
            confusion_normalized: normalized,
            n_sources,
            seed,
            config_digest: model.config_digest(),
            tokenizer_digest: tokenizer_digest(&model.tokenizer),
            empty_responses,
            reference,
        }
    }
}

/// Generates a greedy response for every source under each of the nine
/// emotions and scores it with `scorer`, taking the argmax without a
/// threshold. Sources are split across threads; the result does not
/// depend on the split.
pub fn evaluate(
    model: &DialogueModel,
    scorer: &dyn EmotionScorer,
    scorer_tokenizer: &str,
    sources: &[Vec<String>],
    seed: u64,
) -> Result<EvalReport> {
    if tokenizer_digest(scorer_tokenizer) != tokenizer_digest(&model.tokenizer) {
        return Err(Error::contract(format!(
            "model tokenizer {:?} differs from classifier tokenizer {scorer_tokenizer:?}",
            model.tokenizer
        )));
    }
    if sources.is_empty() {
        return Err(Error::Data("no test sources".into()));
    }
    let threads = thread::available_parallelism().map_or(1, |n| n.get()).min(sources.len());
    let chunk = sources.len().div_ceil(threads);
    let partials: Vec<Result<([[u64; NUM_CLASSES]; NUM_CLASSES], usize)>> = thread::scope(|s| {
        let handles: Vec<_> = sources
            .chunks(chunk)
            .map(|part| s.spawn(move || score_sources(model, scorer, part)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut empty = 0;
    for p in partials {
        let (c, e) = p?;
        for (row, add) in counts.iter_mut().zip(c) {
            for (x, y) in row.iter_mut().zip(add) {
                *x += y;
            }
        }
        empty += e;
    }
    Ok(EvalReport::from_counts(model, counts, sources.len(), seed, empty))
}

fn score_sources(
    model: &DialogueModel,
    scorer: &dyn EmotionScorer,
    sources: &[Vec<String>],
) -> Result<([[u64; NUM_CLASSES]; NUM_CLASSES], usize)> {
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut empty = 0;
    let max_len = model.model.dims.max_len;
    for source in sources {
        let ids = model.vocab.encode(source);
        for e in Emotion::CLASSES {
            let decoded = model.model.greedy_decode(&ids, e, max_len)?;
            let words = model.vocab.decode(&decoded.tokens);
            let probs = if words.is_empty() {
                empty += 1;
                [1.0 / NUM_CLASSES as f64; NUM_CLASSES]
            } else {
                scorer.probabilities(&words)?
            };
            counts[e.index()][argmax(&probs)] += 1;
        }
    }
    Ok((counts, empty))
}

/// Counts and row-normalized confusion matrices as tab-separated tables
/// with emotion labels.
pub fn confusion_tsv(report: &EvalReport) -> String {
    let names: Vec<&str> = Emotion::CLASSES.iter().map(|e| e.name()).collect();
    let mut out = String::new();
    let header = format!("instructed\\detected\t{}\n", names.join("\t"));
    out.push_str("# counts\n");
    out.push_str(&header);
    for (name, row) in names.iter().zip(&report.confusion_counts) {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "{name}\t{}", cells.join("\t"));
    }
    out.push_str("\n# normalized\n");
    out.push_str(&header);
    for (name, row) in names.iter().zip(&report.confusion_normalized) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.6}")).collect();
        let _ = writeln!(out, "{name}\t{}", cells.join("\t"));
    }
    out
}

/// Attention of one generated response over its (prepared) source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub emotion: Emotion,
    pub source_tokens: Vec<String>,
    pub output_tokens: Vec<String>,
    /// One row per output token, one column per source token.
    pub matrix: Vec<Vec<f64>>,
}

/// Greedy response to `source` with its attention trace.
pub fn trace(model: &DialogueModel, source: &[String], e: Emotion) -> Result<AttentionTrace> {
    let ids = model.vocab.encode(source);
    let decoded = model.model.greedy_decode(&ids, e, model.model.dims.max_len)?;
    Ok(AttentionTrace {
        emotion: e,
        source_tokens: model.vocab.decode(&decoded.source),
        output_tokens: model.vocab.decode(&decoded.tokens),
        matrix: decoded.attention,
    })
}

/// Tab-separated heatmap: an `emotion` line, a header row of source
/// tokens, then one row per output token with six-decimal weights.
pub fn export_heatmap(trace: &AttentionTrace) -> String {
    let mut out = format!("emotion\t{}\n", trace.emotion);
    let _ = writeln!(out, "\t{}", trace.source_tokens.join("\t"));
    for (token, row) in trace.output_tokens.iter().zip(&trace.matrix) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.6}")).collect();
        let _ = writeln!(out, "{token}\t{}", cells.join("\t"));
    }
    out
}

pub fn parse_heatmap(text: &str) -> Result<AttentionTrace> {
    let bad = |line: usize, msg: &str| Error::Data(format!("heatmap line {line}: {msg}"));
    let mut lines = text.lines();
    let emotion = lines
        .next()
        .and_then(|l| l.strip_prefix("emotion\t"))
        .ok_or_else(|| bad(1, "expected the emotion line"))?
        .parse()?;
    let source_tokens: Vec<String> = lines
        .next()
        .and_then(|l| l.strip_prefix('\t'))
        .ok_or_else(|| bad(2, "expected the source header"))?
        .split('\t')
        .map(str::to_string)
        .collect();
    let mut output_tokens = Vec::new();
    let mut matrix = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut cells = line.split('\t');
        output_tokens.push(cells.next().unwrap_or_default().to_string());
        let row: Vec<f64> = cells
            .map(|c| c.parse().map_err(|_| bad(i + 3, "bad number")))
            .collect::<Result<_>>()?;
        if row.len() != source_tokens.len() {
            return Err(bad(i + 3, "row width differs from the header"));
        }
        matrix.push(row);
    }
    Ok(AttentionTrace {
        emotion,
        source_tokens,
        output_tokens,
        matrix,
    })
}
