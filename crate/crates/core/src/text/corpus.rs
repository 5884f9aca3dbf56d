use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::text::{tokenize, Vocabulary, PADDING_LENGTH};

/// A tokenized source/target exchange with an optional emotion label.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TextPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub emotion: Option<Emotion>,
}

impl TextPair {
    pub fn from_text(source: &str, target: &str, emotion: Option<Emotion>) -> Self {
        Self {
            source: tokenize(source),
            target: tokenize(target),
            emotion,
        }
    }

    /// One TSV line: `source TAB target [TAB emotion]`.
    pub fn to_tsv(&self) -> String {
        let mut line = format!("{}\t{}", self.source.join(" "), self.target.join(" "));
        if let Some(e) = self.emotion {
            line.push('\t');
            line.push_str(e.name());
        }
        line
    }
}

/// Encoded pair. Sequences hold content ids only; BOS/EOS are added by
/// the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DialoguePair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub emotion: Option<Emotion>,
}

pub fn encode_pairs(pairs: &[TextPair], vocab: &Vocabulary) -> Vec<DialoguePair> {
    pairs
        .iter()
        .map(|p| DialoguePair {
            source: vocab.encode(&p.source),
            target: vocab.encode(&p.target),
            emotion: p.emotion,
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct IngestOptions {
    pub min_words: usize,
    pub max_len: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            min_words: 6,
            max_len: PADDING_LENGTH,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct IngestReport {
    pub pairs: Vec<TextPair>,
    pub malformed: usize,
    pub duplicates: usize,
    pub too_short: usize,
    pub truncated: usize,
}

/// Reads `source TAB target [TAB emotion]` lines, dropping exact
/// duplicates and pairs with a side shorter than `min_words`, and
/// truncating both sides to `max_len` tokens.
pub fn ingest_pairs(path: &Path, opts: IngestOptions) -> Result<IngestReport> {
    let reader = BufReader::new(File::open(path)?);
    let mut report = IngestReport::default();
    let mut seen: HashSet<(Vec<String>, Vec<String>)> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            report.malformed += 1;
            warn!("{}:{}: expected 2 or 3 tab-separated fields", path.display(), i + 1);
            continue;
        }
        let emotion = match fields.get(2).map(|s| s.trim()) {
            Some("") | None => None,
            Some(name) => Some(name.parse::<Emotion>().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("unknown emotion {name:?}"),
            })?),
        };
        let mut source = tokenize(fields[0]);
        let mut target = tokenize(fields[1]);
        if source.len() < opts.min_words.max(1) || target.len() < opts.min_words.max(1) {
            report.too_short += 1;
            continue;
        }
        if !seen.insert((source.clone(), target.clone())) {
            report.duplicates += 1;
            continue;
        }
        if source.len() > opts.max_len || target.len() > opts.max_len {
            report.truncated += 1;
            source.truncate(opts.max_len);
            target.truncate(opts.max_len);
        }
        report.pairs.push(TextPair {
            source,
            target,
            emotion,
        });
    }
    Ok(report)
}

/// Seeded shuffle, then the first `round(n·ratio)` items (at least one,
/// at most n−1) go to train.
pub fn split<P: Clone>(pairs: &[P], ratio: f64, seed: u64) -> Result<(Vec<P>, Vec<P>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::contract(format!("split ratio {ratio} outside (0, 1)")));
    }
    if pairs.len() < 2 {
        return Err(Error::Data("need at least 2 pairs to split".into()));
    }
    let mut shuffled = pairs.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((pairs.len() as f64 * ratio).round() as usize).clamp(1, pairs.len() - 1);
    let dev = shuffled.split_off(n_train);
    Ok((shuffled, dev))
}
