//! Corpus preparation shared by the command-line driver and tests.

use crate::error::{Error, Result};
use crate::text::{encode_pairs, split, DialoguePair, TextPair, Vocabulary};
use crate::training::ModelConfig;

/// A labeled corpus split into train and dev parts, with a vocabulary
/// built from the training part only.
#[derive(Clone, Debug)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub train_text: Vec<TextPair>,
    pub dev_text: Vec<TextPair>,
    pub train: Vec<DialoguePair>,
    pub dev: Vec<DialoguePair>,
}

pub fn prepare_corpus(pairs: &[TextPair], config: &ModelConfig) -> Result<PreparedCorpus> {
    if let Some(i) = pairs.iter().position(|p| p.emotion.is_none()) {
        return Err(Error::Data(format!("pair {} has no emotion label", i + 1)));
    }
    let (train_text, dev_text) = split(pairs, config.train_ratio, config.seed)?;
    let vocab = Vocabulary::build(
        train_text
            .iter()
            .flat_map(|p| [p.source.as_slice(), p.target.as_slice()]),
        config.vocab_cap,
    )?;
    let train = encode_pairs(&train_text, &vocab);
    let dev = encode_pairs(&dev_text, &vocab);
    Ok(PreparedCorpus {
        vocab,
        train_text,
        dev_text,
        train,
        dev,
    })
}
