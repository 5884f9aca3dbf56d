//! Tokenization, vocabularies, embeddings and dialogue corpora.

mod corpus;
mod embeddings;
mod synth;
mod vocab;

pub use corpus::{encode_pairs, ingest_pairs, split, DialoguePair, IngestOptions, IngestReport, TextPair};
pub use embeddings::{load_embeddings, EmbeddingTable};
pub use synth::{synth_corpus, LexicalOracle, SynthConfig, SynthCorpus, MARKERS};
pub use vocab::{Vocabulary, BOS, EOS, NUM_SPECIAL, PAD, UNK};

/// Maximum number of content tokens kept per utterance.
pub const PADDING_LENGTH: usize = 30;

/// Identifier stored alongside checkpoints so that models and classifiers
/// trained under different tokenization can be told apart.
pub const TOKENIZER_ID: &str = "lower-ws-punct-v1";

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2026}' | '\u{2013}' | '\u{2014}' | '¿' | '¡'
        )
}

/// Lowercases, splits on whitespace and isolates each punctuation character.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for c in word.chars() {
            if is_punct(c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.extend(c.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("You scared me today at the hotel"),
            ["you", "scared", "me", "today", "at", "the", "hotel"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t ").is_empty());
        assert_eq!(tokenize("don't stop."), ["don", "'", "t", "stop", "."]);
        assert_eq!(tokenize("Wow!!"), ["wow", "!", "!"]);
    }
}
