//! Template-grammar dialogue corpus whose targets carry one emotion marker
//! word each, plus the lexical classifier that reads those markers back.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::emotion::{Emotion, NUM_CLASSES};
use crate::text::TextPair;

/// Three marker words per classifier emotion, in emotion order. The
/// lexicons are disjoint from each other and from the template words.
pub const MARKERS: [[&str; 3]; NUM_CLASSES] = [
    ["furious", "angry", "outraged"],
    ["disgusted", "gross", "revolting"],
    ["scared", "afraid", "terrified"],
    ["happy", "delighted", "cheerful"],
    ["sad", "miserable", "heartbroken"],
    ["surprised", "amazed", "astonished"],
    ["fond", "smitten", "loving"],
    ["grateful", "thankful", "appreciative"],
    ["sorry", "guilty", "ashamed"],
];

const SUBJECTS: [&str; 8] = [
    "you",
    "my friend",
    "the teacher",
    "your brother",
    "she",
    "he",
    "they",
    "my neighbor",
];
const VERBS: [&str; 8] = [
    "saw", "found", "met", "called", "visited", "left", "took", "painted",
];
const OBJECTS: [&str; 10] = [
    "the dog",
    "the car",
    "the hotel",
    "the garden",
    "the letter",
    "the house",
    "the river",
    "the market",
    "the cake",
    "the train",
];
const PLACES: [&str; 6] = ["park", "station", "school", "bridge", "church", "office"];
const TIMES: [&str; 6] = [
    "today",
    "yesterday",
    "last night",
    "this morning",
    "at noon",
    "on monday",
];

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub seed: u64,
    /// Fraction of targets generated without any marker word. Such pairs
    /// are labeled `NonEmotion`.
    pub unmarked_fraction: f64,
}

impl SynthConfig {
    pub fn new(n_pairs: usize, seed: u64) -> Self {
        Self {
            n_pairs,
            seed,
            unmarked_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub pairs: Vec<TextPair>,
    pub oracle: LexicalOracle,
}

pub fn synth_corpus(config: SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pairs = (0..config.n_pairs)
        .map(|_| {
            let subj = *SUBJECTS.choose(&mut rng).unwrap();
            let verb = *VERBS.choose(&mut rng).unwrap();
            let obj = *OBJECTS.choose(&mut rng).unwrap();
            let place = *PLACES.choose(&mut rng).unwrap();
            let time = *TIMES.choose(&mut rng).unwrap();
            let source = format!("{subj} {verb} {obj} near the {place} {time}");
            let unmarked = rng.gen_bool(config.unmarked_fraction.clamp(0.0, 1.0));
            let (emotion, word) = if unmarked {
                (Emotion::NonEmotion, "okay")
            } else {
                let e = Emotion::CLASSES[rng.gen_range(0..NUM_CLASSES)];
                (e, *MARKERS[e.index()].choose(&mut rng).unwrap())
            };
            let target = match rng.gen_range(0..4) {
                0 => format!("i am so {word} about {obj}"),
                1 => format!("{obj} ? i feel {word} now"),
                2 => format!("honestly , that leaves me {word} {time}"),
                _ => format!("when {subj} {verb} {obj} i was {word}"),
            };
            TextPair::from_text(&source, &target, Some(emotion))
        })
        .collect();
    SynthCorpus {
        pairs,
        oracle: LexicalOracle::new(),
    }
}

/// Maps marker words to their emotion; scores text by marker counts.
#[derive(Clone, Debug)]
pub struct LexicalOracle {
    lexicon: HashMap<&'static str, Emotion>,
}

impl Default for LexicalOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl LexicalOracle {
    pub fn new() -> Self {
        let lexicon = Emotion::CLASSES
            .iter()
            .flat_map(|&e| MARKERS[e.index()].iter().map(move |&w| (w, e)))
            .collect();
        Self { lexicon }
    }

    pub fn marker(&self, token: &str) -> Option<Emotion> {
        self.lexicon.get(token).copied()
    }

    /// Probability mass proportional to marker counts; uniform when the
    /// text holds no marker.
    pub fn probabilities<S: AsRef<str>>(&self, tokens: &[S]) -> [f64; NUM_CLASSES] {
        let mut counts = [0usize; NUM_CLASSES];
        for t in tokens {
            if let Some(e) = self.marker(t.as_ref()) {
                counts[e.index()] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return [1.0 / NUM_CLASSES as f64; NUM_CLASSES];
        }
        counts.map(|c| c as f64 / total as f64)
    }

    /// The single emotion whose marker appears, if exactly one kind does.
    pub fn label<S: AsRef<str>>(&self, tokens: &[S]) -> Option<Emotion> {
        let p = self.probabilities(tokens);
        p.iter()
            .position(|&x| x == 1.0)
            .and_then(Emotion::from_index)
    }
}
