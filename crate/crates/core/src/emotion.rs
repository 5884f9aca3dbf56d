use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The nine classifier emotions plus the thresholded `NonEmotion` label.
/// Declaration order is the fixed id order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Joy,
    Sadness,
    Surprise,
    Love,
    Thankfulness,
    Guilt,
    NonEmotion,
}

/// Number of conditioning emotions, `NonEmotion` included.
pub const NUM_EMOTIONS: usize = 10;
/// Number of emotions the classifier predicts and evaluation scores.
pub const NUM_CLASSES: usize = 9;

impl Emotion {
    pub const ALL: [Emotion; NUM_EMOTIONS] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Love,
        Emotion::Thankfulness,
        Emotion::Guilt,
        Emotion::NonEmotion,
    ];

    pub const CLASSES: [Emotion; NUM_CLASSES] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Love,
        Emotion::Thankfulness,
        Emotion::Guilt,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Emotion> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Love => "love",
            Emotion::Thankfulness => "thankfulness",
            Emotion::Guilt => "guilt",
            Emotion::NonEmotion => "non-emotion",
        }
    }

    /// Vocabulary token that stands for this emotion.
    pub fn token(self) -> String {
        format!("<{}>", self.name())
    }

    pub fn is_class(self) -> bool {
        self != Emotion::NonEmotion
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownEmotion(s.to_string()))
    }
}

impl From<Emotion> for String {
    fn from(e: Emotion) -> String {
        e.name().to_string()
    }
}

impl TryFrom<String> for Emotion {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}
