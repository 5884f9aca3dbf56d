//! Emotion-conditioned response generation: an LSTM encoder-decoder with
//! global attention, seven ways of injecting a target emotion, an emotion
//! classifier, and the training and evaluation loops around them.

pub mod autograd;
pub mod checkpoint;
pub mod classifier;
pub mod emotion;
pub mod nn;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod seq2seq;
pub mod tensor;
pub mod text;
pub mod training;
pub mod variants;

pub use emotion::Emotion;
pub use error::{Error, Result};
