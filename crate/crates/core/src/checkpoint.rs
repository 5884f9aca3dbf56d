//! Checkpoint files: a UTF-8 text manifest followed by the parameters as
//! contiguous little-endian `f32`, in manifest order.
//!
//! ```text
//! emoseq-checkpoint
//! version 1
//! kind enc-att
//! tokenizer lower-ws-punct-v1
//! dims {"vocab":92,...}
//! config {...}
//! vocab ["<pad>",...]
//! tensors 14
//! tensor embedding 92x32 0 2944
//! ...
//! <empty line>
//! <payload>
//! ```
//!
//! Offsets and counts are in elements. Files are written to a temporary
//! sibling and renamed into place, so a checkpoint is never observed half
//! written.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierConfig, ClassifierDims, ClassifierModel};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::seq2seq::Seq2Seq;
use crate::tensor::Tensor;
use crate::text::{Vocabulary, TOKENIZER_ID};
use crate::training::ModelConfig;
use crate::variants::{ModelDims, ModelKind};

const MAGIC: &str = "emoseq-checkpoint";
pub const FORMAT_VERSION: u32 = 1;
const CLASSIFIER_KIND: &str = "classifier";

/// A trained dialogue model with everything needed to run it on text.
#[derive(Clone, Debug)]
pub struct DialogueModel {
    pub model: Seq2Seq<f32>,
    pub vocab: Vocabulary,
    pub config: ModelConfig,
    pub tokenizer: String,
}

impl DialogueModel {
    pub fn new(model: Seq2Seq<f32>, vocab: Vocabulary, config: ModelConfig) -> Self {
        Self {
            model,
            vocab,
            config,
            tokenizer: TOKENIZER_ID.to_string(),
        }
    }

    /// Short stable hash of kind, dimensions and config.
    pub fn config_digest(&self) -> String {
        let text = format!(
            "{}\n{}\n{}",
            self.model.kind,
            serde_json::to_string(&self.model.dims).unwrap_or_default(),
            serde_json::to_string(&self.config).unwrap_or_default()
        );
        short_digest(text.as_bytes())
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierArtifact {
    pub model: ClassifierModel<f32>,
    pub config: ClassifierConfig,
    pub tokenizer: String,
}

pub enum Checkpoint {
    Dialogue(DialogueModel),
    Classifier(ClassifierArtifact),
}

/// First 16 hex digits of SHA-256.
pub fn short_digest(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

pub fn tokenizer_digest(id: &str) -> String {
    short_digest(id.as_bytes())
}

struct Manifest<'a> {
    kind: String,
    tokenizer: &'a str,
    dims: String,
    config: String,
    vocab: &'a Vocabulary,
    params: &'a ParamStore<f32>,
}

fn write_checkpoint(path: &Path, m: Manifest<'_>) -> Result<()> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("version {FORMAT_VERSION}\n"));
    header.push_str(&format!("kind {}\n", m.kind));
    header.push_str(&format!("tokenizer {}\n", m.tokenizer));
    header.push_str(&format!("dims {}\n", m.dims));
    header.push_str(&format!("config {}\n", m.config));
    header.push_str(&format!("vocab {}\n", serde_json::to_string(m.vocab.tokens())?));
    header.push_str(&format!("tensors {}\n", m.params.len()));
    let mut offset = 0;
    for (name, t) in m.params.iter() {
        if name.contains(char::is_whitespace) {
            return Err(Error::contract(format!("tensor name {name:?} contains whitespace")));
        }
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!("tensor {name} {} {offset} {}\n", shape.join("x"), t.numel()));
        offset += t.numel();
    }
    header.push('\n');
    let mut bytes = header.into_bytes();
    bytes.reserve(offset * 4);
    for (_, t) in m.params.iter() {
        for x in t.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::contract(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_dialogue(path: &Path, m: &DialogueModel) -> Result<()> {
    write_checkpoint(
        path,
        Manifest {
            kind: m.model.kind.to_string(),
            tokenizer: &m.tokenizer,
            dims: serde_json::to_string(&m.model.dims)?,
            config: serde_json::to_string(&m.config)?,
            vocab: &m.vocab,
            params: &m.model.params,
        },
    )
}

pub fn save_classifier(path: &Path, c: &ClassifierArtifact) -> Result<()> {
    write_checkpoint(
        path,
        Manifest {
            kind: CLASSIFIER_KIND.to_string(),
            tokenizer: &c.tokenizer,
            dims: serde_json::to_string(&c.model.dims)?,
            config: serde_json::to_string(&c.config)?,
            vocab: &c.model.vocab,
            params: &c.model.params,
        },
    )
}

struct Header<'a> {
    lines: std::str::Lines<'a>,
}

impl<'a> Header<'a> {
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| Error::Integrity(format!("manifest ends before {key:?}")))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| Error::Integrity(format!("expected {key:?}, found {line:?}")))
    }

    fn json<T: DeserializeOwned>(&mut self, key: &str) -> Result<T> {
        let text = self.field(key)?;
        serde_json::from_str(text).map_err(|e| Error::Integrity(format!("{key}: {e}")))
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Integrity(format!("bad {what} {s:?}")))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Integrity("manifest is not terminated".into()))?;
    let text = std::str::from_utf8(&bytes[..end + 1])
        .map_err(|_| Error::Integrity("manifest is not UTF-8".into()))?;
    let payload = &bytes[end + 2..];
    let mut h = Header { lines: text.lines() };
    if h.lines.next() != Some(MAGIC) {
        return Err(Error::Integrity("not an emoseq checkpoint".into()));
    }
    let version: u32 = parse_num(h.field("version")?, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Integrity(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let kind = h.field("kind")?.to_string();
    let tokenizer = h.field("tokenizer")?.to_string();
    let dims_text = h.field("dims")?;
    let config_text = h.field("config")?;
    let tokens: Vec<String> = h.json("vocab")?;
    let vocab = Vocabulary::from_tokens(tokens).map_err(|e| Error::Integrity(e.to_string()))?;
    let count: usize = parse_num(h.field("tensors")?, "tensor count")?;
    let mut params = ParamStore::new();
    let mut expected_offset = 0usize;
    for _ in 0..count {
        let line = h.field("tensor")?;
        let parts: Vec<&str> = line.split(' ').collect();
        let [name, shape, offset, numel] = parts[..] else {
            return Err(Error::Integrity(format!("bad tensor line {line:?}")));
        };
        let shape: Vec<usize> = shape
            .split('x')
            .map(|d| parse_num(d, "extent"))
            .collect::<Result<_>>()?;
        let offset: usize = parse_num(offset, "offset")?;
        let numel: usize = parse_num(numel, "count")?;
        if offset != expected_offset || shape.iter().product::<usize>() != numel {
            return Err(Error::Integrity(format!("tensor {name} has an inconsistent entry")));
        }
        let start = offset * 4;
        let stop = start + numel * 4;
        let raw = payload.get(start..stop).ok_or_else(|| {
            Error::Integrity(format!(
                "payload has {} bytes, tensor {name} needs up to byte {stop}",
                payload.len()
            ))
        })?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| Error::Integrity(e.to_string()))?;
        params.insert(name, tensor);
        expected_offset += numel;
    }
    if h.lines.next().is_some() {
        return Err(Error::Integrity("unexpected lines after the tensor table".into()));
    }
    if payload.len() != expected_offset * 4 {
        return Err(Error::Integrity(format!(
            "payload has {} bytes, manifest describes {}",
            payload.len(),
            expected_offset * 4
        )));
    }
    let parse_json = |what: &str, text: &str| -> Result<serde_json::Value> {
        serde_json::from_str(text).map_err(|e| Error::Integrity(format!("{what}: {e}")))
    };
    if kind == CLASSIFIER_KIND {
        let dims: ClassifierDims = from_value(parse_json("dims", dims_text)?)?;
        let config: ClassifierConfig = from_value(parse_json("config", config_text)?)?;
        let model = ClassifierModel::from_params(dims, vocab, params)
            .map_err(|e| Error::Integrity(e.to_string()))?;
        return Ok(Checkpoint::Classifier(ClassifierArtifact {
            model,
            config,
            tokenizer,
        }));
    }
    let kind: ModelKind = kind
        .parse()
        .map_err(|_| Error::Integrity(format!("unknown model kind {kind:?}")))?;
    let dims: ModelDims = from_value(parse_json("dims", dims_text)?)?;
    let config: ModelConfig = from_value(parse_json("config", config_text)?)?;
    if dims.vocab != vocab.len() {
        return Err(Error::Integrity("vocabulary size disagrees with dims".into()));
    }
    let model = Seq2Seq::from_params(kind, dims, config.drop_probability(), params)
        .map_err(|e| Error::Integrity(e.to_string()))?;
    Ok(Checkpoint::Dialogue(DialogueModel {
        model,
        vocab,
        config,
        tokenizer,
    }))
}

fn from_value<T: DeserializeOwned + Serialize>(v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Integrity(e.to_string()))
}

pub fn load_dialogue(path: &Path) -> Result<DialogueModel> {
    match load(path)? {
        Checkpoint::Dialogue(m) => Ok(m),
        Checkpoint::Classifier(_) => Err(Error::contract(format!(
            "{} holds a classifier, not a dialogue model",
            path.display()
        ))),
    }
}

pub fn load_classifier(path: &Path) -> Result<ClassifierArtifact> {
    match load(path)? {
        Checkpoint::Classifier(c) => Ok(c),
        Checkpoint::Dialogue(_) => Err(Error::contract(format!(
            "{} holds a dialogue model, not a classifier",
            path.display()
        ))),
    }
}
