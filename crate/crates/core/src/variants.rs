//! The seven emotion-injection mechanisms and their parameter cost.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LstmCell;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum VariantTag {
    EncBef,
    EncAft,
    DecRep,
    DecStart,
    DecTrans,
    DecProj,
    EncAtt,
}

impl VariantTag {
    pub const ALL: [VariantTag; 7] = [
        VariantTag::EncBef,
        VariantTag::EncAft,
        VariantTag::DecRep,
        VariantTag::DecStart,
        VariantTag::DecTrans,
        VariantTag::DecProj,
        VariantTag::EncAtt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantTag::EncBef => "enc-bef",
            VariantTag::EncAft => "enc-aft",
            VariantTag::DecRep => "dec-rep",
            VariantTag::DecStart => "dec-start",
            VariantTag::DecTrans => "dec-trans",
            VariantTag::DecProj => "dec-proj",
            VariantTag::EncAtt => "enc-att",
        }
    }

    /// Where this variant reads the instructed emotion.
    pub fn site(self) -> InjectionSite {
        match self {
            VariantTag::EncBef | VariantTag::EncAft => InjectionSite::SourceToken,
            VariantTag::DecStart => InjectionSite::StartToken,
            VariantTag::DecRep => InjectionSite::RecurrentVector,
            VariantTag::DecTrans => InjectionSite::OutputTransform,
            VariantTag::DecProj => InjectionSite::Projection,
            VariantTag::EncAtt => InjectionSite::AttentionMatrix,
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

impl From<VariantTag> for String {
    fn from(v: VariantTag) -> String {
        v.name().to_string()
    }
}

impl TryFrom<String> for VariantTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// The plain attention seq2seq model or one of its emotion variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelKind {
    Baseline,
    Variant(VariantTag),
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Baseline,
        ModelKind::Variant(VariantTag::EncBef),
        ModelKind::Variant(VariantTag::EncAft),
        ModelKind::Variant(VariantTag::DecRep),
        ModelKind::Variant(VariantTag::DecStart),
        ModelKind::Variant(VariantTag::DecTrans),
        ModelKind::Variant(VariantTag::DecProj),
        ModelKind::Variant(VariantTag::EncAtt),
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Variant(v) => v.name(),
        }
    }

    pub fn tag(self) -> Option<VariantTag> {
        match self {
            ModelKind::Baseline => None,
            ModelKind::Variant(v) => Some(v),
        }
    }

    pub fn is(self, tag: VariantTag) -> bool {
        self.tag() == Some(tag)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "baseline" {
            Ok(ModelKind::Baseline)
        } else {
            s.parse().map(ModelKind::Variant)
        }
    }
}

impl From<ModelKind> for String {
    fn from(k: ModelKind) -> String {
        k.name().to_string()
    }
}

impl TryFrom<String> for ModelKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InjectionSite {
    SourceToken,
    StartToken,
    RecurrentVector,
    OutputTransform,
    Projection,
    AttentionMatrix,
}

impl InjectionSite {
    const ALL: [InjectionSite; 6] = [
        InjectionSite::SourceToken,
        InjectionSite::StartToken,
        InjectionSite::RecurrentVector,
        InjectionSite::OutputTransform,
        InjectionSite::Projection,
        InjectionSite::AttentionMatrix,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

thread_local! {
    static EMOTION_READS: Cell<[usize; 6]> = const { Cell::new([0; 6]) };
}

/// Counts emotion reads per injection site on the current thread. Model
/// code reads a batch's emotions only through [`record_read`], so a probe
/// shows which mechanism consumed them.
pub struct InjectionProbe;

impl InjectionProbe {
    pub fn reset() {
        EMOTION_READS.with(|c| c.set([0; 6]));
    }

    pub fn reads() -> Vec<(InjectionSite, usize)> {
        let counts = EMOTION_READS.with(Cell::get);
        InjectionSite::ALL
            .into_iter()
            .map(|s| (s, counts[s.slot()]))
            .filter(|(_, n)| *n > 0)
            .collect()
    }
}

pub(crate) fn record_read(site: InjectionSite) {
    EMOTION_READS.with(|c| {
        let mut v = c.get();
        v[site.slot()] += 1;
        c.set(v);
    });
}

/// Sizes that determine every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub emotions: usize,
    pub max_len: usize,
}

pub(crate) fn encoder_cell(dims: &ModelDims) -> LstmCell {
    LstmCell::new("encoder", &[("x", dims.embed), ("h", dims.hidden)], dims.hidden)
}

pub(crate) fn decoder_cell(kind: ModelKind, dims: &ModelDims) -> LstmCell {
    if kind.is(VariantTag::DecRep) {
        LstmCell::new(
            "decoder",
            &[("x", dims.embed), ("h", dims.hidden), ("v", dims.hidden)],
            dims.hidden,
        )
    } else {
        LstmCell::new("decoder", &[("x", dims.embed), ("h", dims.hidden)], dims.hidden)
    }
}

pub const EMBEDDING: &str = "embedding";
pub const ATTENTION: &str = "attention.w";
pub const ATTENTION_EMOTION: &str = "attention.w_emotion";
pub const PROJ_W: &str = "proj.w";
pub const PROJ_B: &str = "proj.b";
pub const PROJ_EMOTION_W: &str = "proj_emotion.w";
pub const PROJ_EMOTION_B: &str = "proj_emotion.b";
pub const TRANS_EMOTION: &str = "trans_emotion";
pub const EMOTION_VECTORS: &str = "emotion.vectors";

/// Every parameter tensor a model of this kind allocates, in order.
pub fn layout(kind: ModelKind, dims: &ModelDims) -> Vec<(String, Vec<usize>)> {
    let (v, d, s) = (dims.vocab, dims.hidden, dims.emotions);
    let mut out = vec![(EMBEDDING.to_string(), vec![v, dims.embed])];
    out.extend(encoder_cell(dims).shapes());
    out.extend(decoder_cell(kind, dims).shapes());
    if kind.is(VariantTag::DecRep) {
        out.push((EMOTION_VECTORS.into(), vec![s, d]));
    }
    if kind.is(VariantTag::EncAtt) {
        out.push((ATTENTION_EMOTION.into(), vec![s, d, d]));
    } else {
        out.push((ATTENTION.into(), vec![d, d]));
    }
    if kind.is(VariantTag::DecTrans) {
        out.push((TRANS_EMOTION.into(), vec![s, d, d]));
    }
    if kind.is(VariantTag::DecProj) {
        out.push((PROJ_EMOTION_W.into(), vec![s, d, v]));
        out.push((PROJ_EMOTION_B.into(), vec![s, v]));
    } else {
        out.push((PROJ_W.into(), vec![d, v]));
        out.push((PROJ_B.into(), vec![v]));
    }
    out
}

pub fn layout_numel(kind: ModelKind, dims: &ModelDims) -> usize {
    layout(kind, dims)
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountMode {
    /// The closed-form extra-parameter formulas of the published cost table.
    Paper,
    /// Allocated parameters of the variant minus those of the baseline.
    Actual,
}

impl FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(CountMode::Paper),
            "actual" => Ok(CountMode::Actual),
            _ => Err(Error::contract(format!("unknown count mode {s:?}"))),
        }
    }
}

/// Dimensions used by the parameter accountant: `D`, `|V|`, source length
/// `m` and emotion count `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostDims {
    pub hidden: usize,
    pub vocab: usize,
    pub src_len: usize,
    pub emotions: usize,
}

impl CostDims {
    pub const PAPER: CostDims = CostDims {
        hidden: 600,
        vocab: 25_000,
        src_len: 30,
        emotions: 10,
    };
}

/// Additional parameters a variant needs over the baseline.
pub fn count_extra_params(tag: VariantTag, dims: CostDims, mode: CountMode) -> i64 {
    let CostDims {
        hidden: d,
        vocab: v,
        src_len: m,
        emotions: s,
    } = dims;
    match mode {
        CountMode::Paper => (match tag {
            VariantTag::EncBef | VariantTag::EncAft | VariantTag::DecStart => 0,
            VariantTag::DecRep => d * s,
            VariantTag::DecTrans => d * d * s,
            VariantTag::DecProj => v * d * s,
            VariantTag::EncAtt => m * d * s,
        }) as i64,
        CountMode::Actual => {
            let model_dims = ModelDims {
                vocab: v,
                embed: 300,
                hidden: d,
                emotions: s,
                max_len: m,
            };
            layout_numel(ModelKind::Variant(tag), &model_dims) as i64
                - layout_numel(ModelKind::Baseline, &model_dims) as i64
        }
    }
}
