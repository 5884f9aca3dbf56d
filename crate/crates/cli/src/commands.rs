//! Subcommands of the `emoseq` binary.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, missing
//! required settings), 2 when the data or a file is at fault.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use emoseq_core::checkpoint::{
    load_classifier, load_dialogue, save_classifier, save_dialogue, ClassifierArtifact,
    DialogueModel,
};
use emoseq_core::classifier::{
    label_corpus, train_classifier, ClassifierConfig, EmotionScorer, LabeledText, DEFAULT_THRESHOLD,
};
use emoseq_core::evaluation::{confusion_tsv, evaluate, export_heatmap, trace};
use emoseq_core::pipeline::prepare_corpus;
use emoseq_core::text::{
    ingest_pairs, split, synth_corpus, tokenize, IngestOptions, LexicalOracle, SynthConfig,
    TextPair, PADDING_LENGTH, TOKENIZER_ID,
};
use emoseq_core::training::{dataset_loss, train_dialogue, ModelConfig, Profile};
use emoseq_core::variants::{count_extra_params, CostDims, CountMode, ModelKind, VariantTag};
use emoseq_core::Emotion;
use log::info;
use serde_json::json;

use crate::service::{self, ServiceState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Environment variable that takes precedence over `serve --port`.
pub const PORT_ENV: &str = "EMOSEQ_PORT";

#[derive(Debug, Parser)]
#[command(
    name = "emoseq",
    version,
    about = "Emotion-conditioned response generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the emotion classifier on `text TAB emotion` lines.
    TrainClassifier(TrainClassifierArgs),
    /// Label dialogue pairs with the emotion of their response.
    Label(LabelArgs),
    /// Train a dialogue model on labeled pairs.
    Train(TrainArgs),
    /// Estimate how often responses express the instructed emotion.
    Eval(EvalArgs),
    /// Print the extra-parameter accounting of each variant.
    Params(ParamsArgs),
    /// Write a synthetic labeled dialogue corpus.
    Synth(SynthArgs),
    /// Run the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of responses generated without an emotion marker.
    #[arg(long, default_value_t = 0.0)]
    unmarked: f64,
    /// Also write the responses as `text TAB emotion` for classifier training.
    #[arg(long)]
    sentences: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainClassifierArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the held-out metrics as JSON.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(long)]
    data: PathBuf,
    /// `oracle` or a classifier checkpoint.
    #[arg(long, default_value = "oracle")]
    classifier: ClassifierSource,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    variant: ModelKind,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    #[arg(long, default_value = "synth.tsv")]
    data: PathBuf,
    /// Defaults to `<variant>.ckpt`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Write the held-out pairs here, ready for `eval --test`.
    #[arg(long)]
    dev_out: Option<PathBuf>,
    /// Write the per-step losses as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "oracle")]
    classifier: ClassifierSource,
    /// Pairs whose sources are used as test inputs.
    #[arg(long)]
    test: PathBuf,
    /// Evaluate a seeded sample of at most this many sources.
    #[arg(long)]
    max_sources: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Write one attention heatmap per emotion for the first test source.
    #[arg(long)]
    heatmap_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    /// `D=..,V=..,m=..,S=..`
    #[arg(long, default_value = "D=600,V=25000,m=30,S=10", value_parser = parse_cost_dims)]
    dims: CostDims,
    /// `paper`, `actual` or `both`.
    #[arg(long, default_value = "both")]
    mode: ModeChoice,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Dialogue checkpoint; repeat for several variants. The first is the default.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long, default_value = "oracle")]
    classifier: ClassifierSource,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClassifierSource {
    Oracle,
    Checkpoint(PathBuf),
}

impl FromStr for ClassifierSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "oracle" {
            ClassifierSource::Oracle
        } else {
            ClassifierSource::Checkpoint(PathBuf::from(s))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeChoice {
    One(CountMode),
    Both,
}

impl FromStr for ModeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "both" {
            return Ok(ModeChoice::Both);
        }
        s.parse()
            .map(ModeChoice::One)
            .map_err(|_| format!("expected paper, actual or both, got {s:?}"))
    }
}

pub fn parse_cost_dims(s: &str) -> Result<CostDims, String> {
    let mut dims = CostDims::PAPER;
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=VALUE, got {part:?}"))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| format!("{key} needs a non-negative integer, got {value:?}"))?;
        match key.trim() {
            "D" => dims.hidden = value,
            "V" => dims.vocab = value,
            "m" => dims.src_len = value,
            "S" => dims.emotions = value,
            other => return Err(format!("unknown dimension {other:?} (use D, V, m, S)")),
        }
    }
    Ok(dims)
}

/// The accounting table printed by `params`.
pub fn params_table(dims: CostDims, mode: ModeChoice) -> String {
    let modes: Vec<CountMode> = match mode {
        ModeChoice::One(m) => vec![m],
        ModeChoice::Both => vec![CountMode::Paper, CountMode::Actual],
    };
    let mut out = format!(
        "# extra parameters over the baseline at D={} V={} m={} S={}\n",
        dims.hidden, dims.vocab, dims.src_len, dims.emotions
    );
    let _ = write!(out, "{:<10}", "variant");
    for m in &modes {
        let _ = write!(out, " {:>14}", mode_name(*m));
    }
    out.push('\n');
    for tag in VariantTag::ALL {
        let _ = write!(out, "{:<10}", tag.to_string());
        for m in &modes {
            let _ = write!(out, " {:>14}", count_extra_params(tag, dims, *m));
        }
        out.push('\n');
    }
    out
}

fn mode_name(m: CountMode) -> &'static str {
    match m {
        CountMode::Paper => "paper",
        CountMode::Actual => "actual",
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl From<emoseq_core::Error> for CliError {
    fn from(e: emoseq_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Prefixes file errors that do not already carry the path.
fn at(path: &Path) -> impl Fn(emoseq_core::Error) -> CliError + '_ {
    move |e| match e {
        emoseq_core::Error::Format { .. } => CliError::Data(e.to_string()),
        _ => CliError::Data(format!("{}: {e}", path.display())),
    }
}

/// Parses `args` (program name first) and runs the subcommand, returning
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::TrainClassifier(a) => train_classifier_cmd(a),
        Command::Label(a) => label_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Params(a) => {
            emit(&params_table(a.dims, a.mode));
            Ok(())
        }
        Command::Synth(a) => synth_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            EXIT_DATA
        }
    }
}

// A closed pipe (`emoseq eval ... | head`) is not an error worth a panic.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit_line(text: &str) {
    emit(text);
    emit("\n");
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> CliResult {
    let mut text = String::new();
    for line in lines {
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn synth_cmd(a: SynthArgs) -> CliResult {
    if !(0.0..=1.0).contains(&a.unmarked) {
        return Err(CliError::Usage(format!(
            "--unmarked {} is outside [0, 1]",
            a.unmarked
        )));
    }
    let corpus = synth_corpus(SynthConfig {
        unmarked_fraction: a.unmarked,
        ..SynthConfig::new(a.n, a.seed)
    });
    write_lines(&a.out, corpus.pairs.iter().map(TextPair::to_tsv))?;
    if let Some(path) = &a.sentences {
        write_lines(
            path,
            corpus.pairs.iter().map(|p| {
                let label = p.emotion.unwrap_or(Emotion::NonEmotion);
                format!("{}\t{}", p.target.join(" "), label)
            }),
        )?;
    }
    emit_line(&format!(
        "wrote {} pairs to {}",
        corpus.pairs.len(),
        a.out.display()
    ));
    Ok(())
}

/// Reads `text TAB emotion` lines. Three-column pair files are accepted
/// too; their response column is used as the text.
pub fn read_labeled_texts(path: &Path) -> Result<Vec<LabeledText>, String> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (text, label) = match fields[..] {
            [text, label] => (text, label),
            [_, target, label] => (target, label),
            _ => {
                return Err(format!(
                    "{}:{}: expected `text TAB emotion`",
                    path.display(),
                    i + 1
                ))
            }
        };
        let emotion: Emotion = label.trim().parse().map_err(|_| {
            format!(
                "{}:{}: unknown emotion {:?}",
                path.display(),
                i + 1,
                label.trim()
            )
        })?;
        out.push(LabeledText {
            tokens: tokenize(text),
            emotion,
        });
    }
    Ok(out)
}

fn train_classifier_cmd(a: TrainClassifierArgs) -> CliResult {
    let all = read_labeled_texts(&a.data).map_err(CliError::Data)?;
    let total = all.len();
    let data: Vec<LabeledText> = all
        .into_iter()
        .filter(|d| d.emotion.is_class() && !d.tokens.is_empty())
        .collect();
    if data.len() < total {
        info!(
            "skipped {} non-emotion or empty examples",
            total - data.len()
        );
    }
    let mut config = match a.profile {
        Profile::Desk => ClassifierConfig::desk(),
        Profile::Paper => ClassifierConfig::default(),
    };
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let (model, metrics) = train_classifier(&data, &config)?;
    save_classifier(
        &a.out,
        &ClassifierArtifact {
            model,
            config,
            tokenizer: TOKENIZER_ID.to_string(),
        },
    )?;
    let text = serde_json::to_string_pretty(&metrics)?;
    if let Some(path) = &a.metrics {
        fs::write(path, &text)?;
    }
    emit_line(&text);
    Ok(())
}

fn load_scorer(source: &ClassifierSource) -> CliResult<(Arc<dyn EmotionScorer>, String)> {
    match source {
        ClassifierSource::Oracle => Ok((Arc::new(LexicalOracle::new()), TOKENIZER_ID.to_string())),
        ClassifierSource::Checkpoint(path) => {
            let c = load_classifier(path).map_err(at(path))?;
            Ok((Arc::new(c.model), c.tokenizer))
        }
    }
}

fn label_cmd(a: LabelArgs) -> CliResult {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Usage(format!(
            "--threshold {} is outside [0, 1]",
            a.threshold
        )));
    }
    let (scorer, tokenizer) = load_scorer(&a.classifier)?;
    if tokenizer != TOKENIZER_ID {
        return Err(CliError::Data(format!(
            "classifier tokenizer {tokenizer:?} differs from {TOKENIZER_ID:?}"
        )));
    }
    let report = ingest_pairs(
        &a.data,
        IngestOptions {
            min_words: 1,
            max_len: PADDING_LENGTH,
        },
    )
    .map_err(at(&a.data))?;
    let (labeled, stats) = label_corpus(scorer.as_ref(), &report.pairs, a.threshold)?;
    write_lines(&a.out, labeled.iter().map(TextPair::to_tsv))?;
    emit_line(&serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let mut config = ModelConfig::for_profile(a.profile);
    if let Some(s) = a.steps {
        config.max_steps = Some(s);
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(lr) = a.lr {
        config.lr = lr;
    }
    if config.max_steps.is_none() {
        return Err(CliError::Usage(format!(
            "the {} profile has no step budget; pass --steps",
            a.profile
        )));
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = ingest_pairs(
        &a.data,
        IngestOptions {
            min_words: config.min_words,
            max_len: config.padding,
        },
    )
    .map_err(at(&a.data))?;
    info!(
        "read {} pairs ({} duplicates, {} too short, {} malformed)",
        report.pairs.len(),
        report.duplicates,
        report.too_short,
        report.malformed
    );
    let corpus = prepare_corpus(&report.pairs, &config)?;
    let dims = config.dims(corpus.vocab.len());
    let (model, train_report) =
        train_dialogue(a.variant, &corpus.train, &corpus.dev, dims, &config)?;
    let dev_loss = dataset_loss(&model, &corpus.dev, config.batch_size)?;
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}.ckpt", a.variant)));
    save_dialogue(&out, &DialogueModel::new(model, corpus.vocab, config))?;
    if let Some(path) = &a.dev_out {
        write_lines(path, corpus.dev_text.iter().map(TextPair::to_tsv))?;
    }
    if let Some(path) = &a.report {
        fs::write(path, serde_json::to_string(&train_report)?)?;
    }
    let summary = json!({
        "variant": a.variant.to_string(),
        "steps": train_report.steps,
        "final_loss": train_report.tail_mean(50),
        "dev_loss": dev_loss,
        "checkpoint": out.display().to_string(),
    });
    emit_line(&serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let model = load_dialogue(&a.model).map_err(at(&a.model))?;
    let (scorer, tokenizer) = load_scorer(&a.classifier)?;
    let report = ingest_pairs(
        &a.test,
        IngestOptions {
            min_words: 1,
            max_len: model.model.dims.max_len,
        },
    )
    .map_err(at(&a.test))?;
    let mut sources: Vec<Vec<String>> = report.pairs.into_iter().map(|p| p.source).collect();
    if let Some(n) = a.max_sources {
        if n == 0 {
            return Err(CliError::Usage("--max-sources must be positive".into()));
        }
        if n < sources.len() {
            let ratio = n as f64 / sources.len() as f64;
            sources = split(&sources, ratio, a.seed)?.0;
            sources.truncate(n);
        }
    }
    let eval = evaluate(&model, scorer.as_ref(), &tokenizer, &sources, a.seed)?;
    let text = serde_json::to_string_pretty(&eval)?;
    if let Some(path) = &a.out {
        fs::write(path, &text)?;
    }
    if let Some(path) = &a.confusion {
        fs::write(path, confusion_tsv(&eval))?;
    }
    if let Some(dir) = &a.heatmap_dir {
        fs::create_dir_all(dir)?;
        for e in Emotion::CLASSES {
            let t = trace(&model, &sources[0], e)?;
            fs::write(dir.join(format!("heatmap-{e}.tsv")), export_heatmap(&t))?;
        }
    }
    emit_line(&text);
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> CliResult {
    let port = match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u16>()
            .map_err(|_| CliError::Usage(format!("{PORT_ENV}={v:?} is not a port number")))?,
        Err(_) => a.port,
    };
    let models = a
        .models
        .iter()
        .map(|p| load_dialogue(p).map_err(at(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let (scorer, tokenizer) = load_scorer(&a.classifier)?;
    let state = ServiceState::new(models, scorer, &tokenizer).map_err(CliError::Data)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(service::serve(
        SocketAddr::new(a.host, port),
        Arc::new(state),
    ))?;
    Ok(())
}
