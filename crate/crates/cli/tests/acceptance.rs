//! Acceptance suite. Runs every criterion in turn, prints one
//! `PASS`/`FAIL` line per criterion and exits non-zero if any failed.

use std::process::{Command, ExitCode, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use emoseq_cli::commands::{params_table, ModeChoice};
use emoseq_cli::service::{serve_on, ChatResponse, ServiceState};
use emoseq_core::autograd::{concat, Tape, Var};
use emoseq_core::checkpoint::{load_dialogue, save_dialogue, DialogueModel};
use emoseq_core::classifier::{
    apply_threshold, label_corpus, train_classifier, ClassifierConfig, EmotionScorer, LabeledText,
    DEFAULT_THRESHOLD,
};
use emoseq_core::emotion::NUM_CLASSES;
use emoseq_core::evaluation::evaluate;
use emoseq_core::gradcheck::{check_op, check_seq2seq};
use emoseq_core::nn::LstmCell;
use emoseq_core::params::{uniform, ParamStore};
use emoseq_core::pipeline::prepare_corpus;
use emoseq_core::seq2seq::{apply_enc_token, Batch, Seq2Seq, TokenPosition};
use emoseq_core::tensor::{Scalar, Tensor};
use emoseq_core::text::{
    encode_pairs, synth_corpus, LexicalOracle, SynthConfig, Vocabulary, NUM_SPECIAL, TOKENIZER_ID,
};
use emoseq_core::training::{train_dialogue, ModelConfig};
use emoseq_core::variants::{
    count_extra_params, CostDims, CountMode, ModelDims, ModelKind, VariantTag,
};
use emoseq_core::Emotion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "parameter accounting, paper mode exact",
            budget: Duration::from_secs(1),
            run: table3,
        },
        Criterion {
            name: "gradient suite vs central differences",
            budget: Duration::from_secs(120),
            run: gradient_suite,
        },
        Criterion {
            name: "reduction identities",
            budget: Duration::from_secs(30),
            run: reduction_identities,
        },
        Criterion {
            name: "overfit 32 pairs",
            budget: Duration::from_secs(300),
            run: overfit,
        },
        Criterion {
            name: "controllability at desk scale",
            budget: Duration::from_secs(1800),
            run: controllability,
        },
        Criterion {
            name: "threshold behavior",
            budget: Duration::from_secs(10),
            run: threshold,
        },
        Criterion {
            name: "checkpoint round trip",
            budget: Duration::from_secs(30),
            run: checkpoint_round_trip,
        },
        Criterion {
            name: "service contract",
            budget: Duration::from_secs(10),
            run: service_contract,
        },
    ];
    // Like libtest, free arguments select criteria by substring.
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let selected: Vec<&Criterion> = criteria
        .iter()
        .filter(|c| filters.is_empty() || filters.iter().any(|f| c.name.contains(f.as_str())))
        .collect();
    let mut failed = 0;
    for c in &selected {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run)
            .unwrap_or_else(|_| Err("panicked".to_string()))
            .and_then(|detail| {
                let took = start.elapsed();
                if took > c.budget {
                    Err(format!("{detail}; took {took:.1?}, budget {:?}", c.budget))
                } else {
                    Ok(detail)
                }
            });
        let took = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {} ({took:.1}s): {detail}", c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {} ({took:.1}s): {detail}", c.name);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        selected.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn table3() -> Outcome {
    const EXPECTED: [i64; 7] = [0, 0, 6_000, 0, 3_600_000, 150_000_000, 180_000];
    let direct: Vec<i64> = VariantTag::ALL
        .iter()
        .map(|&t| count_extra_params(t, CostDims::PAPER, CountMode::Paper))
        .collect();
    ensure(direct == EXPECTED, || format!("accountant gave {direct:?}"))?;

    let printed = params_table(CostDims::PAPER, ModeChoice::One(CountMode::Paper));
    let out = Command::new(env!("CARGO_BIN_EXE_emoseq"))
        .args([
            "params",
            "--dims",
            "D=600,V=25000,m=30,S=10",
            "--mode",
            "paper",
        ])
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.success() && stdout == printed, || {
        format!("binary printed {stdout:?}")
    })?;
    let rows: Vec<(String, i64)> = stdout
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("variant"))
        .filter_map(|l| {
            let mut cells = l.split_whitespace();
            Some((cells.next()?.to_string(), cells.next()?.parse().ok()?))
        })
        .collect();
    let names: Vec<String> = VariantTag::ALL.iter().map(|t| t.to_string()).collect();
    let expected: Vec<(String, i64)> = names.into_iter().zip(EXPECTED).collect();
    ensure(rows == expected, || format!("table rows {rows:?}"))?;
    Ok(rows
        .iter()
        .map(|(n, v)| format!("{n}={v}"))
        .collect::<Vec<_>>()
        .join(" "))
}

const GRAD_TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

struct OpSuite {
    worst: f64,
    worst_name: String,
    count: usize,
}

impl OpSuite {
    fn check<F>(&mut self, name: &str, inputs: &[Tensor<f64>], op: F) -> Result<(), String>
    where
        F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> emoseq_core::Result<Var<'t, f64>>,
    {
        let err = check_op(inputs, 1e-3, op).map_err(|e| format!("{name}: {e}"))?;
        self.count += 1;
        if err > self.worst {
            self.worst = err;
            self.worst_name = name.to_string();
        }
        ensure(err < GRAD_TOL, || format!("{name}: relative error {err:e}"))
    }
}

fn gradient_suite() -> Outcome {
    let mut ops = OpSuite {
        worst: 0.0,
        worst_name: String::new(),
        count: 0,
    };
    let a = rand_tensor(&[3, 4], 1);
    let b = rand_tensor(&[3, 4], 2);
    ops.check("matmul", &[a.clone(), rand_tensor(&[4, 5], 3)], |_, v| {
        v[0].matmul(v[1])
    })?;
    ops.check(
        "bmm",
        &[rand_tensor(&[2, 3, 4], 4), rand_tensor(&[2, 4, 2], 5)],
        |_, v| v[0].bmm(v[1]),
    )?;
    ops.check("add", &[a.clone(), b.clone()], |_, v| v[0].add(v[1]))?;
    ops.check(
        "add broadcast",
        &[a.clone(), rand_tensor(&[4], 6)],
        |_, v| v[0].add(v[1]),
    )?;
    ops.check("mul", &[a.clone(), b.clone()], |_, v| v[0].mul(v[1]))?;
    ops.check("scale", std::slice::from_ref(&a), |_, v| Ok(v[0].scale(0.7)))?;
    ops.check("mask_mul", std::slice::from_ref(&a), |_, v| {
        v[0].mask_mul((0..12).map(|i| (i % 2) as f64 * 2.0).collect())
    })?;
    ops.check("tanh", std::slice::from_ref(&a), |_, v| Ok(v[0].tanh()))?;
    ops.check("sigmoid", std::slice::from_ref(&a), |_, v| Ok(v[0].sigmoid()))?;
    ops.check("narrow", &[rand_tensor(&[2, 3, 4], 7)], |_, v| {
        v[0].narrow(1, 2)
    })?;
    ops.check("reshape", &[rand_tensor(&[2, 3, 4], 8)], |_, v| {
        v[0].reshape(&[4, 6])
    })?;
    ops.check(
        "concat",
        &[rand_tensor(&[2, 3], 9), rand_tensor(&[2, 2], 10)],
        |_, v| concat(v, 1),
    )?;
    ops.check("sum", std::slice::from_ref(&a), |_, v| Ok(v[0].sum()))?;
    ops.check("softmax", std::slice::from_ref(&a), |_, v| v[0].softmax())?;
    let keep: Vec<bool> = (0..12).map(|i| i % 4 != 3).collect();
    ops.check("masked softmax", std::slice::from_ref(&a), move |_, v| {
        v[0].masked_softmax(Some(&keep))
    })?;
    ops.check("cross entropy", std::slice::from_ref(&a), |_, v| {
        v[0].cross_entropy(&[Some(0), None, Some(3)], 0.5)
    })?;
    ops.check("select_rows", &[a.clone(), b], |_, v| {
        v[0].select_rows(&[false, true, true], v[1])
    })?;
    ops.check("gather_rows", std::slice::from_ref(&a), |_, v| {
        v[0].gather_rows(&[2, 2, 0])
    })?;
    ops.check(
        "gather_matmul",
        &[a, rand_tensor(&[4, 4, 3], 11)],
        |_, v| v[0].gather_matmul(v[1], &[3, 0, 3]),
    )?;

    let cell = LstmCell::new("cell", &[("x", 3), ("h", 4)], 4);
    let mut store = ParamStore::new();
    cell.init(&mut store, &mut ChaCha8Rng::seed_from_u64(12));
    let lstm_inputs = [
        rand_tensor(&[2, 3], 13),
        rand_tensor(&[2, 4], 14),
        rand_tensor(&[2, 4], 15),
    ];
    ops.check("lstm cell", &lstm_inputs, |tape, v| {
        let (h, c) = cell.step(tape, &store, &[v[0], v[1]], v[2])?;
        concat(&[h, c], 1)
    })?;

    // Toy dims: D = 8, |V| = 20, source and target length 3.
    let dims = ModelDims {
        vocab: 20,
        embed: 8,
        hidden: 8,
        emotions: 10,
        max_len: 30,
    };
    let batch = Batch {
        sources: vec![vec![14, 15, 16], vec![17, 18, 19]],
        targets: vec![vec![16, 17, 14], vec![19, 15, 18]],
        emotions: vec![Emotion::Sadness, Emotion::Love],
    };
    let mut model_worst = (0.0f64, String::new());
    for kind in ModelKind::ALL {
        let model = Seq2Seq::<f64>::new(kind, dims, 0.0, &mut ChaCha8Rng::seed_from_u64(16));
        let m = check_seq2seq(&model, &batch, 1e-5).map_err(|e| format!("{kind}: {e}"))?;
        ensure(m.rel_err < GRAD_TOL, || format!("{kind}: {m:?}"))?;
        if m.rel_err > model_worst.0 {
            model_worst = (m.rel_err, format!("{kind} {}", m.param));
        }
    }
    Ok(format!(
        "{} ops, worst {:.1e} ({}); 8 model kinds, worst {:.1e} ({})",
        ops.count, ops.worst, ops.worst_name, model_worst.0, model_worst.1
    ))
}

fn reduction_identities() -> Outcome {
    fn run<T: Scalar>(tag: VariantTag) -> Result<(), String> {
        let dims = ModelDims {
            vocab: 50,
            embed: 8,
            hidden: 12,
            emotions: 10,
            max_len: 30,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(500 + tag as u64);
        let baseline = Seq2Seq::<T>::new(ModelKind::Baseline, dims, 0.0, &mut rng);
        let variant =
            Seq2Seq::from_baseline(&baseline, tag, &mut rng).map_err(|e| e.to_string())?;
        let logits = |m: &Seq2Seq<T>, b: &Batch| -> Result<Vec<u64>, String> {
            let tape = Tape::new();
            let tf = m
                .teacher_forced(&tape, b, None)
                .map_err(|e| e.to_string())?;
            Ok(tf
                .logits
                .iter()
                .flat_map(|l| {
                    l.data()
                        .iter()
                        .map(|x| x.to_f64().unwrap().to_bits())
                        .collect::<Vec<_>>()
                })
                .collect())
        };
        for trial in 0..100 {
            let m = rng.gen_range(1..=30);
            let n = rng.gen_range(1..=10);
            let source: Vec<usize> = (0..m)
                .map(|_| rng.gen_range(NUM_SPECIAL..dims.vocab))
                .collect();
            let target: Vec<usize> = (0..n)
                .map(|_| rng.gen_range(NUM_SPECIAL..dims.vocab))
                .collect();
            let e = Emotion::ALL[rng.gen_range(0..Emotion::ALL.len())];
            let batch = Batch {
                sources: vec![source.clone()],
                targets: vec![target],
                emotions: vec![e],
            };
            // Encoder-token variants are compared with a baseline reading
            // the same tagged source.
            let mut reference_batch = batch.clone();
            let position = match tag {
                VariantTag::EncBef => Some(TokenPosition::Before),
                VariantTag::EncAft => Some(TokenPosition::After),
                _ => None,
            };
            if let Some(p) = position {
                reference_batch.sources[0] =
                    apply_enc_token(&source, e, p, dims.max_len).map_err(|e| e.to_string())?;
            }
            let want = logits(&baseline, &reference_batch)?;
            let got = logits(&variant, &batch)?;
            ensure(want == got, || format!("{tag} input {trial} differs"))?;
        }
        Ok(())
    }
    for tag in VariantTag::ALL {
        run::<f32>(tag)?;
        run::<f64>(tag)?;
    }
    Ok("7 variants x 100 inputs, bitwise equal in f32 and f64".into())
}

fn overfit() -> Outcome {
    let pairs = synth_corpus(SynthConfig::new(32, 21)).pairs;
    let vocab = Vocabulary::build(
        pairs
            .iter()
            .flat_map(|p| [p.source.as_slice(), p.target.as_slice()]),
        2000,
    )
    .map_err(|e| e.to_string())?;
    let data = encode_pairs(&pairs, &vocab);
    let config = ModelConfig {
        max_steps: Some(2000),
        ..ModelConfig::desk()
    };
    let (model, report) = train_dialogue(
        ModelKind::Variant(VariantTag::EncAtt),
        &data,
        &[],
        config.dims(vocab.len()),
        &config,
    )
    .map_err(|e| e.to_string())?;
    let first_below = report.losses.iter().position(|&l| l < 0.1);
    let last = *report.losses.last().unwrap();
    ensure(last < 0.1, || format!("final loss {last:.4}"))?;
    let mut exact = 0;
    for p in &data {
        let out = model
            .greedy_decode(&p.source, p.emotion.unwrap(), config.padding)
            .map_err(|e| e.to_string())?;
        exact += usize::from(out.tokens == p.target);
    }
    ensure(exact == data.len(), || {
        format!("{exact}/{} targets reproduced", data.len())
    })?;
    Ok(format!(
        "final loss {last:.4} (first < 0.1 at step {}), {exact}/32 exact",
        first_below.map_or(0, |s| s + 1)
    ))
}

fn controllability() -> Outcome {
    let corpus = synth_corpus(SynthConfig::new(2000, 7));
    let (labeled, _) = label_corpus(&corpus.oracle, &corpus.pairs, DEFAULT_THRESHOLD)
        .map_err(|e| e.to_string())?;
    let config = ModelConfig::desk();
    let prepared = prepare_corpus(&labeled, &config).map_err(|e| e.to_string())?;
    let sources: Vec<Vec<String>> = prepared.dev_text.iter().map(|p| p.source.clone()).collect();
    let dims = config.dims(prepared.vocab.len());
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for tag in VariantTag::ALL {
        let (model, _) = train_dialogue(
            ModelKind::Variant(tag),
            &prepared.train,
            &prepared.dev,
            dims,
            &config,
        )
        .map_err(|e| format!("{tag}: {e}"))?;
        let model = DialogueModel::new(model, prepared.vocab.clone(), config.clone());
        let report = evaluate(&model, &corpus.oracle, TOKENIZER_ID, &sources, config.seed)
            .map_err(|e| format!("{tag}: {e}"))?;
        for (i, row) in report.confusion_normalized.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                failures.push(format!("{tag} row {i} sums to {s}"));
            }
        }
        let floor = match tag {
            VariantTag::EncAtt | VariantTag::DecRep => 0.80,
            _ => 0.60,
        };
        if report.average < floor {
            failures.push(format!("{tag} average {:.3} < {floor}", report.average));
        }
        summary.push(format!("{tag}={:.3}", report.average));
    }
    let line = format!("{} test sources; {}", sources.len(), summary.join(" "));
    if failures.is_empty() {
        Ok(line)
    } else {
        Err(format!("{line}; {}", failures.join("; ")))
    }
}

fn threshold() -> Outcome {
    let uniform = [1.0 / NUM_CLASSES as f64; NUM_CLASSES];
    let label = apply_threshold(&uniform, DEFAULT_THRESHOLD);
    ensure(label == Emotion::NonEmotion, || {
        format!("uniform labeled {label}")
    })?;

    // A small trained classifier gives graded distributions; the oracle
    // alone would only produce one-hot or uniform ones.
    let train: Vec<LabeledText> = synth_corpus(SynthConfig::new(600, 11))
        .pairs
        .into_iter()
        .map(|p| LabeledText {
            tokens: p.target,
            emotion: p.emotion.unwrap(),
        })
        .collect();
    let config = ClassifierConfig {
        epochs: 8,
        lr: 3e-3,
        ..ClassifierConfig::desk()
    };
    let (classifier, _) = train_classifier(&train, &config).map_err(|e| e.to_string())?;
    let sample = synth_corpus(SynthConfig {
        unmarked_fraction: 0.3,
        ..SynthConfig::new(1000, 12)
    });
    let probs: Vec<[f64; NUM_CLASSES]> = sample
        .pairs
        .iter()
        .map(|p| classifier.probabilities(&p.target))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let thetas: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let counts: Vec<usize> = thetas
        .iter()
        .map(|&t| {
            probs
                .iter()
                .filter(|p| apply_threshold(p, t) == Emotion::NonEmotion)
                .count()
        })
        .collect();
    // Independent count: the top probability is below theta.
    for (&t, &c) in thetas.iter().zip(&counts) {
        let direct = probs
            .iter()
            .filter(|p| p.iter().cloned().fold(f64::MIN, f64::max) < t)
            .count();
        ensure(c == direct, || {
            format!("theta {t}: {c} vs direct count {direct}")
        })?;
    }
    ensure(counts.windows(2).all(|w| w[0] <= w[1]), || {
        format!("Non-emotion counts not monotone: {counts:?}")
    })?;
    // Guard against a vacuous pass: the sample must actually move across
    // the threshold range.
    let mut distinct = counts.clone();
    distinct.dedup();
    ensure(counts[0] == 0 && distinct.len() >= 5, || {
        format!("counts barely vary with the threshold: {counts:?}")
    })?;
    let at = |t: f64| counts[(t * 100.0).round() as usize];
    Ok(format!(
        "uniform -> non-emotion; 1000 sentences, non-emotion count {} at 0.2, {} at 0.35, {} at 0.5, {} distinct counts, monotone over 101 thresholds",
        at(0.2),
        at(0.35),
        at(0.5),
        distinct.len()
    ))
}

fn checkpoint_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pairs = synth_corpus(SynthConfig::new(100, 4)).pairs;
    let config = ModelConfig::desk();
    let prepared = prepare_corpus(&pairs, &config).map_err(|e| e.to_string())?;
    let dims = config.dims(prepared.vocab.len());
    let batch_pairs: Vec<_> = prepared.train.iter().take(8).collect();
    let batch = Batch::from_pairs(&batch_pairs).map_err(|e| e.to_string())?;
    let logits = |m: &Seq2Seq<f32>| -> Result<Vec<u32>, String> {
        let tape = Tape::new();
        let tf = m
            .teacher_forced(&tape, &batch, None)
            .map_err(|e| e.to_string())?;
        Ok(tf
            .logits
            .iter()
            .flat_map(|l| l.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect())
    };
    for kind in ModelKind::ALL {
        let model = Seq2Seq::<f32>::new(kind, dims, 0.0, &mut ChaCha8Rng::seed_from_u64(77));
        let original = DialogueModel::new(model, prepared.vocab.clone(), config.clone());
        let path = dir.path().join(format!("{kind}.ckpt"));
        save_dialogue(&path, &original).map_err(|e| e.to_string())?;
        let loaded = load_dialogue(&path).map_err(|e| e.to_string())?;
        ensure(
            loaded.model.kind == kind && loaded.vocab == original.vocab,
            || format!("{kind}: metadata changed"),
        )?;
        ensure(logits(&loaded.model)? == logits(&original.model)?, || {
            format!("{kind}: logits differ after reload")
        })?;
        let src = &prepared.dev[0].source;
        let a = original
            .model
            .greedy_decode(src, Emotion::Joy, 30)
            .map_err(|e| e.to_string())?;
        let b = loaded
            .model
            .greedy_decode(src, Emotion::Joy, 30)
            .map_err(|e| e.to_string())?;
        ensure(a.tokens == b.tokens && a.attention == b.attention, || {
            format!("{kind}: greedy decode differs after reload")
        })?;
    }
    Ok("8 model kinds, forward and greedy decode bitwise equal".into())
}

fn service_contract() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("enc-att.ckpt");
    let pairs = synth_corpus(SynthConfig::new(300, 8)).pairs;
    let config = ModelConfig {
        max_steps: Some(150),
        ..ModelConfig::desk()
    };
    let prepared = prepare_corpus(&pairs, &config).map_err(|e| e.to_string())?;
    let (model, _) = train_dialogue(
        ModelKind::Variant(VariantTag::EncAtt),
        &prepared.train,
        &prepared.dev,
        config.dims(prepared.vocab.len()),
        &config,
    )
    .map_err(|e| e.to_string())?;
    save_dialogue(&path, &DialogueModel::new(model, prepared.vocab, config))
        .map_err(|e| e.to_string())?;

    // The shipped binary, no UI assets anywhere.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .and_then(|l| l.local_addr())
        .map_err(|e| e.to_string())?
        .port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_emoseq"))
        .args(["serve", "--model"])
        .arg(&path)
        .args(["--classifier", "oracle"])
        .env("EMOSEQ_PORT", port.to_string())
        .current_dir(dir.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let result = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())
        .and_then(|rt| rt.block_on(probe_service(format!("http://127.0.0.1:{port}"))));
    let _ = child.kill();
    let _ = child.wait();
    let binary = result?;

    // Same checks against an in-process instance, which needs no port.
    let in_process = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(async {
            let model = load_dialogue(&path).map_err(|e| e.to_string())?;
            let scorer: Arc<dyn EmotionScorer> = Arc::new(LexicalOracle::new());
            let state = ServiceState::new(vec![model], scorer, TOKENIZER_ID)?;
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
                .await
                .map_err(|e| e.to_string())?;
            let base = format!(
                "http://{}",
                listener.local_addr().map_err(|e| e.to_string())?
            );
            tokio::spawn(serve_on(listener, Arc::new(state)));
            probe_service(base).await
        })?;
    ensure(binary == in_process, || {
        "binary and in-process replies differ".into()
    })?;
    Ok(binary)
}

async fn probe_service(base: String) -> Outcome {
    let client = reqwest::Client::new();
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        match client.get(format!("{base}/healthz")).send().await {
            Ok(r) if r.status().is_success() => break,
            _ if Instant::now() < deadline => tokio::time::sleep(Duration::from_millis(50)).await,
            _ => return Err("service did not come up".into()),
        }
    }
    let err = |e: reqwest::Error| e.to_string();
    let r = client
        .post(format!("{base}/api/chat"))
        .json(&json!({"text": "You scared me today at the hotel", "emotion": "fear", "variant": "enc-att"}))
        .send()
        .await
        .map_err(err)?;
    ensure(r.status().as_u16() == 200, || {
        format!("chat returned {}", r.status())
    })?;
    let reply: ChatResponse = r.json().await.map_err(err)?;
    let a = &reply.attention;
    ensure(!a.output_tokens.is_empty(), || "empty response".into())?;
    ensure(a.matrix.len() == a.output_tokens.len(), || {
        "matrix rows != output tokens".into()
    })?;
    for (i, row) in a.matrix.iter().enumerate() {
        ensure(row.len() == a.source_tokens.len(), || {
            format!("row {i} width")
        })?;
        let s: f64 = row.iter().sum();
        ensure((s - 1.0).abs() <= 1e-6, || {
            format!("attention row {i} sums to {s}")
        })?;
    }
    ensure(reply.distribution.len() == NUM_CLASSES, || {
        "distribution is not 9-way".into()
    })?;
    let total: f64 = reply.distribution.iter().sum();
    ensure((total - 1.0).abs() <= 1e-6, || {
        format!("distribution sums to {total}")
    })?;

    let r = client
        .post(format!("{base}/api/chat"))
        .json(&json!({"text": "You scared me today at the hotel", "emotion": "boredom", "variant": "enc-att"}))
        .send()
        .await
        .map_err(err)?;
    let status = r.status().as_u16();
    let body: Value = r.json().await.map_err(err)?;
    ensure(status == 400 && body["error"].is_string(), || {
        format!("boredom gave {status} {body}")
    })?;
    let emotions: Value = client
        .get(format!("{base}/api/emotions"))
        .send()
        .await
        .map_err(err)?
        .json()
        .await
        .map_err(err)?;
    ensure(
        emotions.as_array().map(Vec::len) == Some(NUM_CLASSES),
        || format!("emotions endpoint gave {emotions}"),
    )?;
    Ok(format!(
        "{}x{} attention, rows sum to 1, distribution sums to {total:.6}, boredom -> 400; response {:?}",
        a.matrix.len(),
        a.source_tokens.len(),
        reply.response
    ))
}
