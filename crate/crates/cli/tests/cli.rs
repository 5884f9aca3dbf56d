use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn emoseq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emoseq"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Second column of every variant row.
fn column(table: &str, col: usize) -> Vec<(String, i64)> {
    table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("variant"))
        .map(|l| {
            let cells: Vec<&str> = l.split_whitespace().collect();
            (cells[0].to_string(), cells[col].parse().unwrap())
        })
        .collect()
}

#[test]
fn params_paper_mode_matches_published_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = emoseq(
        dir.path(),
        &[
            "params",
            "--dims",
            "D=600,V=25000,m=30,S=10",
            "--mode",
            "paper",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let got = column(&stdout(&out), 1);
    let expected = [
        ("enc-bef", 0),
        ("enc-aft", 0),
        ("dec-rep", 6_000),
        ("dec-start", 0),
        ("dec-trans", 3_600_000),
        ("dec-proj", 150_000_000),
        ("enc-att", 180_000),
    ];
    assert_eq!(got.len(), expected.len());
    for ((name, n), (en, ev)) in got.iter().zip(expected) {
        assert_eq!((name.as_str(), *n), (en, ev));
    }
}

#[test]
fn params_both_modes_and_custom_dims() {
    let dir = tempfile::tempdir().unwrap();
    let out = emoseq(dir.path(), &["params", "--dims", "D=4,V=10,m=3,S=2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let paper = column(&text, 1);
    let actual = column(&text, 2);
    // D·S, D²·S, V·D·S and m·D·S at the small dims.
    let paper: Vec<i64> = paper.into_iter().map(|(_, n)| n).collect();
    assert_eq!(paper, [0, 0, 8, 0, 32, 80, 24]);
    // The attention variant keeps S−1 extra D×D matrices in place of the
    // baseline one.
    assert_eq!(actual[6], ("enc-att".to_string(), 4 * 4));
    assert_eq!(actual[3].1, 0);
}

#[test]
fn usage_errors_exit_one_with_usage_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = emoseq(dir.path(), &["params", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());

    for args in [
        &["frobnicate"][..],
        &["params", "--dims", "Q=3"],
        &["params", "--mode", "fuzzy"],
        &["train", "--variant", "enc-middle"],
        &["train", "--variant", "enc-att", "--profile", "paper"],
    ] {
        let out = emoseq(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
    }
    let help = emoseq(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    for sub in [
        "train-classifier",
        "label",
        "train",
        "eval",
        "params",
        "synth",
        "serve",
    ] {
        assert!(stdout(&help).contains(sub), "help lists {sub}");
    }
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = emoseq(
        dir.path(),
        &["eval", "--model", "missing.ckpt", "--test", "t.tsv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.ckpt"));

    std::fs::write(dir.path().join("bad.tsv"), "a b c\td e f\tboredom\n").unwrap();
    let out = emoseq(
        dir.path(),
        &[
            "train",
            "--variant",
            "enc-att",
            "--data",
            "bad.tsv",
            "--steps",
            "2",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.tsv:1"), "{}", stderr(&out));

    std::fs::write(dir.path().join("junk.ckpt"), "not a checkpoint\n\n").unwrap();
    std::fs::write(dir.path().join("t.tsv"), "a b\tc d\n").unwrap();
    let out = emoseq(
        dir.path(),
        &["eval", "--model", "junk.ckpt", "--test", "t.tsv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_and_labeled() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.tsv", "b.tsv"] {
        let out = emoseq(
            dir.path(),
            &["synth", "--n", "300", "--seed", "7", "--out", name],
        );
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read_to_string(dir.path().join("a.tsv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.tsv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 300);
    assert!(a.lines().all(|l| l.split('\t').count() == 3));
}

#[test]
fn classifier_training_and_labeling_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = emoseq(
        d,
        &[
            "synth",
            "--n",
            "600",
            "--seed",
            "3",
            "--unmarked",
            "0.2",
            "--out",
            "pairs.tsv",
            "--sentences",
            "sentences.tsv",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let out = emoseq(
        d,
        &[
            "train-classifier",
            "--data",
            "sentences.tsv",
            "--out",
            "cls.ckpt",
            "--epochs",
            "4",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let metrics: Value = serde_json::from_str(&stdout(&out)).unwrap();
    for key in ["accuracy", "macro_precision", "macro_recall", "macro_f1"] {
        let x = metrics[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&x), "{key} = {x}");
    }

    // Labeling drops exact duplicate exchanges, as all ingestion does.
    let text = std::fs::read_to_string(d.join("pairs.tsv")).unwrap();
    let distinct: std::collections::HashSet<(&str, &str)> = text
        .lines()
        .map(|l| {
            let mut f = l.split('\t');
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    for classifier in ["oracle", "cls.ckpt"] {
        let out = emoseq(
            d,
            &[
                "label",
                "--data",
                "pairs.tsv",
                "--classifier",
                classifier,
                "--out",
                "labeled.tsv",
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let stats: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(stats["total"].as_u64(), Some(distinct.len() as u64));
        let labeled = std::fs::read_to_string(d.join("labeled.tsv")).unwrap();
        assert_eq!(labeled.lines().count(), distinct.len());
    }
    // Unmarked responses get a uniform oracle distribution, hence Non-emotion.
    let out = emoseq(
        d,
        &[
            "label",
            "--data",
            "pairs.tsv",
            "--classifier",
            "oracle",
            "--out",
            "labeled.tsv",
        ],
    );
    let stats: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let share = stats["below_threshold"].as_f64().unwrap();
    assert!((0.1..0.3).contains(&share), "{share}");
}

#[test]
fn train_then_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = emoseq(
        d,
        &["synth", "--n", "2000", "--seed", "7", "--out", "synth.tsv"],
    );
    assert_eq!(out.status.code(), Some(0));
    let out = emoseq(
        d,
        &[
            "train",
            "--variant",
            "enc-att",
            "--profile",
            "desk",
            "--dev-out",
            "t.tsv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(d.join("enc-att.ckpt").is_file());
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let final_loss = summary["final_loss"].as_f64().unwrap();
    assert!(final_loss < 1.0, "final loss {final_loss}");

    let out = emoseq(
        d,
        &[
            "eval",
            "--model",
            "enc-att.ckpt",
            "--classifier",
            "oracle",
            "--test",
            "t.tsv",
            "--max-sources",
            "30",
            "--out",
            "report.json",
            "--confusion",
            "confusion.tsv",
            "--heatmap-dir",
            "heatmaps",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let acc = report["per_emotion_accuracy"].as_object().unwrap();
    assert_eq!(acc.len(), 9);
    assert!(acc
        .values()
        .all(|v| (0.0..=1.0).contains(&v.as_f64().unwrap())));
    assert_eq!(report["n_sources"], 30);
    assert_eq!(report["confusion_counts"].as_array().unwrap().len(), 9);
    let saved: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(saved, report);
    assert!(std::fs::read_to_string(d.join("confusion.tsv"))
        .unwrap()
        .contains("instructed"));
    assert_eq!(std::fs::read_dir(d.join("heatmaps")).unwrap().count(), 9);
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

/// Minimal HTTP/1.1 GET so this test needs no async runtime.
fn http_get(port: u16, path: &str) -> Option<String> {
    use std::io::{Read, Write};
    let mut s = std::net::TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .ok()?;
    let mut body = String::new();
    s.read_to_string(&mut body).ok()?;
    Some(body)
}

#[test]
fn serve_port_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    emoseq(
        d,
        &["synth", "--n", "200", "--seed", "1", "--out", "synth.tsv"],
    );
    let out = emoseq(d, &["train", "--variant", "dec-rep", "--steps", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let port = free_port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_emoseq"))
        .args(["serve", "--model", "dec-rep.ckpt", "--port", "1"])
        .current_dir(d)
        .env("EMOSEQ_PORT", port.to_string())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut reply = None;
    while Instant::now() < deadline {
        if let Some(r) = http_get(port, "/healthz") {
            reply = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    let _ = child.kill();
    let _ = child.wait();
    let reply = reply.expect("service answered on the EMOSEQ_PORT port");
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("\"ok\""));
}
