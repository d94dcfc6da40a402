use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wlcoref::cli::{cmd_evaluate, cmd_predict, cmd_train, read_predictions, RunManifest, TrainArgs, MANIFEST_FILE, TRAIN_LOG_FILE};
use wlcoref::corpus::{write_jsonl, ROOT};
use wlcoref::synth::{generate_corpus, SynthConfig};
use wlcoref::{Document, RunConfig, WordLevelDoc};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wlcoref"))
        .args(args)
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

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, n: usize) -> (Vec<Document>, std::path::PathBuf) {
    let docs = generate_corpus(&SynthConfig {
        num_docs: n,
        ..SynthConfig::default()
    });
    let path = dir.join("corpus.jsonl");
    write_jsonl(&path, &docs).unwrap();
    (docs, path)
}

#[test]
fn transform_writes_one_record_per_document() {
    let dir = tempfile::tempdir().unwrap();
    let (docs, corpus) = synth(dir.path(), 4);
    let out = dir.path().join("wl.jsonl");
    let o = bin(&["transform", p(&corpus), p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let recs: Vec<WordLevelDoc> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 4);
    assert_eq!(recs[0], wlcoref::corpus::to_word_level(&docs[0]));

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = bin(&["transform", p(&empty), p(&out)]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn bad_records_exit_nonzero_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corpus) = synth(dir.path(), 2);
    let mut text = fs::read_to_string(&corpus).unwrap();
    text.push_str("{\"doc_id\": \"broken\"}\n");
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, text).unwrap();
    let o = bin(&["transform", p(&bad), p(&dir.path().join("out.jsonl"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let mut doc = generate_corpus(&SynthConfig::default()).remove(0);
    doc.genre = "xx".into();
    let unknown = dir.path().join("genre.jsonl");
    write_jsonl(&unknown, &[doc]).unwrap();
    let o = bin(&["audit", p(&unknown)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("genre"), "{}", stderr(&o));

    let o = bin(&["audit", p(&dir.path().join("missing.jsonl"))]);
    assert!(!o.status.success());
}

#[test]
fn audit_fixture_counts() {
    let dir = tempfile::tempdir().unwrap();
    let doc = Document {
        doc_id: "fixture".into(),
        genre: "nw".into(),
        sentences: vec![
            vec!["a".into(), "b".into(), "c".into()],
            vec!["d".into(), "e".into(), "f".into(), "g".into()],
        ],
        speakers: vec![vec![String::new(); 3], vec![String::new(); 4]],
        dep_head: vec![vec![ROOT; 3], vec![ROOT; 4]],
        clusters: vec![],
    };
    let path = dir.path().join("fixture.jsonl");
    write_jsonl(&path, &[doc]).unwrap();
    let o = bin(&["audit", p(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out.lines().map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows[1][..3], ["WL", "7", "21"]);
    assert_eq!(rows[2][..3], ["SL", "16", "120"]);

    let o = bin(&["audit", p(&path), "--order-convention", "strictly-precedes"]);
    assert!(o.status.success());
    // disjoint pairs: 5 inside the first sentence, 15 inside the second,
    // and 6 x 10 across them
    let strict: u64 = stdout(&o).lines().nth(2).unwrap().split_whitespace().nth(2).unwrap().parse().unwrap();
    assert_eq!(strict, 80);
}

#[test]
fn evaluate_gold_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corpus) = synth(dir.path(), 3);
    let o = bin(&["evaluate", p(&corpus), p(&corpus)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("mean F1"));
    for line in out.lines().filter(|l| l.starts_with("MUC") || l.starts_with("B3") || l.starts_with("CEAF")) {
        assert!(line.split_whitespace().skip(1).all(|v| v == "1.0000"), "{line}");
    }
    // no word-level section without predicted word clusters
    assert!(!out.contains("word level"));
}

#[test]
fn train_predict_evaluate_pipeline_reaches_perfect_fit() {
    let dir = tempfile::tempdir().unwrap();
    let (docs, corpus) = synth(dir.path(), 3);
    let ckpt = dir.path().join("ckpt");
    let mut config = RunConfig::default();
    config.train.epochs = 60;
    let outcome = cmd_train(&TrainArgs {
        train: corpus.clone(),
        dev: Some(corpus.clone()),
        out_dir: ckpt.clone(),
        embeddings: None,
        config_path: None,
        config: config.clone(),
    })
    .unwrap();
    assert_eq!(outcome.best_sl_f1, Some(1.0));

    let log = fs::read_to_string(ckpt.join(TRAIN_LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 60);
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(ckpt.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.command, "train");
    assert_eq!(manifest.train_documents, 3);
    assert_eq!(manifest.config.train, config.train);

    let pred = dir.path().join("pred.jsonl");
    let preds = cmd_predict(&ckpt, &corpus, &pred, None, None).unwrap();
    assert_eq!(read_predictions(&pred).unwrap(), preds);
    let report = cmd_evaluate(&corpus, &pred, &config).unwrap();
    assert_eq!(report.documents, docs.len());
    assert_eq!(report.span_level.conll_f1(), 1.0);
    assert_eq!(report.word_level.unwrap().conll_f1(), 1.0);

    // the same through the binary
    let o = bin(&["evaluate", p(&corpus), p(&pred)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("word level"));
    assert!(stdout(&o).lines().filter(|l| l.starts_with("mean F1")).all(|l| l.ends_with("1.0000")), "{}", stdout(&o));
}

#[test]
fn binary_train_respects_flags_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corpus) = synth(dir.path(), 4);
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[model]\ndim = 16\ncoref_hidden = [16]\nspan_hidden = 16\n[train]\nepochs = 5\n").unwrap();
    let ckpt = dir.path().join("ckpt");
    let o = bin(&[
        "train",
        p(&corpus),
        "--out",
        p(&ckpt),
        "--config",
        p(&cfg),
        "--epochs",
        "2",
        "--k",
        "7",
        "--alpha",
        "0.25",
        "--seed",
        "3",
        "--dev-split",
        "0.25",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(ckpt.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m.epochs_run, 2);
    assert_eq!(m.config.model.k, 7);
    assert_eq!(m.config.model.dim, 16);
    assert_eq!(m.config.train.alpha, 0.25);
    assert_eq!(m.seed, 3);
    assert_eq!((m.train_documents, m.dev_documents), (3, 1));
    assert_eq!(m.config_path.as_deref(), Some(p(&cfg)));

    let pred = dir.path().join("pred.jsonl");
    let o = bin(&["predict", "--checkpoint", p(&ckpt), p(&corpus), p(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&pred).unwrap().lines().count(), 4);

    // checkpoint whose stored config no longer matches its tensors
    let toml_path = ckpt.join("model.toml");
    let text = fs::read_to_string(&toml_path).unwrap().replace("dim = 16", "dim = 8");
    fs::write(&toml_path, text).unwrap();
    let o = bin(&["predict", "--checkpoint", p(&ckpt), p(&corpus), p(&pred)]);
    assert!(!o.status.success());

    let o = bin(&["train", p(&corpus), "--out", p(&ckpt), "--alpha", "-1"]);
    assert!(!o.status.success());
}

#[test]
fn gradcheck_command_passes() {
    let o = bin(&["gradcheck"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("joint_loss"));
    assert!(!stdout(&o).contains("FAIL"));
}
