//! The batch commands behind the `wlcoref` binary. Each takes paths and
//! configuration and returns what it computed, so it can be driven from
//! tests as well as from the command line.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{load_corpus_with, to_word_level, write_jsonl, Document, Span, WordLevelDoc};
use crate::diagnostics::{gradient_suite, GradCheckTable};
use crate::encoder::EmbeddingFile;
use crate::error::{Error, Result};
use crate::metrics::{audit, AuditReport, ClusterSet, Evaluation, OrderConvention};
use crate::model::CorefModel;
use crate::training::{split_dev, train, TrainOutcome};

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// `transform`: gold span clusters to head clusters plus head-to-span
/// maps, one record per document.
pub fn cmd_transform(input: &Path, output: &Path, config: &RunConfig) -> Result<Vec<WordLevelDoc>> {
    let docs = load_corpus_with(input, &config.genres())?;
    let out: Vec<WordLevelDoc> = docs.iter().map(to_word_level).collect();
    write_jsonl(output, &out)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub embeddings: Option<PathBuf>,
    /// File the configuration came from, recorded in the manifest.
    pub config_path: Option<PathBuf>,
    pub config: RunConfig,
}

/// Record of what produced a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch when the run finished.
    pub timestamp: u64,
    pub seed: u64,
    pub config_path: Option<String>,
    pub train: String,
    pub dev: Option<String>,
    pub embeddings: Option<String>,
    pub train_documents: usize,
    pub dev_documents: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_sl_f1: Option<f64>,
    pub config: RunConfig,
}

fn load_embeddings(path: Option<&Path>) -> Result<Option<EmbeddingFile>> {
    path.map(EmbeddingFile::load).transpose()
}

/// `train`: fits a model and writes the best checkpoint, the per-epoch
/// log and a manifest into `out_dir`.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    args.config.validate()?;
    let genres = args.config.genres();
    let corpus = load_corpus_with(&args.train, &genres)?;
    let (train_docs, dev_docs) = match &args.dev {
        Some(p) => (corpus, load_corpus_with(p, &genres)?),
        None => split_dev(&corpus, args.config.train.dev_split, args.config.train.seed),
    };
    let mut model = match load_embeddings(args.embeddings.as_deref())? {
        Some(f) => CorefModel::with_embeddings(args.config.model.clone(), f)?,
        None => CorefModel::toy(args.config.model.clone())?,
    };
    let outcome = train(&mut model, &train_docs, &dev_docs, &args.config.train, |_, _| {
        std::ops::ControlFlow::Continue(())
    })?;
    model.save_with(&args.out_dir, &outcome.best_params)?;
    write_jsonl(&args.out_dir.join(TRAIN_LOG_FILE), &outcome.reports)?;
    let manifest = RunManifest {
        command: "train".into(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        seed: args.config.train.seed,
        config_path: args.config_path.as_ref().map(|p| p.display().to_string()),
        train: args.train.display().to_string(),
        dev: args.dev.as_ref().map(|p| p.display().to_string()),
        embeddings: args.embeddings.as_ref().map(|p| p.display().to_string()),
        train_documents: train_docs.len(),
        dev_documents: dev_docs.len(),
        epochs_run: outcome.reports.len(),
        best_epoch: outcome.best_epoch,
        best_dev_sl_f1: outcome.best_sl_f1,
        config: RunConfig {
            model: model.config.clone(),
            train: args.config.train.clone(),
        },
    };
    let path = args.out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(outcome)
}

/// A predicted document: the input fields with `clusters` replaced by the
/// predicted span clusters, plus word-level links. Only `doc_id` and
/// `clusters` are required when reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    #[serde(default)]
    pub genre: String,
    #[serde(default)]
    pub sentences: Vec<Vec<String>>,
    #[serde(default)]
    pub speakers: Vec<Vec<String>>,
    #[serde(default)]
    pub dep_head: Vec<Vec<i64>>,
    pub clusters: Vec<Vec<Span>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_clusters: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antecedents: Option<Vec<Option<usize>>>,
}

/// `predict`: runs a checkpoint over a corpus.
pub fn cmd_predict(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    embeddings: Option<&Path>,
    k: Option<usize>,
) -> Result<Vec<PredictionRecord>> {
    let mut model = CorefModel::load(checkpoint, load_embeddings(embeddings)?)?;
    if let Some(k) = k {
        model.config.k = k;
        model.config.validate()?;
    }
    let docs = load_corpus_with(input, model.genres())?;
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let pred = model.predict(&doc)?;
        out.push(PredictionRecord {
            doc_id: doc.doc_id,
            genre: doc.genre,
            sentences: doc.sentences,
            speakers: doc.speakers,
            dep_head: doc.dep_head,
            clusters: pred.span_clusters,
            word_clusters: Some(pred.word_clusters),
            antecedents: Some(pred.antecedents),
        });
    }
    write_jsonl(output, &out)?;
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub documents: usize,
    pub span_level: Evaluation,
    /// Present when every prediction carries word-level clusters.
    pub word_level: Option<Evaluation>,
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "documents: {}", self.documents)?;
        writeln!(f, "span level")?;
        writeln!(f, "{}", self.span_level)?;
        if let Some(wl) = &self.word_level {
            writeln!(f, "word level")?;
            writeln!(f, "{wl}")?;
        }
        Ok(())
    }
}

/// `evaluate`: CoNLL metrics of predictions against gold documents,
/// micro-averaged over the corpus.
pub fn evaluate_records(gold: &[Document], pred: &[PredictionRecord]) -> Result<EvaluationReport> {
    let by_id: HashMap<&str, &PredictionRecord> = pred.iter().map(|p| (p.doc_id.as_str(), p)).collect();
    let mut span_level = Evaluation::default();
    let mut word_level = Some(Evaluation::default());
    for doc in gold {
        let p = by_id
            .get(doc.doc_id.as_str())
            .ok_or_else(|| Error::MissingDocument(doc.doc_id.clone()))?;
        span_level.add(&ClusterSet::new(doc.clusters.clone())?, &ClusterSet::new(p.clusters.clone())?);
        word_level = match (word_level, &p.word_clusters) {
            (Some(mut acc), Some(wc)) => {
                let key = ClusterSet::new(to_word_level(doc).head_clusters)?;
                acc.add(&key, &ClusterSet::new(wc.clone())?);
                Some(acc)
            }
            _ => None,
        };
    }
    Ok(EvaluationReport {
        documents: gold.len(),
        span_level,
        word_level: word_level.filter(|_| !gold.is_empty()),
    })
}

pub fn cmd_evaluate(gold: &Path, pred: &Path, config: &RunConfig) -> Result<EvaluationReport> {
    let gold = load_corpus_with(gold, &config.genres())?;
    let pred = read_predictions(pred)?;
    evaluate_records(&gold, &pred)
}

/// `audit`: mention and pair counts of the two task formulations.
pub fn cmd_audit(input: &Path, convention: OrderConvention, config: &RunConfig) -> Result<AuditReport> {
    let docs = load_corpus_with(input, &config.genres())?;
    Ok(audit(&docs, convention))
}

/// `gradcheck`: finite-difference table over every operation and the
/// joint loss.
pub fn cmd_gradcheck(seed: u64) -> Result<GradCheckTable> {
    gradient_suite(seed)
}
