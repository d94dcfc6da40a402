//! Losses and the optimization loop.
//!
//! One document per step. The objective is
//! `L_nlml + α·L_bce + L_span`; Adam with per-group learning rates
//! (encoder vs task parameters), linear decay to zero and global-norm
//! clipping.

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coref::{build_clusters, decode_antecedents, Candidates};
use crate::corpus::{to_word_level, Document, Span, WordLevelDoc};
use crate::error::{Error, Result};
use crate::metrics::{ClusterSet, Evaluation};
use crate::model::{CorefModel, Prediction};
use crate::numerics::{Adam, Graph, ParamStore, Reduction, Tensor, Var};
use crate::spans::{reconstruct, HeadQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub encoder_lr: f64,
    pub task_lr: f64,
    pub linear_decay: bool,
    /// Weight of the pairwise binary cross-entropy term.
    pub alpha: f64,
    pub bce_reduction: Reduction,
    pub grad_clip: f64,
    /// Fraction of documents held out for model selection when no dev
    /// corpus is given.
    pub dev_split: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            encoder_lr: 1e-3,
            task_lr: 3e-4,
            linear_decay: true,
            alpha: 0.5,
            bce_reduction: Reduction::Mean,
            grad_clip: 1.0,
            dev_split: 0.1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.encoder_lr > 0.0 && self.task_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dev_split) {
            return Err(Error::Config("dev_split must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Multiplier applied to both learning rates at 0-based `step`.
    pub fn decay(&self, step: usize, total_steps: usize) -> f64 {
        if self.linear_decay && total_steps > 0 {
            1.0 - step as f64 / total_steps as f64
        } else {
            1.0
        }
    }
}

/// Marks each candidate pair whose two words share a gold cluster.
pub fn gold_mask(cands: &Candidates, cluster_of: &[Option<usize>]) -> Vec<bool> {
    cands
        .pairs
        .iter()
        .map(|&(i, j)| cluster_of[i].is_some() && cluster_of[i] == cluster_of[j])
        .collect()
}

/// Negative log marginal likelihood of the gold antecedents, summed over
/// words. Words with no gold candidate take the dummy as gold.
pub fn nlml_loss(g: &mut Graph, scores: Var, cands: &Candidates, gold: &[bool]) -> Var {
    g.nlml(scores, &cands.groups, gold)
}

/// Binary cross-entropy of every scored pair against its gold label.
pub fn bce_loss(g: &mut Graph, scores: Var, gold: &[bool], reduction: Reduction) -> Var {
    let targets: Vec<f64> = gold.iter().map(|&y| f64::from(u8::from(y))).collect();
    g.bce_logits(scores, &targets, reduction)
}

/// Start and end cross-entropy over all words of the head's sentence,
/// summed over gold mentions. `boundary` and `segments` come from
/// [`SpanPredictor::score_boundaries`](crate::spans::SpanPredictor::score_boundaries);
/// `gold[m]` is the sentence-local `(start, end)` of mention `m`.
pub fn span_ce_loss(
    g: &mut Graph,
    boundary: Var,
    segments: &[std::ops::Range<usize>],
    gold: &[(usize, usize)],
) -> Var {
    let targets: Vec<Vec<usize>> = gold.iter().map(|&(s, e)| vec![s, e]).collect();
    g.segment_xent(boundary, segments, &targets)
}

/// Loss values of one step or an epoch average.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub nlml: f64,
    pub bce: f64,
    pub span: f64,
    pub total: f64,
}

impl LossTerms {
    fn add(&mut self, o: &LossTerms) {
        self.nlml += o.nlml;
        self.bce += o.bce;
        self.span += o.span;
        self.total += o.total;
    }

    fn scaled(mut self, s: f64) -> Self {
        self.nlml *= s;
        self.bce *= s;
        self.span *= s;
        self.total *= s;
        self
    }
}

/// Builds the joint loss for one document on `g`.
pub fn document_loss(
    model: &CorefModel,
    g: &mut Graph,
    doc: &Document,
    wl: &WordLevelDoc,
    alpha: f64,
    reduction: Reduction,
) -> Result<(Var, LossTerms)> {
    document_loss_with(model, &model.store, g, doc, wl, alpha, reduction)
}

/// [`document_loss`] over an external parameter set of the model's layout.
pub fn document_loss_with(
    model: &CorefModel,
    store: &ParamStore,
    g: &mut Graph,
    doc: &Document,
    wl: &WordLevelDoc,
    alpha: f64,
    reduction: Reduction,
) -> Result<(Var, LossTerms)> {
    let fwd = model.forward_with(store, g, doc, model.config.dropout)?;
    let cands = &fwd.pairs.candidates;
    let gold = gold_mask(cands, &wl.cluster_of(doc.num_words()));
    let nlml = nlml_loss(g, fwd.pairs.total, cands, &gold);
    let bce = bce_loss(g, fwd.pairs.total, &gold, reduction);

    let span = if wl.head_to_span.is_empty() {
        g.constant(Tensor::scalar(0.0))
    } else {
        let queries: Vec<HeadQuery> = wl.head_to_span.keys().map(|&h| HeadQuery::of(doc, h)).collect();
        let targets: Vec<(usize, usize)> = wl.head_to_span.values().map(|s| (s.start, s.end)).collect();
        let (boundary, segments) =
            model
                .spans
                .score_boundaries(g, store, fwd.t, &queries, model.config.dropout);
        span_ce_loss(g, boundary, &segments, &targets)
    };

    let weighted = g.scale(bce, alpha);
    let coref = g.add(nlml, weighted);
    let total = g.add(coref, span);
    let terms = LossTerms {
        nlml: g.value(nlml).item(),
        bce: g.value(bce).item(),
        span: g.value(span).item(),
        total: g.value(total).item(),
    };
    Ok((total, terms))
}

/// Dev-set metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DevMetrics {
    pub word_level: Evaluation,
    pub span_level: Evaluation,
    pub spans_correct: usize,
    pub spans_total: usize,
}

impl DevMetrics {
    pub fn wl_f1(&self) -> f64 {
        self.word_level.conll_f1()
    }

    pub fn sl_f1(&self) -> f64 {
        self.span_level.conll_f1()
    }

    /// Fraction of gold heads whose predicted span equals the gold span.
    pub fn span_accuracy(&self) -> f64 {
        if self.spans_total == 0 {
            0.0
        } else {
            self.spans_correct as f64 / self.spans_total as f64
        }
    }

    pub fn summary(&self) -> DevSummary {
        DevSummary {
            wl_f1: self.wl_f1(),
            span_accuracy: self.span_accuracy(),
            sl_f1: self.sl_f1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevSummary {
    pub wl_f1: f64,
    pub span_accuracy: f64,
    pub sl_f1: f64,
}

/// Prediction plus the spans predicted from the gold heads.
fn predict_with_gold_heads(model: &CorefModel, doc: &Document, wl: &WordLevelDoc) -> Result<(Prediction, Vec<Span>)> {
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, doc, 0.0)?;
    g.check_finite()?;
    let antecedents = decode_antecedents(&fwd.pairs.antecedent_scores(&g));
    let word_clusters = build_clusters(&antecedents);
    let pred_heads: Vec<usize> = word_clusters.iter().flatten().copied().collect();
    let gold_heads: Vec<usize> = wl.head_to_span.keys().copied().collect();
    let mut heads = pred_heads.clone();
    heads.extend(&gold_heads);
    let spans = model.head_spans(&mut g, fwd.t, doc, &heads);
    let lookup: HashMap<usize, Span> = heads.iter().copied().zip(spans.iter().copied()).collect();
    let span_clusters = reconstruct(&word_clusters, doc, |h| lookup[&h]);
    let gold_head_spans = spans[pred_heads.len()..].to_vec();
    Ok((
        Prediction {
            doc_id: doc.doc_id.clone(),
            antecedents,
            word_clusters,
            span_clusters,
        },
        gold_head_spans,
    ))
}

/// Word-level and span-level CoNLL scores plus span accuracy.
pub fn evaluate(model: &CorefModel, docs: &[Document]) -> Result<DevMetrics> {
    let mut out = DevMetrics::default();
    for doc in docs {
        let wl = to_word_level(doc);
        let (pred, gold_head_spans) = predict_with_gold_heads(model, doc, &wl)?;
        out.word_level.add(
            &ClusterSet::new(wl.head_clusters.clone())?,
            &ClusterSet::new(pred.word_clusters.clone())?,
        );
        out.span_level.add(
            &ClusterSet::new(doc.clusters.clone())?,
            &ClusterSet::new(pred.span_clusters.clone())?,
        );
        out.spans_total += gold_head_spans.len();
        out.spans_correct += wl
            .head_to_span
            .values()
            .zip(&gold_head_spans)
            .filter(|(g, p)| g == p)
            .count();
    }
    Ok(out)
}

/// Deterministic document-level split; returns `(train, dev)` in corpus
/// order. A non-zero fraction holds out at least one document when there
/// are two or more, and never all of them.
pub fn split_dev(docs: &[Document], fraction: f64, seed: u64) -> (Vec<Document>, Vec<Document>) {
    let n = docs.len();
    let n_dev = match n {
        0 | 1 => 0,
        _ if fraction > 0.0 => ((fraction * n as f64).round() as usize).clamp(1, n - 1),
        _ => 0,
    };
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_dev = vec![false; n];
    for &i in &idx[..n_dev] {
        is_dev[i] = true;
    }
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (d, flag) in docs.iter().zip(is_dev) {
        if flag {
            dev.push(d.clone());
        } else {
            train.push(d.clone());
        }
    }
    (train, dev)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub task_lr: f64,
    pub encoder_lr: f64,
    /// Mean per-document loss terms.
    pub loss: LossTerms,
    pub dev: Option<DevSummary>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub reports: Vec<EpochReport>,
    /// 1-based epoch whose parameters are in `best_params`.
    pub best_epoch: usize,
    pub best_sl_f1: Option<f64>,
    pub best_params: ParamStore,
    /// Per-step total losses, in step order.
    pub step_losses: Vec<f64>,
}

/// Trains `model` in place. After every epoch `on_epoch` sees the report
/// and the current model; returning `ControlFlow::Break` stops early.
/// Model selection uses dev span-level CoNLL F1 (the last epoch when
/// `dev` is empty).
pub fn train(
    model: &mut CorefModel,
    train_docs: &[Document],
    dev_docs: &[Document],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport, &CorefModel) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    for d in train_docs.iter().chain(dev_docs) {
        d.validate(model.genres())?;
    }
    let word_level: Vec<WordLevelDoc> = train_docs.iter().map(to_word_level).collect();
    let mut order: Vec<usize> = (0..train_docs.len())
        .filter(|&i| train_docs[i].num_words() > 0)
        .collect();
    let total_steps = cfg.epochs * order.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.store);
    let mut step = 0;
    let mut outcome = TrainOutcome {
        reports: Vec::new(),
        best_epoch: 0,
        best_sl_f1: None,
        best_params: model.store.clone(),
        step_losses: Vec::with_capacity(total_steps),
    };

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        let mut last_decay = cfg.decay(step, total_steps);
        for &i in &order {
            let doc = &train_docs[i];
            let mut g = Graph::training(rng.gen());
            let (loss, terms) = document_loss(model, &mut g, doc, &word_level[i], cfg.alpha, cfg.bce_reduction)?;
            g.check_finite().map_err(|e| match e {
                Error::NonFinite { op } => Error::NonFinite {
                    op: format!("{op} (document {}, epoch {epoch})", doc.doc_id),
                },
                e => e,
            })?;
            let grads = g.backward(loss);
            model.store.zero_grad();
            model.store.accumulate(&grads);
            model.store.clip_grad_norm(cfg.grad_clip);
            last_decay = cfg.decay(step, total_steps);
            let encoder = &model.encoder;
            let (enc_lr, task_lr) = (cfg.encoder_lr * last_decay, cfg.task_lr * last_decay);
            adam.step(&mut model.store, |id| if encoder.owns(id) { enc_lr } else { task_lr });
            step += 1;
            outcome.step_losses.push(terms.total);
            sum.add(&terms);
        }
        let loss = sum.scaled(1.0 / order.len().max(1) as f64);

        let dev = if dev_docs.is_empty() {
            None
        } else {
            Some(evaluate(model, dev_docs)?.summary())
        };
        let report = EpochReport {
            epoch,
            task_lr: cfg.task_lr * last_decay,
            encoder_lr: cfg.encoder_lr * last_decay,
            loss,
            dev,
            seconds: started.elapsed().as_secs_f64(),
        };
        match dev {
            Some(d) => info!(
                "epoch {epoch}: loss {:.4} (nlml {:.4}, bce {:.4}, span {:.4}); dev WL F1 {:.4}, SA {:.4}, SL F1 {:.4}",
                loss.total, loss.nlml, loss.bce, loss.span, d.wl_f1, d.span_accuracy, d.sl_f1
            ),
            None => info!(
                "epoch {epoch}: loss {:.4} (nlml {:.4}, bce {:.4}, span {:.4})",
                loss.total, loss.nlml, loss.bce, loss.span
            ),
        }

        let improved = match (dev, outcome.best_sl_f1) {
            (None, _) => true,
            (Some(d), None) => {
                outcome.best_sl_f1 = Some(d.sl_f1);
                true
            }
            (Some(d), Some(best)) if d.sl_f1 > best => {
                outcome.best_sl_f1 = Some(d.sl_f1);
                true
            }
            _ => false,
        };
        if improved {
            outcome.best_epoch = epoch;
            outcome.best_params = model.store.clone();
        }
        let flow = on_epoch(&report, model);
        outcome.reports.push(report);
        if flow.is_break() {
            break;
        }
    }
    Ok(outcome)
}
