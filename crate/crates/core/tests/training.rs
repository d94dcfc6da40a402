mod common;

use std::ops::ControlFlow;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wlcoref::corpus::to_word_level;
use wlcoref::numerics::{Graph, Reduction};
use wlcoref::synth::{generate_corpus, generate_document, SynthConfig};
use wlcoref::training::{document_loss, evaluate, split_dev, train};
use wlcoref::{CorefModel, Error, ModelConfig, TrainConfig};

fn small_config(seed: u64) -> ModelConfig {
    ModelConfig {
        dim: 16,
        vocab_buckets: 256,
        feature_dim: 4,
        coref_hidden: vec![16],
        span_hidden: 16,
        seed,
        ..ModelConfig::default()
    }
}

fn corpus(n: usize) -> Vec<wlcoref::Document> {
    generate_corpus(&SynthConfig {
        num_docs: n,
        ..SynthConfig::default()
    })
}

fn run(seed: u64, epochs: usize) -> Vec<f64> {
    let docs = corpus(4);
    let mut model = CorefModel::toy(small_config(seed)).unwrap();
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    train(&mut model, &docs, &[], &cfg, |_, _| ControlFlow::Continue(()))
        .unwrap()
        .step_losses
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let a = run(5, 3);
    let b = run(5, 3);
    assert_eq!(a.len(), 12);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a, run(6, 3));
}

#[test]
fn alpha_zero_leaves_pure_nlml_plus_span() {
    let docs = corpus(2);
    let model = CorefModel::toy(small_config(1)).unwrap();
    for doc in &docs {
        let wl = to_word_level(doc);
        let mut g = Graph::new();
        let (_, t) = document_loss(&model, &mut g, doc, &wl, 0.0, Reduction::Mean).unwrap();
        assert!(t.bce > 0.0);
        assert_eq!(t.total, t.nlml + t.span);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn loss_terms_are_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let doc = common::random_document(&mut rng, "d", 40, 12);
        let wl = to_word_level(&doc);
        let model = CorefModel::toy(small_config(seed)).unwrap();
        let mut g = Graph::new();
        let (_, t) = document_loss(&model, &mut g, &doc, &wl, 0.5, Reduction::Sum).unwrap();
        prop_assert!(t.nlml >= 0.0 && t.bce >= 0.0 && t.span >= 0.0);
    }
}

#[test]
fn single_document_is_learned_exactly() {
    let doc = generate_document("one", 4, &mut ChaCha8Rng::seed_from_u64(3));
    let docs = vec![doc];
    let mut model = CorefModel::toy(ModelConfig::default()).unwrap();
    let cfg = TrainConfig {
        epochs: 150,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &docs, &docs, &cfg, |_, _| ControlFlow::Continue(())).unwrap();
    let losses: Vec<f64> = out.reports.iter().map(|r| r.loss.total).collect();
    assert!(losses[..6].windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    let m = evaluate(&model, &docs).unwrap();
    assert_eq!(m.wl_f1(), 1.0);
    assert_eq!(m.span_accuracy(), 1.0);
    assert_eq!(out.best_sl_f1, Some(1.0));
}

#[test]
fn learning_rate_decays_to_last_step_fraction() {
    let docs = corpus(3);
    let mut model = CorefModel::toy(small_config(2)).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &docs, &[], &cfg, |_, _| ControlFlow::Continue(())).unwrap();
    let total_steps = (cfg.epochs * docs.len()) as f64;
    let last = out.reports.last().unwrap();
    assert!(last.task_lr <= cfg.task_lr / total_steps + 1e-15);
    assert!(last.encoder_lr <= cfg.encoder_lr / total_steps + 1e-15);
    assert_eq!(out.best_epoch, 4);
}

#[test]
fn early_stop_and_best_epoch_selection() {
    let docs = corpus(4);
    let mut model = CorefModel::toy(small_config(4)).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &docs, &docs, &cfg, |r, _| {
        if r.epoch == 3 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(out.reports.len(), 3);
    let best = out
        .reports
        .iter()
        .map(|r| r.dev.unwrap().sl_f1)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_sl_f1, Some(best));
    assert_eq!(out.reports[out.best_epoch - 1].dev.unwrap().sl_f1, best);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let docs = corpus(3);
    let mut model = CorefModel::toy(small_config(9)).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    train(&mut model, &docs, &[], &cfg, |_, _| ControlFlow::Continue(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let loaded = CorefModel::load(dir.path(), None).unwrap();
    assert_eq!(loaded.config, model.config);
    for doc in &docs {
        assert_eq!(loaded.predict(doc).unwrap(), model.predict(doc).unwrap());
    }
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let docs = corpus(1);
    let mut model = CorefModel::toy(small_config(1)).unwrap();
    let w_c = model.scorer.w_c;
    model.store.value_mut(w_c).fill(f64::NAN);
    let err = train(&mut model, &docs, &[], &TrainConfig::default(), |_, _| ControlFlow::Continue(()))
        .unwrap_err();
    match err {
        Error::NonFinite { op } => assert!(op.contains("synth_000"), "{op}"),
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn dev_split_is_deterministic_and_disjoint() {
    let docs = corpus(20);
    let (t1, d1) = split_dev(&docs, 0.1, 3);
    let (t2, d2) = split_dev(&docs, 0.1, 3);
    assert_eq!((t1.len(), d1.len()), (18, 2));
    assert_eq!(d1, d2);
    assert_eq!(t1, t2);
    assert!(d1.iter().all(|d| !t1.contains(d)));
    let (t, d) = split_dev(&docs[..1], 0.5, 0);
    assert_eq!((t.len(), d.len()), (1, 0));
    let (t, d) = split_dev(&docs[..3], 0.1, 0);
    assert_eq!((t.len(), d.len()), (2, 1));
}
