//! Trains briefly on one synthetic document, then recovers each gold
//! mention's span from its head word alone.
//!
//! cargo run --release --example span_reconstruction

use std::ops::ControlFlow;

use rand::SeedableRng;
use wlcoref::corpus::to_word_level;
use wlcoref::numerics::Graph;
use wlcoref::synth::generate_document;
use wlcoref::training::train;
use wlcoref::{CorefModel, ModelConfig, TrainConfig};

fn main() -> wlcoref::Result<()> {
    let doc = generate_document("demo", 4, &mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
    let docs = vec![doc];
    let mut model = CorefModel::toy(ModelConfig::default())?;
    let cfg = TrainConfig {
        epochs: 60,
        ..TrainConfig::default()
    };
    train(&mut model, &docs, &[], &cfg, |_, _| ControlFlow::Continue(()))?;

    let doc = &docs[0];
    let wl = to_word_level(doc);
    let heads: Vec<usize> = wl.head_to_span.keys().copied().collect();
    let mut g = Graph::new();
    let t = model.encoder.encode(&mut g, &model.store, doc)?;
    let predicted = model.head_spans(&mut g, t, doc, &heads);
    let mut correct = 0;
    for (head, span) in heads.iter().zip(&predicted) {
        let gold = wl.head_to_span[head];
        let sent = &doc.sentences[gold.sentence];
        correct += usize::from(gold == *span);
        println!(
            "{} gold [{}] predicted [{}]",
            if gold == *span { "ok  " } else { "miss" },
            sent[gold.start..=gold.end].join(" "),
            sent[span.start..=span.end].join(" ")
        );
    }
    println!("{correct}/{} spans recovered", heads.len());
    Ok(())
}
