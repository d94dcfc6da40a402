//! Overfits the default model on a synthetic corpus and stops once the
//! word-level F1 and span accuracy on that corpus both reach 0.95.
//!
//! cargo run --release --example train_toy -- [epochs]

use std::ops::ControlFlow;
use std::time::Instant;

use wlcoref::synth::{generate_corpus, SynthConfig};
use wlcoref::training::train;
use wlcoref::{CorefModel, ModelConfig, TrainConfig};

fn main() -> wlcoref::Result<()> {
    let epochs = std::env::args().nth(1).map_or(300, |s| s.parse().expect("epochs"));
    let corpus = generate_corpus(&SynthConfig::default());
    let mut model = CorefModel::toy(ModelConfig::default())?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let started = Instant::now();
    let outcome = train(&mut model, &corpus, &corpus, &cfg, |r, _| {
        let d = r.dev.expect("dev metrics");
        println!(
            "epoch {:>3}  loss {:>8.4}  WL F1 {:.4}  SA {:.4}  SL F1 {:.4}  ({:.1}s)",
            r.epoch,
            r.loss.total,
            d.wl_f1,
            d.span_accuracy,
            d.sl_f1,
            started.elapsed().as_secs_f64()
        );
        if d.wl_f1 >= 0.95 && d.span_accuracy >= 0.95 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    println!(
        "stopped after {} epochs; best span-level F1 {:.4} at epoch {}",
        outcome.reports.len(),
        outcome.best_sl_f1.unwrap_or(0.0),
        outcome.best_epoch
    );
    Ok(())
}
