//! Mention and pair counts of a corpus at word and span level, under both
//! span ordering conventions.
//!
//! cargo run --example audit_corpus -- [corpus.jsonl]

use std::path::Path;

use wlcoref::corpus::load_corpus;
use wlcoref::metrics::{audit, OrderConvention};
use wlcoref::synth::{generate_corpus, SynthConfig};

fn main() -> wlcoref::Result<()> {
    let docs = match std::env::args().nth(1) {
        Some(path) => load_corpus(Path::new(&path))?,
        None => generate_corpus(&SynthConfig::default()),
    };
    for convention in [OrderConvention::Lexicographic, OrderConvention::StrictlyPrecedes] {
        println!("{convention:?}\n{}", audit(&docs, convention));
    }
    Ok(())
}
