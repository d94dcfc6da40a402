//! Writes precomputed subtoken embeddings to a binary embedding file,
//! loads it back and pools them into one vector per word.
//!
//! cargo run --example load_embeddings

use rand::{Rng, SeedableRng};
use wlcoref::encoder::{EmbeddingFile, SubtokenMatrix};
use wlcoref::numerics::{Graph, Tensor};
use wlcoref::synth::{generate_corpus, SynthConfig};
use wlcoref::{CorefModel, ModelConfig};

const DIM: usize = 8;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let docs = generate_corpus(&SynthConfig {
        num_docs: 3,
        ..SynthConfig::default()
    });
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mats: Vec<SubtokenMatrix> = docs
        .iter()
        .map(|d| {
            let mut token_map = Vec::new();
            let mut n = 0;
            for _ in 0..d.num_words() {
                let k = rng.gen_range(1..=2);
                token_map.push((n, n + k - 1));
                n += k;
            }
            SubtokenMatrix {
                x: Tensor::uniform(&[n, DIM], 1.0, &mut rng),
                token_map,
            }
        })
        .collect();

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("corpus.wlemb");
    let pairs: Vec<(&str, &SubtokenMatrix)> = docs.iter().map(|d| d.doc_id.as_str()).zip(&mats).collect();
    EmbeddingFile::write(&mut std::fs::File::create(&path)?, &pairs)?;

    let file = EmbeddingFile::load(&path)?;
    println!("{} documents, dimension {:?}", file.len(), file.dim());
    let model = CorefModel::with_embeddings(
        ModelConfig {
            dim: DIM,
            ..ModelConfig::default()
        },
        file,
    )?;
    for (doc, m) in docs.iter().zip(&mats) {
        let mut g = Graph::new();
        let t = model.encoder.encode(&mut g, &model.store, doc)?;
        println!(
            "{}: {} subtokens, {} words -> {:?}",
            doc.doc_id,
            m.x.rows(),
            doc.num_words(),
            g.value(t).shape()
        );
    }
    Ok(())
}
