//! Coarse scoring, top-k pruning and fine scoring for one document with
//! an untrained toy model. Prints each word's candidates and the decoded
//! antecedent; the dummy antecedent scores 0.
//!
//! cargo run --example score_antecedents -- [k]

use rand::SeedableRng;
use wlcoref::coref::{build_clusters, decode_antecedents};
use wlcoref::numerics::Graph;
use wlcoref::synth::generate_document;
use wlcoref::{CorefModel, ModelConfig};

fn main() -> wlcoref::Result<()> {
    let k = std::env::args().nth(1).map_or(4, |s| s.parse().expect("k"));
    let doc = generate_document("demo", 2, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
    let words: Vec<&str> = doc.sentences.iter().flatten().map(String::as_str).collect();
    let model = CorefModel::toy(ModelConfig {
        k,
        ..ModelConfig::default()
    })?;
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, &doc, 0.0)?;
    let scores = fwd.pairs.antecedent_scores(&g);
    let links = decode_antecedents(&scores);
    println!("{} words, k = {k}, {} scored pairs", words.len(), scores.num_pairs());
    for (i, cands) in scores.per_word.iter().enumerate() {
        let shown: Vec<String> = cands
            .iter()
            .map(|c| format!("{}:{:+.3}", words[c.antecedent], c.total))
            .collect();
        let pick = links[i].map_or("-", |j| words[j]);
        println!("{:>2} {:<10} -> {:<10} [{}]", i, words[i], pick, shown.join(" "));
    }
    println!("clusters: {:?}", build_clusters(&links));
    Ok(())
}
