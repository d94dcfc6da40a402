//! Converts span-level gold clusters to word-level clusters and shows the
//! head chosen for every mention.
//!
//! cargo run --example transform_corpus

use wlcoref::corpus::to_word_level;
use wlcoref::synth::generate_document;

fn main() {
    use rand::SeedableRng;
    let doc = generate_document("demo", 3, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
    let words: Vec<&str> = doc.sentences.iter().flatten().map(String::as_str).collect();
    for (s, sent) in doc.sentences.iter().enumerate() {
        println!("sentence {s}: {}", sent.join(" "));
    }
    let wl = to_word_level(&doc);
    for (c, cluster) in wl.head_clusters.iter().enumerate() {
        println!("cluster {c}");
        for head in cluster {
            let span = wl.head_to_span[head];
            let text = &doc.sentences[span.sentence][span.start..=span.end];
            println!("  head {:>2} {:<10} <- [{}]", head, words[*head], text.join(" "));
        }
    }
    println!("collisions: {}", wl.collisions.len());
    println!("{}", serde_json::to_string(&wl).expect("serializable"));
}
