//! Brute-force oracles and random inputs shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wlcoref::coref::{Candidates, FeatureContext};
use wlcoref::corpus::{to_word_level, Document, Span, ROOT};
use wlcoref::numerics::Graph;
use wlcoref::{CorefModel, ModelConfig};

pub type Clustering = Vec<Vec<u32>>;

/// Random clustering over a random subset of `0..max_mentions`.
pub fn random_clustering<R: Rng>(rng: &mut R, max_mentions: u32, max_clusters: usize) -> Clustering {
    let mut mentions: Vec<u32> = (0..max_mentions).filter(|_| rng.gen_bool(0.7)).collect();
    mentions.shuffle(rng);
    let n_clusters = rng.gen_range(0..=max_clusters).min(mentions.len());
    let mut clusters = vec![Vec::new(); n_clusters];
    for m in mentions {
        if n_clusters == 0 {
            break;
        }
        clusters[rng.gen_range(0..n_clusters)].push(m);
    }
    clusters.retain(|c| !c.is_empty());
    clusters
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(n: f64, d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        n / d
    }
}

/// Number of pieces `cluster` is cut into by `other`, found by linking
/// every pair of mentions that share a cluster of `other` and counting
/// connected components.
fn partitions(cluster: &[u32], other: &Clustering) -> usize {
    let n = cluster.len();
    let mut comp: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in 0..n {
            let linked = other
                .iter()
                .any(|c| c.contains(&cluster[a]) && c.contains(&cluster[b]));
            if linked {
                let (ca, cb) = (comp[a], comp[b]);
                if ca != cb {
                    for c in comp.iter_mut() {
                        if *c == cb {
                            *c = ca;
                        }
                    }
                }
            }
        }
    }
    let mut roots = comp.clone();
    roots.sort();
    roots.dedup();
    roots.len()
}

/// MUC (P, R, F1) by link counting.
pub fn muc_oracle(key: &Clustering, response: &Clustering) -> (f64, f64, f64) {
    let side = |a: &Clustering, b: &Clustering| {
        let num: usize = a.iter().map(|c| c.len() - partitions(c, b)).sum();
        let den: usize = a.iter().map(|c| c.len() - 1).sum();
        ratio(num as f64, den as f64)
    };
    let (r, p) = (side(key, response), side(response, key));
    (p, r, f1(p, r))
}

/// B³ (P, R, F1) by per-mention averaging; a mention missing from the
/// other side has an empty intersection.
pub fn b_cubed_oracle(key: &Clustering, response: &Clustering) -> (f64, f64, f64) {
    let side = |a: &Clustering, b: &Clustering| {
        let mut num = 0.0;
        let mut den = 0.0;
        for c in a {
            for m in c {
                let inter = b
                    .iter()
                    .find(|o| o.contains(m))
                    .map_or(0, |o| o.iter().filter(|x| c.contains(x)).count());
                num += inter as f64 / c.len() as f64;
                den += 1.0;
            }
        }
        ratio(num, den)
    };
    let (r, p) = (side(key, response), side(response, key));
    (p, r, f1(p, r))
}

pub fn phi4_oracle(a: &[u32], b: &[u32]) -> f64 {
    let inter = a.iter().filter(|x| b.contains(x)).count();
    2.0 * inter as f64 / (a.len() + b.len()) as f64
}

/// Best total similarity over every one-to-one partial alignment.
pub fn best_alignment(key: &Clustering, response: &Clustering) -> f64 {
    fn go(i: usize, used: &mut Vec<bool>, key: &Clustering, resp: &Clustering) -> f64 {
        if i == key.len() {
            return 0.0;
        }
        let mut best = go(i + 1, used, key, resp);
        for j in 0..resp.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(phi4_oracle(&key[i], &resp[j]) + go(i + 1, used, key, resp));
                used[j] = false;
            }
        }
        best
    }
    go(0, &mut vec![false; response.len()], key, response)
}

/// CEAF-φ4 (P, R, F1) by exhaustive alignment search.
pub fn ceaf_oracle(key: &Clustering, response: &Clustering) -> (f64, f64, f64) {
    let total = best_alignment(key, response);
    let r = ratio(total, key.len() as f64);
    let p = ratio(total, response.len() as f64);
    (p, r, f1(p, r))
}

/// Random valid document: acyclic dependency heads and gold clusters of
/// distinct spans. `max_words` bounds the document length.
pub fn random_document<R: Rng>(rng: &mut R, id: &str, max_words: usize, max_sentence: usize) -> Document {
    let mut sentences = Vec::new();
    let mut dep_head = Vec::new();
    let mut total = 0;
    let n_sent = rng.gen_range(1..=6);
    for _ in 0..n_sent {
        let room = max_words.saturating_sub(total).min(max_sentence);
        if room == 0 {
            break;
        }
        let m = rng.gen_range(1..=room);
        total += m;
        sentences.push((0..m).map(|i| format!("w{}", rng.gen_range(0..30) + i % 2)).collect::<Vec<_>>());
        // heads point to words earlier in a random order: acyclic
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(rng);
        let mut heads = vec![ROOT; m];
        for (pos, &w) in order.iter().enumerate() {
            if pos > 0 && rng.gen_bool(0.85) {
                heads[w] = order[rng.gen_range(0..pos)] as i64;
            }
        }
        dep_head.push(heads);
    }
    if sentences.is_empty() {
        sentences.push(vec!["w".to_string()]);
        dep_head.push(vec![ROOT]);
    }
    let speakers = sentences
        .iter()
        .map(|s| vec![if rng.gen_bool(0.5) { "a" } else { "b" }.to_string(); s.len()])
        .collect();

    let mut spans = Vec::new();
    for (s, sent) in sentences.iter().enumerate() {
        for _ in 0..rng.gen_range(0..=3) {
            let a = rng.gen_range(0..sent.len());
            let b = rng.gen_range(a..sent.len().min(a + 4));
            spans.push(Span::new(s, a, b));
        }
    }
    spans.sort();
    spans.dedup();
    spans.shuffle(rng);
    let n_clusters = rng.gen_range(1..=3);
    let mut clusters = vec![Vec::new(); n_clusters];
    for sp in spans {
        clusters[rng.gen_range(0..n_clusters)].push(sp);
    }
    clusters.retain(|c: &Vec<Span>| !c.is_empty());
    for c in &mut clusters {
        c.sort();
    }
    Document {
        doc_id: id.to_string(),
        genre: ["nw", "bc", "wb"].choose(rng).unwrap().to_string(),
        sentences,
        speakers,
        dep_head,
        clusters,
    }
}

/// Counts of the audit by enumerating every span and every span pair.
pub struct BruteAudit {
    pub wl_mentions: u64,
    pub wl_pairs: u64,
    pub sl_mentions: u64,
    pub sl_pairs_lexicographic: u64,
    pub sl_pairs_strict: u64,
}

pub fn brute_audit(docs: &[Document]) -> BruteAudit {
    let mut out = BruteAudit {
        wl_mentions: 0,
        wl_pairs: 0,
        sl_mentions: 0,
        sl_pairs_lexicographic: 0,
        sl_pairs_strict: 0,
    };
    for doc in docs {
        let n = doc.num_words();
        out.wl_mentions += n as u64;
        for i in 0..n {
            for j in 0..i {
                let _ = j;
                out.wl_pairs += 1;
            }
        }
        // (sentence, start, end, global start, global end)
        let mut spans = Vec::new();
        let mut offset = 0;
        for (s, sent) in doc.sentences.iter().enumerate() {
            for a in 0..sent.len() {
                for b in a..sent.len() {
                    spans.push((s, a, b, offset + a, offset + b));
                }
            }
            offset += sent.len();
        }
        out.sl_mentions += spans.len() as u64;
        for x in &spans {
            for y in &spans {
                if (x.0, x.1, x.2) < (y.0, y.1, y.2) {
                    out.sl_pairs_lexicographic += 1;
                }
                if x.4 < y.3 {
                    out.sl_pairs_strict += 1;
                }
            }
        }
    }
    out
}

/// Span boundary candidates: for each word-level gold mention, the start
/// positions at or left of the head plus the end positions at or right of it.
pub fn brute_sbc(docs: &[Document]) -> u64 {
    let mut total = 0;
    for doc in docs {
        for (&head, span) in &to_word_level(doc).head_to_span {
            let (s, h) = doc.locate(head);
            assert_eq!(s, span.sentence);
            let m = doc.sentences[s].len();
            total += (0..m).filter(|&p| p <= h).count() as u64;
            total += (0..m).filter(|&p| p >= h).count() as u64;
        }
    }
    total
}

/// Small toy model with the output bias shifted so that some links clear
/// the dummy antecedent.
pub fn small_model(seed: u64, k: usize) -> CorefModel {
    let mut model = CorefModel::toy(ModelConfig {
        dim: 8,
        vocab_buckets: 64,
        feature_dim: 4,
        coref_hidden: vec![8],
        span_hidden: 6,
        k,
        seed,
        ..ModelConfig::default()
    })
    .unwrap();
    let (_, bias) = model.scorer.ffnn.output_layer();
    let shift = ChaCha8Rng::seed_from_u64(seed).gen_range(-1.0..2.0);
    model.store.value_mut(bias).fill(shift);
    model
}

/// Scores of every pair `j < i` computed without pruning:
/// `full[i][j] = T_i·W_c·T_j + fine(i, j)`.
pub fn unpruned_scores(model: &CorefModel, doc: &Document) -> Vec<Vec<f64>> {
    let n = doc.num_words();
    let mut g = Graph::new();
    let t = model.encoder.encode(&mut g, &model.store, doc).unwrap();
    let tv = g.value(t).clone();
    let w = model.store.value(model.scorer.w_c);
    let d = tv.cols();
    let features = FeatureContext::of(doc, model.genres()).unwrap();
    let all = Candidates::all(n);
    let fine = model.scorer.fine_scores(&mut g, &model.store, t, &all, &features, 0.0);
    let fine = g.value(fine).data().to_vec();
    let mut full = vec![vec![f64::NEG_INFINITY; n]; n];
    for (p, &(i, j)) in all.pairs.iter().enumerate() {
        let mut coarse = 0.0;
        for a in 0..d {
            for b in 0..d {
                coarse += tv.get(i, a) * w.get(a, b) * tv.get(j, b);
            }
        }
        full[i][j] = coarse + fine[p];
    }
    full
}

/// Highest-scoring positive antecedent, ties to the nearer candidate.
pub fn decode_oracle(full: &[Vec<f64>]) -> Vec<Option<usize>> {
    full.iter()
        .enumerate()
        .map(|(i, row)| {
            let mut best: Option<usize> = None;
            for j in 0..i {
                if row[j] > 0.0 && best.is_none_or(|b| row[j] >= row[b]) {
                    best = Some(j);
                }
            }
            best
        })
        .collect()
}
