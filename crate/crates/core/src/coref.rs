//! Word-level antecedent scoring, decoding and clustering.
//!
//! Every word is a candidate mention. A bilinear coarse score shortlists
//! the `k` best antecedents of each word; a feed-forward network rescores
//! the shortlist from the pair representation
//! `[T_i, T_j, T_i ⊙ T_j, φ(i, j)]`. A word links to its best-scoring
//! candidate when that score beats the dummy antecedent, which sits at 0.

use std::ops::Range;

use rand::Rng;

use crate::corpus::{Document, Genres};
use crate::error::{Error, Result};
use crate::layers::{glorot, Ffnn};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

pub const NUM_DISTANCE_BUCKETS: usize = 9;

/// Distance buckets 1, 2, 3, 4, 5–7, 8–15, 16–31, 32–63, 64+.
pub fn distance_bucket(distance: usize) -> usize {
    assert!(distance >= 1, "antecedent distance must be positive");
    if distance <= 4 {
        distance - 1
    } else {
        // 5..=7 -> 4, 8..=15 -> 5, ...
        (usize::BITS - distance.leading_zeros()) as usize + 1
    }
    .min(NUM_DISTANCE_BUCKETS - 1)
}

/// Speakers match only when both are known and equal.
pub fn same_speaker(a: &str, b: &str) -> bool {
    !a.is_empty() && !b.is_empty() && a == b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairFeatures {
    pub distance_bucket: usize,
    pub same_speaker: bool,
    pub genre: usize,
}

/// Per-document inputs for pair features.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub speakers: Vec<String>,
    pub genre: usize,
}

impl FeatureContext {
    pub fn of(doc: &Document, genres: &Genres) -> Result<Self> {
        let genre = genres
            .index(&doc.genre)
            .ok_or_else(|| Error::Config(format!("unknown genre code {:?}", doc.genre)))?;
        Ok(FeatureContext {
            speakers: doc.speakers.iter().flatten().cloned().collect(),
            genre,
        })
    }

    pub fn pair(&self, i: usize, j: usize) -> PairFeatures {
        PairFeatures {
            distance_bucket: distance_bucket(i - j),
            same_speaker: same_speaker(&self.speakers[i], &self.speakers[j]),
            genre: self.genre,
        }
    }
}

/// Shortlisted antecedents. `groups[i]` indexes the rows of `pairs`
/// holding word `i`'s candidates; each pair is `(anaphor, antecedent)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Candidates {
    pub groups: Vec<Range<usize>>,
    pub pairs: Vec<(usize, usize)>,
}

impl Candidates {
    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn of(&self, i: usize) -> &[(usize, usize)] {
        &self.pairs[self.groups[i].clone()]
    }

    /// Every left word of every word, in index order.
    pub fn all(n: usize) -> Self {
        let mut c = Candidates::default();
        for i in 0..n {
            let start = c.pairs.len();
            c.pairs.extend((0..i).map(|j| (i, j)));
            c.groups.push(start..c.pairs.len());
        }
        c
    }
}

/// Bilinear coarse scores `T · W_c · Tᵀ` for all word pairs.
pub fn coarse_scores(g: &mut Graph, t: Var, w_c: Var) -> Var {
    let tw = g.matmul(t, w_c);
    let tt = g.transpose(t);
    g.matmul(tw, tt)
}

/// Copy of a coarse score matrix with every entry `j ≥ i` set to −∞.
pub fn mask_coarse(scores: &Tensor) -> Tensor {
    let mut out = scores.clone();
    let (n, m) = out.dims2();
    for i in 0..n {
        for j in i..m {
            out.set(i, j, f64::NEG_INFINITY);
        }
    }
    out
}

/// Keeps the `min(k, i)` highest-scoring left candidates of each word;
/// ties go to the nearer candidate. Candidates are listed best first.
pub fn top_k_prune(coarse: &Tensor, k: usize) -> Candidates {
    assert!(k >= 1, "k must be at least 1");
    let n = coarse.rows();
    let mut c = Candidates::default();
    for i in 0..n {
        let mut left: Vec<usize> = (0..i).collect();
        left.sort_by(|&a, &b| {
            coarse
                .get(i, b)
                .total_cmp(&coarse.get(i, a))
                .then(b.cmp(&a))
        });
        left.truncate(k);
        let start = c.pairs.len();
        c.pairs.extend(left.into_iter().map(|j| (i, j)));
        c.groups.push(start..c.pairs.len());
    }
    c
}

/// Parameters of the antecedent scorer.
#[derive(Debug, Clone)]
pub struct AntecedentScorer {
    pub w_c: ParamId,
    pub ffnn: Ffnn,
    pub distance_emb: ParamId,
    pub genre_emb: ParamId,
    pub speaker_emb: ParamId,
}

impl AntecedentScorer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        dim: usize,
        feature_dim: usize,
        hidden: &[usize],
        num_genres: usize,
        rng: &mut R,
    ) -> Self {
        let w_c = store.add("W_c", glorot(dim, dim, rng));
        let distance_emb = store.add(
            "feat.distance",
            Tensor::uniform(&[NUM_DISTANCE_BUCKETS, feature_dim], 0.1, rng),
        );
        let genre_emb = store.add("feat.genre", Tensor::uniform(&[num_genres, feature_dim], 0.1, rng));
        let speaker_emb = store.add("feat.speaker", Tensor::uniform(&[2, feature_dim], 0.1, rng));
        let mut widths = vec![3 * dim + 3 * feature_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let ffnn = Ffnn::new(store, "ffnn_a", &widths, false, rng);
        AntecedentScorer {
            w_c,
            ffnn,
            distance_emb,
            genre_emb,
            speaker_emb,
        }
    }

    /// Fine scores `FFNN_a([T_i, T_j, T_i ⊙ T_j, φ])` as a column over the
    /// candidate pairs.
    pub fn fine_scores(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        t: Var,
        cands: &Candidates,
        features: &FeatureContext,
        dropout: f64,
    ) -> Var {
        let anaphors: Vec<usize> = cands.pairs.iter().map(|p| p.0).collect();
        let antecedents: Vec<usize> = cands.pairs.iter().map(|p| p.1).collect();
        let feats: Vec<PairFeatures> = cands.pairs.iter().map(|&(i, j)| features.pair(i, j)).collect();
        let ti = g.gather_rows(t, &anaphors);
        let tj = g.gather_rows(t, &antecedents);
        let prod = g.mul(ti, tj);
        let dist_table = g.param(store, self.distance_emb);
        let dist = g.gather_rows(
            dist_table,
            &feats.iter().map(|f| f.distance_bucket).collect::<Vec<_>>(),
        );
        let genre_table = g.param(store, self.genre_emb);
        let genre = g.gather_rows(genre_table, &feats.iter().map(|f| f.genre).collect::<Vec<_>>());
        let spk_table = g.param(store, self.speaker_emb);
        let spk = g.gather_rows(
            spk_table,
            &feats.iter().map(|f| usize::from(f.same_speaker)).collect::<Vec<_>>(),
        );
        let pair = g.concat_cols(&[ti, tj, prod, dist, genre, spk]);
        let pair = g.dropout(pair, dropout);
        self.ffnn.forward(g, store, pair, dropout)
    }

    /// Full scoring pass for one document.
    pub fn score(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        t: Var,
        features: &FeatureContext,
        k: usize,
        dropout: f64,
    ) -> ScoredPairs {
        let w_c = g.param(store, self.w_c);
        let coarse = coarse_scores(g, t, w_c);
        let candidates = top_k_prune(&mask_coarse(g.value(coarse)), k);
        let coarse_pairs = g.gather_elems(coarse, &candidates.pairs);
        let fine = self.fine_scores(g, store, t, &candidates, features, dropout);
        let total = g.add(coarse_pairs, fine);
        ScoredPairs {
            candidates,
            coarse: coarse_pairs,
            fine,
            total,
        }
    }
}

/// Graph handles for a scored document.
#[derive(Debug, Clone)]
pub struct ScoredPairs {
    pub candidates: Candidates,
    pub coarse: Var,
    pub fine: Var,
    pub total: Var,
}

impl ScoredPairs {
    pub fn antecedent_scores(&self, g: &Graph) -> AntecedentScores {
        total_scores(
            &self.candidates,
            g.value(self.coarse).data(),
            g.value(self.fine).data(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub antecedent: usize,
    pub coarse: f64,
    pub fine: f64,
    pub total: f64,
}

/// Per-word candidate scores; the dummy antecedent is implicit at 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AntecedentScores {
    pub per_word: Vec<Vec<ScoredCandidate>>,
}

impl AntecedentScores {
    pub const DUMMY_SCORE: f64 = 0.0;

    pub fn num_pairs(&self) -> usize {
        self.per_word.iter().map(Vec::len).sum()
    }
}

/// `s = s_c + s_a` for every candidate pair.
pub fn total_scores(cands: &Candidates, coarse: &[f64], fine: &[f64]) -> AntecedentScores {
    assert_eq!(coarse.len(), cands.num_pairs());
    assert_eq!(fine.len(), cands.num_pairs());
    let per_word = cands
        .groups
        .iter()
        .map(|g| {
            g.clone()
                .map(|p| ScoredCandidate {
                    antecedent: cands.pairs[p].1,
                    coarse: coarse[p],
                    fine: fine[p],
                    total: coarse[p] + fine[p],
                })
                .collect()
        })
        .collect();
    AntecedentScores { per_word }
}

/// Best candidate of each word if its total score is strictly positive;
/// ties go to the nearer candidate.
pub fn decode_antecedents(scores: &AntecedentScores) -> Vec<Option<usize>> {
    scores
        .per_word
        .iter()
        .map(|cands| {
            cands
                .iter()
                .filter(|c| c.total > AntecedentScores::DUMMY_SCORE)
                .max_by(|a, b| a.total.total_cmp(&b.total).then(a.antecedent.cmp(&b.antecedent)))
                .map(|c| c.antecedent)
        })
        .collect()
}

/// Connected components of the antecedent links, singletons dropped.
/// Clusters are sorted and ordered by first member.
pub fn build_clusters(links: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut cluster_of: Vec<Option<usize>> = vec![None; links.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, link) in links.iter().enumerate() {
        let Some(j) = *link else { continue };
        assert!(j < i, "antecedent {j} of word {i} is not to its left");
        let c = match cluster_of[j] {
            Some(c) => c,
            None => {
                clusters.push(vec![j]);
                cluster_of[j] = Some(clusters.len() - 1);
                clusters.len() - 1
            }
        };
        cluster_of[i] = Some(c);
        clusters[c].push(i);
    }
    // j < i and words are visited in order, so each cluster is already sorted
    clusters
}
