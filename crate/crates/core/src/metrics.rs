//! CoNLL-2012 coreference metrics and the mention/pair complexity audit.
//!
//! Scores are kept as numerator/denominator pairs so that corpus-level
//! figures are micro-averaged across documents the way the reference
//! scorer does it.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::corpus::{to_word_level, Document};
use crate::error::{Error, Result};

/// A partition of mentions into coreference clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSet<M> {
    clusters: Vec<Vec<M>>,
}

impl<M> Default for ClusterSet<M> {
    fn default() -> Self {
        ClusterSet { clusters: Vec::new() }
    }
}

impl<M: Clone + Eq + Hash + fmt::Debug> ClusterSet<M> {
    /// Fails on empty clusters or a mention listed twice.
    pub fn new(clusters: Vec<Vec<M>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &clusters {
            if c.is_empty() {
                return Err(Error::Config("empty cluster in cluster set".into()));
            }
            for m in c {
                if !seen.insert(m) {
                    return Err(Error::Config(format!("mention {m:?} in more than one cluster")));
                }
            }
        }
        Ok(ClusterSet { clusters })
    }

    pub fn clusters(&self) -> &[Vec<M>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn num_mentions(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    fn index(&self) -> HashMap<&M, usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |m| (m, i)))
            .collect()
    }
}

/// Precision and recall as numerator/denominator pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl Score {
    pub fn precision(&self) -> f64 {
        ratio(self.p_num, self.p_den)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.r_num, self.r_den)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    pub fn prf(&self) -> (f64, f64, f64) {
        (self.precision(), self.recall(), self.f1())
    }
}

impl AddAssign for Score {
    fn add_assign(&mut self, o: Score) {
        self.p_num += o.p_num;
        self.p_den += o.p_den;
        self.r_num += o.r_num;
        self.r_den += o.r_den;
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Link-based MUC.
pub fn muc<M: Clone + Eq + Hash + fmt::Debug>(key: &ClusterSet<M>, response: &ClusterSet<M>) -> Score {
    let (r_num, r_den) = muc_side(key, response);
    let (p_num, p_den) = muc_side(response, key);
    Score {
        p_num,
        p_den,
        r_num,
        r_den,
    }
}

fn muc_side<M: Clone + Eq + Hash + fmt::Debug>(gold: &ClusterSet<M>, other: &ClusterSet<M>) -> (f64, f64) {
    let idx = other.index();
    let mut num = 0.0;
    let mut den = 0.0;
    for c in gold.clusters() {
        let mut parts = HashSet::new();
        let mut unmatched = 0usize;
        for m in c {
            match idx.get(m) {
                Some(&j) => {
                    parts.insert(j);
                }
                None => unmatched += 1,
            }
        }
        num += (c.len() - (parts.len() + unmatched)) as f64;
        den += (c.len() - 1) as f64;
    }
    (num, den)
}

/// Mention-based B³. A mention missing from the other side shares nothing
/// with it (reference-scorer convention).
pub fn b_cubed<M: Clone + Eq + Hash + fmt::Debug>(key: &ClusterSet<M>, response: &ClusterSet<M>) -> Score {
    let (r_num, r_den) = b3_side(key, response);
    let (p_num, p_den) = b3_side(response, key);
    Score {
        p_num,
        p_den,
        r_num,
        r_den,
    }
}

fn b3_side<M: Clone + Eq + Hash + fmt::Debug>(gold: &ClusterSet<M>, other: &ClusterSet<M>) -> (f64, f64) {
    let idx = other.index();
    let mut num = 0.0;
    let mut den = 0.0;
    for c in gold.clusters() {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for m in c {
            if let Some(&j) = idx.get(m) {
                *overlap.entry(j).or_default() += 1;
            }
        }
        let size = c.len() as f64;
        num += overlap
            .values()
            .map(|&k| (k * k) as f64 / size)
            .sum::<f64>();
        den += size;
    }
    (num, den)
}

/// φ4 similarity `2|K ∩ R| / (|K| + |R|)`.
pub fn phi4<M: Eq + Hash>(k: &[M], r: &[M]) -> f64 {
    let ks: HashSet<&M> = k.iter().collect();
    let common = r.iter().filter(|m| ks.contains(m)).count();
    2.0 * common as f64 / (k.len() + r.len()) as f64
}

/// Entity-based CEAF with φ4 under the optimal one-to-one alignment.
pub fn ceaf_phi4<M: Clone + Eq + Hash + fmt::Debug>(key: &ClusterSet<M>, response: &ClusterSet<M>) -> Score {
    let weights: Vec<Vec<f64>> = key
        .clusters()
        .iter()
        .map(|k| response.clusters().iter().map(|r| phi4(k, r)).collect())
        .collect();
    let (total, _) = max_weight_assignment(&weights);
    Score {
        p_num: total,
        p_den: response.len() as f64,
        r_num: total,
        r_den: key.len() as f64,
    }
}

/// Maximum-weight one-to-one assignment between rows and columns of a
/// (possibly rectangular) weight matrix. Returns the total weight and the
/// column chosen for each row.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> (f64, Vec<Option<usize>>) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (0.0, vec![None; rows]);
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| weights[r][c]).collect())
            .collect();
        let (total, col_to_row) = max_weight_assignment(&t);
        let mut out = vec![None; rows];
        for (c, r) in col_to_row.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return (total, out);
    }
    let cost: Vec<Vec<f64>> = weights
        .iter()
        .map(|row| row.iter().map(|w| -w).collect())
        .collect();
    let assign = hungarian(&cost);
    let total = assign
        .iter()
        .enumerate()
        .map(|(r, &c)| weights[r][c])
        .sum();
    (total, assign.into_iter().map(Some).collect())
}

/// Minimum-cost assignment for `n ≤ m`; shortest augmenting paths with
/// row/column potentials, O(n²m).
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Unweighted mean of the MUC, B³ and CEAF_φ4 F1 scores.
pub fn conll_f1<M: Clone + Eq + Hash + fmt::Debug>(key: &ClusterSet<M>, response: &ClusterSet<M>) -> f64 {
    Evaluation::of(key, response).conll_f1()
}

/// The three CoNLL metrics, accumulable across documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub muc: Score,
    pub b_cubed: Score,
    pub ceaf_phi4: Score,
}

impl Evaluation {
    pub fn of<M: Clone + Eq + Hash + fmt::Debug>(key: &ClusterSet<M>, response: &ClusterSet<M>) -> Self {
        Evaluation {
            muc: muc(key, response),
            b_cubed: b_cubed(key, response),
            ceaf_phi4: ceaf_phi4(key, response),
        }
    }

    pub fn add<M: Clone + Eq + Hash + fmt::Debug>(&mut self, key: &ClusterSet<M>, response: &ClusterSet<M>) {
        *self += Evaluation::of(key, response);
    }

    pub fn conll_f1(&self) -> f64 {
        (self.muc.f1() + self.b_cubed.f1() + self.ceaf_phi4.f1()) / 3.0
    }
}

impl AddAssign for Evaluation {
    fn add_assign(&mut self, o: Evaluation) {
        self.muc += o.muc;
        self.b_cubed += o.b_cubed;
        self.ceaf_phi4 += o.ceaf_phi4;
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8} {:>8} {:>8}", "metric", "P", "R", "F1")?;
        for (name, s) in [
            ("MUC", &self.muc),
            ("B3", &self.b_cubed),
            ("CEAF_phi4", &self.ceaf_phi4),
        ] {
            writeln!(
                f,
                "{:<10} {:>8.4} {:>8.4} {:>8.4}",
                name,
                s.precision(),
                s.recall(),
                s.f1()
            )?;
        }
        write!(f, "{:<10} {:>8} {:>8} {:>8.4}", "mean F1", "", "", self.conll_f1())
    }
}

/// Ordering used to decide which of two spans is "left" when counting
/// span pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderConvention {
    /// Lexicographic by (sentence, start, end): every unordered pair of
    /// distinct spans counts once.
    #[default]
    Lexicographic,
    /// Only pairs where the left span ends before the right span starts.
    StrictlyPrecedes,
}

impl std::str::FromStr for OrderConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lexicographic" => Ok(OrderConvention::Lexicographic),
            "strictly-precedes" => Ok(OrderConvention::StrictlyPrecedes),
            other => Err(Error::Config(format!(
                "unknown order convention {other:?} (expected lexicographic or strictly-precedes)"
            ))),
        }
    }
}

/// Mention and pair counts under word-level and span-level modelling.
///
/// `span_boundary_candidates` sums, over gold head mentions, the start
/// candidates at or left of the head plus the end candidates at or right
/// of it within the head's sentence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub wl_mentions: u64,
    pub wl_pairs: u64,
    pub sl_mentions: u64,
    pub sl_pairs: u64,
    pub span_boundary_candidates: u64,
    pub convention: OrderConvention,
}

impl AuditReport {
    pub fn merge(&mut self, o: &AuditReport) {
        self.wl_mentions += o.wl_mentions;
        self.wl_pairs += o.wl_pairs;
        self.sl_mentions += o.sl_mentions;
        self.sl_pairs += o.sl_pairs;
        self.span_boundary_candidates += o.span_boundary_candidates;
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<4} {:>16} {:>20} {:>12}", "", "mentions", "mention pairs", "SBC")?;
        writeln!(
            f,
            "{:<4} {:>16} {:>20} {:>12}",
            "WL", self.wl_mentions, self.wl_pairs, self.span_boundary_candidates
        )?;
        write!(
            f,
            "{:<4} {:>16} {:>20} {:>12}",
            "SL", self.sl_mentions, self.sl_pairs, "n/a"
        )
    }
}

pub fn audit(corpus: &[Document], convention: OrderConvention) -> AuditReport {
    let mut total = AuditReport {
        convention,
        ..Default::default()
    };
    for doc in corpus {
        total.merge(&audit_document(doc, convention));
    }
    total
}

pub fn audit_document(doc: &Document, convention: OrderConvention) -> AuditReport {
    let n = doc.num_words() as u64;
    let lens: Vec<u64> = doc.sentences.iter().map(|s| s.len() as u64).collect();
    let spans: u64 = lens.iter().map(|m| m * (m + 1) / 2).sum();
    let sl_pairs = match convention {
        OrderConvention::Lexicographic => spans * spans.saturating_sub(1) / 2,
        OrderConvention::StrictlyPrecedes => {
            // spans starting at each position times spans ending before it
            let mut ended = 0u64;
            let mut pairs = 0u64;
            for &m in &lens {
                for t in 0..m {
                    pairs += (m - t) * ended;
                    ended += t + 1;
                }
            }
            pairs
        }
    };
    let wl = to_word_level(doc);
    let sbc = wl
        .head_to_span
        .values()
        .map(|span| lens[span.sentence] + 1)
        .sum();
    AuditReport {
        wl_mentions: n,
        wl_pairs: n * n.saturating_sub(1) / 2,
        sl_mentions: spans,
        sl_pairs,
        span_boundary_candidates: sbc,
        convention,
    }
}
