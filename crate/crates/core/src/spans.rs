//! Reconstruction of mention spans from head words.
//!
//! Each word of the head's sentence is paired with the head
//! (`[T_t, T_head]`), passed through a feed-forward layer, and the
//! resulting sequence goes through a width-3 convolution with two output
//! channels: start and end scores.

use std::collections::HashSet;
use std::ops::Range;

use rand::Rng;

use crate::corpus::{Document, Span};
use crate::layers::{glorot, Ffnn};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Start and end scores over the words of one sentence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryScores {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl BoundaryScores {
    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }
}

/// A head whose span is to be scored: global head index and the global
/// word range of its sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadQuery {
    pub head: usize,
    pub sentence: Range<usize>,
}

impl HeadQuery {
    pub fn of(doc: &Document, head: usize) -> Self {
        let (s, _) = doc.locate(head);
        let start = doc.global(s, 0);
        HeadQuery {
            head,
            sentence: start..start + doc.sentences[s].len(),
        }
    }

    pub fn head_offset(&self) -> usize {
        self.head - self.sentence.start
    }
}

#[derive(Debug, Clone)]
pub struct SpanPredictor {
    pub ffnn: Ffnn,
    pub conv_kernel: ParamId,
    pub conv_bias: ParamId,
}

impl SpanPredictor {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, hidden: usize, rng: &mut R) -> Self {
        let ffnn = Ffnn::new(store, "span.ffnn", &[2 * dim, hidden], true, rng);
        let k = glorot(3 * hidden, 2, rng)
            .reshape(&[3, hidden, 2])
            .expect("kernel shape");
        let conv_kernel = store.add("span.conv.kernel", k);
        let conv_bias = store.add("span.conv.bias", Tensor::zeros(&[2]));
        SpanPredictor {
            ffnn,
            conv_kernel,
            conv_bias,
        }
    }

    /// Boundary scores for a batch of heads. Returns an `R × 2` node
    /// (column 0 start, column 1 end) and, per query, its row segment.
    pub fn score_boundaries(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        t: Var,
        queries: &[HeadQuery],
        dropout: f64,
    ) -> (Var, Vec<Range<usize>>) {
        let mut words = Vec::new();
        let mut heads = Vec::new();
        let mut segments = Vec::with_capacity(queries.len());
        for q in queries {
            let start = words.len();
            words.extend(q.sentence.clone());
            heads.extend(std::iter::repeat_n(q.head, q.sentence.len()));
            segments.push(start..words.len());
        }
        let tw = g.gather_rows(t, &words);
        let th = g.gather_rows(t, &heads);
        let pair = g.concat_cols(&[tw, th]);
        let hidden = self.ffnn.forward(g, store, pair, dropout);
        let k = g.param(store, self.conv_kernel);
        let b = g.param(store, self.conv_bias);
        (g.conv1d_k3(hidden, k, b, &segments), segments)
    }

    /// Concrete boundary scores for each query.
    pub fn boundary_scores(&self, store: &ParamStore, g: &mut Graph, t: Var, queries: &[HeadQuery]) -> Vec<BoundaryScores> {
        let (out, segments) = self.score_boundaries(g, store, t, queries, 0.0);
        let v = g.value(out);
        segments
            .iter()
            .map(|seg| BoundaryScores {
                start: seg.clone().map(|r| v.get(r, 0)).collect(),
                end: seg.clone().map(|r| v.get(r, 1)).collect(),
            })
            .collect()
    }
}

/// Sentence-local `(start, end)` for a head at `head` (also local): the
/// best start at or left of the head and the best end at or right of it,
/// ties resolved toward the head.
pub fn predict_span(head: usize, scores: &BoundaryScores) -> (usize, usize) {
    assert!(head < scores.len(), "head outside sentence");
    let mut start = head;
    for p in (0..head).rev() {
        if scores.start[p] > scores.start[start] {
            start = p;
        }
    }
    let mut end = head;
    for p in head + 1..scores.len() {
        if scores.end[p] > scores.end[end] {
            end = p;
        }
    }
    (start, end)
}

/// Replaces each head by its predicted span. Spans repeated inside a
/// cluster collapse to one; a span already claimed by an earlier cluster
/// is dropped from later ones, and clusters left with fewer than two spans
/// are discarded.
pub fn reconstruct(
    clusters: &[Vec<usize>],
    doc: &Document,
    mut span_of: impl FnMut(usize) -> Span,
) -> Vec<Vec<Span>> {
    let mut claimed = HashSet::new();
    let mut out = Vec::new();
    for cluster in clusters {
        let mut spans: Vec<Span> = Vec::new();
        for &h in cluster {
            let (s, _) = doc.locate(h);
            let span = span_of(h);
            debug_assert_eq!(span.sentence, s);
            if claimed.insert(span) {
                spans.push(span);
            }
        }
        if spans.len() >= 2 {
            spans.sort();
            out.push(spans);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(start: &[f64], end: &[f64]) -> BoundaryScores {
        BoundaryScores {
            start: start.to_vec(),
            end: end.to_vec(),
        }
    }

    #[test]
    fn single_word_sentence() {
        assert_eq!(predict_span(0, &bs(&[3.0], &[-1.0])), (0, 0));
    }

    #[test]
    fn head_at_sentence_start_forces_start() {
        assert_eq!(predict_span(0, &bs(&[0.0, 9.0, 9.0], &[0.0, 1.0, 2.0])), (0, 2));
    }

    #[test]
    fn masked_argmax() {
        let s = bs(&[3.0, 1.0, 2.0, 100.0, 0.0], &[100.0, 0.0, 0.0, 1.0, 5.0]);
        assert_eq!(predict_span(2, &s), (0, 4));
    }

    #[test]
    fn uniform_scores_give_head_only() {
        assert_eq!(predict_span(2, &bs(&[1.0; 5], &[1.0; 5])), (2, 2));
    }

    #[test]
    fn zero_kernel_gives_bias_scores() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sp = SpanPredictor::new(&mut store, 4, 6, &mut rng);
        store.value_mut(sp.conv_kernel).fill(0.0);
        *store.value_mut(sp.conv_bias) = Tensor::vector(vec![0.25, -0.75]);
        let mut g = Graph::new();
        let t = g.constant(Tensor::uniform(&[5, 4], 1.0, &mut rng));
        let q = [HeadQuery { head: 3, sentence: 1..5 }];
        let out = sp.boundary_scores(&store, &mut g, t, &q);
        assert_eq!(out[0].start, vec![0.25; 4]);
        assert_eq!(out[0].end, vec![-0.75; 4]);
    }

    #[test]
    fn reconstruct_composes_and_dedups() {
        let doc = Document {
            doc_id: "d".into(),
            genre: "nw".into(),
            sentences: vec![(0..12).map(|i| format!("w{i}")).collect()],
            speakers: vec![vec![String::new(); 12]],
            dep_head: vec![vec![-1; 12]],
            clusters: vec![],
        };
        assert!(reconstruct(&[], &doc, |_| unreachable!()).is_empty());
        let out = reconstruct(&[vec![4, 9]], &doc, |h| match h {
            4 => Span::new(0, 3, 5),
            _ => Span::new(0, 9, 9),
        });
        assert_eq!(out, vec![vec![Span::new(0, 3, 5), Span::new(0, 9, 9)]]);
        let out = reconstruct(&[vec![4, 5, 9]], &doc, |h| match h {
            4 | 5 => Span::new(0, 3, 5),
            _ => Span::new(0, 9, 9),
        });
        assert_eq!(out, vec![vec![Span::new(0, 3, 5), Span::new(0, 9, 9)]]);
    }
}
