//! Subtoken embeddings and their attention pooling into token vectors.
//!
//! Two providers feed the pooling step: a file of precomputed contextual
//! embeddings (`WLEMB1`), or a small trainable encoder made of a hashed
//! vocabulary lookup and one width-3 context mixer.

use std::collections::HashMap;
use std::fs;
use std::hash::Hasher;
use std::io::{BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use fnv::FnvHasher;
use rand::Rng;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::layers::glorot;
use crate::numerics::{ByteReader, Graph, ParamId, ParamStore, Tensor, Var};

pub const EMBEDDING_MAGIC: &[u8; 6] = b"WLEMB1";

/// Contextual subtoken embeddings of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtokenMatrix {
    /// `n_sub × d`.
    pub x: Tensor,
    /// Inclusive subtoken range of each token.
    pub token_map: Vec<(usize, usize)>,
}

impl SubtokenMatrix {
    pub fn validate(&self) -> Result<()> {
        let n_sub = self.x.rows();
        let mut next = 0;
        for (t, &(s, e)) in self.token_map.iter().enumerate() {
            if s > e || e >= n_sub || s < next {
                return Err(Error::format(
                    "embedding",
                    format!("token {t}: subtoken range ({s}, {e}) is empty, overlapping or beyond {n_sub}"),
                ));
            }
            next = e + 1;
        }
        Ok(())
    }

    pub fn num_tokens(&self) -> usize {
        self.token_map.len()
    }
}

/// Precomputed embeddings keyed by `doc_id`.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingFile {
    docs: HashMap<String, SubtokenMatrix>,
    dim: Option<usize>,
}

impl EmbeddingFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, m: SubtokenMatrix) -> Result<()> {
        m.validate()?;
        let d = m.x.cols();
        if let Some(dim) = self.dim {
            if dim != d {
                return Err(Error::format(
                    "embedding",
                    format!("dimension {d} differs from {dim} of earlier documents"),
                ));
            }
        }
        self.dim = Some(d);
        self.docs.insert(doc_id.into(), m);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Result<&SubtokenMatrix> {
        self.docs
            .get(doc_id)
            .ok_or_else(|| Error::MissingDocument(doc_id.to_string()))
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(&mut BufReader::new(f))
    }

    pub fn read<R: Read>(input: &mut R) -> Result<Self> {
        let mut r = ByteReader::new(input, "embedding");
        if r.bytes(EMBEDDING_MAGIC.len())? != EMBEDDING_MAGIC {
            return Err(Error::format("embedding", "magic mismatch"));
        }
        let count = r.u32()? as usize;
        let mut file = EmbeddingFile::new();
        for _ in 0..count {
            let doc_id = r.string()?;
            let n_sub = r.u32()? as usize;
            let d = r.u32()? as usize;
            let n_tokens = r.u32()? as usize;
            let mut token_map = Vec::with_capacity(n_tokens.min(1 << 20));
            for _ in 0..n_tokens {
                token_map.push((r.u32()? as usize, r.u32()? as usize));
            }
            let values = r.f32s(n_sub * d)?;
            let x = Tensor::from_f32(vec![n_sub, d], &values)?;
            file.insert(doc_id, SubtokenMatrix { x, token_map })?;
        }
        Ok(file)
    }

    /// Writes documents in the order given.
    pub fn write<W: Write>(out: &mut W, docs: &[(&str, &SubtokenMatrix)]) -> std::io::Result<()> {
        out.write_all(EMBEDDING_MAGIC)?;
        out.write_all(&(docs.len() as u32).to_le_bytes())?;
        for (id, m) in docs {
            out.write_all(&(id.len() as u32).to_le_bytes())?;
            out.write_all(id.as_bytes())?;
            let (n_sub, d) = m.x.dims2();
            for v in [n_sub, d, m.token_map.len()] {
                out.write_all(&(v as u32).to_le_bytes())?;
            }
            for &(s, e) in &m.token_map {
                out.write_all(&(s as u32).to_le_bytes())?;
                out.write_all(&(e as u32).to_le_bytes())?;
            }
            for v in m.x.to_f32() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Bucket of a word in the hashed vocabulary (case-insensitive).
pub fn hash_bucket(word: &str, buckets: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(word.to_lowercase().as_bytes());
    (h.finish() % buckets as u64) as usize
}

#[derive(Debug, Clone)]
enum Source {
    Toy {
        buckets: usize,
        embed: ParamId,
        mix_kernel: ParamId,
        mix_bias: ParamId,
    },
    File(EmbeddingFile),
}

/// Produces subtoken embeddings for a document and pools them into one
/// vector per word.
#[derive(Debug, Clone)]
pub struct Encoder {
    source: Source,
    w_a: ParamId,
    dim: usize,
}

impl Encoder {
    /// Trainable toy encoder: `X = E + relu(conv3(E))`, where `E` is a
    /// hashed-vocabulary lookup and the convolution runs within sentences.
    pub fn toy<R: Rng>(store: &mut ParamStore, dim: usize, buckets: usize, rng: &mut R) -> Self {
        let embed = store.add(
            "encoder.embed",
            Tensor::uniform(&[buckets, dim], (3.0 / dim as f64).sqrt(), rng),
        );
        let k = glorot(3 * dim, dim, rng).reshape(&[3, dim, dim]).expect("kernel shape");
        let mix_kernel = store.add("encoder.mix.kernel", k);
        let mix_bias = store.add("encoder.mix.bias", Tensor::zeros(&[dim]));
        let w_a = store.add("encoder.w_a", Tensor::uniform(&[1, dim], 0.1, rng));
        Encoder {
            source: Source::Toy {
                buckets,
                embed,
                mix_kernel,
                mix_bias,
            },
            w_a,
            dim,
        }
    }

    /// Encoder backed by precomputed embeddings; only the pooling vector
    /// is trainable.
    pub fn file_backed<R: Rng>(
        store: &mut ParamStore,
        file: EmbeddingFile,
        expected_dim: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let dim = file
            .dim()
            .ok_or_else(|| Error::Config("embedding file holds no documents".into()))?;
        if let Some(e) = expected_dim {
            if e != dim {
                return Err(Error::Config(format!(
                    "embedding dimension {dim} does not match configured {e}"
                )));
            }
        }
        let w_a = store.add("encoder.w_a", Tensor::uniform(&[1, dim], 0.1, rng));
        Ok(Encoder {
            source: Source::File(file),
            w_a,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_toy(&self) -> bool {
        matches!(self.source, Source::Toy { .. })
    }

    pub fn w_a(&self) -> ParamId {
        self.w_a
    }

    /// Whether a parameter belongs to the encoder (for per-group
    /// learning rates).
    pub fn owns(&self, id: ParamId) -> bool {
        id == self.w_a
            || matches!(self.source, Source::Toy { embed, mix_kernel, mix_bias, .. }
                if id == embed || id == mix_kernel || id == mix_bias)
    }

    /// Subtoken embeddings `X` on the graph plus the token map.
    pub fn embed(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        doc: &Document,
    ) -> Result<(Var, Vec<(usize, usize)>)> {
        match &self.source {
            Source::Toy {
                buckets,
                embed,
                mix_kernel,
                mix_bias,
            } => {
                let ids: Vec<usize> = doc.words().map(|w| hash_bucket(w, *buckets)).collect();
                let table = g.param(store, *embed);
                let e = g.gather_rows(table, &ids);
                let segments: Vec<Range<usize>> = doc
                    .sentence_offsets()
                    .into_iter()
                    .zip(&doc.sentences)
                    .map(|(o, s)| o..o + s.len())
                    .collect();
                let k = g.param(store, *mix_kernel);
                let b = g.param(store, *mix_bias);
                let mixed = g.conv1d_k3(e, k, b, &segments);
                let mixed = g.relu(mixed);
                let x = g.add(e, mixed);
                let map = (0..ids.len()).map(|i| (i, i)).collect();
                Ok((x, map))
            }
            Source::File(file) => {
                let m = file.get(&doc.doc_id)?;
                if m.num_tokens() != doc.num_words() {
                    return Err(Error::Config(format!(
                        "document {}: embedding file has {} tokens, document has {} words",
                        doc.doc_id,
                        m.num_tokens(),
                        doc.num_words()
                    )));
                }
                let x = g.constant(m.x.clone());
                Ok((x, m.token_map.clone()))
            }
        }
    }

    /// Subtoken matrix with concrete values (no gradient tracking).
    pub fn subtokens(&self, store: &ParamStore, doc: &Document) -> Result<SubtokenMatrix> {
        let mut g = Graph::new();
        let (x, token_map) = self.embed(&mut g, store, doc)?;
        Ok(SubtokenMatrix {
            x: g.value(x).clone(),
            token_map,
        })
    }

    /// Token matrix `T` (`n_words × d`) for a document.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, doc: &Document) -> Result<Var> {
        let (x, map) = self.embed(g, store, doc)?;
        let w_a = g.param(store, self.w_a);
        Ok(pool_tokens(g, x, &map, w_a))
    }
}

/// Attention pooling of subtokens into tokens: raw scores `X · w_aᵀ`,
/// softmax within each token's subtoken range, weighted sum of the
/// subtoken rows.
pub fn pool_tokens(g: &mut Graph, x: Var, token_map: &[(usize, usize)], w_a: Var) -> Var {
    let n_sub = g.value(x).rows();
    let n_tok = token_map.len();
    let wt = g.transpose(w_a);
    let scores = g.matmul(x, wt);
    let row = g.transpose(scores);
    let tiled = g.repeat_rows(row, n_tok);
    let mut mask = vec![false; n_tok * n_sub];
    for (t, &(s, e)) in token_map.iter().enumerate() {
        mask[t * n_sub + s..=t * n_sub + e].fill(true);
    }
    let weights = g.softmax_rows(tiled, Some(&mask));
    g.matmul(weights, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pooled(x: Tensor, map: &[(usize, usize)], w_a: Tensor) -> Tensor {
        let mut g = Graph::new();
        let xv = g.constant(x);
        let w = g.constant(w_a);
        let t = pool_tokens(&mut g, xv, map, w);
        g.value(t).clone()
    }

    #[test]
    fn single_subtoken_passes_through() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -4.0]]);
        let t = pooled(x.clone(), &[(0, 0), (1, 1)], Tensor::matrix(1, 2, vec![5.0, -7.0]));
        assert_eq!(t, x);
    }

    #[test]
    fn equal_scores_average() {
        // w_a orthogonal to the difference keeps raw scores equal
        let x = Tensor::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]);
        let t = pooled(x, &[(0, 1)], Tensor::matrix(1, 2, vec![1.0, 1.0]));
        assert_eq!(t.data(), &[2.0, 2.0]);
    }

    #[test]
    fn analytic_weights() {
        // raw scores ln3 and 0 via w_a = (1, 0)
        let x = Tensor::from_rows(&[vec![3f64.ln(), 4.0], vec![0.0, 8.0]]);
        let t = pooled(x, &[(0, 1)], Tensor::matrix(1, 2, vec![1.0, 0.0]));
        assert!((t.get(0, 0) - 0.75 * 3f64.ln()).abs() < 1e-12);
        assert!((t.get(0, 1) - (0.75 * 4.0 + 0.25 * 8.0)).abs() < 1e-12);
    }

    #[test]
    fn toy_encoder_shapes() {
        let doc = Document {
            doc_id: "d".into(),
            genre: "nw".into(),
            sentences: vec![vec!["a", "b", "c", "d", "e"].into_iter().map(String::from).collect()],
            speakers: vec![vec!["s".into(); 5]],
            dep_head: vec![vec![-1, 0, 0, 0, 0]],
            clusters: vec![],
        };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::toy(&mut store, 8, 32, &mut rng);
        let sub = enc.subtokens(&store, &doc).unwrap();
        assert_eq!(sub.x.dims2(), (5, 8));
        assert_eq!(sub.token_map, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn embedding_file_round_trip_and_errors() {
        let m = SubtokenMatrix {
            x: Tensor::matrix(3, 2, vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
            token_map: vec![(0, 1), (2, 2)],
        };
        let mut buf = Vec::new();
        EmbeddingFile::write(&mut buf, &[("doc", &m)]).unwrap();
        assert_eq!(&buf[..6], b"WLEMB1");
        let f = EmbeddingFile::read(&mut &buf[..]).unwrap();
        assert_eq!(f.get("doc").unwrap(), &m);
        assert!(matches!(f.get("nope"), Err(Error::MissingDocument(_))));
        buf[0] = b'X';
        assert!(EmbeddingFile::read(&mut &buf[..]).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn overlapping_token_map_is_rejected() {
        let m = SubtokenMatrix {
            x: Tensor::zeros(&[3, 2]),
            token_map: vec![(0, 1), (1, 2)],
        };
        assert!(m.validate().is_err());
    }
}
