use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Genres, Span, DEFAULT_GENRES};
use crate::coref::{build_clusters, decode_antecedents, AntecedentScorer, FeatureContext, ScoredPairs};
use crate::encoder::{EmbeddingFile, Encoder};
use crate::error::{Error, Result};
use crate::numerics::{load_params, save_params, Graph, ParamStore, Var};
use crate::spans::{predict_span, reconstruct, HeadQuery, SpanPredictor};

pub const MODEL_CONFIG_FILE: &str = "model.toml";
pub const CHECKPOINT_FILE: &str = "model.wlckpt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Toy,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    /// Token representation width (must match the embedding file when
    /// the encoder is file-backed).
    pub dim: usize,
    pub vocab_buckets: usize,
    pub feature_dim: usize,
    pub coref_hidden: Vec<usize>,
    pub span_hidden: usize,
    /// Antecedents kept per word after coarse scoring.
    pub k: usize,
    pub dropout: f64,
    pub genres: Vec<String>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderKind::Toy,
            dim: 64,
            vocab_buckets: 4096,
            feature_dim: 20,
            coref_hidden: vec![128, 128],
            span_hidden: 128,
            k: 50,
            dropout: 0.0,
            genres: DEFAULT_GENRES.iter().map(|s| s.to_string()).collect(),
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.dim == 0 || self.feature_dim == 0 || self.span_hidden == 0 || self.vocab_buckets == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if self.genres.is_empty() {
            return Err(Error::Config("genre set is empty".into()));
        }
        Ok(())
    }
}

/// Output of the model on one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub antecedents: Vec<Option<usize>>,
    pub word_clusters: Vec<Vec<usize>>,
    pub span_clusters: Vec<Vec<Span>>,
}

/// Graph handles from a forward pass.
pub struct Forward {
    pub t: Var,
    pub pairs: ScoredPairs,
}

pub struct CorefModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub scorer: AntecedentScorer,
    pub spans: SpanPredictor,
    genres: Genres,
}

impl CorefModel {
    /// Fresh model with the toy encoder.
    pub fn toy(config: ModelConfig) -> Result<Self> {
        Self::build(config, None)
    }

    /// Fresh model over precomputed embeddings.
    pub fn with_embeddings(config: ModelConfig, file: EmbeddingFile) -> Result<Self> {
        Self::build(config, Some(file))
    }

    fn build(mut config: ModelConfig, file: Option<EmbeddingFile>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let encoder = match file {
            None => {
                config.encoder = EncoderKind::Toy;
                Encoder::toy(&mut store, config.dim, config.vocab_buckets, &mut rng)
            }
            Some(f) => {
                config.encoder = EncoderKind::File;
                Encoder::file_backed(&mut store, f, Some(config.dim), &mut rng)?
            }
        };
        let dim = encoder.dim();
        let scorer = AntecedentScorer::new(
            &mut store,
            dim,
            config.feature_dim,
            &config.coref_hidden,
            config.genres.len(),
            &mut rng,
        );
        let spans = SpanPredictor::new(&mut store, dim, config.span_hidden, &mut rng);
        let genres = Genres::new(config.genres.clone());
        Ok(CorefModel {
            config,
            store,
            encoder,
            scorer,
            spans,
            genres,
        })
    }

    pub fn genres(&self) -> &Genres {
        &self.genres
    }

    pub fn forward(&self, g: &mut Graph, doc: &Document, dropout: f64) -> Result<Forward> {
        self.forward_with(&self.store, g, doc, dropout)
    }

    /// Forward pass with an external parameter set of the same layout.
    pub fn forward_with(&self, store: &ParamStore, g: &mut Graph, doc: &Document, dropout: f64) -> Result<Forward> {
        let features = FeatureContext::of(doc, &self.genres)?;
        let t = self.encoder.encode(g, store, doc)?;
        let t = g.dropout(t, dropout);
        let pairs = self.scorer.score(g, store, t, &features, self.config.k, dropout);
        Ok(Forward { t, pairs })
    }

    /// Predicted span for each head, in the given order.
    pub fn head_spans(&self, g: &mut Graph, t: Var, doc: &Document, heads: &[usize]) -> Vec<Span> {
        if heads.is_empty() {
            return Vec::new();
        }
        let queries: Vec<HeadQuery> = heads.iter().map(|&h| HeadQuery::of(doc, h)).collect();
        let scores = self.spans.boundary_scores(&self.store, g, t, &queries);
        queries
            .iter()
            .zip(&scores)
            .map(|(q, s)| {
                let (start, end) = predict_span(q.head_offset(), s);
                let (sent, _) = doc.locate(q.head);
                Span::new(sent, start, end)
            })
            .collect()
    }

    pub fn predict(&self, doc: &Document) -> Result<Prediction> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, doc, 0.0)?;
        g.check_finite()?;
        let scores = fwd.pairs.antecedent_scores(&g);
        let antecedents = decode_antecedents(&scores);
        let word_clusters = build_clusters(&antecedents);
        let heads: Vec<usize> = word_clusters.iter().flatten().copied().collect();
        let spans = self.head_spans(&mut g, fwd.t, doc, &heads);
        let lookup: std::collections::HashMap<usize, Span> =
            heads.iter().copied().zip(spans).collect();
        let span_clusters = reconstruct(&word_clusters, doc, |h| lookup[&h]);
        Ok(Prediction {
            doc_id: doc.doc_id.clone(),
            antecedents,
            word_clusters,
            span_clusters,
        })
    }

    /// Writes `model.toml` and `model.wlckpt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.save_with(dir, &self.store)
    }

    /// Like [`save`](Self::save) but with an alternative parameter set of
    /// the same layout (e.g. the best epoch's snapshot).
    pub fn save_with(&self, dir: &Path, store: &ParamStore) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        let cfg_path = dir.join(MODEL_CONFIG_FILE);
        fs::write(&cfg_path, cfg).map_err(|e| Error::io(cfg_path, e))?;
        save_params(store, &dir.join(CHECKPOINT_FILE))
    }

    /// Restores a model saved by [`save`](Self::save). File-backed models
    /// need their embedding file again.
    pub fn load(dir: &Path, embeddings: Option<EmbeddingFile>) -> Result<Self> {
        let cfg_path = dir.join(MODEL_CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config: ModelConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let mut model = match (config.encoder, embeddings) {
            (EncoderKind::Toy, _) => Self::toy(config)?,
            (EncoderKind::File, Some(f)) => Self::with_embeddings(config, f)?,
            (EncoderKind::File, None) => {
                return Err(Error::Config(
                    "checkpoint uses precomputed embeddings; pass the embedding file".into(),
                ))
            }
        };
        load_params(&mut model.store, &dir.join(CHECKPOINT_FILE))?;
        Ok(model)
    }
}
