//! Text embeddings, cosine similarity, near-duplicate clustering and
//! narrative filtering.
//!
//! The default embedding hashes character 3-, 4- and 5-grams of the
//! normalized token stream (tokens joined by single spaces, padded with one
//! space on each side) into 1024 buckets with XXH3-64 (seed 0), counts term
//! frequencies and L2-normalizes. Vectors are stored sparsely.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::corpus::{normalize_text, Corpus, TweetRecord};
use crate::lexicon::tokenize;

pub const DEFAULT_DIM: usize = 1024;
pub const DEFAULT_SIMILARITY: f64 = 0.8;
const NGRAM_SIZES: [usize; 3] = [3, 4, 5];

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("reference narrative set is empty")]
    EmptyReference,
    #[error("{path}:{line}: {detail}")]
    Malformed { path: String, line: usize, detail: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Unit-norm (or all-zero) vector of fixed dimension, stored as sorted
/// `(index, value)` pairs with no explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Embedding {
    pub fn zero(dim: usize) -> Embedding {
        Embedding {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// L2-normalizes a dense vector; an all-zero input stays zero.
    pub fn from_dense(values: &[f64]) -> Embedding {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut out = Embedding::zero(values.len());
        if norm > 0.0 && norm.is_finite() {
            for (i, &v) in values.iter().enumerate() {
                if v != 0.0 {
                    out.indices.push(i as u32);
                    out.values.push(v / norm);
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Hashed character n-gram embedding of `text` with dimension `dim`.
pub fn embed_with_dim(text: &str, dim: usize) -> Embedding {
    let tokens = tokenize(text);
    if tokens.is_empty() || dim == 0 {
        return Embedding::zero(dim);
    }
    let padded: Vec<char> = format!(" {} ", tokens.join(" ")).chars().collect();
    let mut counts: HashMap<u32, f64> = HashMap::new();
    let mut buf = String::new();
    for n in NGRAM_SIZES {
        for window in padded.windows(n) {
            buf.clear();
            buf.extend(window);
            let bucket = (xxh3_64_with_seed(buf.as_bytes(), 0) % dim as u64) as u32;
            *counts.entry(bucket).or_default() += 1.0;
        }
    }
    let mut pairs: Vec<(u32, f64)> = counts.into_iter().collect();
    pairs.sort_unstable_by_key(|p| p.0);
    let norm = pairs.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
    Embedding {
        dim,
        indices: pairs.iter().map(|p| p.0).collect(),
        values: pairs.iter().map(|p| p.1 / norm).collect(),
    }
}

pub fn embed(text: &str) -> Embedding {
    embed_with_dim(text, DEFAULT_DIM)
}

/// Dot product of two unit vectors, clamped to [-1, 1]; 0 when either is zero.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, SimilarityError> {
    if a.dim != b.dim {
        return Err(SimilarityError::DimensionMismatch(a.dim, b.dim));
    }
    Ok(cosine_unchecked(a, b))
}

fn cosine_unchecked(a: &Embedding, b: &Embedding) -> f64 {
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a.values[i] * b.values[j];
                i += 1;
                j += 1;
            }
        }
    }
    dot.clamp(-1.0, 1.0)
}

#[derive(Debug, Deserialize)]
struct SidecarLine {
    tweet_id: String,
    vector: Vec<f64>,
}

/// Source of tweet embeddings.
#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    Hashed { dim: usize },
    /// Vectors read from a sidecar file; tweets without a vector embed to zero.
    Precomputed { dim: usize, vectors: HashMap<String, Embedding> },
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        EmbeddingProvider::Hashed { dim: DEFAULT_DIM }
    }
}

impl EmbeddingProvider {
    /// Reads a JSON-lines sidecar of `{tweet_id, vector}`. All vectors must
    /// share one dimension, which becomes the provider's dimension.
    pub fn load_sidecar(path: &Path) -> Result<EmbeddingProvider, SimilarityError> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|source| SimilarityError::Io {
            path: display.clone(),
            source,
        })?;
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| SimilarityError::Io {
                path: display.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |detail: String| SimilarityError::Malformed {
                path: display.clone(),
                line: i + 1,
                detail,
            };
            let rec: SidecarLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if rec.vector.iter().any(|v| !v.is_finite()) {
                return Err(malformed("non-finite vector entry".into()));
            }
            match dim {
                None => dim = Some(rec.vector.len()),
                Some(d) if d != rec.vector.len() => {
                    return Err(SimilarityError::DimensionMismatch(d, rec.vector.len()))
                }
                _ => {}
            }
            if vectors.insert(rec.tweet_id.clone(), Embedding::from_dense(&rec.vector)).is_some() {
                return Err(malformed(format!("duplicate tweet_id `{}`", rec.tweet_id)));
            }
        }
        Ok(EmbeddingProvider::Precomputed {
            dim: dim.unwrap_or(DEFAULT_DIM),
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Hashed { dim } | EmbeddingProvider::Precomputed { dim, .. } => *dim,
        }
    }

    pub fn embed_tweet(&self, tweet: &TweetRecord) -> Embedding {
        match self {
            EmbeddingProvider::Hashed { dim } => embed_with_dim(&tweet.text, *dim),
            EmbeddingProvider::Precomputed { dim, vectors } => vectors
                .get(&tweet.tweet_id)
                .cloned()
                .unwrap_or_else(|| Embedding::zero(*dim)),
        }
    }
}

/// One leader cluster. Members keep input order; the first is the leader.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DuplicateCluster {
    pub representative_tweet_id: String,
    pub member_tweet_ids: Vec<String>,
}

impl DuplicateCluster {
    pub fn len(&self) -> usize {
        self.member_tweet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_tweet_ids.is_empty()
    }
}

/// Item to cluster: an id, the normalized text used for exact-duplicate
/// exclusion, and its embedding.
#[derive(Debug, Clone, Copy)]
pub struct ClusterItem<'a> {
    pub id: &'a str,
    pub normalized_text: &'a str,
    pub embedding: &'a Embedding,
}

/// Greedy leader clustering over items in order. Each item joins the first
/// cluster whose leader has cosine ≥ `r`, otherwise founds a new cluster.
/// Items whose normalized text equals that of an already placed item are
/// skipped.
pub fn leader_clusters(items: &[ClusterItem<'_>], r: f64) -> Vec<DuplicateCluster> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut leaders: Vec<&Embedding> = Vec::new();
    let mut clusters: Vec<DuplicateCluster> = Vec::new();
    for item in items {
        if !seen.insert(item.normalized_text) {
            continue;
        }
        let hit = leaders
            .iter()
            .position(|leader| cosine_unchecked(leader, item.embedding) >= r);
        match hit {
            Some(c) => clusters[c].member_tweet_ids.push(item.id.to_string()),
            None => {
                leaders.push(item.embedding);
                clusters.push(DuplicateCluster {
                    representative_tweet_id: item.id.to_string(),
                    member_tweet_ids: vec![item.id.to_string()],
                });
            }
        }
    }
    clusters
}

/// Clusters tweets (in the given timeline order) with the given provider.
pub fn near_duplicate_clusters(
    tweets: &[&TweetRecord],
    r: f64,
    provider: &EmbeddingProvider,
) -> Vec<DuplicateCluster> {
    let embeddings: Vec<Embedding> = tweets.iter().map(|t| provider.embed_tweet(t)).collect();
    let texts: Vec<String> = tweets.iter().map(|t| normalize_text(&t.text)).collect();
    let items: Vec<ClusterItem<'_>> = tweets
        .iter()
        .zip(&embeddings)
        .zip(&texts)
        .map(|((t, e), n)| ClusterItem {
            id: &t.tweet_id,
            normalized_text: n,
            embedding: e,
        })
        .collect();
    leader_clusters(&items, r)
}

/// A labeled narrative to filter against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceNarrative {
    pub text: String,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

pub fn load_references(path: &Path) -> Result<Vec<ReferenceNarrative>, SimilarityError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| SimilarityError::Io {
        path: display.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| SimilarityError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SimilarityError::Malformed {
            path: display.clone(),
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NarrativeMatch {
    pub tweet_id: String,
    pub category: String,
    pub reference_index: usize,
    pub similarity: f64,
}

/// Tweets whose best reference similarity reaches `threshold`, in corpus
/// order. Ties go to the earliest reference. Zero-vector tweets are dropped.
pub fn narrative_filter(
    corpus: &Corpus,
    references: &[ReferenceNarrative],
    threshold: f64,
    provider: &EmbeddingProvider,
) -> Result<Vec<NarrativeMatch>, SimilarityError> {
    if references.is_empty() {
        return Err(SimilarityError::EmptyReference);
    }
    let dim = provider.dim();
    let refs: Vec<Embedding> = references
        .iter()
        .map(|r| match &r.vector {
            Some(v) => Embedding::from_dense(v),
            None => embed_with_dim(&r.text, dim),
        })
        .collect();
    if let Some(bad) = refs.iter().find(|e| e.dim() != dim) {
        return Err(SimilarityError::DimensionMismatch(dim, bad.dim()));
    }
    let matches = corpus
        .tweets()
        .par_iter()
        .filter_map(|tweet| {
            let e = provider.embed_tweet(tweet);
            if e.is_zero() {
                return None;
            }
            let mut best: Option<(usize, f64)> = None;
            for (i, r) in refs.iter().enumerate() {
                let s = cosine_unchecked(&e, r);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            let (i, s) = best?;
            (s >= threshold).then(|| NarrativeMatch {
                tweet_id: tweet.tweet_id.clone(),
                category: references[i].category.clone(),
                reference_index: i,
                similarity: s,
            })
        })
        .collect();
    Ok(matches)
}
