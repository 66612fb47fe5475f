//! Text encoders: a precomputed-vector store for externally computed
//! transformer embeddings, and a seeded feature-hashing embedder.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("embeddings line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("no embedding for id {0}")]
    Missing(String),
}

/// Maps a node (claim or engagement) to a fixed-length vector.
///
/// Implementations are pure: the same `(id, text)` always yields the same
/// vector of length [`TextEncoder::dim`].
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, id: &str, text: &str) -> Result<Vec<f64>, EmbeddingError>;
}

/// Bag-of-tokens feature hashing. Each lowercased token is hashed to a
/// bucket and a sign; the accumulated vector is L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        Self { dim, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return v;
        }
        let hashed: Vec<u64> = tokens.iter().map(|t| self.hash(t)).collect();
        for &h in &hashed {
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        if v.iter().all(|&x| x == 0.0) {
            // every token cancelled against a colliding opposite sign
            for &h in &hashed {
                v[(h % self.dim as u64) as usize] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }

    /// FNV-1a over the token bytes, keyed by the seed and finished with a
    /// splitmix64 mix so that nearby seeds give unrelated buckets.
    fn hash(&self, token: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in token.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= h >> 30;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^ (h >> 31)
    }
}

impl TextEncoder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, _id: &str, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        Ok(self.embed(text))
    }
}

/// Lowercased alphanumeric runs; whitespace and punctuation separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Vectors keyed by node id, loaded from a JSON-Lines file.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct Header {
    dim: usize,
}

#[derive(Deserialize)]
struct Row {
    id: String,
    v: Vec<f64>,
}

impl PrecomputedStore {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&[f64], EmbeddingError> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| EmbeddingError::Missing(id.to_string()))
    }

    /// Parses `{"dim": D}` followed by `{"id": ..., "v": [...]}` rows.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let fmt = |line: usize, msg: String| EmbeddingError::Format { line, msg };
        let mut lines = reader.lines().enumerate();
        let dim = loop {
            let Some((i, line)) = lines.next() else {
                return Err(fmt(1, "missing {\"dim\": D} header".into()));
            };
            let line = line.map_err(|e| fmt(i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let h: Header = serde_json::from_str(&line).map_err(|e| fmt(i + 1, e.to_string()))?;
            if h.dim == 0 {
                return Err(fmt(i + 1, "dim must be positive".into()));
            }
            break h.dim;
        };
        let mut vectors = HashMap::new();
        for (i, line) in lines {
            let line = line.map_err(|e| fmt(i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line).map_err(|e| fmt(i + 1, e.to_string()))?;
            if row.v.len() != dim {
                return Err(fmt(
                    i + 1,
                    format!("id {} has {} values, header says {dim}", row.id, row.v.len()),
                ));
            }
            if row.v.iter().any(|x| !x.is_finite()) {
                return Err(fmt(i + 1, format!("id {} has non-finite values", row.id)));
            }
            if vectors.contains_key(&row.id) {
                return Err(fmt(i + 1, format!("duplicate id {}", row.id)));
            }
            vectors.insert(row.id, row.v);
        }
        Ok(Self { dim, vectors })
    }
}

pub fn load_precomputed(path: &Path) -> Result<PrecomputedStore, EmbeddingError> {
    let file = File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    PrecomputedStore::from_reader(BufReader::new(file))
}

impl TextEncoder for PrecomputedStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, id: &str, _text: &str) -> Result<Vec<f64>, EmbeddingError> {
        self.get(id).map(<[f64]>::to_vec)
    }
}
