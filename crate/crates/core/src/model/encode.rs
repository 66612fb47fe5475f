use std::collections::BTreeMap;
use std::sync::Arc;

use crate::autodiff::Tensor;
use crate::dataset::{Label, MultiPlatformSample, Platform};
use crate::embedding::TextEncoder;

use super::ModelError;

/// The claim-text and comment-text encoder slots. Both may point at the
/// same encoder.
#[derive(Clone)]
pub struct Encoders {
    pub claim: Arc<dyn TextEncoder>,
    pub comment: Arc<dyn TextEncoder>,
}

impl Encoders {
    pub fn shared(encoder: Arc<dyn TextEncoder>) -> Self {
        Self {
            claim: encoder.clone(),
            comment: encoder,
        }
    }

    pub fn dim(&self) -> usize {
        self.claim.dim()
    }
}

impl std::fmt::Debug for Encoders {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoders")
            .field("claim_dim", &self.claim.dim())
            .field("comment_dim", &self.comment.dim())
            .finish()
    }
}

/// One platform's tree, ready for the GCN.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTree {
    /// Normalized adjacency over all nodes, claim first.
    pub adjacency: Tensor,
    /// Comment embeddings (`M_k x d`), `None` for a root-only tree.
    pub comments: Option<Tensor>,
}

/// A sample with every text already embedded.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub id: String,
    pub label: Label,
    pub claim: Tensor,
    pub platforms: BTreeMap<Platform, EncodedTree>,
}

impl EncodedSample {
    pub fn restricted_to(&self, keep: &[Platform]) -> EncodedSample {
        EncodedSample {
            id: self.id.clone(),
            label: self.label,
            claim: self.claim.clone(),
            platforms: self
                .platforms
                .iter()
                .filter(|(k, _)| keep.contains(k))
                .map(|(k, t)| (*k, t.clone()))
                .collect(),
        }
    }
}

/// Embeds the claim and every engagement of `sample`.
pub fn encode_sample(sample: &MultiPlatformSample, encoders: &Encoders) -> Result<EncodedSample, ModelError> {
    if encoders.claim.dim() != encoders.comment.dim() {
        return Err(ModelError::Config(format!(
            "claim encoder dim {} differs from comment encoder dim {}",
            encoders.claim.dim(),
            encoders.comment.dim()
        )));
    }
    let claim = encoders.claim.encode(&sample.claim.id, &sample.claim.text)?;
    let mut platforms = BTreeMap::new();
    for (&k, tree) in &sample.trees {
        let rows = tree
            .engagements()
            .iter()
            .map(|e| encoders.comment.encode(&e.id, &e.text))
            .collect::<Result<Vec<_>, _>>()?;
        let comments = if rows.is_empty() {
            None
        } else {
            Some(Tensor::from_rows(&rows)?)
        };
        platforms.insert(
            k,
            EncodedTree {
                adjacency: tree.normalized_adjacency(),
                comments,
            },
        );
    }
    Ok(EncodedSample {
        id: sample.claim.id.clone(),
        label: sample.claim.label,
        claim: Tensor::row(claim),
        platforms,
    })
}

pub fn encode_samples(samples: &[MultiPlatformSample], encoders: &Encoders) -> Result<Vec<EncodedSample>, ModelError> {
    samples.iter().map(|s| encode_sample(s, encoders)).collect()
}
