//! Claims, engagements and the multi-platform samples assembled from them.

mod jsonl;
mod labels;
mod sampling;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_tree, GraphError, PropagationTree};

pub use jsonl::{load_corpus, parse_claims, parse_engagements, write_corpus, LoadReport};
pub use labels::{map_label, normalize_label, POLITIFACT_LABELS, SNOPES_LABELS};
pub use sampling::{balance, split, SplitConfig};

/// `parent_id` value that attaches an engagement directly to the claim.
pub const ROOT_PARENT: &str = "root";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file} line {line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("unrecognized source {0:?}")]
    UnknownSource(String),
    #[error("unrecognized {origin} label {label:?}")]
    UnknownLabel { origin: Source, label: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("engagement {engagement} references unknown claim {claim}")]
    UnknownClaim { engagement: String, claim: String },
    #[error("engagement {engagement}: parent {parent} {reason}")]
    Referential {
        engagement: String,
        parent: String,
        reason: &'static str,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("corpus has no claims")]
    EmptyCorpus,
    #[error("cannot balance: no {0} samples")]
    Balance(Label),
    #[error("split config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Politifact,
    Snopes,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Politifact => "politifact",
            Source::Snopes => "snopes",
        })
    }
}

impl FromStr for Source {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "politifact" => Ok(Source::Politifact),
            "snopes" => Ok(Source::Snopes),
            _ => Err(DatasetError::UnknownSource(s.to_string())),
        }
    }
}

/// Social platforms, in the fixed order used for fused feature blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Youtube,
    X,
    Reddit,
}

impl Platform {
    pub const ALL: [Platform; 3] = [Platform::Youtube, Platform::X, Platform::Reddit];

    pub fn index(self) -> usize {
        match self {
            Platform::Youtube => 0,
            Platform::X => 1,
            Platform::Reddit => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Platform::Youtube => "youtube",
            Platform::X => "x",
            Platform::Reddit => "reddit",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "youtube" => Ok(Platform::Youtube),
            "x" => Ok(Platform::X),
            "reddit" => Ok(Platform::Reddit),
            other => Err(format!("unknown platform {other:?}")),
        }
    }
}

/// Binary verdict. `Fake` is the positive class (encoded as 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    True,
    Fake,
}

impl Label {
    pub fn as_target(self) -> f64 {
        match self {
            Label::True => 0.0,
            Label::Fake => 1.0,
        }
    }

    pub fn class_id(self) -> u8 {
        match self {
            Label::True => 0,
            Label::Fake => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::True => "true",
            Label::Fake => "fake",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngagementKind {
    Comment,
    Repost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub raw_label: String,
    pub label: Label,
}

impl Claim {
    /// Normalizes `raw_label` and derives the binary label from it.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        source: Source,
        raw_label: &str,
    ) -> Result<Self, DatasetError> {
        let raw_label = normalize_label(raw_label);
        let label = map_label(source, &raw_label)?;
        Ok(Self {
            id: id.into(),
            text: text.into(),
            source,
            raw_label,
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementNode {
    pub id: String,
    pub claim_id: String,
    pub platform: Platform,
    pub parent_id: String,
    pub text: String,
    pub kind: EngagementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub like_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

/// A claim together with its propagation trees on the platforms where it
/// was observed (possibly none).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPlatformSample {
    pub claim: Claim,
    pub trees: BTreeMap<Platform, PropagationTree>,
}

impl MultiPlatformSample {
    pub fn label(&self) -> Label {
        self.claim.label
    }

    pub fn platforms(&self) -> impl Iterator<Item = Platform> + '_ {
        self.trees.keys().copied()
    }

    /// Copy with every platform outside `keep` removed.
    pub fn restricted_to(&self, keep: &[Platform]) -> MultiPlatformSample {
        MultiPlatformSample {
            claim: self.claim.clone(),
            trees: self
                .trees
                .iter()
                .filter(|(p, _)| keep.contains(p))
                .map(|(p, t)| (*p, t.clone()))
                .collect(),
        }
    }
}

/// Validates claims and engagements and attaches each engagement to its
/// claim/platform tree. Samples keep the claim order.
pub fn assemble(
    claims: Vec<Claim>,
    engagements: Vec<EngagementNode>,
) -> Result<Vec<MultiPlatformSample>, DatasetError> {
    if claims.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let mut claim_index: HashMap<String, usize> = HashMap::with_capacity(claims.len());
    for (i, c) in claims.iter().enumerate() {
        if claim_index.insert(c.id.clone(), i).is_some() {
            return Err(DatasetError::DuplicateId {
                kind: "claim",
                id: c.id.clone(),
            });
        }
    }

    let mut owner: HashMap<&str, (&str, Platform)> = HashMap::with_capacity(engagements.len());
    for e in &engagements {
        if !claim_index.contains_key(&e.claim_id) {
            return Err(DatasetError::UnknownClaim {
                engagement: e.id.clone(),
                claim: e.claim_id.clone(),
            });
        }
        if owner
            .insert(e.id.as_str(), (e.claim_id.as_str(), e.platform))
            .is_some()
        {
            return Err(DatasetError::DuplicateId {
                kind: "engagement",
                id: e.id.clone(),
            });
        }
    }
    for e in &engagements {
        if e.parent_id == ROOT_PARENT {
            continue;
        }
        match owner.get(e.parent_id.as_str()) {
            None => {
                return Err(DatasetError::Referential {
                    engagement: e.id.clone(),
                    parent: e.parent_id.clone(),
                    reason: "does not exist",
                })
            }
            Some(&(claim, platform)) if claim != e.claim_id || platform != e.platform => {
                return Err(DatasetError::Referential {
                    engagement: e.id.clone(),
                    parent: e.parent_id.clone(),
                    reason: "belongs to another claim or platform",
                })
            }
            Some(_) => {}
        }
    }

    let mut grouped: Vec<BTreeMap<Platform, Vec<EngagementNode>>> = vec![BTreeMap::new(); claims.len()];
    for e in engagements {
        let i = claim_index[&e.claim_id];
        grouped[i].entry(e.platform).or_default().push(e);
    }

    claims
        .into_iter()
        .zip(grouped)
        .map(|(claim, groups)| {
            let trees = groups
                .into_iter()
                .map(|(p, es)| Ok((p, build_tree(&claim.id, p, &es)?)))
                .collect::<Result<BTreeMap<_, _>, DatasetError>>()?;
            Ok(MultiPlatformSample { claim, trees })
        })
        .collect()
}
