//! Descriptive corpus statistics: per-platform tree aggregates, cross-platform
//! overlap, comment lengths and comment-claim similarity.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{EngagementKind, EngagementNode, Label, MultiPlatformSample, Platform};
use crate::embedding::EmbeddingError;
use crate::graph::PropagationTree;
use crate::model::Encoders;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no {filter} samples with a {platform} tree")]
    EmptySelection { platform: Platform, filter: LabelFilter },
    #[error("no {filter} comments on {platform}")]
    NoComments { platform: Platform, filter: LabelFilter },
    #[error("all {filter} comments on {platform} embed to zero vectors")]
    Degenerate { platform: Platform, filter: LabelFilter },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("stats csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelFilter {
    All,
    Fake,
    True,
}

impl LabelFilter {
    pub const ALL: [LabelFilter; 3] = [LabelFilter::All, LabelFilter::Fake, LabelFilter::True];

    pub fn matches(self, label: Label) -> bool {
        match self {
            LabelFilter::All => true,
            LabelFilter::Fake => label == Label::Fake,
            LabelFilter::True => label == Label::True,
        }
    }
}

impl fmt::Display for LabelFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelFilter::All => "all",
            LabelFilter::Fake => "fake",
            LabelFilter::True => "true",
        })
    }
}

impl FromStr for LabelFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(LabelFilter::All),
            "fake" => Ok(LabelFilter::Fake),
            "true" => Ok(LabelFilter::True),
            other => Err(format!("unknown label filter {other:?} (expected all, fake or true)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformStats {
    pub platform: Platform,
    pub filter: LabelFilter,
    pub graphs: usize,
    /// Engagement nodes plus one root per graph.
    pub total_nodes: usize,
    pub max_tree_width: usize,
    pub avg_nodes_per_graph: f64,
}

fn selected(
    samples: &[MultiPlatformSample],
    platform: Platform,
    filter: LabelFilter,
) -> impl Iterator<Item = (&MultiPlatformSample, &PropagationTree)> {
    samples
        .iter()
        .filter(move |s| filter.matches(s.label()))
        .filter_map(move |s| s.trees.get(&platform).map(|t| (s, t)))
}

pub fn corpus_stats(
    samples: &[MultiPlatformSample],
    platform: Platform,
    filter: LabelFilter,
) -> Result<PlatformStats, AnalysisError> {
    let (mut graphs, mut total, mut width) = (0, 0, 0);
    for (_, tree) in selected(samples, platform, filter) {
        let st = tree.stats();
        graphs += 1;
        total += st.node_count;
        width = width.max(st.width);
    }
    if graphs == 0 {
        return Err(AnalysisError::EmptySelection { platform, filter });
    }
    Ok(PlatformStats {
        platform,
        filter,
        graphs,
        total_nodes: total,
        max_tree_width: width,
        avg_nodes_per_graph: total as f64 / graphs as f64,
    })
}

/// Claims present on exactly 1, 2 and 3 platforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub counts: [usize; 3],
    /// `counts` normalized to sum to 1; all zero when the row is empty.
    pub proportions: [f64; 3],
}

impl OverlapRow {
    fn from_counts(counts: [usize; 3]) -> Self {
        let n: usize = counts.iter().sum();
        let proportions = if n == 0 {
            [0.0; 3]
        } else {
            counts.map(|c| c as f64 / n as f64)
        };
        Self { counts, proportions }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub all: OverlapRow,
    pub fake: OverlapRow,
    #[serde(rename = "true")]
    pub true_: OverlapRow,
    /// Claims with no propagation tree at all (not part of any row).
    pub without_platforms: usize,
}

pub fn platform_overlap(samples: &[MultiPlatformSample]) -> Result<OverlapReport, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let mut counts = [[0usize; 3]; 2];
    let mut without = 0;
    for s in samples {
        match s.trees.len() {
            0 => without += 1,
            n => counts[s.label().class_id() as usize][n.min(3) - 1] += 1,
        }
    }
    let [true_, fake] = counts;
    let all = [0, 1, 2].map(|i| true_[i] + fake[i]);
    Ok(OverlapReport {
        all: OverlapRow::from_counts(all),
        fake: OverlapRow::from_counts(fake),
        true_: OverlapRow::from_counts(true_),
        without_platforms: without,
    })
}

/// Whitespace-token counts of comments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub comments: usize,
    pub mean: f64,
    /// Lower median (nearest rank at 50%).
    pub median: usize,
    /// Nearest-rank 90th percentile.
    pub p90: usize,
}

/// Value at nearest rank `ceil(pct * n / 100)` of a sorted slice.
fn nearest_rank(sorted: &[usize], pct: usize) -> usize {
    let n = sorted.len();
    let rank = (pct * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

fn comments(
    samples: &[MultiPlatformSample],
    platform: Platform,
    filter: LabelFilter,
) -> impl Iterator<Item = (&MultiPlatformSample, &EngagementNode)> {
    selected(samples, platform, filter).flat_map(|(s, t)| {
        t.engagements()
            .iter()
            .filter(|e| e.kind == EngagementKind::Comment)
            .map(move |e| (s, e))
    })
}

pub fn comment_length_stats(
    samples: &[MultiPlatformSample],
    platform: Platform,
    filter: LabelFilter,
) -> Result<LengthStats, AnalysisError> {
    let mut lengths: Vec<usize> = comments(samples, platform, filter)
        .map(|(_, e)| e.text.split_whitespace().count())
        .collect();
    if lengths.is_empty() {
        return Err(AnalysisError::NoComments { platform, filter });
    }
    lengths.sort_unstable();
    let total: usize = lengths.iter().sum();
    Ok(LengthStats {
        comments: lengths.len(),
        mean: total as f64 / lengths.len() as f64,
        median: nearest_rank(&lengths, 50),
        p90: nearest_rank(&lengths, 90),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub mean_cosine: f64,
    pub comments: usize,
    /// Comments skipped because their (or their claim's) embedding is zero.
    pub skipped: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some(dot / (na * nb))
}

/// Mean cosine similarity between each comment and its claim.
pub fn comment_claim_similarity(
    samples: &[MultiPlatformSample],
    encoders: &Encoders,
    platform: Platform,
    filter: LabelFilter,
) -> Result<SimilarityStats, AnalysisError> {
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    let mut last_claim: Option<(&str, Vec<f64>)> = None;
    for (s, e) in comments(samples, platform, filter) {
        if last_claim.as_ref().map(|(id, _)| *id) != Some(s.claim.id.as_str()) {
            let v = encoders.claim.encode(&s.claim.id, &s.claim.text)?;
            last_claim = Some((s.claim.id.as_str(), v));
        }
        let c = &last_claim.as_ref().expect("set above").1;
        let v = encoders.comment.encode(&e.id, &e.text)?;
        match cosine(c, &v) {
            Some(x) => {
                sum += x;
                used += 1;
            }
            None => skipped += 1,
        }
    }
    if used == 0 {
        return Err(if skipped == 0 {
            AnalysisError::NoComments { platform, filter }
        } else {
            AnalysisError::Degenerate { platform, filter }
        });
    }
    Ok(SimilarityStats {
        mean_cosine: sum / used as f64,
        comments: used,
        skipped,
    })
}

/// One platform x label-filter cell of the stats report. Sections that have
/// nothing to measure are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsCell {
    pub platform: Platform,
    pub filter: LabelFilter,
    pub trees: Option<PlatformStats>,
    pub lengths: Option<LengthStats>,
    pub similarity: Option<SimilarityStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub claims: usize,
    pub table: Vec<StatsCell>,
    pub overlap: OverlapReport,
}

fn optional<T>(r: Result<T, AnalysisError>) -> Result<Option<T>, AnalysisError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(
            AnalysisError::EmptySelection { .. } | AnalysisError::NoComments { .. } | AnalysisError::Degenerate { .. },
        ) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Report over `platforms` and every label filter. Similarity is only
/// computed when encoders are given.
pub fn build_report(
    samples: &[MultiPlatformSample],
    platforms: &[Platform],
    encoders: Option<&Encoders>,
) -> Result<StatsReport, AnalysisError> {
    let overlap = platform_overlap(samples)?;
    let mut table = Vec::new();
    for &platform in platforms {
        for filter in LabelFilter::ALL {
            let similarity = match encoders {
                Some(enc) => optional(comment_claim_similarity(samples, enc, platform, filter))?,
                None => None,
            };
            table.push(StatsCell {
                platform,
                filter,
                trees: optional(corpus_stats(samples, platform, filter))?,
                lengths: optional(comment_length_stats(samples, platform, filter))?,
                similarity,
            });
        }
    }
    Ok(StatsReport {
        claims: samples.len(),
        table,
        overlap,
    })
}

#[derive(Serialize)]
struct CsvRow {
    platform: Platform,
    filter: LabelFilter,
    graphs: Option<usize>,
    total_nodes: Option<usize>,
    max_tree_width: Option<usize>,
    avg_nodes_per_graph: Option<f64>,
    comments: Option<usize>,
    mean_length: Option<f64>,
    median_length: Option<usize>,
    p90_length: Option<usize>,
    mean_cosine: Option<f64>,
}

/// The report's table as CSV, one row per platform and label filter.
pub fn write_stats_csv<W: Write>(report: &StatsReport, out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    for c in &report.table {
        w.serialize(CsvRow {
            platform: c.platform,
            filter: c.filter,
            graphs: c.trees.as_ref().map(|t| t.graphs),
            total_nodes: c.trees.as_ref().map(|t| t.total_nodes),
            max_tree_width: c.trees.as_ref().map(|t| t.max_tree_width),
            avg_nodes_per_graph: c.trees.as_ref().map(|t| t.avg_nodes_per_graph),
            comments: c.lengths.map(|l| l.comments),
            mean_length: c.lengths.map(|l| l.mean),
            median_length: c.lengths.map(|l| l.median),
            p90_length: c.lengths.map(|l| l.p90),
            mean_cosine: c.similarity.map(|s| s.mean_cosine),
        })
        .map_err(|e| AnalysisError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| AnalysisError::Csv(e.to_string()))?;
    Ok(())
}
