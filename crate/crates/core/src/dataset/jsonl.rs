use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{assemble, Claim, DatasetError, EngagementKind, EngagementNode, MultiPlatformSample, Platform};

#[derive(Debug, Deserialize)]
struct ClaimRecord {
    id: String,
    text: String,
    source: String,
    raw_label: String,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize)]
struct ClaimOut<'a> {
    id: &'a str,
    text: &'a str,
    source: String,
    raw_label: &'a str,
}

#[derive(Debug, Deserialize)]
struct EngagementRecord {
    id: String,
    claim_id: String,
    platform: Platform,
    parent_id: String,
    text: String,
    kind: EngagementKind,
    #[serde(default)]
    like_count: Option<u64>,
    #[serde(default)]
    timestamp: Option<i64>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// Counts gathered while loading a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub claims: usize,
    pub engagements: usize,
    pub fake: usize,
    #[serde(rename = "true")]
    pub true_: usize,
    pub per_platform: BTreeMap<Platform, usize>,
    pub claims_without_engagements: usize,
    pub unknown_keys: usize,
}

fn read_lines<R: BufRead>(
    reader: R,
    file: &str,
    mut on_line: impl FnMut(usize, &str) -> Result<(), DatasetError>,
) -> Result<(), DatasetError> {
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Parse {
            file: file.to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        on_line(i + 1, &line)?;
    }
    Ok(())
}

fn parse_err(file: &str, line: usize, msg: impl ToString) -> DatasetError {
    DatasetError::Parse {
        file: file.to_string(),
        line,
        msg: msg.to_string(),
    }
}

/// Parses `claims.jsonl`; returns the claims and the number of unknown keys.
pub fn parse_claims<R: BufRead>(reader: R, file: &str) -> Result<(Vec<Claim>, usize), DatasetError> {
    let mut claims = Vec::new();
    let mut unknown = 0;
    read_lines(reader, file, |line, text| {
        let rec: ClaimRecord = serde_json::from_str(text).map_err(|e| parse_err(file, line, e))?;
        unknown += rec.extra.len();
        let source = rec.source.parse().map_err(|e| parse_err(file, line, e))?;
        let claim = Claim::new(rec.id, rec.text, source, &rec.raw_label).map_err(|e| parse_err(file, line, e))?;
        claims.push(claim);
        Ok(())
    })?;
    Ok((claims, unknown))
}

/// Parses `engagements.jsonl`; returns the engagements and the number of
/// unknown keys.
pub fn parse_engagements<R: BufRead>(
    reader: R,
    file: &str,
) -> Result<(Vec<EngagementNode>, usize), DatasetError> {
    let mut out = Vec::new();
    let mut unknown = 0;
    read_lines(reader, file, |line, text| {
        let rec: EngagementRecord = serde_json::from_str(text).map_err(|e| parse_err(file, line, e))?;
        unknown += rec.extra.len();
        out.push(EngagementNode {
            id: rec.id,
            claim_id: rec.claim_id,
            platform: rec.platform,
            parent_id: rec.parent_id,
            text: rec.text,
            kind: rec.kind,
            like_count: rec.like_count,
            timestamp: rec.timestamp,
        });
        Ok(())
    })?;
    Ok((out, unknown))
}

fn open(path: &Path) -> Result<BufReader<File>, DatasetError> {
    File::open(path).map(BufReader::new).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads and validates a corpus from the two JSON-Lines files.
pub fn load_corpus(
    claims_path: &Path,
    engagements_path: &Path,
) -> Result<(Vec<MultiPlatformSample>, LoadReport), DatasetError> {
    let claims_name = claims_path.display().to_string();
    let eng_name = engagements_path.display().to_string();
    let (claims, unknown_c) = parse_claims(open(claims_path)?, &claims_name)?;
    let (engagements, unknown_e) = parse_engagements(open(engagements_path)?, &eng_name)?;
    let n_eng = engagements.len();
    let samples = assemble(claims, engagements)?;

    let mut report = LoadReport {
        claims: samples.len(),
        engagements: n_eng,
        unknown_keys: unknown_c + unknown_e,
        ..LoadReport::default()
    };
    for s in &samples {
        match s.label() {
            super::Label::Fake => report.fake += 1,
            super::Label::True => report.true_ += 1,
        }
        if s.trees.is_empty() {
            report.claims_without_engagements += 1;
        }
        for (p, t) in &s.trees {
            *report.per_platform.entry(*p).or_default() += t.engagements().len();
        }
    }
    if report.unknown_keys > 0 {
        log::warn!("ignored {} unknown keys while loading corpus", report.unknown_keys);
    }
    Ok((samples, report))
}

/// Writes samples back out in the input schemas.
pub fn write_corpus(
    samples: &[MultiPlatformSample],
    claims_path: &Path,
    engagements_path: &Path,
) -> Result<(), DatasetError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io {
            path: path.clone(),
            source,
        }
    };
    let mut cw = BufWriter::new(File::create(claims_path).map_err(io_err(claims_path))?);
    let mut ew = BufWriter::new(File::create(engagements_path).map_err(io_err(engagements_path))?);
    for s in samples {
        let c = &s.claim;
        let rec = ClaimOut {
            id: &c.id,
            text: &c.text,
            source: c.source.to_string(),
            raw_label: &c.raw_label,
        };
        let line = serde_json::to_string(&rec).expect("claim serializes");
        writeln!(cw, "{line}").map_err(io_err(claims_path))?;
        for tree in s.trees.values() {
            for e in tree.engagements() {
                let line = serde_json::to_string(e).expect("engagement serializes");
                writeln!(ew, "{line}").map_err(io_err(engagements_path))?;
            }
        }
    }
    cw.flush().map_err(io_err(claims_path))?;
    ew.flush().map_err(io_err(engagements_path))?;
    Ok(())
}
