use std::io::Write;

use log::info;
use serde::Serialize;

use crate::dataset::Platform;
use crate::model::{AblationFlags, EncodedSample};

use super::{evaluate, train, Metrics, TrainConfig, TrainError};

/// One cell of the ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    /// Overrides the contrastive weight when set.
    pub gamma: Option<f64>,
    pub flags: AblationFlags,
    pub platforms: Vec<Platform>,
}

impl Variant {
    fn new(name: impl Into<String>, platforms: Vec<Platform>) -> Self {
        Self {
            name: name.into(),
            gamma: None,
            flags: AblationFlags::default(),
            platforms,
        }
    }

    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        cfg.flags = self.flags;
        cfg.platform_subset = self.platforms.clone();
        cfg
    }
}

/// Four component variants followed by seven platform variants.
pub fn variant_grid() -> Vec<Variant> {
    let all = Platform::ALL.to_vec();
    let mut grid = vec![Variant::new("full", all.clone())];
    grid.push(Variant {
        gamma: Some(0.0),
        ..Variant::new("no_pcl", all.clone())
    });
    grid.push(Variant {
        flags: AblationFlags {
            no_adapter: true,
            ..Default::default()
        },
        ..Variant::new("no_adapter", all.clone())
    });
    grid.push(Variant {
        flags: AblationFlags {
            no_attention: true,
            ..Default::default()
        },
        ..Variant::new("no_attention", all.clone())
    });
    grid.push(Variant {
        flags: AblationFlags {
            content_only: true,
            ..Default::default()
        },
        ..Variant::new("content_only", all.clone())
    });
    for k in Platform::ALL {
        grid.push(Variant::new(format!("only_{k}"), vec![k]));
    }
    for k in Platform::ALL {
        let rest = all.iter().copied().filter(|&p| p != k).collect();
        grid.push(Variant::new(format!("without_{k}"), rest));
    }
    grid
}

/// One repetition of an experiment: a seed and the splits it uses.
#[derive(Debug, Clone, Copy)]
pub struct RunSplit<'a> {
    pub seed: u64,
    pub train: &'a [EncodedSample],
    pub val: &'a [EncodedSample],
    pub test: &'a [EncodedSample],
}

/// Mean test metrics of one variant across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip)]
    pub runs: Vec<Metrics>,
}

impl AblationRow {
    fn from_runs(variant: String, runs: Vec<Metrics>) -> Self {
        let n = runs.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
        Self {
            variant,
            accuracy: mean(|m| m.accuracy),
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
            runs,
        }
    }
}

/// Trains and tests every variant on every run. All variants share the
/// same run seeds and splits.
pub fn ablate(runs: &[RunSplit<'_>], base: &TrainConfig, variants: &[Variant]) -> Result<Vec<AblationRow>, TrainError> {
    if runs.is_empty() {
        return Err(TrainError::Config("ablation needs at least one run".into()));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let mut metrics = Vec::with_capacity(runs.len());
        for run in runs {
            let mut cfg = v.apply(base);
            cfg.seed = run.seed;
            let outcome = train(run.train, run.val, &cfg)?;
            metrics.push(evaluate(&outcome.model, run.test, cfg.flags)?);
        }
        let row = AblationRow::from_runs(v.name.clone(), metrics);
        info!("variant {}: f1 {:.4}", row.variant, row.f1);
        rows.push(row);
    }
    Ok(rows)
}

/// Writes `variant,accuracy,precision,recall,f1`.
pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| TrainError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| TrainError::Csv(e.to_string()))?;
    Ok(())
}
