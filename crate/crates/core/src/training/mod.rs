//! Losses, the training loop, evaluation and the ablation grid.

mod ablation;
mod losses;
mod metrics;

use std::collections::BTreeMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdamConfig, AdamError, AdamState, Axis, Tape, TensorError};
use crate::dataset::{Label, Platform};
use crate::model::{AblationFlags, ApslModel, EncodedSample, ModelConfig, ModelError};

pub use ablation::{ablate, variant_grid, write_ablation_csv, AblationRow, RunSplit, Variant};
pub use losses::{bce_loss, pcl_loss, pcl_loss_value, total_loss, ContrastiveGroup};
pub use metrics::{verdict, ClassScores, Confusion, Metrics};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training config: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("loss diverged (non-finite) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("epoch {epoch}: {source}")]
    Optimizer { epoch: usize, source: AdamError },
    #[error("ablation table: {0}")]
    Csv(String),
}

/// Which per-platform vectors the contrastive term sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastiveSource {
    /// Attention-weighted vectors.
    #[default]
    Attended,
    /// Raw pooled GCN outputs.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub flags: AblationFlags,
    pub platform_subset: Vec<Platform>,
    pub contrastive: ContrastiveSource,
    pub gcn_dims: Vec<usize>,
    pub head_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.3,
            tau: 0.1,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 300,
            patience: 10,
            seed: 0,
            flags: AblationFlags::default(),
            platform_subset: Platform::ALL.to_vec(),
            contrastive: ContrastiveSource::Attended,
            gcn_dims: vec![64, 64],
            head_hidden: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || (self.gamma > 0.0 && self.batch_size < 2) {
            return bad(format!(
                "batch_size must be >= 2 when gamma > 0 (and >= 1 otherwise), got {}",
                self.batch_size
            ));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        Ok(())
    }

    /// Model shape for embeddings of width `dim`.
    pub fn model_config(&self, dim: usize) -> ModelConfig {
        let mut platforms = self.platform_subset.clone();
        platforms.sort();
        platforms.dedup();
        ModelConfig {
            dim,
            gcn_dims: self.gcn_dims.clone(),
            head_hidden: self.head_hidden.clone(),
            platforms,
        }
    }
}

/// One line of `history.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_pred: f64,
    pub l_pcl: f64,
    pub l_final: f64,
    pub val_loss: f64,
    pub val: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: ApslModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Per-sample output of [`predict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub yhat: f64,
    pub predicted: Label,
}

fn check_dims(sets: &[&[EncodedSample]]) -> Result<usize, TrainError> {
    let dim = sets
        .iter()
        .flat_map(|s| s.first())
        .map(|s| s.claim.cols())
        .next()
        .ok_or(TrainError::Empty("training"))?;
    for s in sets.iter().flat_map(|s| s.iter()) {
        if s.claim.cols() != dim {
            return Err(TrainError::Config(format!(
                "sample {} has embedding width {}, expected {dim}",
                s.id,
                s.claim.cols()
            )));
        }
    }
    Ok(dim)
}

struct BatchLoss {
    pred: f64,
    pcl: f64,
}

fn train_batch(
    model: &mut ApslModel,
    adam: &mut AdamState,
    batch: &[&EncodedSample],
    config: &TrainConfig,
    epoch: usize,
) -> Result<BatchLoss, TrainError> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, true);
    let mut preds = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    let mut groups: BTreeMap<Platform, ContrastiveGroup> = BTreeMap::new();
    for sample in batch {
        let out = model.forward_on_tape(&mut tape, &vars, sample, config.flags)?;
        preds.push(out.yhat);
        targets.push(sample.label.as_target());
        let rows = match config.contrastive {
            ContrastiveSource::Attended => &out.attended,
            ContrastiveSource::Pooled => &out.pooled,
        };
        for (&k, &v) in rows {
            let g = groups.entry(k).or_default();
            g.rows.push(v);
            g.labels.push(sample.label.class_id());
        }
    }
    let stacked = tape.concat(&preds, Axis::Rows)?;
    let l_pred = bce_loss(&mut tape, stacked, &targets)?;
    let l_pcl = pcl_loss(&mut tape, &groups, batch.len(), config.tau)?;
    let weighted = tape.scale(l_pcl, config.gamma);
    let loss = tape.add(l_pred, weighted)?;
    let out = BatchLoss {
        pred: tape.value(l_pred).item(),
        pcl: tape.value(l_pcl).item(),
    };
    if !tape.value(loss).item().is_finite() {
        return Err(TrainError::Diverged { epoch });
    }
    let grads = tape.backward(loss)?;
    let grads: Vec<_> = vars.iter().map(|&v| grads.wrt(v)).collect();
    adam.step(
        model.params_mut().iter_mut().map(|p| (p.name.as_str(), &mut p.value)),
        &grads,
    )
    .map_err(|source| match source {
        AdamError::NonFiniteGradient { .. } => TrainError::Diverged { epoch },
        source => TrainError::Optimizer { epoch, source },
    })?;
    Ok(out)
}

/// Trains a fresh model. Mini-batches are reshuffled every epoch from the
/// config seed. After each epoch the validation set is scored and the most
/// recent epoch with the highest macro F1 is kept. Training stops after
/// `patience` epochs without a strict F1 improvement.
pub fn train(
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::Empty("validation"));
    }
    let dim = check_dims(&[train_set, val_set])?;
    let mut model = ApslModel::new(config.model_config(dim), config.seed)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        model.params().iter().map(|p| p.value.shape()),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ApslModel)> = None;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum_pred, mut sum_pcl, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&EncodedSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let l = train_batch(&mut model, &mut adam, &batch, config, epoch)?;
            sum_pred += l.pred;
            sum_pcl += l.pcl;
            batches += 1;
        }
        let l_pred = sum_pred / batches as f64;
        let l_pcl = sum_pcl / batches as f64;
        let preds = predict(&model, val_set, config.flags)?;
        let val = metrics_of(&preds);
        let val_loss = mean_bce(&preds);
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let record = EpochRecord {
            epoch,
            l_pred,
            l_pcl,
            l_final: total_loss(l_pred, l_pcl, config.gamma),
            val_loss,
            val,
        };
        debug!(
            "epoch {epoch}: L_final {:.6} val f1 {:.4} val loss {:.6}",
            record.l_final, val.f1, val_loss
        );
        history.push(record);

        let best_f1 = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
        if val.f1 >= best_f1 {
            best = Some((val.f1, epoch, model.clone()));
        }
        if val.f1 > best_f1 {
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (f1, best_epoch, model) = best.expect("at least one epoch ran");
    info!(
        "training finished after {} epochs; best epoch {best_epoch} (val f1 {f1:.4})",
        history.len()
    );
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        stopped_early,
    })
}

fn mean_bce(preds: &[Prediction]) -> f64 {
    let mut tape = Tape::new();
    let col = tape.constant(crate::autodiff::Tensor::column(preds.iter().map(|p| p.yhat).collect()));
    let targets: Vec<f64> = preds.iter().map(|p| p.label.as_target()).collect();
    let l = tape.bce(col, &targets).expect("non-empty predictions");
    tape.value(l).item()
}

fn metrics_of(preds: &[Prediction]) -> Metrics {
    Metrics::from_pairs(preds.iter().map(|p| (p.label, p.predicted)))
}

/// Per-sample probabilities and verdicts.
pub fn predict(model: &ApslModel, samples: &[EncodedSample], flags: AblationFlags) -> Result<Vec<Prediction>, TrainError> {
    samples
        .iter()
        .map(|s| {
            let yhat = model.forward(s, flags)?.yhat;
            Ok(Prediction {
                id: s.id.clone(),
                label: s.label,
                yhat,
                predicted: verdict(yhat),
            })
        })
        .collect()
}

pub fn evaluate(model: &ApslModel, samples: &[EncodedSample], flags: AblationFlags) -> Result<Metrics, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Empty("evaluation"));
    }
    Ok(metrics_of(&predict(model, samples, flags)?))
}
