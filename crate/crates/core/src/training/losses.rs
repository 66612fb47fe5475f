use std::collections::BTreeMap;

use crate::autodiff::{Axis, Tape, Tensor, TensorError, Var};
use crate::dataset::Platform;

use super::TrainError;

/// Mean binary cross-entropy of `preds` (`B x 1`) against 0/1 targets.
pub fn bce_loss(tape: &mut Tape, preds: Var, targets: &[f64]) -> Result<Var, TensorError> {
    tape.bce(preds, targets)
}

/// Rows and labels that feed one platform's contrastive term.
#[derive(Debug, Clone, Default)]
pub struct ContrastiveGroup {
    pub rows: Vec<Var>,
    pub labels: Vec<u8>,
}

/// Platform-aware supervised contrastive loss.
///
/// For each platform the rows are L2-normalized, pairwise cosine
/// similarities are divided by `tau`, and every anchor is scored against its
/// same-label partners with a softmax over all other rows. Each platform
/// term is scaled by `1 / batch_size` and the terms are summed. Platforms
/// with fewer than two rows contribute nothing.
pub fn pcl_loss(
    tape: &mut Tape,
    groups: &BTreeMap<Platform, ContrastiveGroup>,
    batch_size: usize,
    tau: f64,
) -> Result<Var, TrainError> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(TrainError::Config(format!("tau must be positive, got {tau}")));
    }
    if batch_size == 0 {
        return Err(TrainError::Config("contrastive batch size must be positive".into()));
    }
    let weight = 1.0 / batch_size as f64;
    let mut terms = Vec::new();
    for group in groups.values() {
        if group.rows.len() < 2 {
            continue;
        }
        let stacked = tape.concat(&group.rows, Axis::Rows)?;
        let unit = tape.normalize_rows(stacked);
        let unit_t = tape.transpose(unit);
        let cos = tape.matmul(unit, unit_t)?;
        let logits = tape.scale(cos, 1.0 / tau);
        terms.push(tape.supcon(logits, &group.labels, weight)?);
    }
    let total = match terms.split_first() {
        None => tape.constant(Tensor::scalar(0.0)),
        Some((&first, rest)) => {
            let mut acc = first;
            for &t in rest {
                acc = tape.add(acc, t)?;
            }
            acc
        }
    };
    Ok(total)
}

/// Value-only contrastive loss over plain vectors, one list per platform.
pub fn pcl_loss_value(
    groups: &BTreeMap<Platform, Vec<(Vec<f64>, u8)>>,
    batch_size: usize,
    tau: f64,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let mut vars = BTreeMap::new();
    for (&k, items) in groups {
        let mut g = ContrastiveGroup::default();
        for (v, y) in items {
            g.rows.push(tape.constant(Tensor::row(v.clone())));
            g.labels.push(*y);
        }
        vars.insert(k, g);
    }
    let loss = pcl_loss(&mut tape, &vars, batch_size, tau)?;
    Ok(tape.value(loss).item())
}

/// `L_pred + gamma * L_pcl`.
pub fn total_loss(pred: f64, pcl: f64, gamma: f64) -> f64 {
    pred + gamma * pcl
}
