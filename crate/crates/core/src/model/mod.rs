//! The APSL network.
//!
//! Per sample and per present platform `k`:
//!
//! 1. comment rows are passed through the platform adapter
//!    `softmax((s ∘ p_k) W_k + b_k)` (softmax across the feature dimension);
//! 2. the claim row is stacked on top and a per-platform GCN
//!    `H' = act(Â H W)` runs over the tree, followed by global add pooling;
//! 3. the claim vector scores each pooled vector, a softmax across the
//!    present platforms weights them, and the weighted blocks are laid out in
//!    the fixed platform order (absent platforms as zero blocks);
//! 4. `sigmoid(MLP([c, h_s]))` gives the probability that the claim is fake.

mod checkpoint;
mod encode;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Axis, Tape, Tensor, TensorError, Var};
use crate::dataset::Platform;
use crate::embedding::EmbeddingError;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry, CHECKPOINT_BIN, MANIFEST_JSON};
pub use encode::{encode_sample, encode_samples, EncodedSample, EncodedTree, Encoders};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Text embedding dimension `d`.
    pub dim: usize,
    /// Output width of each GCN layer; the last entry is the pooled dim `d_g`.
    pub gcn_dims: Vec<usize>,
    /// Hidden widths of the classifier MLP; empty means a single linear layer.
    pub head_hidden: Vec<usize>,
    /// Registered platforms, kept in the canonical order.
    pub platforms: Vec<Platform>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: crate::embedding::DEFAULT_DIM,
            gcn_dims: vec![64, 64],
            head_hidden: Vec::new(),
            platforms: Platform::ALL.to_vec(),
        }
    }
}

impl ModelConfig {
    pub fn pooled_dim(&self) -> usize {
        *self.gcn_dims.last().expect("validated")
    }

    pub fn fused_dim(&self) -> usize {
        self.pooled_dim() * self.platforms.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 {
            return Err(ModelError::Config("dim must be positive".into()));
        }
        if self.gcn_dims.is_empty() || self.gcn_dims.contains(&0) {
            return Err(ModelError::Config(format!(
                "gcn_dims must be non-empty and positive, got {:?}",
                self.gcn_dims
            )));
        }
        if self.head_hidden.contains(&0) {
            return Err(ModelError::Config("head_hidden widths must be positive".into()));
        }
        if self.platforms.is_empty() {
            return Err(ModelError::Config("at least one platform must be registered".into()));
        }
        let mut sorted = self.platforms.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != self.platforms {
            return Err(ModelError::Config(format!(
                "platforms must be unique and in canonical order, got {:?}",
                self.platforms
            )));
        }
        Ok(())
    }
}

/// Component switches for ablations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Feed raw comment embeddings to the GCN.
    pub no_adapter: bool,
    /// Uniform platform weights instead of claim-guided attention.
    pub no_attention: bool,
    /// Ignore propagation entirely; the fused vector is all zeros.
    pub content_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
struct PlatformSlots {
    p: usize,
    w: usize,
    b: usize,
    gcn: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    platforms: BTreeMap<Platform, PlatformSlots>,
    claim_proj: Option<usize>,
    head: Vec<(usize, usize)>,
}

/// All learnable parameters of one APSL network.
#[derive(Debug, Clone, PartialEq)]
pub struct ApslModel {
    config: ModelConfig,
    params: Vec<Param>,
    layout: Layout,
}

/// Tape handles for one sample's forward pass.
#[derive(Debug, Clone)]
pub struct TapeForward {
    pub yhat: Var,
    pub pooled: BTreeMap<Platform, Var>,
    pub attended: BTreeMap<Platform, Var>,
    pub alpha: Option<Var>,
    pub fused: Var,
}

/// Plain values from one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardOutput {
    pub yhat: f64,
    pub pooled: BTreeMap<Platform, Vec<f64>>,
    pub attended: BTreeMap<Platform, Vec<f64>>,
    pub alpha: BTreeMap<Platform, f64>,
    pub fused: Vec<f64>,
    /// No platform contributed (content-only flag or no trees present).
    pub content_only: bool,
}

/// Result of claim-guided fusion on a tape.
#[derive(Debug, Clone)]
pub struct Fusion {
    pub alpha: Option<Var>,
    pub attended: BTreeMap<Platform, Var>,
    pub fused: Var,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(rows, cols, data).expect("shape")
}

impl ApslModel {
    /// Seeded initialization: weight matrices uniform in `±1/sqrt(fan_in)`,
    /// biases zero, platform vectors `p_k` all ones.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let mut params = Vec::new();
        let push = |params: &mut Vec<Param>, name: String, value: Tensor| {
            params.push(Param { name, value });
            params.len() - 1
        };
        let mut platforms = BTreeMap::new();
        for &k in &config.platforms {
            let p = push(&mut params, format!("adapter.{k}.p"), Tensor::full(1, d, 1.0));
            let w = push(&mut params, format!("adapter.{k}.w"), uniform(&mut rng, d, d));
            let b = push(&mut params, format!("adapter.{k}.b"), Tensor::zeros(1, d));
            let mut gcn = Vec::new();
            let mut fan_in = d;
            for (l, &out) in config.gcn_dims.iter().enumerate() {
                gcn.push(push(&mut params, format!("gcn.{k}.{l}"), uniform(&mut rng, fan_in, out)));
                fan_in = out;
            }
            platforms.insert(k, PlatformSlots { p, w, b, gcn });
        }
        let dg = config.pooled_dim();
        let claim_proj = (dg != d).then(|| push(&mut params, "fusion.claim_proj".into(), uniform(&mut rng, d, dg)));
        let mut head = Vec::new();
        let mut fan_in = d + config.fused_dim();
        for (i, &width) in config.head_hidden.iter().chain(std::iter::once(&1)).enumerate() {
            let w = push(&mut params, format!("head.{i}.w"), uniform(&mut rng, fan_in, width));
            let b = push(&mut params, format!("head.{i}.b"), Tensor::zeros(1, width));
            head.push((w, b));
            fan_in = width;
        }
        Ok(Self {
            config,
            params,
            layout: Layout {
                platforms,
                claim_proj,
                head,
            },
        })
    }

    /// Rebuilds a model from named tensors (e.g. a checkpoint).
    pub fn from_params(config: ModelConfig, params: Vec<Param>) -> Result<Self, ModelError> {
        let mut model = Self::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(ModelError::Config(format!(
                "expected {} tensors, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for (slot, given) in model.params.iter_mut().zip(params) {
            if slot.name != given.name || slot.value.shape() != given.value.shape() {
                return Err(ModelError::Config(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    given.name,
                    given.value.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            slot.value = given.value;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Puts every parameter on the tape, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    fn slots(&self, k: Platform) -> Result<&PlatformSlots, ModelError> {
        self.layout
            .platforms
            .get(&k)
            .ok_or_else(|| ModelError::Config(format!("platform {k} is not registered")))
    }

    /// Platform-adaptive node features for a block of comment rows.
    pub fn platform_adapt(&self, tape: &mut Tape, vars: &[Var], k: Platform, comments: Var) -> Result<Var, ModelError> {
        let slots = self.slots(k)?;
        let gated = tape.mul(comments, vars[slots.p])?;
        let lin = tape.matmul(gated, vars[slots.w])?;
        let shifted = tape.add(lin, vars[slots.b])?;
        Ok(tape.softmax(shifted, Axis::Cols)?)
    }

    /// Runs platform `k`'s GCN over `nodes` (claim row first) and pools.
    pub fn encode_platform(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        k: Platform,
        adjacency: Var,
        nodes: Var,
    ) -> Result<Var, ModelError> {
        let slots = self.slots(k)?;
        let (n, width) = tape.shape(nodes);
        if tape.shape(adjacency) != (n, n) {
            return Err(ModelError::Config(format!(
                "adjacency {:?} does not match {n} nodes",
                tape.shape(adjacency)
            )));
        }
        if width != self.config.dim {
            return Err(ModelError::Config(format!(
                "node features have width {width}, expected {}",
                self.config.dim
            )));
        }
        let mut h = nodes;
        let last = slots.gcn.len() - 1;
        for (l, &w) in slots.gcn.iter().enumerate() {
            let msg = tape.matmul(adjacency, h)?;
            h = tape.matmul(msg, vars[w])?;
            if l != last {
                h = tape.relu(h);
            }
        }
        Ok(tape.global_add_pool(h)?)
    }

    /// Claim-guided fusion over the platforms present in `pooled`.
    pub fn fuse(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        claim: Var,
        pooled: &BTreeMap<Platform, Var>,
        uniform_weights: bool,
    ) -> Result<Fusion, ModelError> {
        if pooled.is_empty() {
            return Err(ModelError::Config("fusion needs at least one platform".into()));
        }
        for &k in pooled.keys() {
            self.slots(k)?;
        }
        let dg = self.config.pooled_dim();
        let present = pooled.len();
        let mut attended = BTreeMap::new();
        let alpha = if uniform_weights {
            let w = 1.0 / present as f64;
            for (&k, &h) in pooled {
                attended.insert(k, tape.scale(h, w));
            }
            None
        } else {
            let query = match self.layout.claim_proj {
                Some(idx) => tape.matmul(claim, vars[idx])?,
                None => claim,
            };
            let inv_sqrt = 1.0 / (dg as f64).sqrt();
            let mut scores = Vec::with_capacity(present);
            for &h in pooled.values() {
                let prod = tape.mul(h, query)?;
                let dot = tape.sum(prod);
                scores.push(tape.scale(dot, inv_sqrt));
            }
            let row = tape.concat(&scores, Axis::Cols)?;
            let alpha = tape.softmax(row, Axis::Cols)?;
            for (i, (&k, &h)) in pooled.iter().enumerate() {
                let a = tape.slice_cols(alpha, i, 1)?;
                attended.insert(k, tape.mul(h, a)?);
            }
            Some(alpha)
        };
        let blocks: Vec<Var> = self
            .config
            .platforms
            .iter()
            .map(|k| match attended.get(k) {
                Some(&v) => v,
                None => tape.constant(Tensor::zeros(1, dg)),
            })
            .collect();
        let fused = tape.concat(&blocks, Axis::Cols)?;
        Ok(Fusion {
            alpha,
            attended,
            fused,
        })
    }

    /// `sigmoid(MLP([claim, fused]))`.
    pub fn classify(&self, tape: &mut Tape, vars: &[Var], claim: Var, fused: Var) -> Result<Var, ModelError> {
        let mut z = tape.concat(&[claim, fused], Axis::Cols)?;
        let last = self.layout.head.len() - 1;
        for (i, &(w, b)) in self.layout.head.iter().enumerate() {
            let lin = tape.matmul(z, vars[w])?;
            z = tape.add(lin, vars[b])?;
            if i != last {
                z = tape.relu(z);
            }
        }
        Ok(tape.sigmoid(z))
    }

    /// Full forward pass of one encoded sample on `tape`. Platforms that are
    /// not registered are ignored; a sample with no usable platform takes the
    /// content-only path.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        sample: &EncodedSample,
        flags: AblationFlags,
    ) -> Result<TapeForward, ModelError> {
        if sample.claim.shape() != (1, self.config.dim) {
            return Err(ModelError::Config(format!(
                "claim embedding has shape {:?}, expected (1, {})",
                sample.claim.shape(),
                self.config.dim
            )));
        }
        let claim = tape.constant(sample.claim.clone());
        let mut pooled = BTreeMap::new();
        if !flags.content_only {
            for (&k, tree) in &sample.platforms {
                if !self.layout.platforms.contains_key(&k) {
                    continue;
                }
                let adjacency = tape.constant(tree.adjacency.clone());
                let nodes = match &tree.comments {
                    Some(comments) => {
                        let raw = tape.constant(comments.clone());
                        let rows = if flags.no_adapter {
                            raw
                        } else {
                            self.platform_adapt(tape, vars, k, raw)?
                        };
                        tape.concat(&[claim, rows], Axis::Rows)?
                    }
                    None => claim,
                };
                pooled.insert(k, self.encode_platform(tape, vars, k, adjacency, nodes)?);
            }
        }
        let (alpha, attended, fused) = if pooled.is_empty() {
            let zeros = tape.constant(Tensor::zeros(1, self.config.fused_dim()));
            (None, BTreeMap::new(), zeros)
        } else {
            let f = self.fuse(tape, vars, claim, &pooled, flags.no_attention)?;
            (f.alpha, f.attended, f.fused)
        };
        let yhat = self.classify(tape, vars, claim, fused)?;
        Ok(TapeForward {
            yhat,
            pooled,
            attended,
            alpha,
            fused,
        })
    }

    /// Inference-only forward pass returning plain values.
    pub fn forward(&self, sample: &EncodedSample, flags: AblationFlags) -> Result<ForwardOutput, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let out = self.forward_on_tape(&mut tape, &vars, sample, flags)?;
        let to_vec = |v: Var| tape.value(v).data().to_vec();
        let mut alpha = BTreeMap::new();
        match out.alpha {
            Some(a) => {
                for (i, &k) in out.pooled.keys().enumerate() {
                    alpha.insert(k, tape.value(a).data()[i]);
                }
            }
            None => {
                let n = out.pooled.len() as f64;
                for &k in out.pooled.keys() {
                    alpha.insert(k, 1.0 / n);
                }
            }
        }
        Ok(ForwardOutput {
            yhat: tape.value(out.yhat).item(),
            pooled: out.pooled.iter().map(|(&k, &v)| (k, to_vec(v))).collect(),
            attended: out.attended.iter().map(|(&k, &v)| (k, to_vec(v))).collect(),
            alpha,
            fused: to_vec(out.fused),
            content_only: out.pooled.is_empty(),
        })
    }
}

#[cfg(test)]
mod tests;
