use super::{sigmoid_scalar, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction / concatenation direction.
///
/// `Rows` runs along the row index (vertical stacking, per-column softmax);
/// `Cols` runs along the column index (horizontal stacking, per-row softmax).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

const NORM_FLOOR: f64 = 1e-12;
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Concat(Vec<Var>, Axis),
    SliceCols(Var, usize),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var, Axis),
    SumRows(Var),
    Sum(Var),
    NormalizeRows(Var),
    Bce(Var, Vec<f64>),
    SupCon {
        logits: Var,
        labels: Vec<u8>,
        weight: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order; [`Tape::backward`] replays them in
/// exact reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn reached(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

fn broadcast_ok(a: (usize, usize), b: (usize, usize)) -> bool {
    (b.0 == a.0 || b.0 == 1) && (b.1 == a.1 || b.1 == 1)
}

fn bcast_index(b: &Tensor, r: usize, c: usize) -> usize {
    let br = if b.rows() == 1 { 0 } else { r };
    let bc = if b.cols() == 1 { 0 } else { c };
    br * b.cols() + bc
}

/// Sums `g` down to `shape` over broadcast dimensions.
fn reduce_to(g: &Tensor, shape: (usize, usize)) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let idx = bcast_index(&out, r, c);
            out.data_mut()[idx] += g.get(r, c);
        }
    }
    out
}

fn softmax_forward(x: &Tensor, axis: Axis) -> Tensor {
    let mut out = x.clone();
    let (rows, cols) = x.shape();
    let (outer, inner) = match axis {
        Axis::Cols => (rows, cols),
        Axis::Rows => (cols, rows),
    };
    let at = |o: usize, i: usize| match axis {
        Axis::Cols => o * cols + i,
        Axis::Rows => i * cols + o,
    };
    for o in 0..outer {
        let mut max = f64::NEG_INFINITY;
        for i in 0..inner {
            max = max.max(x.data()[at(o, i)]);
        }
        let mut total = 0.0;
        for i in 0..inner {
            let e = (x.data()[at(o, i)] - max).exp();
            out.data_mut()[at(o, i)] = e;
            total += e;
        }
        for i in 0..inner {
            out.data_mut()[at(o, i)] /= total;
        }
    }
    out
}

fn softmax_backward(y: &Tensor, g: &Tensor, axis: Axis) -> Tensor {
    let (rows, cols) = y.shape();
    let mut out = Tensor::zeros(rows, cols);
    let (outer, inner) = match axis {
        Axis::Cols => (rows, cols),
        Axis::Rows => (cols, rows),
    };
    let at = |o: usize, i: usize| match axis {
        Axis::Cols => o * cols + i,
        Axis::Rows => i * cols + o,
    };
    for o in 0..outer {
        let mut dot = 0.0;
        for i in 0..inner {
            dot += g.data()[at(o, i)] * y.data()[at(o, i)];
        }
        for i in 0..inner {
            let k = at(o, i);
            out.data_mut()[k] = y.data()[k] * (g.data()[k] - dot);
        }
    }
    out
}

fn row_norms(x: &Tensor) -> Vec<f64> {
    (0..x.rows())
        .map(|r| {
            x.row_slice(r)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(NORM_FLOOR)
        })
        .collect()
}

/// Log-sum-exp over row `i` of `s`, skipping the diagonal entry.
fn lse_off_diagonal(s: &Tensor, i: usize) -> f64 {
    let n = s.cols();
    let max = (0..n)
        .filter(|&m| m != i)
        .map(|m| s.get(i, m))
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = (0..n)
        .filter(|&m| m != i)
        .map(|m| (s.get(i, m) - max).exp())
        .sum();
    max + total.ln()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a + b`; `b` may be a row, column or 1x1 vector broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.broadcast_binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise `a * b` with the same broadcast rule as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.broadcast_binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    fn broadcast_binary(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !broadcast_ok(ta.shape(), tb.shape()) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: ta.shape(),
                right: tb.shape(),
            });
        }
        let mut out = ta.clone();
        for r in 0..ta.rows() {
            for c in 0..ta.cols() {
                let k = r * ta.cols() + c;
                out.data_mut()[k] = f(ta.data()[k], tb.data()[bcast_index(tb, r, c)]);
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x), &[x])
    }

    /// Concatenates along `axis`; `Axis::Rows` stacks vertically.
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Contract {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let (r0, c0) = self.shape(first);
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.cols() != c0 {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            left: (r0, c0),
                            right: t.shape(),
                        });
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::new(rows, c0, data)?
            }
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.rows() != r0 {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            left: (r0, c0),
                            right: t.shape(),
                        });
                    }
                    cols += t.cols();
                }
                let mut data = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::new(r0, cols, data)?
            }
        };
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), parts))
    }

    /// Columns `start..start + len` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        if start + len > t.cols() || len == 0 {
            return Err(TensorError::Contract {
                op: "slice_cols",
                msg: format!("range {start}..{} out of {} columns", start + len, t.cols()),
            });
        }
        let mut data = Vec::with_capacity(t.rows() * len);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        let out = Tensor::new(t.rows(), len, data)?;
        Ok(self.push(out, Op::SliceCols(x, start), &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid_scalar);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    /// Max-shifted softmax; each slice along `axis` sums to one.
    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var, TensorError> {
        let t = self.value(x);
        let len = match axis {
            Axis::Cols => t.cols(),
            Axis::Rows => t.rows(),
        };
        if len == 0 {
            return Err(TensorError::EmptyAxis {
                op: "softmax",
                shape: t.shape(),
            });
        }
        let out = softmax_forward(t, axis);
        Ok(self.push(out, Op::Softmax(x, axis), &[x]))
    }

    /// Global add pooling: column-wise sum of all rows, `1 x cols`.
    pub fn global_add_pool(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        if t.rows() == 0 {
            return Err(TensorError::EmptyAxis {
                op: "global_add_pool",
                shape: t.shape(),
            });
        }
        let out = t.sum_rows();
        Ok(self.push(out, Op::SumRows(x), &[x]))
    }

    /// Sum of every entry, `1 x 1`.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x])
    }

    /// Scales each row to unit L2 norm (norm floored at 1e-12).
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let norms = row_norms(t);
        let mut out = t.clone();
        let cols = t.cols();
        for (r, n) in norms.iter().enumerate() {
            for v in &mut out.data_mut()[r * cols..(r + 1) * cols] {
                *v /= n;
            }
        }
        self.push(out, Op::NormalizeRows(x), &[x])
    }

    /// Mean binary cross-entropy of probabilities `pred` against 0/1 targets,
    /// with predictions clamped to `[1e-12, 1 - 1e-12]`.
    pub fn bce(&mut self, pred: Var, targets: &[f64]) -> Result<Var, TensorError> {
        let p = self.value(pred);
        if p.is_empty() || p.len() != targets.len() {
            return Err(TensorError::Contract {
                op: "bce",
                msg: format!(
                    "need equal non-empty lengths, got {} predictions and {} targets",
                    p.len(),
                    targets.len()
                ),
            });
        }
        let n = p.len() as f64;
        let mut total = 0.0;
        for (&yhat, &y) in p.data().iter().zip(targets) {
            let q = yhat.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            total += -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
        }
        let out = Tensor::scalar(total / n);
        Ok(self.push(out, Op::Bce(pred, targets.to_vec()), &[pred]))
    }

    /// Supervised contrastive term over a square matrix of scaled
    /// similarities `logits[i][j] = sim(i, j) / tau`.
    ///
    /// Computes `-weight * sum_i sum_{j != i, y_j = y_i} log(exp(s_ij) / sum_{m != i} exp(s_im))`.
    /// Anchors without positives contribute nothing.
    pub fn supcon(&mut self, logits: Var, labels: &[u8], weight: f64) -> Result<Var, TensorError> {
        let s = self.value(logits);
        let n = s.rows();
        if s.cols() != n || labels.len() != n {
            return Err(TensorError::Contract {
                op: "supcon",
                msg: format!(
                    "logits {:?} must be square and match {} labels",
                    s.shape(),
                    labels.len()
                ),
            });
        }
        let mut total = 0.0;
        for i in 0..n {
            let positives: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if positives.is_empty() {
                continue;
            }
            let lse = lse_off_diagonal(s, i);
            for j in positives {
                total += s.get(i, j) - lse;
            }
        }
        let out = Tensor::scalar(-weight * total);
        Ok(self.push(
            out,
            Op::SupCon {
                logits,
                labels: labels.to_vec(),
                weight,
            },
            &[logits],
        ))
    }

    /// Reverse pass from a `1 x 1` loss. Gradients of a node consumed several
    /// times are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let contributions = self.local_grads(node, &g);
            grads[idx] = Some(g);
            for (input, contrib) in contributions {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        // Only leaves and nodes that were actually reached keep gradients.
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut out = Vec::with_capacity(2);
                if self.nodes[a.0].requires_grad {
                    out.push((*a, g.matmul(&tb.transpose()).expect("matmul grad")));
                }
                if self.nodes[b.0].requires_grad {
                    out.push((*b, ta.transpose().matmul(g).expect("matmul grad")));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, reduce_to(g, self.shape(*b)))],
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                let mut full_b = g.clone();
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let k = r * g.cols() + c;
                        let bv = tb.data()[bcast_index(tb, r, c)];
                        da.data_mut()[k] = g.data()[k] * bv;
                        full_b.data_mut()[k] = g.data()[k] * ta.data()[k];
                    }
                }
                vec![(*a, da), (*b, reduce_to(&full_b, tb.shape()))]
            }
            Op::Scale(x, f) => vec![(*x, g.map(|v| v * f))],
            Op::Transpose(x) => vec![(*x, g.transpose())],
            Op::Concat(parts, axis) => {
                let mut out = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.shape(p);
                    let mut piece = Tensor::zeros(pr, pc);
                    for r in 0..pr {
                        for c in 0..pc {
                            let v = match axis {
                                Axis::Rows => g.get(offset + r, c),
                                Axis::Cols => g.get(r, offset + c),
                            };
                            piece.set(r, c, v);
                        }
                    }
                    offset += match axis {
                        Axis::Rows => pr,
                        Axis::Cols => pc,
                    };
                    out.push((p, piece));
                }
                out
            }
            Op::SliceCols(x, start) => {
                let (xr, xc) = self.shape(*x);
                let mut dx = Tensor::zeros(xr, xc);
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dx.set(r, start + c, g.get(r, c));
                    }
                }
                vec![(*x, dx)]
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(tx.data()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                vec![(*x, dx)]
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let mut dx = g.clone();
                for (d, &s) in dx.data_mut().iter_mut().zip(y.data()) {
                    *d *= s * (1.0 - s);
                }
                vec![(*x, dx)]
            }
            Op::Softmax(x, axis) => vec![(*x, softmax_backward(&node.value, g, *axis))],
            Op::SumRows(x) => {
                let (xr, xc) = self.shape(*x);
                let mut dx = Tensor::zeros(xr, xc);
                for r in 0..xr {
                    dx.data_mut()[r * xc..(r + 1) * xc].copy_from_slice(g.data());
                }
                vec![(*x, dx)]
            }
            Op::Sum(x) => {
                let (xr, xc) = self.shape(*x);
                vec![(*x, Tensor::full(xr, xc, g.item()))]
            }
            Op::NormalizeRows(x) => {
                let tx = self.value(*x);
                let y = &node.value;
                let norms = row_norms(tx);
                let cols = tx.cols();
                let mut dx = Tensor::zeros(tx.rows(), cols);
                for (r, &n) in norms.iter().enumerate() {
                    let gr = g.row_slice(r);
                    let yr = y.row_slice(r);
                    let raw_norm: f64 = tx.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = if raw_norm > NORM_FLOOR {
                        gr.iter().zip(yr).map(|(a, b)| a * b).sum()
                    } else {
                        0.0
                    };
                    for c in 0..cols {
                        dx.set(r, c, (gr[c] - yr[c] * dot) / n);
                    }
                }
                vec![(*x, dx)]
            }
            Op::Bce(pred, targets) => {
                let p = self.value(*pred);
                let n = p.len() as f64;
                let upstream = g.item();
                let mut dx = Tensor::zeros(p.rows(), p.cols());
                for ((d, &yhat), &y) in dx.data_mut().iter_mut().zip(p.data()).zip(targets) {
                    if (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&yhat) {
                        *d = upstream * -(y / yhat - (1.0 - y) / (1.0 - yhat)) / n;
                    }
                }
                vec![(*pred, dx)]
            }
            Op::SupCon {
                logits,
                labels,
                weight,
            } => {
                let s = self.value(*logits);
                let n = s.rows();
                let upstream = g.item();
                let mut ds = Tensor::zeros(n, n);
                for i in 0..n {
                    let positives = (0..n)
                        .filter(|&j| j != i && labels[j] == labels[i])
                        .count();
                    if positives == 0 {
                        continue;
                    }
                    let lse = lse_off_diagonal(s, i);
                    for j in (0..n).filter(|&j| j != i) {
                        let p = (s.get(i, j) - lse).exp();
                        let indicator = if labels[j] == labels[i] { 1.0 } else { 0.0 };
                        ds.set(i, j, -weight * upstream * (indicator - positives as f64 * p));
                    }
                }
                vec![(*logits, ds)]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{numerical_gradients, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-5;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Builds `loss = sum(build(inputs) * weights)` with fixed random weights
    /// so every output entry contributes a distinct upstream gradient.
    fn check<F>(inputs: Vec<Tensor>, tol: f64, build: F)
    where
        F: Fn(&mut Tape, &[Var]) -> Var,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let probe = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
            let out = build(&mut tape, &vars);
            tape.shape(out)
        };
        let weights = random(&mut rng, probe.0, probe.1);
        let eval = |ins: &[Tensor], grad: bool| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ins.iter().map(|t| tape.param(t.clone())).collect();
            let out = build(&mut tape, &vars);
            let w = tape.constant(weights.clone());
            let prod = tape.mul(out, w).unwrap();
            let loss = tape.sum(prod);
            let value = tape.value(loss).item();
            let grads = grad.then(|| {
                let g = tape.backward(loss).unwrap();
                vars.iter().map(|&v| g.wrt(v)).collect::<Vec<_>>()
            });
            (value, grads)
        };
        let analytic = eval(&inputs, true).1.unwrap();
        let numeric = numerical_gradients(&inputs, H, |ins| eval(ins, false).0);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = relative_error(a, n, 1e-8);
            assert!(err < tol, "input {i}: relative error {err:e}\n{a:?}\n{n:?}");
        }
    }

    #[test]
    fn matmul_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        check(vec![random(&mut rng, 3, 4), random(&mut rng, 4, 2)], 1e-6, |t, v| {
            t.matmul(v[0], v[1]).unwrap()
        });
    }

    #[test]
    fn softmax_gradient_both_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        check(vec![random(&mut rng, 1, 5)], 1e-6, |t, v| t.softmax(v[0], Axis::Cols).unwrap());
        check(vec![random(&mut rng, 4, 3)], 1e-6, |t, v| t.softmax(v[0], Axis::Rows).unwrap());
    }

    #[test]
    fn sigmoid_relu_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check(vec![random(&mut rng, 3, 3).map(|v| 4.0 * v)], 1e-6, |t, v| t.sigmoid(v[0]));
        // keep entries away from the kink
        let x = random(&mut rng, 3, 3).map(|v| if v.abs() < 0.1 { v + 0.3 } else { v });
        check(vec![x], 1e-6, |t, v| t.relu(v[0]));
    }

    #[test]
    fn broadcast_add_mul_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for bshape in [(3, 4), (1, 4), (3, 1), (1, 1)] {
            let a = random(&mut rng, 3, 4);
            let b = random(&mut rng, bshape.0, bshape.1);
            check(vec![a.clone(), b.clone()], 1e-6, |t, v| t.add(v[0], v[1]).unwrap());
            check(vec![a, b], 1e-6, |t, v| t.mul(v[0], v[1]).unwrap());
        }
    }

    #[test]
    fn structural_op_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = (random(&mut rng, 2, 3), random(&mut rng, 1, 3));
        check(vec![a.clone(), b], 1e-6, |t, v| t.concat(&[v[0], v[1]], Axis::Rows).unwrap());
        let c = random(&mut rng, 2, 2);
        check(vec![a.clone(), c], 1e-6, |t, v| t.concat(&[v[0], v[1]], Axis::Cols).unwrap());
        check(vec![a.clone()], 1e-6, |t, v| t.slice_cols(v[0], 1, 2).unwrap());
        check(vec![a.clone()], 1e-6, |t, v| t.transpose(v[0]));
        check(vec![a.clone()], 1e-6, |t, v| t.scale(v[0], -2.5));
        check(vec![a.clone()], 1e-6, |t, v| t.global_add_pool(v[0]).unwrap());
        check(vec![a], 1e-6, |t, v| t.normalize_rows(v[0]));
    }

    #[test]
    fn bce_gradient() {
        let p = Tensor::column(vec![0.2, 0.7, 0.55, 0.9]);
        let y = [0.0, 1.0, 1.0, 0.0];
        check(vec![p], 1e-6, |t, v| t.bce(v[0], &y).unwrap());
    }

    #[test]
    fn supcon_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random(&mut rng, 5, 5).map(|v| 3.0 * v);
        let labels = [0, 1, 0, 0, 1];
        check(vec![s], 1e-6, |t, v| t.supcon(v[0], &labels, 0.2).unwrap());
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![0.0, 0.0, 0.0]));
        let y = t.softmax(x, Axis::Cols).unwrap();
        for &v in t.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = t.constant(Tensor::row(vec![0.0, 2f64.ln()]));
        let y = t.softmax(x, Axis::Cols).unwrap();
        assert!((t.value(y).get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.value(y).get(0, 1) - 2.0 / 3.0).abs() < 1e-15);
        let e = t.constant(Tensor::zeros(1, 0));
        assert!(matches!(
            t.softmax(e, Axis::Cols),
            Err(TensorError::EmptyAxis { .. })
        ));
    }

    #[test]
    fn softmax_slices_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..20);
            let x = random(&mut rng, 3, n).map(|v| 50.0 * v);
            let mut t = Tape::new();
            let xv = t.constant(x);
            let y = t.softmax(xv, Axis::Cols).unwrap();
            for r in 0..3 {
                let s: f64 = t.value(y).row_slice(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(t.value(y).row_slice(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn pool_examples() {
        let mut t = Tape::new();
        let v = t.constant(Tensor::row(vec![1.5, -2.0]));
        let p = t.global_add_pool(v).unwrap();
        assert_eq!(t.value(p), t.value(v));
        let m = t.constant(Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let p = t.global_add_pool(m).unwrap();
        assert_eq!(t.value(p).data(), &[4.0, 6.0]);
        let swapped = t.constant(Tensor::new(2, 2, vec![3.0, 4.0, 1.0, 2.0]).unwrap());
        let q = t.global_add_pool(swapped).unwrap();
        assert_eq!(t.value(p), t.value(q));
        let empty = t.constant(Tensor::zeros(0, 2));
        assert!(t.global_add_pool(empty).is_err());
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3));
        let b = t.constant(Tensor::zeros(2, 2));
        assert!(matches!(t.add(a, b), Err(TensorError::ShapeMismatch { .. })));
        assert!(matches!(t.mul(a, b), Err(TensorError::ShapeMismatch { .. })));
        assert!(matches!(t.matmul(a, a), Err(TensorError::ShapeMismatch { .. })));
        assert!(t.concat(&[a, b], Axis::Rows).is_err());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let a = t.param(Tensor::zeros(2, 1));
        assert_eq!(
            t.backward(a).unwrap_err(),
            TensorError::NonScalarLoss((2, 1))
        );
    }

    #[test]
    fn linear_gradient_is_input() {
        // L = sum(W x) with x fixed: dL/dW_ij = x_j
        let mut t = Tape::new();
        let w = t.param(Tensor::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let x = t.constant(Tensor::column(vec![2.0, -1.0, 0.5]));
        let y = t.matmul(w, x).unwrap();
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(w).data(), &[2.0, -1.0, 0.5, 2.0, -1.0, 0.5]);
        assert!(!g.reached(x));
    }

    #[test]
    fn reused_parameter_accumulates() {
        let mut t = Tape::new();
        let w = t.param(Tensor::row(vec![1.0, -3.0, 0.5]));
        let sq = t.mul(w, w).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(w).data(), &[2.0, -6.0, 1.0]);
    }

    #[test]
    fn unreached_parameter_gets_zero() {
        let mut t = Tape::new();
        let used = t.param(Tensor::row(vec![1.0, 2.0]));
        let unused = t.param(Tensor::row(vec![5.0, 5.0, 5.0]));
        let loss = t.sum(used);
        let g = t.backward(loss).unwrap();
        assert!(!g.reached(unused));
        assert_eq!(g.wrt(unused), Tensor::zeros(1, 3));
    }

    #[test]
    fn fan_out_sums_single_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x0 = random(&mut rng, 1, 4);
        let w1 = random(&mut rng, 4, 1);
        let w2 = random(&mut rng, 4, 1);
        let w3 = random(&mut rng, 4, 4);
        let path = |which: &[usize]| {
            let mut t = Tape::new();
            let x = t.param(x0.clone());
            let mut terms = Vec::new();
            for &k in which {
                let term = match k {
                    0 => { let c = t_const(&mut t, &w1); t.matmul(x, c) }.unwrap(),
                    1 => {
                        let s = t.sigmoid(x);
                        { let c = t_const(&mut t, &w2); t.matmul(s, c) }.unwrap()
                    }
                    _ => {
                        let h = { let c = t_const(&mut t, &w3); t.matmul(x, c) }.unwrap();
                        let s = t.softmax(h, Axis::Cols).unwrap();
                        t.sum(s)
                    }
                };
                terms.push(term);
            }
            let cat = t.concat(&terms, Axis::Cols).unwrap();
            let loss = t.sum(cat);
            t.backward(loss).unwrap().wrt(x)
        };
        fn t_const(t: &mut Tape, w: &Tensor) -> Var {
            t.constant(w.clone())
        }
        let all = path(&[0, 1, 2]);
        let mut sum = path(&[0]);
        sum.add_assign(&path(&[1]));
        sum.add_assign(&path(&[2]));
        for (a, b) in all.data().iter().zip(sum.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(&mut rng, 5, 7);
        let b = random(&mut rng, 7, 3);
        let run = || {
            let mut t = Tape::new();
            let av = t.param(a.clone());
            let bv = t.param(b.clone());
            let m = t.matmul(av, bv).unwrap();
            let s = t.softmax(m, Axis::Cols).unwrap();
            let p = t.global_add_pool(s).unwrap();
            let loss = t.sum(p);
            let g = t.backward(loss).unwrap();
            (t.value(m).clone(), g.wrt(av), g.wrt(bv))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bce_values() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::column(vec![0.5]));
        let l = t.bce(p, &[1.0]).unwrap();
        assert!((t.value(l).item() - 2f64.ln()).abs() < 1e-15);
        let p = t.constant(Tensor::column(vec![1.0, 0.0]));
        let l = t.bce(p, &[1.0, 0.0]).unwrap();
        assert!(t.value(l).item() < 1e-11);
        let e = t.constant(Tensor::zeros(0, 1));
        assert!(t.bce(e, &[]).is_err());
    }
}
