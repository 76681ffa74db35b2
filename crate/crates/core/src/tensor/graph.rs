//! Reverse-mode differentiation tape.
//!
//! Ops execute eagerly as they are recorded, so shape errors and non-finite
//! values surface at build time. `backward` replays the record in reverse and
//! accumulates gradients for every registered parameter.

use std::sync::Arc;

use super::kernels;
use super::optim::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Padding behaviour of `conv1d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// output[t] sees input[t - (F-1)*dilation ..= t], zero left pad.
    Causal,
    /// Symmetric window, zero pad both sides. Requires odd filter length.
    Same,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv1d { input: NodeId, weight: NodeId, bias: Option<NodeId>, dilation: usize, mode: PadMode },
    SymbolConv { weight: NodeId, symbols: Arc<Vec<u16>>, batch: usize, time: usize },
    Gated { input: NodeId },
    Relu { input: NodeId },
    MeanPool { input: NodeId, window: usize },
    UpsampleRepeat { input: NodeId, factor: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { input: NodeId, c: f32 },
    StopGrad { input: NodeId },
    StraightThrough { input: NodeId },
    SimplexRelu { input: NodeId, eps: f32 },
    SoftmaxChannels { input: NodeId },
    MeanBatchTime { input: NodeId },
    DiversityL2 { qbar: NodeId },
    DiversityEntropy { qbar: NodeId },
    MeanSq { input: NodeId },
    SumAll { input: NodeId },
    CategoricalNll { logits: NodeId, targets: Arc<Vec<u16>> },
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Conv1d { .. } => "conv1d",
        Op::SymbolConv { .. } => "symbol_conv",
        Op::Gated { .. } => "gated_activation",
        Op::Relu { .. } => "relu",
        Op::MeanPool { .. } => "mean_pool",
        Op::UpsampleRepeat { .. } => "upsample_repeat",
        Op::Add { .. } => "add",
        Op::Sub { .. } => "sub",
        Op::Mul { .. } => "mul",
        Op::Scale { .. } => "scale",
        Op::StopGrad { .. } => "stop_gradient",
        Op::StraightThrough { .. } => "straight_through",
        Op::SimplexRelu { .. } => "simplex_relu",
        Op::SoftmaxChannels { .. } => "softmax_channels",
        Op::MeanBatchTime { .. } => "mean_batch_time",
        Op::DiversityL2 { .. } => "diversity_l2",
        Op::DiversityEntropy { .. } => "diversity_entropy",
        Op::MeanSq { .. } => "mean_sq",
        Op::SumAll { .. } => "sum_all",
        Op::CategoricalNll { .. } => "categorical_nll",
    }
}

struct Node {
    op: Op,
    tensor: Tensor,
    /// Extra forward results needed by backward (softmax probabilities).
    saved: Vec<f32>,
    /// f64 value for scalar reductions, kept alongside the f32 cast so loss
    /// probes (finite differences) are not limited by f32 rounding.
    precise: Option<f64>,
}

/// One training step's computation record.
pub struct Graph {
    nodes: Vec<Node>,
    /// (param, leaf node) pairs, one per distinct parameter referenced.
    params: Vec<(ParamId, NodeId)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total bytes held by node values (for step-size accounting).
    pub fn bytes(&self) -> usize {
        self.nodes.iter().map(|n| (n.tensor.len() + n.saved.len()) * 4).sum()
    }

    pub fn values(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    /// Scalar value of a rank-0 node.
    pub fn value(&self, id: NodeId) -> f32 {
        self.nodes[id.0].tensor.item()
    }

    /// Scalar value at f64 precision where the op computed one (reductions
    /// and scalar arithmetic over them); otherwise the widened f32 value.
    pub fn value_f64(&self, id: NodeId) -> f64 {
        self.nodes[id.0].precise.unwrap_or_else(|| self.nodes[id.0].tensor.item() as f64)
    }

    fn push(&mut self, op: Op, tensor: Tensor, saved: Vec<f32>) -> Result<NodeId> {
        let id = NodeId(self.nodes.len());
        if !tensor.all_finite() {
            return Err(Error::NonFinite { node: id.0, op: op_name(&op) });
        }
        self.nodes.push(Node { op, tensor, saved, precise: None });
        Ok(id)
    }

    fn push_scalar(&mut self, op: Op, value: f64) -> Result<NodeId> {
        let id = self.push(op, Tensor::scalar(value as f32), Vec::new())?;
        self.nodes[id.0].precise = Some(value);
        Ok(id)
    }

    /// Scalar arithmetic nodes carry the f64 view of their inputs forward.
    fn combine_precise(&mut self, id: NodeId, a: NodeId, b: Option<NodeId>, f: impl Fn(f64, f64) -> f64) {
        if !self.nodes[id.0].tensor.shape().is_empty() {
            return;
        }
        let x = self.value_f64(a);
        let y = b.map_or(0.0, |b| self.value_f64(b));
        self.nodes[id.0].precise = Some(f(x, y));
    }

    /// Non-trainable leaf (network input).
    pub fn input(&mut self, tensor: Tensor) -> Result<NodeId> {
        self.push(Op::Leaf, tensor, Vec::new())
    }

    /// Non-trainable leaf (fixed values such as quantised targets).
    pub fn constant(&mut self, tensor: Tensor) -> Result<NodeId> {
        self.input(tensor)
    }

    /// Trainable leaf referencing a parameter; repeated calls reuse the node.
    pub fn param(&mut self, store: &ParamStore, pid: ParamId) -> Result<NodeId> {
        if let Some(&(_, node)) = self.params.iter().find(|(p, _)| *p == pid) {
            return Ok(node);
        }
        let node = self.push(Op::Leaf, store.get(pid).clone(), Vec::new())?;
        self.params.push((pid, node));
        Ok(node)
    }

    /// Dilated 1-d convolution. Input `[B, C_in, T]`, weight `[C_out, C_in, F]`,
    /// optional bias `[C_out]`; output `[B, C_out, T]`.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        dilation: usize,
        mode: PadMode,
    ) -> Result<NodeId> {
        let (b, c_in, t) = self.values(input).dims3("conv1d")?;
        let wshape = self.values(weight).shape().to_vec();
        let (c_out, w_cin, filter) = match wshape.as_slice() {
            &[co, ci, f] => (co, ci, f),
            other => {
                return Err(Error::Shape {
                    op: "conv1d",
                    msg: format!("weight must be [c_out, c_in, filter], got {:?}", other),
                })
            }
        };
        if w_cin != c_in {
            return Err(Error::Shape {
                op: "conv1d",
                msg: format!("input has {} channels, weight expects {}", c_in, w_cin),
            });
        }
        if dilation == 0 || filter == 0 || t == 0 {
            return Err(Error::Config("conv1d requires dilation >= 1, filter >= 1, time >= 1".into()));
        }
        if mode == PadMode::Same && filter % 2 == 0 {
            return Err(Error::Config(format!(
                "same-padded conv1d requires an odd filter length, got {}",
                filter
            )));
        }
        if let Some(bn) = bias {
            let bshape = self.values(bn).shape();
            if bshape != [c_out] {
                return Err(Error::Shape {
                    op: "conv1d",
                    msg: format!("bias must be [{}], got {:?}", c_out, bshape),
                });
            }
        }
        let shifts = kernels::tap_shifts(filter, dilation, mode == PadMode::Causal);
        let mut out = vec![0.0f32; b * c_out * t];
        {
            let bias_vals = bias.map(|bn| self.values(bn).data());
            kernels::conv1d_forward(
                self.values(input).data(),
                self.values(weight).data(),
                bias_vals,
                &mut out,
                b,
                c_in,
                c_out,
                t,
                &shifts,
            );
        }
        self.push(
            Op::Conv1d { input, weight, bias, dilation, mode },
            Tensor::new(vec![b, c_out, t], out)?,
            Vec::new(),
        )
    }

    /// Causal convolution over the implicit one-hot encoding of `symbols`
    /// (shape `[batch, time]`, values `< alphabet`). Weight is
    /// `[filter, alphabet, c_out]`; a filter length of 1 is an embedding
    /// lookup. Output `[batch, c_out, time]`.
    pub fn symbol_conv(
        &mut self,
        symbols: Arc<Vec<u16>>,
        batch: usize,
        time: usize,
        weight: NodeId,
    ) -> Result<NodeId> {
        let wshape = self.values(weight).shape().to_vec();
        let (filter, alphabet, c_out) = match wshape.as_slice() {
            &[f, k, c] => (f, k, c),
            other => {
                return Err(Error::Shape {
                    op: "symbol_conv",
                    msg: format!("weight must be [filter, alphabet, c_out], got {:?}", other),
                })
            }
        };
        if symbols.len() != batch * time {
            return Err(Error::Shape {
                op: "symbol_conv",
                msg: format!("expected {} symbols, got {}", batch * time, symbols.len()),
            });
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= alphabet) {
            return Err(Error::Input(format!(
                "symbol {} out of alphabet range 0..{}",
                bad, alphabet
            )));
        }
        let mut out = vec![0.0f32; batch * c_out * time];
        kernels::symbol_conv_forward(
            &symbols,
            self.values(weight).data(),
            &mut out,
            batch,
            alphabet,
            c_out,
            time,
            filter,
        );
        self.push(
            Op::SymbolConv { weight, symbols, batch, time },
            Tensor::new(vec![batch, c_out, time], out)?,
            Vec::new(),
        )
    }

    /// tanh(first half of channels) * sigmoid(second half).
    pub fn gated_activation(&mut self, input: NodeId) -> Result<NodeId> {
        let (b, c, t) = self.values(input).dims3("gated_activation")?;
        if c % 2 != 0 {
            return Err(Error::Shape {
                op: "gated_activation",
                msg: format!("channel count {} must be even", c),
            });
        }
        let m = c / 2;
        let data = self.values(input).data();
        let mut out = vec![0.0f32; b * m * t];
        kernels::for_each_row_mut(&mut out, t, |row_idx, out_row| {
            let bb = row_idx / m;
            let cc = row_idx % m;
            let a_row = &data[(bb * c + cc) * t..(bb * c + cc + 1) * t];
            let s_row = &data[(bb * c + m + cc) * t..(bb * c + m + cc + 1) * t];
            for i in 0..t {
                out_row[i] = a_row[i].tanh() * sigmoid(s_row[i]);
            }
        });
        self.push(Op::Gated { input }, Tensor::new(vec![b, m, t], out)?, Vec::new())
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let src = self.values(input);
        let out: Vec<f32> = src.data().iter().map(|&v| v.max(0.0)).collect();
        let shape = src.shape().to_vec();
        self.push(Op::Relu { input }, Tensor::new(shape, out)?, Vec::new())
    }

    /// Non-overlapping mean pooling along time.
    pub fn mean_pool(&mut self, input: NodeId, window: usize) -> Result<NodeId> {
        let (b, c, t) = self.values(input).dims3("mean_pool")?;
        if window == 0 || t % window != 0 {
            return Err(Error::Shape {
                op: "mean_pool",
                msg: format!("time {} not divisible by window {}", t, window),
            });
        }
        let t_out = t / window;
        let data = self.values(input).data();
        let inv = 1.0 / window as f32;
        let mut out = vec![0.0f32; b * c * t_out];
        kernels::for_each_row_mut(&mut out, t_out, |row_idx, out_row| {
            let in_row = &data[row_idx * t..(row_idx + 1) * t];
            for (i, o) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0f32;
                for &v in &in_row[i * window..(i + 1) * window] {
                    acc += v;
                }
                *o = acc * inv;
            }
        });
        self.push(
            Op::MeanPool { input, window },
            Tensor::new(vec![b, c, t_out], out)?,
            Vec::new(),
        )
    }

    /// Nearest-neighbour upsampling along time: each step repeated `factor` times.
    pub fn upsample_repeat(&mut self, input: NodeId, factor: usize) -> Result<NodeId> {
        if factor == 0 {
            return Err(Error::Config("upsample factor must be >= 1".into()));
        }
        let (b, c, t) = self.values(input).dims3("upsample_repeat")?;
        let data = self.values(input).data();
        let t_out = t * factor;
        let mut out = vec![0.0f32; b * c * t_out];
        kernels::for_each_row_mut(&mut out, t_out, |row_idx, out_row| {
            let in_row = &data[row_idx * t..(row_idx + 1) * t];
            for (i, &v) in in_row.iter().enumerate() {
                out_row[i * factor..(i + 1) * factor].fill(v);
            }
        });
        self.push(
            Op::UpsampleRepeat { input, factor },
            Tensor::new(vec![b, c, t_out], out)?,
            Vec::new(),
        )
    }

    fn check_same_shape(&self, a: NodeId, b: NodeId, op: &'static str) -> Result<Vec<usize>> {
        let (ta, tb) = (self.values(a), self.values(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape {
                op,
                msg: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        Ok(ta.shape().to_vec())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "add")?;
        let out: Vec<f32> =
            self.values(a).data().iter().zip(self.values(b).data()).map(|(&x, &y)| x + y).collect();
        let id = self.push(Op::Add { a, b }, Tensor::new(shape, out)?, Vec::new())?;
        self.combine_precise(id, a, Some(b), |x, y| x + y);
        Ok(id)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "sub")?;
        let out: Vec<f32> =
            self.values(a).data().iter().zip(self.values(b).data()).map(|(&x, &y)| x - y).collect();
        let id = self.push(Op::Sub { a, b }, Tensor::new(shape, out)?, Vec::new())?;
        self.combine_precise(id, a, Some(b), |x, y| x - y);
        Ok(id)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, "mul")?;
        let out: Vec<f32> =
            self.values(a).data().iter().zip(self.values(b).data()).map(|(&x, &y)| x * y).collect();
        let id = self.push(Op::Mul { a, b }, Tensor::new(shape, out)?, Vec::new())?;
        self.combine_precise(id, a, Some(b), |x, y| x * y);
        Ok(id)
    }

    pub fn scale(&mut self, input: NodeId, c: f32) -> Result<NodeId> {
        let src = self.values(input);
        let out: Vec<f32> = src.data().iter().map(|&v| v * c).collect();
        let shape = src.shape().to_vec();
        let id = self.push(Op::Scale { input, c }, Tensor::new(shape, out)?, Vec::new())?;
        self.combine_precise(id, input, None, |x, _| x * c as f64);
        Ok(id)
    }

    /// Forward identity, backward zero.
    pub fn stop_gradient(&mut self, input: NodeId) -> Result<NodeId> {
        let t = self.values(input).clone();
        self.push(Op::StopGrad { input }, t, Vec::new())
    }

    /// Forward replaces the values (same shape), backward passes the gradient
    /// through unchanged. This is `input + stop_gradient(values - input)`.
    pub fn straight_through(&mut self, input: NodeId, values: Vec<f32>) -> Result<NodeId> {
        let src = self.values(input);
        if values.len() != src.len() {
            return Err(Error::Shape {
                op: "straight_through",
                msg: format!("{} replacement values for {} elements", values.len(), src.len()),
            });
        }
        let shape = src.shape().to_vec();
        self.push(Op::StraightThrough { input }, Tensor::new(shape, values)?, Vec::new())
    }

    /// ReLU followed by divisive normalisation across channels:
    /// f(x_i) = relu(x_i) / (sum_j relu(x_j) + eps), per (batch, time).
    pub fn simplex_relu(&mut self, input: NodeId, eps: f32) -> Result<NodeId> {
        let (b, c, t) = self.values(input).dims3("simplex_relu")?;
        let data = self.values(input).data();
        let mut out = vec![0.0f32; b * c * t];
        for bb in 0..b {
            let base = bb * c * t;
            for tt in 0..t {
                let mut sum = 0.0f32;
                for ch in 0..c {
                    sum += data[base + ch * t + tt].max(0.0);
                }
                let denom = sum + eps;
                for ch in 0..c {
                    out[base + ch * t + tt] = data[base + ch * t + tt].max(0.0) / denom;
                }
            }
        }
        self.push(Op::SimplexRelu { input, eps }, Tensor::new(vec![b, c, t], out)?, Vec::new())
    }

    /// Softmax across channels, per (batch, time).
    pub fn softmax_channels(&mut self, input: NodeId) -> Result<NodeId> {
        let (b, c, t) = self.values(input).dims3("softmax_channels")?;
        let data = self.values(input).data();
        let mut out = vec![0.0f32; b * c * t];
        for bb in 0..b {
            let base = bb * c * t;
            for tt in 0..t {
                let mut max = f32::NEG_INFINITY;
                for ch in 0..c {
                    max = max.max(data[base + ch * t + tt]);
                }
                let mut denom = 0.0f64;
                for ch in 0..c {
                    denom += ((data[base + ch * t + tt] - max) as f64).exp();
                }
                for ch in 0..c {
                    out[base + ch * t + tt] =
                        (((data[base + ch * t + tt] - max) as f64).exp() / denom) as f32;
                }
            }
        }
        self.push(Op::SoftmaxChannels { input }, Tensor::new(vec![b, c, t], out)?, Vec::new())
    }

    /// Mean over batch and time axes: `[B, C, T]` -> `[C]`.
    pub fn mean_batch_time(&mut self, input: NodeId) -> Result<NodeId> {
        let (b, c, t) = self.values(input).dims3("mean_batch_time")?;
        let data = self.values(input).data();
        let denom = (b * t) as f64;
        let mut out = vec![0.0f32; c];
        for ch in 0..c {
            let mut acc = 0.0f64;
            for bb in 0..b {
                for &v in &data[(bb * c + ch) * t..(bb * c + ch + 1) * t] {
                    acc += v as f64;
                }
            }
            out[ch] = (acc / denom) as f32;
        }
        self.push(Op::MeanBatchTime { input }, Tensor::new(vec![c], out)?, Vec::new())
    }

    /// sum_i (k * qbar_i - 1)^2 for a `[k]` input.
    pub fn diversity_l2(&mut self, qbar: NodeId) -> Result<NodeId> {
        let src = self.values(qbar);
        let k = src.len() as f64;
        let loss: f64 = src.data().iter().map(|&q| (k * q as f64 - 1.0).powi(2)).sum();
        self.push_scalar(Op::DiversityL2 { qbar }, loss)
    }

    /// sum_i qbar_i * ln(qbar_i), i.e. the negative entropy, with 0 ln 0 = 0.
    pub fn diversity_entropy(&mut self, qbar: NodeId) -> Result<NodeId> {
        let src = self.values(qbar);
        let loss: f64 = src
            .data()
            .iter()
            .map(|&q| if q > 0.0 { (q as f64) * (q as f64).ln() } else { 0.0 })
            .sum();
        self.push_scalar(Op::DiversityEntropy { qbar }, loss)
    }

    /// Mean of squared entries (used for the commitment loss).
    pub fn mean_sq(&mut self, input: NodeId) -> Result<NodeId> {
        let src = self.values(input);
        let acc: f64 = src.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        let loss = acc / src.len() as f64;
        self.push_scalar(Op::MeanSq { input }, loss)
    }

    pub fn sum_all(&mut self, input: NodeId) -> Result<NodeId> {
        let src = self.values(input);
        let acc: f64 = src.data().iter().map(|&v| v as f64).sum();
        self.push_scalar(Op::SumAll { input }, acc)
    }

    /// Mean negative log likelihood in nats per timestep. Logits `[B, K, T]`,
    /// targets `[B, T]` flattened row-major.
    pub fn categorical_nll(&mut self, logits: NodeId, targets: Arc<Vec<u16>>) -> Result<NodeId> {
        let (b, k, t) = self.values(logits).dims3("categorical_nll")?;
        if targets.len() != b * t {
            return Err(Error::Shape {
                op: "categorical_nll",
                msg: format!("expected {} targets, got {}", b * t, targets.len()),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&y| y as usize >= k) {
            return Err(Error::Input(format!("target {} out of range 0..{}", bad, k)));
        }
        let mut probs = vec![0.0f32; b * t * k];
        let loss =
            kernels::softmax_nll_forward(self.values(logits).data(), &targets, b, k, t, &mut probs);
        let id = self.push(
            Op::CategoricalNll { logits, targets },
            Tensor::scalar(loss as f32),
            probs,
        )?;
        self.nodes[id.0].precise = Some(loss);
        Ok(id)
    }

    /// Reverse pass from a scalar loss. Returns per-parameter gradients;
    /// parameters registered on the graph but unreachable from the loss get
    /// zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.values(loss).shape().is_empty() {
            return Err(Error::Shape {
                op: "backward",
                msg: format!("loss must be scalar, got {:?}", self.values(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGrad { node: i, op: op_name(&self.nodes[i].op) });
            }
            self.backward_op(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        Ok(Gradients { node_grads: grads, params: self.params.clone() })
    }

    fn grad_buf<'a>(
        &self,
        grads: &'a mut [Option<Vec<f32>>],
        id: NodeId,
    ) -> &'a mut Vec<f32> {
        let n = self.nodes[id.0].tensor.len();
        grads[id.0].get_or_insert_with(|| vec![0.0f32; n])
    }

    #[allow(clippy::too_many_lines)]
    fn backward_op(&self, i: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) -> Result<()> {
        match self.nodes[i].op.clone() {
            Op::Leaf => {}
            Op::Conv1d { input, weight, bias, dilation, mode } => {
                let (b, c_in, t) = self.values(input).dims3("conv1d")?;
                let wshape = self.values(weight).shape();
                let (c_out, filter) = (wshape[0], wshape[2]);
                let shifts = kernels::tap_shifts(filter, dilation, mode == PadMode::Causal);
                {
                    let w_vals = self.values(weight).data().to_vec();
                    let d_in = self.grad_buf(grads, input);
                    kernels::conv1d_backward_input(g, &w_vals, d_in, b, c_in, c_out, t, &shifts);
                }
                {
                    let in_vals = self.values(input).data().to_vec();
                    let d_w = self.grad_buf(grads, weight);
                    kernels::conv1d_backward_weight(
                        g, &in_vals, d_w, None, b, c_in, c_out, t, &shifts,
                    );
                }
                if let Some(bn) = bias {
                    let d_b = self.grad_buf(grads, bn);
                    for co in 0..c_out {
                        let mut acc = 0.0f64;
                        for bb in 0..b {
                            for &v in &g[(bb * c_out + co) * t..(bb * c_out + co + 1) * t] {
                                acc += v as f64;
                            }
                        }
                        d_b[co] += acc as f32;
                    }
                }
            }
            Op::SymbolConv { weight, symbols, batch, time } => {
                let wshape = self.values(weight).shape();
                let (filter, alphabet, c_out) = (wshape[0], wshape[1], wshape[2]);
                let d_w = self.grad_buf(grads, weight);
                kernels::symbol_conv_backward_weight(
                    g, &symbols, d_w, batch, alphabet, c_out, time, filter,
                );
            }
            Op::Gated { input } => {
                let (b, c, t) = self.values(input).dims3("gated_activation")?;
                let m = c / 2;
                let data = self.values(input).data();
                let d_in = self.grad_buf(grads, input);
                kernels::for_each_row_mut(d_in, t, |row_idx, d_row| {
                    let bb = row_idx / c;
                    let ch = row_idx % c;
                    let cc = ch % m;
                    let g_row = &g[(bb * m + cc) * t..(bb * m + cc + 1) * t];
                    let a_row = &data[(bb * c + cc) * t..(bb * c + cc + 1) * t];
                    let s_row = &data[(bb * c + m + cc) * t..(bb * c + m + cc + 1) * t];
                    if ch < m {
                        for i in 0..t {
                            let th = a_row[i].tanh();
                            d_row[i] += g_row[i] * sigmoid(s_row[i]) * (1.0 - th * th);
                        }
                    } else {
                        for i in 0..t {
                            let sg = sigmoid(s_row[i]);
                            d_row[i] += g_row[i] * a_row[i].tanh() * sg * (1.0 - sg);
                        }
                    }
                });
            }
            Op::Relu { input } => {
                let data = self.values(input).data().to_vec();
                let d_in = self.grad_buf(grads, input);
                for ((d, &x), &gv) in d_in.iter_mut().zip(&data).zip(g) {
                    if x > 0.0 {
                        *d += gv;
                    }
                }
            }
            Op::MeanPool { input, window } => {
                let (_, _, t) = self.values(input).dims3("mean_pool")?;
                let t_out = t / window;
                let inv = 1.0 / window as f32;
                let d_in = self.grad_buf(grads, input);
                kernels::for_each_row_mut(d_in, t, |row_idx, d_row| {
                    let g_row = &g[row_idx * t_out..(row_idx + 1) * t_out];
                    for (i, &gv) in g_row.iter().enumerate() {
                        let gd = gv * inv;
                        for d in &mut d_row[i * window..(i + 1) * window] {
                            *d += gd;
                        }
                    }
                });
            }
            Op::UpsampleRepeat { input, factor } => {
                let (_, _, t) = self.values(input).dims3("upsample_repeat")?;
                let t_out = t * factor;
                let d_in = self.grad_buf(grads, input);
                kernels::for_each_row_mut(d_in, t, |row_idx, d_row| {
                    let g_row = &g[row_idx * t_out..(row_idx + 1) * t_out];
                    for (i, d) in d_row.iter_mut().enumerate() {
                        let mut acc = 0.0f32;
                        for &gv in &g_row[i * factor..(i + 1) * factor] {
                            acc += gv;
                        }
                        *d += acc;
                    }
                });
            }
            Op::Add { a, b } => {
                for (d, &gv) in self.grad_buf(grads, a).iter_mut().zip(g) {
                    *d += gv;
                }
                for (d, &gv) in self.grad_buf(grads, b).iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::Sub { a, b } => {
                for (d, &gv) in self.grad_buf(grads, a).iter_mut().zip(g) {
                    *d += gv;
                }
                for (d, &gv) in self.grad_buf(grads, b).iter_mut().zip(g) {
                    *d -= gv;
                }
            }
            Op::Mul { a, b } => {
                let av = self.values(a).data().to_vec();
                let bv = self.values(b).data().to_vec();
                for ((d, &gv), &y) in self.grad_buf(grads, a).iter_mut().zip(g).zip(&bv) {
                    *d += gv * y;
                }
                for ((d, &gv), &x) in self.grad_buf(grads, b).iter_mut().zip(g).zip(&av) {
                    *d += gv * x;
                }
            }
            Op::Scale { input, c } => {
                for (d, &gv) in self.grad_buf(grads, input).iter_mut().zip(g) {
                    *d += gv * c;
                }
            }
            Op::StopGrad { .. } => {}
            Op::StraightThrough { input } => {
                for (d, &gv) in self.grad_buf(grads, input).iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::SimplexRelu { input, eps } => {
                let (b, c, t) = self.values(input).dims3("simplex_relu")?;
                let data = self.values(input).data().to_vec();
                let out = self.values(NodeId(i)).data().to_vec();
                let d_in = self.grad_buf(grads, input);
                for bb in 0..b {
                    let base = bb * c * t;
                    for tt in 0..t {
                        let mut sum = 0.0f32;
                        let mut dot = 0.0f32;
                        for ch in 0..c {
                            sum += data[base + ch * t + tt].max(0.0);
                            dot += g[base + ch * t + tt] * out[base + ch * t + tt];
                        }
                        let denom = sum + eps;
                        for ch in 0..c {
                            if data[base + ch * t + tt] > 0.0 {
                                d_in[base + ch * t + tt] +=
                                    (g[base + ch * t + tt] - dot) / denom;
                            }
                        }
                    }
                }
            }
            Op::SoftmaxChannels { input } => {
                let (b, c, t) = self.values(input).dims3("softmax_channels")?;
                let out = self.values(NodeId(i)).data().to_vec();
                let d_in = self.grad_buf(grads, input);
                for bb in 0..b {
                    let base = bb * c * t;
                    for tt in 0..t {
                        let mut dot = 0.0f32;
                        for ch in 0..c {
                            dot += g[base + ch * t + tt] * out[base + ch * t + tt];
                        }
                        for ch in 0..c {
                            let f = out[base + ch * t + tt];
                            d_in[base + ch * t + tt] += f * (g[base + ch * t + tt] - dot);
                        }
                    }
                }
            }
            Op::MeanBatchTime { input } => {
                let (b, c, t) = self.values(input).dims3("mean_batch_time")?;
                let inv = 1.0 / (b * t) as f32;
                let d_in = self.grad_buf(grads, input);
                kernels::for_each_row_mut(d_in, t, |row_idx, d_row| {
                    let ch = row_idx % c;
                    let gd = g[ch] * inv;
                    for d in d_row {
                        *d += gd;
                    }
                });
            }
            Op::DiversityL2 { qbar } => {
                let q = self.values(qbar).data().to_vec();
                let k = q.len() as f32;
                let d_q = self.grad_buf(grads, qbar);
                for (d, &qc) in d_q.iter_mut().zip(&q) {
                    *d += g[0] * 2.0 * k * (k * qc - 1.0);
                }
            }
            Op::DiversityEntropy { qbar } => {
                let q = self.values(qbar).data().to_vec();
                let d_q = self.grad_buf(grads, qbar);
                for (d, &qc) in d_q.iter_mut().zip(&q) {
                    if qc > 0.0 {
                        *d += g[0] * (qc.ln() + 1.0);
                    }
                }
            }
            Op::MeanSq { input } => {
                let data = self.values(input).data().to_vec();
                let inv = 2.0 / data.len() as f32;
                let d_in = self.grad_buf(grads, input);
                for (d, &x) in d_in.iter_mut().zip(&data) {
                    *d += g[0] * inv * x;
                }
            }
            Op::SumAll { input } => {
                for d in self.grad_buf(grads, input).iter_mut() {
                    *d += g[0];
                }
            }
            Op::CategoricalNll { logits, targets } => {
                let (b, k, t) = self.values(logits).dims3("categorical_nll")?;
                let probs = &self.nodes[i].saved;
                let mut d = vec![0.0f32; b * k * t];
                kernels::softmax_nll_backward(probs, &targets, g[0], b, k, t, &mut d);
                for (dst, &src) in self.grad_buf(grads, logits).iter_mut().zip(&d) {
                    *dst += src;
                }
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Result of a backward pass.
pub struct Gradients {
    node_grads: Vec<Option<Vec<f32>>>,
    params: Vec<(ParamId, NodeId)>,
}

impl Gradients {
    /// Gradient that reached a node, if any.
    pub fn node(&self, id: NodeId) -> Option<&[f32]> {
        self.node_grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient for a parameter registered on the graph. Unreachable
    /// parameters get zeros; unregistered parameters get `None`.
    pub fn param(&self, pid: ParamId, len: usize) -> Option<Vec<f32>> {
        let (_, node) = self.params.iter().find(|(p, _)| *p == pid)?;
        Some(match &self.node_grads[node.0] {
            Some(g) => g.clone(),
            None => vec![0.0; len],
        })
    }

    pub fn registered(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.iter().map(|(p, _)| *p)
    }
}
