//! Dilated residual convolution stacks: configuration and receptive-field
//! arithmetic, graph assembly for training, and the ring-buffer generation
//! path for sampling.

mod incremental;
pub mod presets;

pub use incremental::{GenerationState, HeadWeights, InputWeights, StackWeights};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, PadMode, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StackMode {
    Causal,
    NonCausal,
}

/// Shape of one residual stack. Dilations run 1, 2, 4, ..., 2^(stages-1),
/// cycled `repeats` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub repeats: usize,
    pub stages: usize,
    pub filter_len: usize,
    /// Channels on the residual path (block input and output).
    pub residual: usize,
    /// Channels after the gate; the dilated conv produces 2x this.
    pub inner: usize,
    /// Channels of the skip accumulation.
    pub skip: usize,
    pub mode: StackMode,
    /// Channels of the conditioning bias input; 0 means unconditional.
    pub cond_channels: usize,
}

/// Exact receptive extent around one output timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    /// Timesteps of input at or before the output that can influence it,
    /// including the output position itself for causal stacks.
    pub past: usize,
    pub future: usize,
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0
            || self.stages == 0
            || self.filter_len == 0
            || self.residual == 0
            || self.inner == 0
            || self.skip == 0
        {
            return Err(Error::Config("stack sizes must all be positive".into()));
        }
        if self.mode == StackMode::NonCausal && self.filter_len % 2 == 0 {
            return Err(Error::Config(format!(
                "non-causal stacks need an odd filter length, got {}",
                self.filter_len
            )));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.repeats * self.stages
    }

    pub fn dilations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.repeats).flat_map(move |_| (0..self.stages).map(|s| 1usize << s))
    }

    /// Exact receptive field: causal stacks span
    /// 1 + sum (filter-1)*dilation past timesteps; non-causal stacks split
    /// each layer's span symmetrically.
    pub fn receptive_field(&self) -> ReceptiveField {
        let span: usize = self.dilations().map(|d| (self.filter_len - 1) * d).sum();
        match self.mode {
            StackMode::Causal => ReceptiveField { past: 1 + span, future: 0 },
            StackMode::NonCausal => {
                let side: usize = self.dilations().map(|d| ((self.filter_len - 1) / 2) * d).sum();
                ReceptiveField { past: side, future: side }
            }
        }
    }

    fn pad_mode(&self) -> PadMode {
        match self.mode {
            StackMode::Causal => PadMode::Causal,
            StackMode::NonCausal => PadMode::Same,
        }
    }

    /// Trainable values in the residual blocks (excluding input projection
    /// and head, which depend on the surrounding model).
    pub fn block_param_count(&self) -> usize {
        let dil = 2 * self.inner * self.residual * self.filter_len + 2 * self.inner;
        let cond = if self.cond_channels > 0 { 2 * self.inner * self.cond_channels } else { 0 };
        let res = self.residual * self.inner + self.residual;
        let skip = self.skip * self.inner + self.skip;
        self.blocks() * (dil + cond + res + skip)
    }
}

struct BlockParams {
    dilation: usize,
    dil_w: ParamId,
    dil_b: ParamId,
    cond_w: Option<ParamId>,
    res_w: ParamId,
    res_b: ParamId,
    skip_w: ParamId,
    skip_b: ParamId,
}

/// Parameters of one residual stack, created under a name prefix.
pub struct StackParams {
    pub config: StackConfig,
    blocks: Vec<BlockParams>,
}

impl StackParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        config: &StackConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let c = config.clone();
        let mut blocks = Vec::with_capacity(c.blocks());
        for (i, dilation) in c.dilations().enumerate() {
            let p = format!("{prefix}.b{i}");
            let fan_dil = c.residual * c.filter_len;
            blocks.push(BlockParams {
                dilation,
                dil_w: store.add_uniform(
                    format!("{p}.dil_w"),
                    vec![2 * c.inner, c.residual, c.filter_len],
                    fan_dil,
                    rng,
                ),
                dil_b: store.add_zeros(format!("{p}.dil_b"), vec![2 * c.inner]),
                cond_w: if c.cond_channels > 0 {
                    Some(store.add_uniform(
                        format!("{p}.cond_w"),
                        vec![2 * c.inner, c.cond_channels, 1],
                        c.cond_channels,
                        rng,
                    ))
                } else {
                    None
                },
                res_w: store.add_uniform(
                    format!("{p}.res_w"),
                    vec![c.residual, c.inner, 1],
                    c.inner,
                    rng,
                ),
                res_b: store.add_zeros(format!("{p}.res_b"), vec![c.residual]),
                skip_w: store.add_uniform(
                    format!("{p}.skip_w"),
                    vec![c.skip, c.inner, 1],
                    c.inner,
                    rng,
                ),
                skip_b: store.add_zeros(format!("{p}.skip_b"), vec![c.skip]),
            });
        }
        Ok(StackParams { config: c, blocks })
    }

    /// Run the stack. `input` is `[B, residual, T]`; `cond` (required iff
    /// `cond_channels > 0`) is `[B, cond_channels, T]`, already time-aligned.
    /// Returns the skip sum `[B, skip, T]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: NodeId,
        cond: Option<NodeId>,
    ) -> Result<NodeId> {
        match (self.config.cond_channels, cond) {
            (0, Some(_)) => {
                return Err(Error::Config("conditioning passed to an unconditional stack".into()))
            }
            (c, None) if c > 0 => {
                return Err(Error::Config("conditional stack needs a conditioning input".into()))
            }
            _ => {}
        }
        let (_, c_in, t_in) = g.values(input).dims3("stack_forward")?;
        if c_in != self.config.residual {
            return Err(Error::Shape {
                op: "stack_forward",
                msg: format!("input has {} channels, stack wants {}", c_in, self.config.residual),
            });
        }
        if let Some(cn) = cond {
            let (_, cc, tc) = g.values(cn).dims3("stack_forward")?;
            if cc != self.config.cond_channels || tc != t_in {
                return Err(Error::Shape {
                    op: "stack_forward",
                    msg: format!(
                        "conditioning [{}ch, {}t] misaligned with input [{}ch, {}t]",
                        cc, tc, self.config.cond_channels, t_in
                    ),
                });
            }
        }

        let mode = self.config.pad_mode();
        let mut x = input;
        let mut skip_sum: Option<NodeId> = None;
        for block in &self.blocks {
            let dil_w = g.param(store, block.dil_w)?;
            let dil_b = g.param(store, block.dil_b)?;
            let mut z = g.conv1d(x, dil_w, Some(dil_b), block.dilation, mode)?;
            if let (Some(cw), Some(cn)) = (block.cond_w, cond) {
                let cw = g.param(store, cw)?;
                let bias = g.conv1d(cn, cw, None, 1, PadMode::Causal)?;
                z = g.add(z, bias)?;
            }
            let h = g.gated_activation(z)?;

            let skip_w = g.param(store, block.skip_w)?;
            let skip_b = g.param(store, block.skip_b)?;
            let s = g.conv1d(h, skip_w, Some(skip_b), 1, PadMode::Causal)?;
            skip_sum = Some(match skip_sum {
                Some(acc) => g.add(acc, s)?,
                None => s,
            });

            let res_w = g.param(store, block.res_w)?;
            let res_b = g.param(store, block.res_b)?;
            let r = g.conv1d(h, res_w, Some(res_b), 1, PadMode::Causal)?;
            x = g.add(x, r)?;
        }
        Ok(skip_sum.expect("at least one block"))
    }

    pub(crate) fn block_pids(&self) -> impl Iterator<Item = &BlockParams> {
        self.blocks.iter()
    }
}

/// Output head applied to a skip sum: ReLU, length-1 conv, ReLU, length-1
/// conv. Logit heads start zero-initialised so an untrained model emits a
/// uniform distribution.
pub struct Head {
    pub skip: usize,
    pub out: usize,
    h1_w: ParamId,
    h1_b: ParamId,
    h2_w: ParamId,
    h2_b: ParamId,
}

impl Head {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        skip: usize,
        out: usize,
        zero_final: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let h1_w = store.add_uniform(format!("{prefix}.h1_w"), vec![skip, skip, 1], skip, rng);
        let h1_b = store.add_zeros(format!("{prefix}.h1_b"), vec![skip]);
        let h2_w = if zero_final {
            store.add_zeros(format!("{prefix}.h2_w"), vec![out, skip, 1])
        } else {
            store.add_uniform(format!("{prefix}.h2_w"), vec![out, skip, 1], skip, rng)
        };
        let h2_b = store.add_zeros(format!("{prefix}.h2_b"), vec![out]);
        Head { skip, out, h1_w, h1_b, h2_w, h2_b }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, skip_sum: NodeId) -> Result<NodeId> {
        let r1 = g.relu(skip_sum)?;
        let w1 = g.param(store, self.h1_w)?;
        let b1 = g.param(store, self.h1_b)?;
        let h = g.conv1d(r1, w1, Some(b1), 1, PadMode::Causal)?;
        let r2 = g.relu(h)?;
        let w2 = g.param(store, self.h2_w)?;
        let b2 = g.param(store, self.h2_b)?;
        g.conv1d(r2, w2, Some(b2), 1, PadMode::Causal)
    }

    pub fn param_count(skip: usize, out: usize) -> usize {
        skip * skip + skip + out * skip + out
    }
}

/// Projection from raw model input to the residual channel count: a length-1
/// convolution for continuous input, an embedding table for symbol input.
pub enum InputProj {
    Continuous { channels: usize, w: ParamId, b: ParamId },
    Symbols { alphabet: usize, table: ParamId },
}

impl InputProj {
    pub fn continuous(
        store: &mut ParamStore,
        prefix: &str,
        channels: usize,
        residual: usize,
        rng: &mut impl Rng,
    ) -> Self {
        InputProj::Continuous {
            channels,
            w: store.add_uniform(format!("{prefix}.in_w"), vec![residual, channels, 1], channels, rng),
            b: store.add_zeros(format!("{prefix}.in_b"), vec![residual]),
        }
    }

    pub fn symbols(
        store: &mut ParamStore,
        prefix: &str,
        alphabet: usize,
        residual: usize,
        rng: &mut impl Rng,
    ) -> Self {
        InputProj::Symbols {
            alphabet,
            table: store.add_uniform(
                format!("{prefix}.in_table"),
                vec![1, alphabet, residual],
                1,
                rng,
            ),
        }
    }

    pub fn forward_continuous(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: NodeId,
    ) -> Result<NodeId> {
        match self {
            InputProj::Continuous { w, b, .. } => {
                let wn = g.param(store, *w)?;
                let bn = g.param(store, *b)?;
                g.conv1d(input, wn, Some(bn), 1, PadMode::Causal)
            }
            InputProj::Symbols { .. } => {
                Err(Error::Config("symbol input projection fed a tensor".into()))
            }
        }
    }

    pub fn forward_symbols(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        symbols: Arc<Vec<u16>>,
        batch: usize,
        time: usize,
    ) -> Result<NodeId> {
        match self {
            InputProj::Symbols { table, .. } => {
                let tn = g.param(store, *table)?;
                g.symbol_conv(symbols, batch, time, tn)
            }
            InputProj::Continuous { .. } => {
                Err(Error::Config("continuous input projection fed symbols".into()))
            }
        }
    }
}

#[cfg(test)]
mod tests;
