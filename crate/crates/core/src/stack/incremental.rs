//! Ring-buffer generation path.
//!
//! `GenerationState` replays a causal stack one timestep at a time at
//! amortised cost O(blocks * filter * channels^2) per step, independent of
//! how much has been generated. Accumulation order mirrors the batch kernels
//! so incremental and batch logits agree.

use super::{Head, InputProj, StackConfig, StackMode, StackParams};
use crate::error::{Error, Result};
use crate::tensor::ParamStore;

struct BlockWeights {
    dilation: usize,
    dil_w: Vec<f32>,
    dil_b: Vec<f32>,
    cond_w: Option<Vec<f32>>,
    res_w: Vec<f32>,
    res_b: Vec<f32>,
    skip_w: Vec<f32>,
    skip_b: Vec<f32>,
}

/// Plain-buffer snapshot of a stack's parameters for sampling.
pub struct StackWeights {
    pub config: StackConfig,
    blocks: Vec<BlockWeights>,
}

impl StackWeights {
    pub fn snapshot(store: &ParamStore, params: &StackParams) -> Self {
        let blocks = params
            .block_pids()
            .map(|b| BlockWeights {
                dilation: b.dilation,
                dil_w: store.get(b.dil_w).data().to_vec(),
                dil_b: store.get(b.dil_b).data().to_vec(),
                cond_w: b.cond_w.map(|p| store.get(p).data().to_vec()),
                res_w: store.get(b.res_w).data().to_vec(),
                res_b: store.get(b.res_b).data().to_vec(),
                skip_w: store.get(b.skip_w).data().to_vec(),
                skip_b: store.get(b.skip_b).data().to_vec(),
            })
            .collect();
        StackWeights { config: params.config.clone(), blocks }
    }
}

/// Snapshot of an output head for sampling.
pub struct HeadWeights {
    skip: usize,
    out: usize,
    h1_w: Vec<f32>,
    h1_b: Vec<f32>,
    h2_w: Vec<f32>,
    h2_b: Vec<f32>,
}

impl HeadWeights {
    pub fn snapshot(store: &ParamStore, head: &Head) -> Self {
        HeadWeights {
            skip: head.skip,
            out: head.out,
            h1_w: store.get(head.h1_w).data().to_vec(),
            h1_b: store.get(head.h1_b).data().to_vec(),
            h2_w: store.get(head.h2_w).data().to_vec(),
            h2_b: store.get(head.h2_b).data().to_vec(),
        }
    }

    /// ReLU -> conv1 -> ReLU -> conv1 on a single timestep.
    pub fn apply(&self, skip_sum: &[f32], out: &mut Vec<f32>) {
        debug_assert_eq!(skip_sum.len(), self.skip);
        let mut h = vec![0.0f32; self.skip];
        for (c, hv) in h.iter_mut().enumerate() {
            let mut acc = self.h1_b[c];
            for ci in 0..self.skip {
                acc += self.h1_w[c * self.skip + ci] * skip_sum[ci].max(0.0);
            }
            *hv = acc;
        }
        out.clear();
        out.resize(self.out, 0.0);
        for (c, ov) in out.iter_mut().enumerate() {
            let mut acc = self.h2_b[c];
            for ci in 0..self.skip {
                acc += self.h2_w[c * self.skip + ci] * h[ci].max(0.0);
            }
            *ov = acc;
        }
    }
}

/// Snapshot of an input projection for sampling.
pub enum InputWeights {
    Continuous { w: Vec<f32>, b: Vec<f32>, channels: usize, residual: usize },
    Symbols { table: Vec<f32>, alphabet: usize, residual: usize },
}

impl InputWeights {
    pub fn snapshot(store: &ParamStore, proj: &InputProj) -> Self {
        match proj {
            InputProj::Continuous { channels, w, b } => {
                let wt = store.get(*w);
                let residual = wt.shape()[0];
                InputWeights::Continuous {
                    w: wt.data().to_vec(),
                    b: store.get(*b).data().to_vec(),
                    channels: *channels,
                    residual,
                }
            }
            InputProj::Symbols { alphabet, table } => {
                let tt = store.get(*table);
                let residual = tt.shape()[2];
                InputWeights::Symbols {
                    table: tt.data().to_vec(),
                    alphabet: *alphabet,
                    residual,
                }
            }
        }
    }

    pub fn residual(&self) -> usize {
        match self {
            InputWeights::Continuous { residual, .. } => *residual,
            InputWeights::Symbols { residual, .. } => *residual,
        }
    }

    pub fn apply_continuous(&self, x: &[f32], out: &mut Vec<f32>) {
        match self {
            InputWeights::Continuous { w, b, channels, residual } => {
                debug_assert_eq!(x.len(), *channels);
                out.clear();
                for c in 0..*residual {
                    let mut acc = b[c];
                    for ci in 0..*channels {
                        acc += w[c * channels + ci] * x[ci];
                    }
                    out.push(acc);
                }
            }
            InputWeights::Symbols { .. } => panic!("symbol projection fed a continuous value"),
        }
    }

    pub fn apply_symbol(&self, symbol: u16, out: &mut Vec<f32>) {
        match self {
            InputWeights::Symbols { table, alphabet, residual } => {
                debug_assert!((symbol as usize) < *alphabet);
                out.clear();
                out.extend_from_slice(
                    &table[symbol as usize * residual..(symbol as usize + 1) * residual],
                );
            }
            InputWeights::Continuous { .. } => panic!("continuous projection fed a symbol"),
        }
    }
}

/// Per-stream sampling state: one ring buffer per block holding the last
/// (filter-1)*dilation block inputs.
pub struct GenerationState {
    residual: usize,
    inner: usize,
    skip: usize,
    filter: usize,
    step: u64,
    rings: Vec<Vec<f32>>,
    skip_sum: Vec<f32>,
    z: Vec<f32>,
    h: Vec<f32>,
    x: Vec<f32>,
}

impl GenerationState {
    pub fn new(config: &StackConfig) -> Result<Self> {
        if config.mode != StackMode::Causal {
            return Err(Error::Config("generation state requires a causal stack".into()));
        }
        config.validate()?;
        let rings = config
            .dilations()
            .map(|d| vec![0.0f32; (config.filter_len - 1) * d * config.residual])
            .collect();
        Ok(GenerationState {
            residual: config.residual,
            inner: config.inner,
            skip: config.skip,
            filter: config.filter_len,
            step: 0,
            rings,
            skip_sum: vec![0.0; config.skip],
            z: vec![0.0; 2 * config.inner],
            h: vec![0.0; config.inner],
            x: vec![0.0; config.residual],
        })
    }

    pub fn reset(&mut self) {
        self.step = 0;
        for ring in &mut self.rings {
            ring.fill(0.0);
        }
    }

    /// Total ring-buffer entries: sum over layers of (filter-1)*dilation*residual.
    pub fn buffer_entries(&self) -> usize {
        self.rings.iter().map(|r| r.len()).sum()
    }

    pub fn next_step(&self) -> u64 {
        self.step
    }

    /// Advance one timestep. `t` must equal the number of steps taken so far;
    /// `x_t` is the post-projection residual input and `cond_t` the
    /// conditioning column for this timestep. Returns the skip sum column.
    pub fn step(
        &mut self,
        weights: &StackWeights,
        t: u64,
        x_t: &[f32],
        cond_t: Option<&[f32]>,
    ) -> Result<&[f32]> {
        if t != self.step {
            return Err(Error::Input(format!(
                "out-of-order generation step {} (expected {})",
                t, self.step
            )));
        }
        if x_t.len() != self.residual {
            return Err(Error::Shape {
                op: "incremental_step",
                msg: format!("input column has {} channels, want {}", x_t.len(), self.residual),
            });
        }
        let (r, m, filter) = (self.residual, self.inner, self.filter);
        self.x.copy_from_slice(x_t);
        self.skip_sum.fill(0.0);

        for (bi, block) in weights.blocks.iter().enumerate() {
            let d = block.dilation;
            let ring_slots = (filter - 1) * d;

            // Dilated conv at this timestep, accumulation order (ci, f)
            // matching the batch kernel, then the conditioning projection
            // added as one term.
            for co in 0..2 * m {
                let mut acc = block.dil_b[co];
                for ci in 0..r {
                    let w_base = (co * r + ci) * filter;
                    for f in 0..filter {
                        let back = (filter - 1 - f) * d;
                        let v = if back == 0 {
                            self.x[ci]
                        } else if (t as usize) < back {
                            0.0
                        } else {
                            let slot = (t as usize - back) % ring_slots;
                            self.rings[bi][slot * r + ci]
                        };
                        acc += weights.blocks[bi].dil_w[w_base + f] * v;
                    }
                }
                if let (Some(cw), Some(cv)) = (&block.cond_w, cond_t) {
                    let cc = cv.len();
                    let mut cacc = 0.0f32;
                    for ci in 0..cc {
                        cacc += cw[co * cc + ci] * cv[ci];
                    }
                    acc += cacc;
                }
                self.z[co] = acc;
            }

            for c in 0..m {
                self.h[c] = self.z[c].tanh() * sigmoid(self.z[m + c]);
            }

            for so in 0..self.skip {
                let mut acc = block.skip_b[so];
                for ci in 0..m {
                    acc += block.skip_w[so * m + ci] * self.h[ci];
                }
                self.skip_sum[so] += acc;
            }

            // Save this block's input before moving to the residual output.
            if ring_slots > 0 {
                let slot = (t as usize) % ring_slots;
                self.rings[bi][slot * r..(slot + 1) * r].copy_from_slice(&self.x);
            }
            for ro in 0..r {
                let mut acc = block.res_b[ro];
                for ci in 0..m {
                    acc += block.res_w[ro * m + ci] * self.h[ci];
                }
                self.x[ro] += acc;
            }
        }

        self.step += 1;
        Ok(&self.skip_sum)
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}
