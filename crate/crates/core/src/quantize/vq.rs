//! Vector quantisation with an exponentially smoothed K-means codebook.

use rand::Rng;

use super::{columns, uncolumns, BatchCodeStats};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};

const COUNT_FLOOR: f32 = 1e-12;

/// k x d centroids with the EMA accumulators that maintain them.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    d: usize,
    centroids: Vec<f32>,
    ema_counts: Vec<f32>,
    ema_sums: Vec<f32>,
    initialized: bool,
}

/// Result of quantising one batch of queries.
pub struct VqOutput {
    /// Straight-through node carrying the quantised queries.
    pub quantized: NodeId,
    /// Code indices, (batch, time)-major.
    pub codes: Vec<u16>,
    /// mean || stop_gradient(q') - q ||^2 (unscaled; beta is applied by the
    /// loss assembly).
    pub commitment: NodeId,
    pub stats: BatchCodeStats,
    /// This batch's per-code assignment counts and query sums, for the EMA
    /// update.
    pub assign_counts: Vec<f32>,
    pub assign_sums: Vec<f32>,
}

impl Codebook {
    pub fn new(k: usize, d: usize) -> Self {
        Codebook {
            k,
            d,
            centroids: vec![0.0; k * d],
            ema_counts: vec![0.0; k],
            ema_sums: vec![0.0; k * d],
            initialized: false,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.d..(i + 1) * self.d]
    }

    /// Data-dependent init: k random query columns from the first batch,
    /// counts 1, sums equal to the centroids.
    pub fn init_from_queries(&mut self, g: &Graph, q: NodeId, rng: &mut impl Rng) -> Result<()> {
        let (cols, b, c, t) = columns(g, q)?;
        if c != self.d {
            return Err(Error::Shape {
                op: "codebook_init",
                msg: format!("queries have dim {}, codebook wants {}", c, self.d),
            });
        }
        let positions = b * t;
        for i in 0..self.k {
            let pos = rng.gen_range(0..positions);
            self.centroids[i * self.d..(i + 1) * self.d]
                .copy_from_slice(&cols[pos * c..(pos + 1) * c]);
        }
        self.ema_sums.copy_from_slice(&self.centroids);
        self.ema_counts.fill(1.0);
        self.initialized = true;
        Ok(())
    }

    /// Restore from checkpoint state.
    pub fn restore(
        k: usize,
        d: usize,
        centroids: Vec<f32>,
        ema_counts: Vec<f32>,
        ema_sums: Vec<f32>,
        initialized: bool,
    ) -> Self {
        Codebook { k, d, centroids, ema_counts, ema_sums, initialized }
    }

    pub fn state(&self) -> (&[f32], &[f32], &[f32]) {
        (&self.centroids, &self.ema_counts, &self.ema_sums)
    }

    /// Nearest centroid per (batch, time) column, ties to the lowest index.
    pub fn assign(&self, cols: &[f32], positions: usize) -> Vec<u16> {
        let d = self.d;
        let mut codes = Vec::with_capacity(positions);
        for p in 0..positions {
            let q = &cols[p * d..(p + 1) * d];
            let mut best = 0usize;
            let mut best_dist = f32::INFINITY;
            for i in 0..self.k {
                let c = self.centroid(i);
                let mut dist = 0.0f32;
                for j in 0..d {
                    let diff = q[j] - c[j];
                    dist += diff * diff;
                }
                if dist < best_dist {
                    best_dist = dist;
                    best = i;
                }
            }
            codes.push(best as u16);
        }
        codes
    }

    /// Quantise a query node `[B, d, T]`: nearest-centroid lookup with a
    /// straight-through gradient, plus the commitment term
    /// mean || stop_gradient(q') - q ||^2.
    pub fn quantize(&self, g: &mut Graph, q: NodeId) -> Result<VqOutput> {
        if !self.initialized {
            return Err(Error::Config("codebook used before initialisation".into()));
        }
        let (cols, b, c, t) = columns(g, q)?;
        if c != self.d {
            return Err(Error::Shape {
                op: "vq_quantize",
                msg: format!("queries have dim {}, codebook wants {}", c, self.d),
            });
        }
        let positions = b * t;
        let codes = self.assign(&cols, positions);

        let mut q_cols = vec![0.0f32; positions * c];
        let mut histogram = vec![0u64; self.k];
        let mut assign_counts = vec![0.0f32; self.k];
        let mut assign_sums = vec![0.0f32; self.k * self.d];
        let mut qbar = vec![0.0f64; c];
        for p in 0..positions {
            let code = codes[p] as usize;
            histogram[code] += 1;
            assign_counts[code] += 1.0;
            q_cols[p * c..(p + 1) * c].copy_from_slice(self.centroid(code));
            for j in 0..c {
                assign_sums[code * c + j] += cols[p * c + j];
                qbar[j] += cols[p * c + j] as f64;
            }
        }
        let qbar: Vec<f32> = qbar.iter().map(|&v| (v / positions as f64) as f32).collect();

        let quant_values = uncolumns(&q_cols, b, c, t);
        let quantized = g.straight_through(q, quant_values.clone())?;
        let frozen = g.constant(Tensor::new(vec![b, c, t], quant_values)?)?;
        let diff = g.sub(q, frozen)?;
        let commitment = g.mean_sq(diff)?;

        Ok(VqOutput {
            quantized,
            codes,
            commitment,
            stats: BatchCodeStats { qbar, histogram },
            assign_counts,
            assign_sums,
        })
    }

    /// EMA update from one batch's assignments:
    ///   counts_i <- (1-alpha) counts_i + alpha n_i
    ///   sums_i   <- (1-alpha) sums_i   + alpha s_i
    /// with centroids recomputed as sums / max(counts, floor).
    pub fn ema_update(&mut self, assign_counts: &[f32], assign_sums: &[f32], alpha: f32) {
        debug_assert!(self.initialized);
        for i in 0..self.k {
            self.ema_counts[i] = (1.0 - alpha) * self.ema_counts[i] + alpha * assign_counts[i];
            for j in 0..self.d {
                let idx = i * self.d + j;
                self.ema_sums[idx] = (1.0 - alpha) * self.ema_sums[idx] + alpha * assign_sums[idx];
                self.centroids[idx] = self.ema_sums[idx] / self.ema_counts[i].max(COUNT_FLOOR);
            }
        }
    }
}
