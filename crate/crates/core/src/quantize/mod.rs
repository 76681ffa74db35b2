//! The discrete bottleneck: vector quantisation with EMA codebook updates,
//! and the argmax bottleneck over simplex-projected queries. Both forward the
//! quantised value and pass decoder gradients straight through to the query.

mod amae;
mod vq;

pub use amae::{amae_project, amae_quantize, diversity_loss, AmaeOutput};
pub use vq::{Codebook, VqOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerKind {
    Vq,
    Amae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    ReluDivnorm,
    Softmax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub kind: QuantizerKind,
    /// Codebook size (number of discrete codes).
    pub k: usize,
    /// Code dimension; only meaningful for VQ (argmax queries are k-dim).
    pub d: usize,
    /// Commitment coefficient.
    pub beta: f32,
    /// Codebook EMA coefficient.
    pub alpha: f32,
    /// Diversity coefficient.
    pub nu: f32,
    pub projection: Projection,
    /// Divisive-normalisation epsilon.
    pub epsilon: f32,
}

impl QuantizerConfig {
    pub fn vq(k: usize, d: usize) -> Self {
        QuantizerConfig {
            kind: QuantizerKind::Vq,
            k,
            d,
            beta: 0.25,
            alpha: 1e-3,
            nu: 0.0,
            projection: Projection::ReluDivnorm,
            epsilon: 1e-5,
        }
    }

    pub fn amae(k: usize) -> Self {
        QuantizerConfig {
            kind: QuantizerKind::Amae,
            k,
            d: k,
            beta: 0.0,
            alpha: 0.0,
            nu: 0.1,
            projection: Projection::ReluDivnorm,
            epsilon: 1e-5,
        }
    }

    /// Channel count the encoder must project to.
    pub fn query_dim(&self) -> usize {
        match self.kind {
            QuantizerKind::Vq => self.d,
            QuantizerKind::Amae => self.k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("codebook size k = {} must be >= 2", self.k)));
        }
        if self.beta < 0.0 || self.alpha < 0.0 || self.nu < 0.0 || self.epsilon < 0.0 {
            return Err(Error::Config("quantizer coefficients must be >= 0".into()));
        }
        if self.kind == QuantizerKind::Vq {
            if self.d == 0 {
                return Err(Error::Config("vq code dimension must be >= 1".into()));
            }
            if !(0.0..1.0).contains(&self.alpha) || self.alpha == 0.0 {
                return Err(Error::Config(format!(
                    "vq EMA coefficient alpha = {} must lie in (0, 1)",
                    self.alpha
                )));
            }
        }
        Ok(())
    }
}

/// Pre-quantisation batch statistics: the query mean over batch and time,
/// and the code usage histogram.
#[derive(Debug, Clone)]
pub struct BatchCodeStats {
    pub qbar: Vec<f32>,
    pub histogram: Vec<u64>,
}

impl BatchCodeStats {
    pub fn total(&self) -> u64 {
        self.histogram.iter().sum()
    }
}

/// Exponential of the empirical code-usage entropy: k means all codes are
/// used equally often, 1 means a single code.
pub fn perplexity(histogram: &[u64]) -> f64 {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut entropy = 0.0f64;
    for &h in histogram {
        if h > 0 {
            let p = h as f64 / total as f64;
            entropy -= p * p.ln();
        }
    }
    entropy.exp()
}

/// Usage histogram of a code sequence.
pub fn histogram(codes: &[u16], k: usize) -> Vec<u64> {
    let mut h = vec![0u64; k];
    for &c in codes {
        h[c as usize] += 1;
    }
    h
}

/// Columns of a `[B, C, T]` node as (b, t)-major rows of length C.
pub(crate) fn columns(g: &Graph, node: NodeId) -> Result<(Vec<f32>, usize, usize, usize)> {
    let (b, c, t) = g.values(node).dims3("quantize")?;
    let data = g.values(node).data();
    let mut cols = vec![0.0f32; b * t * c];
    for bb in 0..b {
        for ch in 0..c {
            let row = &data[(bb * c + ch) * t..(bb * c + ch + 1) * t];
            for (tt, &v) in row.iter().enumerate() {
                cols[(bb * t + tt) * c + ch] = v;
            }
        }
    }
    Ok((cols, b, c, t))
}

/// Inverse of `columns`: (b, t)-major rows back to `[B, C, T]` layout.
pub(crate) fn uncolumns(cols: &[f32], b: usize, c: usize, t: usize) -> Vec<f32> {
    let mut data = vec![0.0f32; b * c * t];
    for bb in 0..b {
        for tt in 0..t {
            let row = &cols[(bb * t + tt) * c..(bb * t + tt + 1) * c];
            for (ch, &v) in row.iter().enumerate() {
                data[(bb * c + ch) * t + tt] = v;
            }
        }
    }
    data
}
