//! Argmax bottleneck: queries live on the (k-1)-simplex, quantisation takes
//! the nearest one-hot vector, and a diversity loss keeps all outputs in use.

use super::{columns, uncolumns, BatchCodeStats, Projection};
use crate::error::Result;
use crate::tensor::{Graph, NodeId};

pub struct AmaeOutput {
    /// Straight-through node carrying the one-hot vectors.
    pub quantized: NodeId,
    pub codes: Vec<u16>,
    pub stats: BatchCodeStats,
}

/// Project raw encoder output onto the simplex: ReLU + divisive
/// normalisation (can emit exact zeros) or softmax.
pub fn amae_project(
    g: &mut Graph,
    raw: NodeId,
    projection: Projection,
    epsilon: f32,
) -> Result<NodeId> {
    match projection {
        Projection::ReluDivnorm => g.simplex_relu(raw, epsilon),
        Projection::Softmax => g.softmax_channels(raw),
    }
}

/// Argmax quantisation (ties to the lowest index) with a straight-through
/// gradient. Input must already be simplex-projected.
pub fn amae_quantize(g: &mut Graph, q: NodeId) -> Result<AmaeOutput> {
    let (cols, b, c, t) = columns(g, q)?;
    let positions = b * t;
    let mut codes = Vec::with_capacity(positions);
    let mut one_hot = vec![0.0f32; positions * c];
    let mut histogram = vec![0u64; c];
    let mut qbar = vec![0.0f64; c];
    for p in 0..positions {
        let row = &cols[p * c..(p + 1) * c];
        let mut best = 0usize;
        let mut best_v = row[0];
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        codes.push(best as u16);
        histogram[best] += 1;
        one_hot[p * c + best] = 1.0;
        for (j, &v) in row.iter().enumerate() {
            qbar[j] += v as f64;
        }
    }
    let qbar: Vec<f32> = qbar.iter().map(|&v| (v / positions as f64) as f32).collect();
    let quantized = g.straight_through(q, uncolumns(&one_hot, b, c, t))?;
    Ok(AmaeOutput { quantized, codes, stats: BatchCodeStats { qbar, histogram } })
}

/// Diversity loss over the pre-quantisation query mean: the L2 form
/// sum (k*qbar - 1)^2 for ReLU/divnorm, the negative entropy
/// sum qbar ln qbar for softmax.
pub fn diversity_loss(g: &mut Graph, qbar: NodeId, projection: Projection) -> Result<NodeId> {
    match projection {
        Projection::ReluDivnorm => g.diversity_l2(qbar),
        Projection::Softmax => g.diversity_entropy(qbar),
    }
}
