//! Categorical sampling from logits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Draw a symbol from softmax(logits / temperature), or the argmax when
/// `greedy` (ties to the lowest index). Temperatures below 1 cool the
/// distribution.
pub fn sample_logits(
    logits: &[f32],
    temperature: f32,
    greedy: bool,
    rng: &mut ChaCha8Rng,
) -> u16 {
    if greedy || temperature <= 0.0 {
        let mut best = 0usize;
        let mut best_v = f32::NEG_INFINITY;
        for (i, &v) in logits.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        return best as u16;
    }
    let inv_t = 1.0 / temperature as f64;
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let weights: Vec<f64> = logits.iter().map(|&v| ((v as f64 - max) * inv_t).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen_range(0.0..1.0) * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i as u16;
        }
    }
    (logits.len() - 1) as u16
}
