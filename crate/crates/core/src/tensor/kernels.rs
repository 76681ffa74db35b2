//! Inner loops shared by the tape ops. Every output element is written by
//! exactly one closure with a fixed accumulation order, so results are
//! bit-identical regardless of thread count.

use rayon::prelude::*;

const PAR_MIN_ELEMS: usize = 1 << 15;

/// Run `f(row_index, row)` over contiguous rows, in parallel when worthwhile.
pub fn for_each_row_mut<F>(data: &mut [f32], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync,
{
    if row_len == 0 {
        return;
    }
    if data.len() >= PAR_MIN_ELEMS && data.len() / row_len >= 2 {
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    } else {
        for (i, row) in data.chunks_mut(row_len).enumerate() {
            f(i, row);
        }
    }
}

/// dst[c][r] = src[r][c] for a row-major [rows, cols] source.
pub fn transpose(src: &[f32], rows: usize, cols: usize, dst: &mut [f32]) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for (c, &v) in row.iter().enumerate() {
            dst[c * rows + r] = v;
        }
    }
}

/// Per-tap time shifts for a dilated filter: output[t] reads input[t + shift].
pub fn tap_shifts(filter_len: usize, dilation: usize, causal: bool) -> Vec<isize> {
    let d = dilation as isize;
    (0..filter_len as isize)
        .map(|f| {
            if causal {
                -(filter_len as isize - 1 - f) * d
            } else {
                (f - (filter_len as isize - 1) / 2) * d
            }
        })
        .collect()
}

/// out[b,co,t] = bias[co] + sum_{ci,f} w[co,ci,f] * in[b,ci,t+shift[f]]
/// with out-of-range reads treated as zero.
pub fn conv1d_forward(
    input: &[f32],
    weight: &[f32],
    bias: Option<&[f32]>,
    out: &mut [f32],
    batch: usize,
    c_in: usize,
    c_out: usize,
    time: usize,
    shifts: &[isize],
) {
    let filter = shifts.len();
    debug_assert_eq!(weight.len(), c_out * c_in * filter);
    debug_assert_eq!(out.len(), batch * c_out * time);
    for_each_row_mut(out, time, |row_idx, out_row| {
        let b = row_idx / c_out;
        let co = row_idx % c_out;
        let init = bias.map_or(0.0, |bs| bs[co]);
        out_row.fill(init);
        for ci in 0..c_in {
            let in_row = &input[(b * c_in + ci) * time..(b * c_in + ci + 1) * time];
            let w_base = (co * c_in + ci) * filter;
            for (f, &s) in shifts.iter().enumerate() {
                let w = weight[w_base + f];
                let t0 = (-s).max(0) as usize;
                let t1 = (time as isize).min(time as isize - s).max(0) as usize;
                for t in t0..t1 {
                    out_row[t] += w * in_row[(t as isize + s) as usize];
                }
            }
        }
    });
}

/// Gradient w.r.t. the convolution input.
pub fn conv1d_backward_input(
    d_out: &[f32],
    weight: &[f32],
    d_in: &mut [f32],
    batch: usize,
    c_in: usize,
    c_out: usize,
    time: usize,
    shifts: &[isize],
) {
    let filter = shifts.len();
    for_each_row_mut(d_in, time, |row_idx, d_in_row| {
        let b = row_idx / c_in;
        let ci = row_idx % c_in;
        for co in 0..c_out {
            let d_out_row = &d_out[(b * c_out + co) * time..(b * c_out + co + 1) * time];
            let w_base = (co * c_in + ci) * filter;
            for (f, &s) in shifts.iter().enumerate() {
                let w = weight[w_base + f];
                let t0 = (-s).max(0) as usize;
                let t1 = (time as isize).min(time as isize - s).max(0) as usize;
                // d_in[t+s] += w * d_out[t]
                for t in t0..t1 {
                    d_in_row[(t as isize + s) as usize] += w * d_out_row[t];
                }
            }
        }
    });
}

/// Gradients w.r.t. the convolution weight and bias (f64 accumulation).
pub fn conv1d_backward_weight(
    d_out: &[f32],
    input: &[f32],
    d_w: &mut [f32],
    d_bias: Option<&mut [f32]>,
    batch: usize,
    c_in: usize,
    c_out: usize,
    time: usize,
    shifts: &[isize],
) {
    let filter = shifts.len();
    for_each_row_mut(d_w, c_in * filter, |co, d_w_co| {
        for b in 0..batch {
            let d_out_row = &d_out[(b * c_out + co) * time..(b * c_out + co + 1) * time];
            for ci in 0..c_in {
                let in_row = &input[(b * c_in + ci) * time..(b * c_in + ci + 1) * time];
                for (f, &s) in shifts.iter().enumerate() {
                    let t0 = (-s).max(0) as usize;
                    let t1 = (time as isize).min(time as isize - s).max(0) as usize;
                    let mut acc = 0.0f64;
                    for t in t0..t1 {
                        acc += d_out_row[t] as f64 * in_row[(t as isize + s) as usize] as f64;
                    }
                    d_w_co[ci * filter + f] += acc as f32;
                }
            }
        }
    });
    if let Some(d_bias) = d_bias {
        for co in 0..c_out {
            let mut acc = 0.0f64;
            for b in 0..batch {
                for &v in &d_out[(b * c_out + co) * time..(b * c_out + co + 1) * time] {
                    acc += v as f64;
                }
            }
            d_bias[co] += acc as f32;
        }
    }
}

/// Causal convolution over an implicit one-hot encoding of a symbol sequence.
/// Weight layout is [filter, alphabet, c_out]; out-of-range history reads
/// contribute nothing (zero padding in one-hot space).
pub fn symbol_conv_forward(
    symbols: &[u16],
    weight: &[f32],
    out: &mut [f32],
    batch: usize,
    alphabet: usize,
    c_out: usize,
    time: usize,
    filter: usize,
) {
    debug_assert_eq!(symbols.len(), batch * time);
    debug_assert_eq!(out.len(), batch * c_out * time);
    let run = |b: usize, out_b: &mut [f32]| {
        let sym_b = &symbols[b * time..(b + 1) * time];
        let mut tmp = vec![0.0f32; time * c_out];
        for t in 0..time {
            let dst = &mut tmp[t * c_out..(t + 1) * c_out];
            for f in 0..filter {
                let back = filter - 1 - f;
                if back > t {
                    continue;
                }
                let y = sym_b[t - back] as usize;
                let src = &weight[(f * alphabet + y) * c_out..(f * alphabet + y + 1) * c_out];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        transpose(&tmp, time, c_out, out_b);
    };
    if batch * c_out * time >= PAR_MIN_ELEMS && batch >= 2 {
        out.par_chunks_mut(c_out * time)
            .enumerate()
            .for_each(|(b, out_b)| run(b, out_b));
    } else {
        for (b, out_b) in out.chunks_mut(c_out * time).enumerate() {
            run(b, out_b);
        }
    }
}

/// Scatter-add gradient into the symbol-conv weight. Parallel over taps so
/// each task owns a disjoint slab of d_w.
pub fn symbol_conv_backward_weight(
    d_out: &[f32],
    symbols: &[u16],
    d_w: &mut [f32],
    batch: usize,
    alphabet: usize,
    c_out: usize,
    time: usize,
    filter: usize,
) {
    // Transposed upstream gradient, [time, c_out] per batch element.
    let mut d_out_t = vec![0.0f32; batch * time * c_out];
    for b in 0..batch {
        transpose(
            &d_out[b * c_out * time..(b + 1) * c_out * time],
            c_out,
            time,
            &mut d_out_t[b * time * c_out..(b + 1) * time * c_out],
        );
    }
    let run = |f: usize, d_w_f: &mut [f32]| {
        let back = filter - 1 - f;
        for b in 0..batch {
            let sym_b = &symbols[b * time..(b + 1) * time];
            for t in back..time {
                let y = sym_b[t - back] as usize;
                let src = &d_out_t[(b * time + t) * c_out..(b * time + t + 1) * c_out];
                let dst = &mut d_w_f[y * c_out..(y + 1) * c_out];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    };
    if filter >= 4 && batch * time * c_out >= PAR_MIN_ELEMS {
        d_w.par_chunks_mut(alphabet * c_out)
            .enumerate()
            .for_each(|(f, d_w_f)| run(f, d_w_f));
    } else {
        for (f, d_w_f) in d_w.chunks_mut(alphabet * c_out).enumerate() {
            run(f, d_w_f);
        }
    }
}

/// Fused softmax + negative log likelihood, mean over batch*time, in nats.
/// Returns the loss and writes softmax probabilities as [batch, time, k].
pub fn softmax_nll_forward(
    logits: &[f32],
    targets: &[u16],
    batch: usize,
    k: usize,
    time: usize,
    probs: &mut [f32],
) -> f64 {
    debug_assert_eq!(probs.len(), batch * time * k);
    let losses: Vec<f64> = (0..batch)
        .map(|b| {
            let mut rows = vec![0.0f32; time * k];
            transpose(&logits[b * k * time..(b + 1) * k * time], k, time, &mut rows);
            let mut loss = 0.0f64;
            for t in 0..time {
                let row = &rows[t * k..(t + 1) * k];
                let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let mut denom = 0.0f64;
                for &v in row {
                    denom += ((v - max) as f64).exp();
                }
                let y = targets[b * time + t] as usize;
                loss -= (row[y] - max) as f64 - denom.ln();
                let p_row = &mut probs[(b * time + t) * k..(b * time + t + 1) * k];
                for (p, &v) in p_row.iter_mut().zip(row) {
                    *p = (((v - max) as f64).exp() / denom) as f32;
                }
            }
            loss
        })
        .collect();
    losses.iter().sum::<f64>() / (batch * time) as f64
}

/// d_logits = (probs - onehot(target)) * g / (batch*time), from saved probs.
pub fn softmax_nll_backward(
    probs: &[f32],
    targets: &[u16],
    g: f32,
    batch: usize,
    k: usize,
    time: usize,
    d_logits: &mut [f32],
) {
    let scale = g / (batch * time) as f32;
    for_each_row_mut(d_logits, k * time, |b, d_b| {
        let mut rows = vec![0.0f32; time * k];
        for t in 0..time {
            let p_row = &probs[(b * time + t) * k..(b * time + t + 1) * k];
            let y = targets[b * time + t] as usize;
            let dst = &mut rows[t * k..(t + 1) * k];
            for (d, &p) in dst.iter_mut().zip(p_row) {
                *d = p * scale;
            }
            dst[y] -= scale;
        }
        let mut back = vec![0.0f32; k * time];
        transpose(&rows, time, k, &mut back);
        d_b.copy_from_slice(&back);
    });
}
