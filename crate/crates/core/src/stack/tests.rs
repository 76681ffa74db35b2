use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::presets;
use super::*;
use crate::tensor::{Graph, ParamStore, Tensor};

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let u1: f64 = rng.gen_range(1e-9..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
        })
        .collect()
}

#[test]
fn receptive_field_matches_published_figures() {
    // Quoted as 1024 / 512-per-side / 6144; the additive formula gives the
    // exact values below.
    assert_eq!(
        presets::appendix_local().receptive_field(),
        ReceptiveField { past: 1021, future: 0 }
    );
    assert_eq!(
        presets::appendix_encoder().receptive_field(),
        ReceptiveField { past: 510, future: 510 }
    );
    assert_eq!(
        presets::appendix_large_prior().receptive_field(),
        ReceptiveField { past: 6139, future: 0 }
    );
    assert_eq!(presets::appendix_very_large_prior().receptive_field().past, 12277);
    assert_eq!(presets::appendix_thin_prior().receptive_field().past, 49147);
}

#[test]
fn receptive_field_toy_presets() {
    assert_eq!(presets::toy_local().receptive_field().past, 127);
    assert_eq!(presets::toy_prior().receptive_field().past, 511);
    assert_eq!(presets::micro_local().receptive_field().past, 64);
    let enc = presets::micro_encoder().receptive_field();
    assert_eq!((enc.past, enc.future), (63, 63));
}

#[test]
fn block_param_count_matches_hand_count() {
    // One block of the published local model:
    //   dilated conv 128x384x2 + 128 bias       = 98_432
    //   conditioning projection 128x256         = 32_768
    //   residual conv 384x64 + 384              = 24_960
    //   skip conv 384x64 + 384                  = 24_960
    // -> 181_120 per block, 32 blocks.
    let c = presets::appendix_local();
    assert_eq!(c.block_param_count(), 32 * 181_120);

    // Head for 256-way logits on 384 skip channels.
    assert_eq!(Head::param_count(384, 256), 384 * 384 + 384 + 256 * 384 + 256);
}

/// Forward helper: projection-free random stack over a given config.
fn run_stack(
    config: &StackConfig,
    input: &[f32],
    b: usize,
    t: usize,
    seed: u64,
    cond: Option<&[f32]>,
) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let params = StackParams::init(&mut store, "s", config, &mut rng).unwrap();
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![b, config.residual, t], input.to_vec()).unwrap()).unwrap();
    let c = cond.map(|cv| {
        g.input(Tensor::new(vec![b, config.cond_channels, t], cv.to_vec()).unwrap()).unwrap()
    });
    let skip = params.forward(&mut g, &store, x, c).unwrap();
    g.values(skip).data().to_vec()
}

#[test]
fn causality_probe_through_full_stack() {
    let mut config = presets::micro_local();
    config.cond_channels = 0;
    let (b, t) = (1, 96);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = randn(&mut rng, b * config.residual * t);
    let out0 = run_stack(&config, &base, b, t, 7, None);
    let probe_t = 40;
    let mut perturbed = base.clone();
    for ch in 0..config.residual {
        perturbed[ch * t + probe_t + 1] += 2.0;
    }
    let out1 = run_stack(&config, &perturbed, b, t, 7, None);
    for ch in 0..config.skip {
        for tt in 0..=probe_t {
            assert_eq!(out0[ch * t + tt], out1[ch * t + tt], "future leak at t {}", tt);
        }
    }
    // And the perturbation does reach later outputs.
    assert!(out0 != out1);
}

#[test]
fn perturbation_at_rf_edge_changes_output_beyond_does_not() {
    // Shallow stack, generic random weights: the edge path survives f32.
    let config = StackConfig { cond_channels: 0, ..presets::micro_local() };
    let rf = config.receptive_field();
    let t = rf.past + 8;
    let probe_t = t - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let base = randn(&mut rng, config.residual * t);
    let out0 = run_stack(&config, &base, 1, t, 31, None);

    // At the RF edge: input index probe_t - (past - 1) influences the output.
    let edge = probe_t + 1 - rf.past;
    let mut at_edge = base.clone();
    for ch in 0..config.residual {
        at_edge[ch * t + edge] += 2.0;
    }
    let out_edge = run_stack(&config, &at_edge, 1, t, 31, None);
    let changed = (0..config.skip).any(|ch| out_edge[ch * t + probe_t] != out0[ch * t + probe_t]);
    assert!(changed, "RF edge did not influence output");

    // One step beyond the RF: no influence.
    let mut beyond = base.clone();
    for ch in 0..config.residual {
        beyond[ch * t + edge - 1] += 2.0;
    }
    let out_beyond = run_stack(&config, &beyond, 1, t, 31, None);
    for ch in 0..config.skip {
        assert_eq!(
            out_beyond[ch * t + probe_t],
            out0[ch * t + probe_t],
            "influence beyond the receptive field"
        );
    }
}

/// Weights that chain one tap through every block with unit gain, so a deep
/// stack's edge reachability is observable in f32: channel 0 passes the
/// chosen filter tap into an open gate and back onto the residual path.
fn passthrough_stack(config: &StackConfig, tap: usize) -> (ParamStore, StackParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let params = StackParams::init(&mut store, "s", config, &mut rng).unwrap();
    let f = config.filter_len;
    let m = config.inner;
    for b in params.block_pids() {
        for pid in [b.dil_w, b.dil_b, b.res_w, b.res_b, b.skip_w, b.skip_b] {
            store.get_mut(pid).data_mut().fill(0.0);
        }
        store.get_mut(b.dil_w).data_mut()[tap] = 1.0; // tanh half, ch 0, residual ch 0
        store.get_mut(b.dil_b).data_mut()[m] = 20.0; // sigmoid gate ch 0 wide open
        store.get_mut(b.res_w).data_mut()[0] = 1.0;
        store.get_mut(b.skip_w).data_mut()[0] = 1.0;
    }
    (store, params)
}

fn passthrough_response(config: &StackConfig, tap: usize, t: usize, hit: usize) -> Vec<f32> {
    let (store, params) = passthrough_stack(config, tap);
    let mut data = vec![0.0f32; config.residual * t];
    data[hit] = 1e-3;
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, config.residual, t], data).unwrap()).unwrap();
    let skip = params.forward(&mut g, &store, x, None).unwrap();
    g.values(skip).data()[..t].to_vec() // skip channel 0
}

#[test]
fn deep_preset_rf_edges_are_tight() {
    // Published causal pattern (32 blocks): reachability at exactly the RF
    // edge, silence one step beyond.
    let config = StackConfig {
        residual: 2,
        inner: 2,
        skip: 2,
        cond_channels: 0,
        ..presets::appendix_local()
    };
    let rf = config.receptive_field();
    assert_eq!(rf.past, 1021);
    let t = rf.past + 4;
    let probe_t = t - 1;
    let edge = probe_t + 1 - rf.past;
    // Tap 0 is the farthest-back tap of a causal filter.
    let at_edge = passthrough_response(&config, 0, t, edge);
    assert!(at_edge[probe_t] != 0.0, "no reach at the causal RF edge");
    let beyond = passthrough_response(&config, 0, t, edge - 1);
    assert_eq!(beyond[probe_t], 0.0, "reach beyond the causal RF edge");

    // Published non-causal pattern (16 blocks, filter 3): both sides.
    let config = StackConfig {
        residual: 2,
        inner: 2,
        skip: 2,
        cond_channels: 0,
        ..presets::appendix_encoder()
    };
    let rf = config.receptive_field();
    assert_eq!((rf.past, rf.future), (510, 510));
    let t = rf.past + rf.future + 8;
    let probe_t = rf.past + 4;
    // Left reach via tap 0, right reach via the last tap.
    let left = passthrough_response(&config, 0, t, probe_t - rf.past);
    assert!(left[probe_t] != 0.0, "no reach at the past edge");
    let left_beyond = passthrough_response(&config, 0, t, probe_t - rf.past - 1);
    assert_eq!(left_beyond[probe_t], 0.0);
    let right =
        passthrough_response(&config, config.filter_len - 1, t, probe_t + rf.future);
    assert!(right[probe_t] != 0.0, "no reach at the future edge");
    let right_beyond =
        passthrough_response(&config, config.filter_len - 1, t, probe_t + rf.future + 1);
    assert_eq!(right_beyond[probe_t], 0.0);
}

#[test]
fn non_causal_rf_probe_both_sides() {
    let config = presets::micro_encoder();
    let rf = config.receptive_field();
    assert_eq!(rf.past, rf.future);
    let t = rf.past + rf.future + 16;
    let probe_t = t / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = randn(&mut rng, config.residual * t);
    let out0 = run_stack(&config, &base, 1, t, 17, None);

    for (offset, should_change) in [
        (rf.future as isize, true),
        (rf.future as isize + 1, false),
        (-(rf.past as isize), true),
        (-(rf.past as isize) - 1, false),
    ] {
        let idx = (probe_t as isize + offset) as usize;
        let mut p = base.clone();
        for ch in 0..config.residual {
            p[ch * t + idx] += 2.0;
        }
        let out1 = run_stack(&config, &p, 1, t, 17, None);
        let changed = (0..config.skip).any(|ch| out1[ch * t + probe_t] != out0[ch * t + probe_t]);
        assert_eq!(changed, should_change, "offset {} misbehaved", offset);
    }
}

#[test]
fn zero_initialised_head_gives_uniform_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let config = StackConfig { cond_channels: 0, ..presets::micro_local() };
    let params = StackParams::init(&mut store, "s", &config, &mut rng).unwrap();
    let head = Head::init(&mut store, "h", config.skip, 256, true, &mut rng);
    let mut g = Graph::new();
    let x_data = randn(&mut rng, config.residual * 32);
    let x = g.input(Tensor::new(vec![1, config.residual, 32], x_data).unwrap()).unwrap();
    let skip = params.forward(&mut g, &store, x, None).unwrap();
    let logits = head.forward(&mut g, &store, skip).unwrap();
    assert!(g.values(logits).data().iter().all(|&v| v == 0.0));
    let nll = g
        .categorical_nll(logits, Arc::new(vec![0u16; 32]))
        .unwrap();
    assert!((g.value_f64(nll) - 256f64.ln()).abs() < 1e-9);
}

#[test]
fn conditional_stack_equals_unconditional_when_cond_channels_zero() {
    // cond_channels = 0 uses exactly the unconditional code path.
    let config = StackConfig { cond_channels: 0, ..presets::micro_local() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = randn(&mut rng, config.residual * 24);
    let a = run_stack(&config, &input, 1, 24, 5, None);
    let b = run_stack(&config, &input, 1, 24, 5, None);
    assert_eq!(a, b);
}

#[test]
fn stack_rejects_missing_or_misaligned_conditioning() {
    let config = presets::micro_local();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let params = StackParams::init(&mut store, "s", &config, &mut rng).unwrap();
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(vec![1, config.residual, 16])).unwrap();
    assert!(params.forward(&mut g, &store, x, None).is_err());
    let short = g.input(Tensor::zeros(vec![1, config.cond_channels, 8])).unwrap();
    assert!(params.forward(&mut g, &store, x, Some(short)).is_err());
}

#[test]
fn incremental_matches_batch_forward() {
    let config = presets::micro_local();
    let (t, cond_ch) = (512usize, config.cond_channels);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut store = ParamStore::new();
    let params = StackParams::init(&mut store, "s", &config, &mut rng).unwrap();
    let head = Head::init(&mut store, "h", config.skip, 64, false, &mut rng);

    let x_data = randn(&mut rng, config.residual * t);
    let cond_data = randn(&mut rng, cond_ch * t);

    // Batch path.
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, config.residual, t], x_data.clone()).unwrap()).unwrap();
    let c = g.input(Tensor::new(vec![1, cond_ch, t], cond_data.clone()).unwrap()).unwrap();
    let skip = params.forward(&mut g, &store, x, Some(c)).unwrap();
    let logits = head.forward(&mut g, &store, skip).unwrap();
    let batch_out = g.values(logits).data().to_vec();

    // Incremental path.
    let weights = StackWeights::snapshot(&store, &params);
    let head_w = HeadWeights::snapshot(&store, &head);
    let mut state = GenerationState::new(&config).unwrap();
    let mut out_col = Vec::new();
    let mut worst = 0.0f32;
    for tt in 0..t {
        let x_col: Vec<f32> = (0..config.residual).map(|ch| x_data[ch * t + tt]).collect();
        let c_col: Vec<f32> = (0..cond_ch).map(|ch| cond_data[ch * t + tt]).collect();
        let skip_col = state.step(&weights, tt as u64, &x_col, Some(&c_col)).unwrap();
        head_w.apply(skip_col, &mut out_col);
        for ch in 0..64 {
            let diff = (out_col[ch] - batch_out[ch * t + tt]).abs();
            worst = worst.max(diff);
        }
    }
    assert!(worst < 1e-5, "incremental/batch drift {}", worst);
}

#[test]
fn incremental_reset_reproduces_stream() {
    let config = StackConfig { cond_channels: 0, ..presets::micro_local() };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut store = ParamStore::new();
    let params = StackParams::init(&mut store, "s", &config, &mut rng).unwrap();
    let weights = StackWeights::snapshot(&store, &params);
    let mut state = GenerationState::new(&config).unwrap();
    let cols: Vec<Vec<f32>> = (0..32).map(|_| randn(&mut rng, config.residual)).collect();
    let first: Vec<Vec<f32>> = cols
        .iter()
        .enumerate()
        .map(|(t, c)| state.step(&weights, t as u64, c, None).unwrap().to_vec())
        .collect();
    state.reset();
    for (t, c) in cols.iter().enumerate() {
        let again = state.step(&weights, t as u64, c, None).unwrap();
        assert_eq!(again, first[t].as_slice());
    }
}

#[test]
fn incremental_rejects_out_of_order_steps() {
    let config = StackConfig { cond_channels: 0, ..presets::micro_local() };
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut store = ParamStore::new();
    let params = StackParams::init(&mut store, "s", &config, &mut rng).unwrap();
    let weights = StackWeights::snapshot(&store, &params);
    let mut state = GenerationState::new(&config).unwrap();
    let col = vec![0.0f32; config.residual];
    state.step(&weights, 0, &col, None).unwrap();
    assert!(state.step(&weights, 2, &col, None).is_err());
}

#[test]
fn ring_buffer_allocation_matches_formula() {
    let config = StackConfig { cond_channels: 0, ..presets::toy_prior() };
    let state = GenerationState::new(&config).unwrap();
    let expected: usize = config
        .dilations()
        .map(|d| (config.filter_len - 1) * d * config.residual)
        .sum();
    assert_eq!(state.buffer_entries(), expected);
}
