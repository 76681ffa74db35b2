use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::check;

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    // Box-Muller, good enough for probe inputs.
    (0..n)
        .map(|_| {
            let u1: f64 = rng.gen_range(1e-9..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
        })
        .collect()
}

#[test]
fn conv1d_filter_one_identity() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 2, 4], (0..8).map(|i| i as f32).collect()).unwrap()).unwrap();
    // Identity matrix kernel [2, 2, 1].
    let w = g.input(Tensor::new(vec![2, 2, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
    let y = g.conv1d(x, w, None, 1, PadMode::Causal).unwrap();
    assert_eq!(g.values(y).data(), g.values(x).data());
}

#[test]
fn conv1d_causal_two_tap_sum() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
    let w = g.input(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap()).unwrap();
    let y = g.conv1d(x, w, None, 1, PadMode::Causal).unwrap();
    assert_eq!(g.values(y).data(), &[1.0, 3.0, 5.0]);
}

#[test]
fn conv1d_causal_never_reads_future() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &dilation in &[1usize, 2, 4, 8] {
        let (b, c, t, f) = (2, 3, 40, 2);
        let base = randn(&mut rng, b * c * t);
        let w_data = randn(&mut rng, c * c * f);
        let run = |input: &[f32]| -> Vec<f32> {
            let mut g = Graph::new();
            let x = g.input(Tensor::new(vec![b, c, t], input.to_vec()).unwrap()).unwrap();
            let w = g.input(Tensor::new(vec![c, c, f], w_data.clone()).unwrap()).unwrap();
            let y = g.conv1d(x, w, None, dilation, PadMode::Causal).unwrap();
            g.values(y).data().to_vec()
        };
        let out0 = run(&base);
        for probe_t in [5usize, 20, 38] {
            let mut perturbed = base.clone();
            // Bump every channel at probe_t + 1.
            for ch in 0..c {
                perturbed[ch * t + probe_t + 1] += 3.0;
            }
            let out1 = run(&perturbed);
            for ch in 0..c {
                for tt in 0..=probe_t {
                    assert_eq!(out0[ch * t + tt], out1[ch * t + tt], "future leaked at dilation {} t {}", dilation, tt);
                }
            }
        }
    }
}

#[test]
fn conv1d_same_mode_rejects_even_filter() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(vec![1, 1, 8])).unwrap();
    let w = g.input(Tensor::zeros(vec![1, 1, 2])).unwrap();
    assert!(g.conv1d(x, w, None, 1, PadMode::Same).is_err());
}

#[test]
fn conv1d_same_mode_centered() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    let w = g.input(Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
    let y = g.conv1d(x, w, None, 1, PadMode::Same).unwrap();
    // Windows: [0+1+2], [1+2+3], [2+3+4], [3+4+0]
    assert_eq!(g.values(y).data(), &[3.0, 6.0, 9.0, 7.0]);
}

#[test]
fn gated_zeros_give_zeros() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(vec![2, 6, 5])).unwrap();
    let y = g.gated_activation(x).unwrap();
    assert!(g.values(y).data().iter().all(|&v| v == 0.0));
    assert_eq!(g.values(y).shape(), &[2, 3, 5]);
}

#[test]
fn gated_saturates_to_one() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 2, 1], vec![50.0, 50.0]).unwrap()).unwrap();
    let y = g.gated_activation(x).unwrap();
    assert!((g.values(y).data()[0] - 1.0).abs() < 1e-6);
}

#[test]
fn gated_rejects_odd_channels() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(vec![1, 3, 5])).unwrap();
    assert!(g.gated_activation(x).is_err());
}

#[test]
fn gated_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (b, c, t) = (8, 4, 5);
    let x0 = randn(&mut rng, b * c * t);
    let mut loss = |x: &[f32]| -> f64 {
        let mut g = Graph::new();
        let xn = g.input(Tensor::new(vec![b, c, t], x.to_vec()).unwrap()).unwrap();
        let y = g.gated_activation(xn).unwrap();
        let sq = g.mean_sq(y).unwrap();
        g.value_f64(sq)
    };
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let pid = store.add("x", Tensor::new(vec![b, c, t], x0.clone()).unwrap());
    let xn = g.param(&store, pid).unwrap();
    let y = g.gated_activation(xn).unwrap();
    let sq = g.mean_sq(y).unwrap();
    let grads = g.backward(sq).unwrap();
    let analytic = grads.param(pid, x0.len()).unwrap();
    let coords = check::sample_coords(x0.len(), 40);
    let err = check::max_grad_error(&mut loss, &x0, &analytic, &coords, 1e-3);
    assert!(err < 1e-3, "gated gradient error {}", err);
}

#[test]
fn mean_pool_window_one_identity() {
    let mut g = Graph::new();
    let data: Vec<f32> = (0..12).map(|i| i as f32).collect();
    let x = g.input(Tensor::new(vec![1, 2, 6], data.clone()).unwrap()).unwrap();
    let y = g.mean_pool(x, 1).unwrap();
    assert_eq!(g.values(y).data(), data.as_slice());
}

#[test]
fn mean_pool_arithmetic() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 1, 4], vec![2.0, 4.0, 6.0, 8.0]).unwrap()).unwrap();
    let y = g.mean_pool(x, 2).unwrap();
    assert_eq!(g.values(y).data(), &[3.0, 7.0]);
}

#[test]
fn mean_pool_rejects_indivisible() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(vec![1, 1, 5])).unwrap();
    assert!(g.mean_pool(x, 2).is_err());
}

#[test]
fn mean_pool_backward_distributes_uniformly() {
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let pid = store.add("x", Tensor::new(vec![1, 1, 8], vec![1.0; 8]).unwrap());
    let x = g.param(&store, pid).unwrap();
    let y = g.mean_pool(x, 4).unwrap();
    let s = g.sum_all(y).unwrap();
    let grads = g.backward(s).unwrap();
    let gx = grads.param(pid, 8).unwrap();
    assert!(gx.iter().all(|&v| (v - 0.25).abs() < 1e-7));
}

#[test]
fn nll_uniform_logits_is_ln_k() {
    let mut g = Graph::new();
    let (b, k, t) = (2, 256, 3);
    let logits = g.input(Tensor::zeros(vec![b, k, t])).unwrap();
    let targets = Arc::new(vec![7u16; b * t]);
    let nll = g.categorical_nll(logits, targets).unwrap();
    assert!((g.value_f64(nll) - 256f64.ln()).abs() < 1e-9);
}

#[test]
fn nll_confident_logit_approaches_zero() {
    let mut g = Graph::new();
    let mut data = vec![0.0f32; 8];
    data[3] = 60.0; // towards the +inf limit
    let logits = g.input(Tensor::new(vec![1, 8, 1], data).unwrap()).unwrap();
    let nll = g.categorical_nll(logits, Arc::new(vec![3u16])).unwrap();
    assert!(g.value_f64(nll) < 1e-9);
}

#[test]
fn nll_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (b, k, t) = (3, 17, 9);
    let logits = randn(&mut rng, b * k * t);
    let targets: Vec<u16> = (0..b * t).map(|_| rng.gen_range(0..k as u16)).collect();
    // Direct per-position summation oracle in f64.
    let mut expected = 0.0f64;
    for bb in 0..b {
        for tt in 0..t {
            let row: Vec<f64> =
                (0..k).map(|ch| logits[(bb * k + ch) * t + tt] as f64).collect();
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            expected -= (row[targets[bb * t + tt] as usize].exp() / denom).ln();
        }
    }
    expected /= (b * t) as f64;
    let mut g = Graph::new();
    let ln = g.input(Tensor::new(vec![b, k, t], logits).unwrap()).unwrap();
    let nll = g.categorical_nll(ln, Arc::new(targets)).unwrap();
    assert!((g.value_f64(nll) - expected).abs() < 1e-5);
}

#[test]
fn nll_rejects_out_of_range_target() {
    let mut g = Graph::new();
    let logits = g.input(Tensor::zeros(vec![1, 4, 2])).unwrap();
    assert!(g.categorical_nll(logits, Arc::new(vec![0u16, 4u16])).is_err());
}

#[test]
fn nll_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (b, k, t) = (2, 6, 4);
    let x0 = randn(&mut rng, b * k * t);
    let targets = Arc::new((0..b * t).map(|_| rng.gen_range(0..k as u16)).collect::<Vec<_>>());
    let tclone = targets.clone();
    let mut loss = move |x: &[f32]| -> f64 {
        let mut g = Graph::new();
        let n = g.input(Tensor::new(vec![b, k, t], x.to_vec()).unwrap()).unwrap();
        let nll = g.categorical_nll(n, tclone.clone()).unwrap();
        g.value_f64(nll)
    };
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let pid = store.add("logits", Tensor::new(vec![b, k, t], x0.clone()).unwrap());
    let n = g.param(&store, pid).unwrap();
    let nll = g.categorical_nll(n, targets).unwrap();
    let grads = g.backward(nll).unwrap();
    let analytic = grads.param(pid, x0.len()).unwrap();
    let coords = check::sample_coords(x0.len(), 30);
    let err = check::max_grad_error(&mut loss, &x0, &analytic, &coords, 1e-3);
    assert!(err < 1e-3, "nll gradient error {}", err);
}

#[test]
fn stop_gradient_forward_identity() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 1, 3], vec![1.5, -2.0, 0.25]).unwrap()).unwrap();
    let y = g.stop_gradient(x).unwrap();
    assert_eq!(g.values(y).data(), g.values(x).data());
}

#[test]
fn stop_gradient_freezes_one_product_factor() {
    // loss = sum(stop_gradient(x) * x) has gradient x, not 2x.
    let x0 = vec![1.0f32, -2.0, 3.0];
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let pid = store.add("x", Tensor::new(vec![1, 1, 3], x0.clone()).unwrap());
    let x = g.param(&store, pid).unwrap();
    let frozen = g.stop_gradient(x).unwrap();
    let prod = g.mul(frozen, x).unwrap();
    let loss = g.sum_all(prod).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.param(pid, 3).unwrap(), x0);
}

#[test]
fn stop_gradient_blocks_everything() {
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let pid = store.add("x", Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
    let x = g.param(&store, pid).unwrap();
    let frozen = g.stop_gradient(x).unwrap();
    let loss = g.sum_all(frozen).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.param(pid, 3).unwrap(), vec![0.0, 0.0, 0.0]);
}

#[test]
fn backward_of_plain_sum_is_ones() {
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let pid = store.add("x", Tensor::new(vec![2, 1, 3], vec![0.5; 6]).unwrap());
    let x = g.param(&store, pid).unwrap();
    let loss = g.sum_all(x).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.param(pid, 6).unwrap(), vec![1.0; 6]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(vec![1, 1, 3])).unwrap();
    assert!(g.backward(x).is_err());
}

#[test]
fn disconnected_parameter_gets_zero_gradient() {
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let used = store.add("used", Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap());
    let unused = store.add("unused", Tensor::new(vec![1, 1, 2], vec![3.0, 4.0]).unwrap());
    let xu = g.param(&store, used).unwrap();
    let _xn = g.param(&store, unused).unwrap();
    let loss = g.sum_all(xu).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.param(unused, 2).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn two_layer_convnet_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (b, c1, c2, t, f) = (2, 3, 4, 10, 2);
    let x_data = randn(&mut rng, b * c1 * t);
    let w1_data = randn(&mut rng, c2 * c1 * f);
    let w2_data = randn(&mut rng, 2 * c2 * f);
    let targets = Arc::new((0..b * t).map(|i| (i % 2) as u16).collect::<Vec<_>>());

    let build = |store: &ParamStore, w1: ParamId, w2: ParamId| -> (Graph, NodeId) {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![b, c1, t], x_data.clone()).unwrap()).unwrap();
        let w1n = g.param(store, w1).unwrap();
        let h = g.conv1d(x, w1n, None, 2, PadMode::Causal).unwrap();
        let h = g.relu(h).unwrap();
        let w2n = g.param(store, w2).unwrap();
        let logits = g.conv1d(h, w2n, None, 1, PadMode::Causal).unwrap();
        let loss = g.categorical_nll(logits, targets.clone()).unwrap();
        (g, loss)
    };

    let mut store = ParamStore::new();
    let w1 = store.add("w1", Tensor::new(vec![c2, c1, f], w1_data).unwrap());
    let w2 = store.add("w2", Tensor::new(vec![2, c2, f], w2_data).unwrap());
    let (g, loss) = build(&store, w1, w2);
    let grads = g.backward(loss).unwrap();

    for pid in [w1, w2] {
        let len = store.get(pid).len();
        let analytic = grads.param(pid, len).unwrap();
        let x0 = store.get(pid).data().to_vec();
        let store_c = store.clone();
        let mut loss_fn = |x: &[f32]| -> f64 {
            let mut s = store_c.clone();
            s.get_mut(pid).data_mut().copy_from_slice(x);
            let (g, l) = build(&s, w1, w2);
            g.value_f64(l)
        };
        let coords = check::sample_coords(len, 24);
        let err = check::max_grad_error(&mut loss_fn, &x0, &analytic, &coords, 1e-3);
        assert!(err < 1e-3, "convnet grad error {} for {}", err, store.name(pid));
    }
}

#[test]
fn upsample_repeat_and_backward() {
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let pid = store.add("x", Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap());
    let x = g.param(&store, pid).unwrap();
    let y = g.upsample_repeat(x, 3).unwrap();
    assert_eq!(g.values(y).data(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    let s = g.sum_all(y).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.param(pid, 2).unwrap(), vec![3.0, 3.0]);
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut store = ParamStore::new();
    let pid = store.add("p", Tensor::new(vec![1, 1, 2], vec![1.0, -1.0]).unwrap());
    let mut adam = Adam::new(&store, AdamConfig::default());
    let mut g = Graph::new();
    let x = g.param(&store, pid).unwrap();
    let zero = g.scale(x, 0.0).unwrap();
    let loss = g.sum_all(zero).unwrap();
    let grads = g.backward(loss).unwrap();
    adam.step(&mut store, &grads).unwrap();
    assert_eq!(store.get(pid).data(), &[1.0, -1.0]);
}

#[test]
fn adam_single_step_matches_hand_computation() {
    let cfg = AdamConfig::default();
    let g0 = 0.5f32;
    let p0 = 1.0f32;
    // One step from m = v = 0.
    let m1 = (1.0 - cfg.beta1) * g0;
    let v1 = (1.0 - cfg.beta2) * g0 * g0;
    let m_hat = m1 / (1.0 - cfg.beta1);
    let v_hat = v1 / (1.0 - cfg.beta2);
    let expected = p0 - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);

    let mut store = ParamStore::new();
    let pid = store.add("p", Tensor::new(vec![], vec![p0]).unwrap());
    let mut adam = Adam::new(&store, cfg);
    let mut g = Graph::new();
    let x = g.param(&store, pid).unwrap();
    let scaled = g.scale(x, g0).unwrap();
    let loss = g.sum_all(scaled).unwrap(); // d loss / d p = 0.5
    let grads = g.backward(loss).unwrap();
    adam.step(&mut store, &grads).unwrap();
    assert!((store.get(pid).data()[0] - expected).abs() < 1e-7);
    assert_eq!(adam.step_count(), 1);
}

#[test]
fn adam_descends_quadratic_monotonically_after_warmup() {
    let mut store = ParamStore::new();
    let pid = store.add("p", Tensor::new(vec![1, 1, 4], vec![2.0, -3.0, 1.0, 0.5]).unwrap());
    let mut adam = Adam::new(&store, AdamConfig { lr: 0.05, ..Default::default() });
    let mut losses = Vec::new();
    for _ in 0..60 {
        let mut g = Graph::new();
        let x = g.param(&store, pid).unwrap();
        let loss = g.mean_sq(x).unwrap();
        losses.push(g.value_f64(loss));
        let grads = g.backward(loss).unwrap();
        adam.step(&mut store, &grads).unwrap();
    }
    for i in 5..losses.len() - 1 {
        assert!(losses[i + 1] <= losses[i] + 1e-9, "loss rose at step {}", i);
    }
    assert!(losses[losses.len() - 1] < 0.05 * losses[0]);
}

#[test]
fn adam_missing_gradient_is_an_error() {
    let mut store = ParamStore::new();
    let _a = store.add("a", Tensor::scalar(1.0));
    let b = store.add("b", Tensor::scalar(2.0));
    let mut adam = Adam::new(&store, AdamConfig::default());
    let mut g = Graph::new();
    // Only b registered on the graph.
    let xb = g.param(&store, b).unwrap();
    let loss = g.sum_all(xb).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(adam.step(&mut store, &grads).is_err());
}

#[test]
fn polyak_decay_zero_tracks_live() {
    let mut store = ParamStore::new();
    let pid = store.add("p", Tensor::scalar(1.0));
    let mut polyak = Polyak::new(&store, 0.0);
    store.get_mut(pid).data_mut()[0] = 5.0;
    polyak.update(&store);
    polyak.swap(&mut store);
    assert_eq!(store.get(pid).data()[0], 5.0);
}

#[test]
fn polyak_decay_one_stays_at_init() {
    let mut store = ParamStore::new();
    let pid = store.add("p", Tensor::scalar(1.0));
    let mut polyak = Polyak::new(&store, 1.0);
    store.get_mut(pid).data_mut()[0] = 5.0;
    polyak.update(&store);
    polyak.swap(&mut store);
    assert_eq!(store.get(pid).data()[0], 1.0);
}

#[test]
fn polyak_converges_geometrically_to_constant_params() {
    let decay = 0.9f32;
    let init = 0.0f32;
    let live = 1.0f32;
    let mut store = ParamStore::new();
    let pid = store.add("p", Tensor::scalar(init));
    let mut polyak = Polyak::new(&store, decay);
    store.get_mut(pid).data_mut()[0] = live;
    let n = 20;
    for _ in 0..n {
        polyak.update(&store);
    }
    polyak.swap(&mut store);
    let gap = (live - store.get(pid).data()[0]).abs();
    let expected = decay.powi(n) * (live - init).abs();
    assert!((gap - expected).abs() < 1e-5, "gap {} expected {}", gap, expected);
}

#[test]
fn polyak_swap_round_trips() {
    let mut store = ParamStore::new();
    let pid = store.add("p", Tensor::scalar(3.0));
    let mut polyak = Polyak::new(&store, 0.5);
    store.get_mut(pid).data_mut()[0] = 7.0;
    polyak.swap(&mut store);
    assert_eq!(store.get(pid).data()[0], 3.0);
    assert!(polyak.is_swapped());
    polyak.swap(&mut store);
    assert_eq!(store.get(pid).data()[0], 7.0);
}

#[test]
fn fixed_seed_gives_bit_identical_trajectories() {
    let run = || -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut store = ParamStore::new();
        let w = store.add_uniform("w", vec![4, 3, 2], 6, &mut rng);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let x_data = randn(&mut rng, 2 * 3 * 16);
        for _ in 0..5 {
            let mut g = Graph::new();
            let x = g.input(Tensor::new(vec![2, 3, 16], x_data.clone()).unwrap()).unwrap();
            let wn = g.param(&store, w).unwrap();
            let h = g.conv1d(x, wn, None, 2, PadMode::Causal).unwrap();
            let loss = g.mean_sq(h).unwrap();
            let grads = g.backward(loss).unwrap();
            adam.step(&mut store, &grads).unwrap();
        }
        store.get(w).data().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn symbol_conv_matches_explicit_one_hot_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (b, k, c, t, f) = (2, 5, 3, 12, 4);
    let symbols: Vec<u16> = (0..b * t).map(|_| rng.gen_range(0..k as u16)).collect();
    let w_data = randn(&mut rng, f * k * c);

    let mut g = Graph::new();
    let w = g.input(Tensor::new(vec![f, k, c], w_data.clone()).unwrap()).unwrap();
    let y = g.symbol_conv(Arc::new(symbols.clone()), b, t, w).unwrap();

    // Oracle: materialise the one-hot input and run the dense conv with the
    // weight re-laid-out as [c_out, k, f].
    let mut onehot = vec![0.0f32; b * k * t];
    for bb in 0..b {
        for tt in 0..t {
            onehot[(bb * k + symbols[bb * t + tt] as usize) * t + tt] = 1.0;
        }
    }
    let mut w_dense = vec![0.0f32; c * k * f];
    for ff in 0..f {
        for kk in 0..k {
            for cc in 0..c {
                w_dense[(cc * k + kk) * f + ff] = w_data[(ff * k + kk) * c + cc];
            }
        }
    }
    let mut g2 = Graph::new();
    let x = g2.input(Tensor::new(vec![b, k, t], onehot).unwrap()).unwrap();
    let wd = g2.input(Tensor::new(vec![c, k, f], w_dense).unwrap()).unwrap();
    let y2 = g2.conv1d(x, wd, None, 1, PadMode::Causal).unwrap();

    for (a, e) in g.values(y).data().iter().zip(g2.values(y2).data()) {
        assert!((a - e).abs() < 1e-5);
    }
}

#[test]
fn symbol_conv_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let (b, k, c, t, f) = (2, 4, 3, 8, 2);
    let symbols = Arc::new((0..b * t).map(|_| rng.gen_range(0..k as u16)).collect::<Vec<_>>());
    let w0 = randn(&mut rng, f * k * c);
    let syms = symbols.clone();
    let mut loss_fn = move |w: &[f32]| -> f64 {
        let mut g = Graph::new();
        let wn = g.input(Tensor::new(vec![f, k, c], w.to_vec()).unwrap()).unwrap();
        let y = g.symbol_conv(syms.clone(), b, t, wn).unwrap();
        let l = g.mean_sq(y).unwrap();
        g.value_f64(l)
    };
    let mut store = ParamStore::new();
    let pid = store.add("w", Tensor::new(vec![f, k, c], w0.clone()).unwrap());
    let mut g = Graph::new();
    let wn = g.param(&store, pid).unwrap();
    let y = g.symbol_conv(symbols, b, t, wn).unwrap();
    let l = g.mean_sq(y).unwrap();
    let grads = g.backward(l).unwrap();
    let analytic = grads.param(pid, w0.len()).unwrap();
    let coords = check::sample_coords(w0.len(), 24);
    let err = check::max_grad_error(&mut loss_fn, &w0, &analytic, &coords, 1e-3);
    assert!(err < 1e-3, "symbol conv grad error {}", err);
}

#[test]
fn non_finite_forward_is_reported() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 1, 2], vec![1e30, 1e30]).unwrap()).unwrap();
    let err = g.mul(x, x).unwrap_err(); // 1e60 overflows f32
    assert_eq!(err.category(), "numeric");
    assert!(err.to_string().contains("mul"), "got: {}", err);
}
