//! Finite-difference checks for every layer type at 64-bit.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajfuse_autograd::layers::{BiGru, GatLayer, Linear, MultiHeadAttention, TransformerStack};
use trajfuse_autograd::params::init_tensor;
use trajfuse_autograd::{grad_check, grad_check_params, Activation, AttnGroup, Graph, Init, ParamStore, Tensor, Var};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_tensor(rows, cols, Init::Normal(1.0), &mut rng)
}

/// Scalar readout `Σ c_ij y_ij` with fixed random weights, so every output
/// coordinate contributes a distinct, non-degenerate gradient.
fn readout(g: &mut Graph<f64>, y: Var, seed: u64) -> trajfuse_autograd::Result<Var> {
    let (r, c) = g.shape(y);
    let w = g.constant(rand_tensor(r, c, seed));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

#[test]
fn linear_gradients() {
    let inputs = [rand_tensor(4, 3, 1), rand_tensor(3, 5, 2), rand_tensor(1, 5, 3)];
    let rep = grad_check(&inputs, EPS, |g, v| {
        let y = g.linear(v[0], v[1], Some(v[2]))?;
        readout(g, y, 9)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn matmul_nt_gradients() {
    let inputs = [rand_tensor(4, 3, 1), rand_tensor(5, 3, 2)];
    let rep = grad_check(&inputs, EPS, |g, v| {
        let y = g.matmul_nt(v[0], v[1])?;
        readout(g, y, 9)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn embedding_lookup_gradients() {
    let inputs = [rand_tensor(6, 4, 4)];
    let rep = grad_check(&inputs, EPS, |g, v| {
        let y = g.gather_rows(v[0], &[2, 0, 2, 5])?;
        readout(g, y, 10)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn softmax_nll_gradients() {
    let inputs = [rand_tensor(5, 7, 5)];
    let rep = grad_check(&inputs, EPS, |g, v| g.cross_entropy(v[0], &[0, 3, 6, 3, 1])).unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
    let rep = grad_check(&inputs, EPS, |g, v| {
        let p = g.softmax(v[0]);
        readout(g, p, 11)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn layer_norm_gradients() {
    let inputs = [rand_tensor(4, 6, 6), rand_tensor(1, 6, 7), rand_tensor(1, 6, 8)];
    let rep = grad_check(&inputs, EPS, |g, v| {
        let y = g.layer_norm(v[0], v[1], v[2])?;
        readout(g, y, 12)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn elementwise_and_activation_gradients() {
    let inputs = [rand_tensor(3, 4, 13), rand_tensor(3, 4, 14)];
    for act in [
        Activation::Elu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Gelu,
        Activation::LeakyRelu(0.2),
    ] {
        let rep = grad_check(&inputs, EPS, |g, v| {
            let a = g.mul(v[0], v[1])?;
            let b = g.sub(a, v[1])?;
            let c = g.activation(b, act);
            let c = g.scale(c, 0.7);
            readout(g, c, 15)
        })
        .unwrap();
        assert!(rep.max_rel_error < TOL, "{act:?}: {rep:?}");
    }
}

#[test]
fn structural_op_gradients() {
    let inputs = [rand_tensor(5, 4, 16), rand_tensor(2, 4, 17)];
    let rep = grad_check(&inputs, EPS, |g, v| {
        let c = g.concat_rows(&[v[0], v[1]])?;
        let m = g.segment_mean(c, &[0..3, 3..7, 6..7])?;
        let s = g.slice_cols(c, 1, 2)?;
        let cc = g.concat_cols(&[s, c])?;
        let n = g.l2_normalize(cc, 1e-12);
        let a = readout(g, m, 18)?;
        let b = readout(g, n, 19)?;
        let t = g.add(a, b)?;
        let mm = g.mean(c);
        g.add(t, mm)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

fn toy_store() -> (ParamStore<f64>, ChaCha8Rng) {
    (ParamStore::new(), ChaCha8Rng::seed_from_u64(42))
}

#[test]
fn multi_head_attention_gradients() {
    let (mut store, mut rng) = toy_store();
    let mha = MultiHeadAttention::new(&mut store, "mha", 8, 2, &mut rng).unwrap();
    let q_in = rand_tensor(5, 8, 20);
    let kv_in = rand_tensor(6, 8, 21);
    let groups = [
        AttnGroup { q_start: 0, q_len: 2, k_start: 0, k_len: 4 },
        AttnGroup { q_start: 2, q_len: 3, k_start: 4, k_len: 2 },
    ];
    let rep = grad_check_params(&store, EPS, None, |g, s| {
        let q = g.constant(q_in.clone());
        let kv = g.constant(kv_in.clone());
        let y = mha.forward(g, s, q, kv, &groups)?;
        readout(g, y, 22)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
    // gradients also flow to the inputs
    let inputs = [q_in.clone(), kv_in.clone()];
    let rep = grad_check(&inputs, EPS, |g, v| {
        let y = mha.forward(g, &store, v[0], v[1], &groups)?;
        readout(g, y, 22)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn gru_gradients_through_length_five() {
    let (mut store, mut rng) = toy_store();
    let bigru = BiGru::new(&mut store, "gru", 3, 4, &mut rng).unwrap();
    let x = rand_tensor(7, 3, 23);
    let seqs = [0..5, 5..7];
    let rep = grad_check_params(&store, EPS, None, |g, s| {
        let xv = g.constant(x.clone());
        let (states, summary) = bigru.forward(g, s, xv, &seqs)?;
        let a = readout(g, states, 24)?;
        let b = readout(g, summary, 25)?;
        g.add(a, b)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
    let rep = grad_check(&[x], EPS, |g, v| {
        let (states, _) = bigru.forward(g, &store, v[0], &seqs)?;
        readout(g, states, 24)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn gat_gradients() {
    let (mut store, mut rng) = toy_store();
    let gat = GatLayer::new(&mut store, "gat", 4, 3, &mut rng).unwrap();
    let feats = rand_tensor(5, 4, 26);
    let nbrs = Arc::new(vec![vec![0, 1], vec![1, 0, 2], vec![2, 1, 3, 4], vec![3, 2], vec![4, 2]]);
    let rep = grad_check_params(&store, EPS, None, |g, s| {
        let f = g.constant(feats.clone());
        let y = gat.forward(g, s, f, nbrs.clone())?;
        readout(g, y, 27)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
    let rep = grad_check(&[feats], EPS, |g, v| {
        let y = gat.forward(g, &store, v[0], nbrs.clone())?;
        readout(g, y, 27)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn transformer_stack_depth_two_gradients() {
    let (mut store, mut rng) = toy_store();
    let stack = TransformerStack::new(&mut store, "tf", 8, 2, 2, &mut rng).unwrap();
    let x = rand_tensor(7, 8, 28);
    let seqs = [0..3, 3..7];
    let rep = grad_check_params(&store, EPS, None, |g, s| {
        let xv = g.constant(x.clone());
        let y = stack.forward(g, s, xv, &seqs)?;
        readout(g, y, 29)
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}

#[test]
fn linear_layer_params_gradients() {
    let (mut store, mut rng) = toy_store();
    let lin = Linear::new(&mut store, "lin", 3, 2, true, &mut rng).unwrap();
    let x = rand_tensor(4, 3, 30);
    let rep = grad_check_params(&store, EPS, None, |g, s| {
        let xv = g.constant(x.clone());
        let y = lin.forward(g, s, xv)?;
        g.cross_entropy(y, &[0, 1, 1, 0])
    })
    .unwrap();
    assert!(rep.max_rel_error < TOL, "{rep:?}");
}
