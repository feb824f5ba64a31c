//! Finite-difference check of reverse-mode gradients through a few layers.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajfuse_autograd::layers::{GatLayer, LayerNorm, Linear};
use trajfuse_autograd::params::init_tensor;
use trajfuse_autograd::{grad_check_params, Graph, Init, ParamStore, Tensor, Var};

fn randn(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    init_tensor(rows, cols, Init::Normal(1.0), &mut ChaCha8Rng::seed_from_u64(seed))
}

// weighted sum, so every output coordinate reaches the loss with its own weight
fn readout(g: &mut Graph<f64>, y: Var, seed: u64) -> trajfuse_autograd::Result<Var> {
    let (r, c) = g.shape(y);
    let w = g.constant(randn(r, c, seed));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 6, 8, true, &mut rng)?;
    let ln = LayerNorm::new(&mut store, "ln", 8, &mut rng)?;
    let x = randn(4, 6, 1);
    for eps in [1e-3, 1e-5, 1e-7] {
        let rep = grad_check_params(&store, eps, None, |g, s| {
            let xv = g.constant(x.clone());
            let h = lin.forward(g, s, xv)?;
            let y = ln.forward(g, s, h)?;
            readout(g, y, 2)
        })?;
        println!("linear+layernorm eps {eps:e}: worst rel error {:.2e} over {} coords", rep.max_rel_error, rep.coords_checked);
    }

    let mut store = ParamStore::new();
    let gat = GatLayer::new(&mut store, "gat", 4, 3, &mut ChaCha8Rng::seed_from_u64(42))?;
    let feats = randn(5, 4, 26);
    let nbrs = Arc::new(vec![vec![0, 1], vec![1, 0, 2], vec![2, 1, 3, 4], vec![3, 2], vec![4, 2]]);
    let rep = grad_check_params(&store, 1e-5, None, |g, s| {
        let f = g.constant(feats.clone());
        let y = gat.forward(g, s, f, nbrs.clone())?;
        readout(g, y, 27)
    })?;
    println!("graph attention: worst rel error {:.2e} at {:?}", rep.max_rel_error, rep.worst);
    Ok(())
}
