//! Span masks for masked-token prediction and the cross-view alignment loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajfuse::objectives::{align_loss, make_mask, pair_loss, LossConfig};
use trajfuse_autograd::params::init_tensor;
use trajfuse_autograd::{Init, Tensor};

fn show(len: usize, mask: &[usize]) -> String {
    (0..len).map(|i| if mask.contains(&i) { '#' } else { '.' }).collect()
}

fn main() -> anyhow::Result<()> {
    let cfg = LossConfig::default();
    println!("mask_prob {}, span {}", cfg.mask_prob, cfg.mask_span);
    for seed in 0..4 {
        let m = make_mask(50, cfg.mask_prob, cfg.mask_span, seed);
        println!("{}  {} masked", show(50, &m), m.len());
    }
    let n = 10_000;
    let masked: usize = (0..n).map(|s| make_mask(50, cfg.mask_prob, cfg.mask_span, s).len()).sum();
    println!("mean fraction over {n} sequences: {:.4}", masked as f64 / (50 * n) as f64);

    // matched rows of two views should score lower than unrelated ones
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a: Tensor<f64> = init_tensor(16, 32, Init::Normal(1.0), &mut rng);
    let noise: Tensor<f64> = init_tensor(16, 32, Init::Normal(0.3), &mut rng);
    let close = Tensor::from_vec(16, 32, a.data().iter().zip(noise.data()).map(|(x, e)| x + e).collect())?;
    let other: Tensor<f64> = init_tensor(16, 32, Init::Normal(1.0), &mut rng);
    println!("\npair loss, aligned views:   {:.4}", pair_loss(&a, &close, cfg.tau)?);
    println!("pair loss, unrelated views: {:.4}", pair_loss(&a, &other, cfg.tau)?);
    println!("four-view alignment loss:   {:.4}", align_loss([&a, &close, &a, &close], &cfg)?);
    Ok(())
}
