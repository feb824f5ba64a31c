//! Small MLP heads trained on frozen feature vectors.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use trajfuse_autograd::layers::Linear;
use trajfuse_autograd::{Activation, AdamW, Graph, OptimizerState, ParamStore, Result, Tensor, Var};

use crate::util::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: 64,
            epochs: 50,
            lr: 1e-3,
            weight_decay: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Per-column z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for r in rows {
            var.iter_mut().zip(r).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        Standardizer {
            mean,
            std: var.into_iter().map(|v| v.sqrt().max(1e-8)).collect(),
        }
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Tensor<f32> {
        let d = self.mean.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            data.extend(r.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| ((v - m) / s) as f32));
        }
        Tensor::from_vec(rows.len(), d, data).expect("consistent widths")
    }
}

/// Two-layer MLP: `Linear -> ReLU -> Linear`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore<f32>, name: &str, d_in: usize, hidden: usize, d_out: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, 0x9B0E);
        Ok(Mlp {
            l1: Linear::new(store, &format!("{name}.l1"), d_in, hidden, true, &mut rng)?,
            l2: Linear::new(store, &format!("{name}.l2"), hidden, d_out, true, &mut rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<f32>, store: &ParamStore<f32>, x: Var) -> Result<Var> {
        let h = self.l1.forward(g, store, x)?;
        let h = g.activation(h, Activation::Relu);
        self.l2.forward(g, store, h)
    }
}

/// Mean squared error of an `N x 1` prediction.
pub fn mse(g: &mut Graph<f32>, pred: Var, target: &[f32]) -> Result<Var> {
    let t = g.constant(Tensor::from_vec(target.len(), 1, target.to_vec())?);
    let diff = g.sub(pred, t)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.mean(sq))
}

enum Target<'a> {
    Classes(&'a [usize]),
    Values(&'a [f32]),
}

fn fit_mlp(x: &Tensor<f32>, target: Target<'_>, d_out: usize, cfg: &ProbeConfig) -> Result<(Mlp, ParamStore<f32>)> {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "probe", x.cols(), cfg.hidden, d_out, cfg.seed)?;
    let mut opt = OptimizerState::new(
        AdamW {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamW::default()
        },
        &store,
    );
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, 0xB0 + epoch as u64));
        for idx in order.chunks(cfg.batch_size.max(1)) {
            let mut g = Graph::new();
            let xb = g.constant(gather(x, idx));
            let out = mlp.forward(&mut g, &store, xb)?;
            let loss = match &target {
                Target::Classes(y) => {
                    let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
                    g.cross_entropy(out, &yb)?
                }
                Target::Values(y) => {
                    let yb: Vec<f32> = idx.iter().map(|&i| y[i]).collect();
                    mse(&mut g, out, &yb)?
                }
            };
            let grads = g.backward(loss).into_param_grads(store.len());
            if opt.step(&mut store, &grads).is_err() {
                log::warn!("probe step skipped: non-finite gradient");
            }
        }
    }
    Ok((mlp, store))
}

pub(crate) fn gather(x: &Tensor<f32>, idx: &[usize]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(idx.len() * x.cols());
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::from_vec(idx.len(), x.cols(), data).expect("row gather")
}

fn predict_raw(mlp: &Mlp, store: &ParamStore<f32>, x: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let out = mlp.forward(&mut g, store, xv)?;
    Ok(g.value(out).clone())
}

#[derive(Debug, Clone)]
pub struct Classifier {
    mlp: Mlp,
    store: ParamStore<f32>,
    scaler: Standardizer,
}

impl Classifier {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        let scaler = Standardizer::fit(x);
        let (mlp, store) = fit_mlp(&scaler.apply(x), Target::Classes(y), n_classes, cfg)?;
        Ok(Classifier { mlp, store, scaler })
    }

    pub fn scores(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let out = predict_raw(&self.mlp, &self.store, &self.scaler.apply(x))?;
        Ok((0..out.rows()).map(|r| out.row(r).iter().map(|&v| v as f64).collect()).collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.scores(x)?.iter().map(|s| super::metrics::top_k(s, 1)[0]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Regressor {
    mlp: Mlp,
    store: ParamStore<f32>,
    scaler: Standardizer,
    y_mean: f64,
    y_std: f64,
}

impl Regressor {
    pub fn fit(x: &[Vec<f64>], y: &[f64], cfg: &ProbeConfig) -> Result<Self> {
        let scaler = Standardizer::fit(x);
        let n = y.len().max(1) as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let y_std = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-8);
        let yz: Vec<f32> = y.iter().map(|v| ((v - y_mean) / y_std) as f32).collect();
        let (mlp, store) = fit_mlp(&scaler.apply(x), Target::Values(&yz), 1, cfg)?;
        Ok(Regressor {
            mlp,
            store,
            scaler,
            y_mean,
            y_std,
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        let out = predict_raw(&self.mlp, &self.store, &self.scaler.apply(x))?;
        Ok(out.data().iter().map(|&v| v as f64 * self.y_std + self.y_mean).collect())
    }
}
