//! End-to-end travel-time training from random initialization.

use rand::seq::SliceRandom;
use trajfuse_autograd::{AdamW, Graph, OptimizerState};

use super::metrics;
use super::probe::{mse, Mlp};
use super::tasks::EvalError;
use crate::model::{vocab_neighbors, InputMode, SampleInputs};
use crate::pipeline::{build_model, featurizer_for, make_batch, prepare_all, Dataset, TrainConfig, EXPORT_BATCH};
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct ScratchResult {
    pub mae: f64,
    pub rmse: f64,
    pub steps: u64,
}

/// Gradient steps a frozen probe takes on `n_train` rows.
pub fn probe_steps(cfg: &TrainConfig, n_train: usize) -> u64 {
    (cfg.probe_epochs * n_train.div_ceil(cfg.probe_batch_size.max(1))) as u64
}

/// Backbone and regression head trained jointly on standardized durations
/// for exactly `steps` updates, then scored on `eval_idx`.
pub fn train_from_scratch(cfg: &TrainConfig, ds: &Dataset, eval_idx: &[usize], steps: u64) -> Result<ScratchResult, EvalError> {
    let featurizer = featurizer_for(ds);
    let neighbors = vocab_neighbors(&ds.network, &featurizer.segments);
    let (model, mut store) = build_model::<f32>(cfg, &featurizer, neighbors)?;
    let head = Mlp::new(&mut store, "head", model.embedding_width(), cfg.probe_hidden, 1, cfg.seed)?;
    let with_target = |items: Vec<SampleInputs>| -> Vec<(SampleInputs, f64)> {
        items
            .into_iter()
            .filter_map(|i| ds.truth.get(&i.id).map(|t| (i.clone(), t.travel_time)))
            .collect()
    };
    let train = with_target(prepare_all(&featurizer, &ds.train(), InputMode::TimeMasked));
    let eval_samples: Vec<_> = eval_idx.iter().map(|&i| &ds.samples[i]).collect();
    let eval = with_target(prepare_all(&featurizer, &eval_samples, InputMode::TimeMasked));
    if train.is_empty() || eval.is_empty() {
        return Err(EvalError::Empty("scratch travel_time".into()));
    }
    let n = train.len() as f64;
    let mean = train.iter().map(|x| x.1).sum::<f64>() / n;
    let std = (train.iter().map(|x| (x.1 - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-8);
    let mut opt = OptimizerState::new(
        AdamW {
            lr: cfg.probe_lr,
            weight_decay: cfg.weight_decay,
            ..AdamW::default()
        },
        &store,
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut taken = 0u64;
    'outer: for epoch in 0.. {
        order.shuffle(&mut rng_for(cfg.seed, 0x5C0 + epoch as u64));
        for idx in order.chunks(cfg.probe_batch_size.max(1)) {
            if taken == steps {
                break 'outer;
            }
            taken += 1;
            let items: Vec<&SampleInputs> = idx.iter().map(|&i| &train[i].0).collect();
            let y: Vec<f32> = idx.iter().map(|&i| ((train[i].1 - mean) / std) as f32).collect();
            let batch = make_batch(&featurizer, &items, None);
            let mut g = Graph::<f32>::new();
            let fwd = model.forward(&mut g, &store, &batch)?;
            let emb = model.trajectory_embedding(&mut g, &fwd)?;
            let out = head.forward(&mut g, &store, emb)?;
            let loss = mse(&mut g, out, &y)?;
            let grads = g.backward(loss).into_param_grads(store.len());
            if opt.step(&mut store, &grads).is_err() {
                log::warn!("scratch step skipped: non-finite gradient");
            }
        }
    }
    let mut truth = Vec::with_capacity(eval.len());
    let mut pred = Vec::with_capacity(eval.len());
    for chunk in eval.chunks(EXPORT_BATCH) {
        let items: Vec<&SampleInputs> = chunk.iter().map(|x| &x.0).collect();
        let batch = make_batch(&featurizer, &items, None);
        let mut g = Graph::<f32>::new();
        let fwd = model.forward(&mut g, &store, &batch)?;
        let emb = model.trajectory_embedding(&mut g, &fwd)?;
        let out = head.forward(&mut g, &store, emb)?;
        pred.extend(g.value(out).data().iter().map(|&v| v as f64 * std + mean));
        truth.extend(chunk.iter().map(|x| x.1));
    }
    let m = |r: Result<f64, metrics::MetricError>| r.map_err(|source| EvalError::Metric {
        task: "scratch travel_time".into(),
        source,
    });
    Ok(ScratchResult {
        mae: m(metrics::mae(&truth, &pred))?,
        rmse: m(metrics::rmse(&truth, &pred))?,
        steps: taken,
    })
}
