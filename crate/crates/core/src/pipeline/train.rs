use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajfuse_autograd::checkpoint::{self, CheckpointError};
use trajfuse_autograd::{AdamW, Graph, OptimError, OptimizerState, ParamStore, Scalar, TensorError};

use super::config::TrainConfig;
use super::data::Dataset;
use crate::model::features::FeatureStats;
use crate::model::{vocab_neighbors, Batch, Featurizer, InputMode, SampleInputs, TrajModel, Vocab};
use crate::objectives::MaskSet;
use crate::util::{mix_seed, rng_for};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error("no training samples")]
    Empty,
}

/// Featurizer fitted on the training split.
pub fn featurizer_for(ds: &Dataset) -> Featurizer {
    Featurizer::new(
        Vocab::new(ds.meta.segment_vocab.clone()),
        Vocab::new(ds.meta.cell_vocab.clone()),
        FeatureStats::fit(&ds.network, &ds.train()),
        ds.network.frame,
    )
}

/// Freshly initialized model and parameters.
pub fn build_model<T: Scalar>(
    cfg: &TrainConfig,
    featurizer: &Featurizer,
    segment_neighbors: Vec<Vec<usize>>,
) -> Result<(TrajModel, ParamStore<T>), TensorError> {
    let mut store = ParamStore::new();
    let model = TrajModel::new(
        &mut store,
        cfg.model,
        cfg.ablations,
        segment_neighbors,
        featurizer.cells.len(),
        cfg.seed,
    )?;
    Ok((model, store))
}

pub fn prepare_all(featurizer: &Featurizer, samples: &[&crate::views::Sample], mode: InputMode) -> Vec<SampleInputs> {
    samples.iter().filter_map(|s| featurizer.prepare(s, mode)).collect()
}

/// Masks for a batch, or none when masked-token modeling is ablated.
pub fn batch_masks(cfg: &TrainConfig, items: &[&SampleInputs], seed: u64) -> Option<Vec<MaskSet>> {
    if cfg.ablations.no_mlm_loss {
        return None;
    }
    Some(
        items
            .iter()
            .map(|s| MaskSet::sample(s.route_len(), s.grid_len(), &cfg.loss, seed, s.id))
            .collect(),
    )
}

pub fn make_batch(featurizer: &Featurizer, items: &[&SampleInputs], masks: Option<&[MaskSet]>) -> Batch {
    Batch::new(items, masks, featurizer.segments.mask(), featurizer.cells.mask())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub kind: String,
    pub epoch: usize,
    pub step: u64,
    pub align: f64,
    pub mlm: f64,
    pub total: f64,
}

/// Step and epoch losses in emission order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricRow>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_csv())
    }

    pub fn epoch_rows(&self, kind: &str) -> Vec<&MetricRow> {
        self.rows.iter().filter(|r| r.kind == kind).collect()
    }

    /// Epoch-mean training total loss, in epoch order.
    pub fn train_epoch_totals(&self) -> Vec<f64> {
        self.epoch_rows("train_epoch").iter().map(|r| r.total).collect()
    }
}

/// Result of pretraining: best-validation parameters plus final optimizer state.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: TrajModel,
    pub store: ParamStore<f32>,
    pub optimizer: OptimizerState<f32>,
    pub featurizer: Featurizer,
    pub config: TrainConfig,
    pub segment_neighbors: Vec<Vec<usize>>,
    pub best_epoch: usize,
    pub log: MetricsLog,
}

#[derive(Debug, Clone, Copy, Default)]
struct LossSums {
    align: f64,
    mlm: f64,
    total: f64,
    n: usize,
}

impl LossSums {
    fn add(&mut self, a: f64, m: f64, t: f64) {
        self.align += a;
        self.mlm += m;
        self.total += t;
        self.n += 1;
    }

    fn row(&self, kind: &str, epoch: usize, step: u64) -> MetricRow {
        let n = self.n.max(1) as f64;
        MetricRow {
            kind: kind.into(),
            epoch,
            step,
            align: self.align / n,
            mlm: self.mlm / n,
            total: self.total / n,
        }
    }
}

/// Mean losses over `inputs` with fixed masks; no parameter updates.
pub fn evaluate_loss(
    model: &TrajModel,
    store: &ParamStore<f32>,
    featurizer: &Featurizer,
    inputs: &[SampleInputs],
    cfg: &TrainConfig,
) -> Result<(f64, f64, f64), TensorError> {
    let mut sums = LossSums::default();
    let refs: Vec<&SampleInputs> = inputs.iter().collect();
    for chunk in refs.chunks(cfg.batch_size.max(1)) {
        let masks = batch_masks(cfg, chunk, mix_seed(cfg.seed, 0xE7A1));
        let batch = make_batch(featurizer, chunk, masks.as_deref());
        let mut g = Graph::<f32>::new();
        let fwd = model.forward(&mut g, store, &batch)?;
        let l = model.losses(&mut g, &fwd, &cfg.loss)?;
        sums.add(
            g.value(l.align).item() as f64,
            g.value(l.mlm).item() as f64,
            g.value(l.total).item() as f64,
        );
    }
    let r = sums.row("", 0, 0);
    Ok((r.align, r.mlm, r.total))
}

pub fn pretrain(cfg: &TrainConfig, ds: &Dataset) -> Result<Pretrained, TrainError> {
    cfg.validate()?;
    let featurizer = featurizer_for(ds);
    let neighbors = vocab_neighbors(&ds.network, &featurizer.segments);
    let (model, mut store) = build_model::<f32>(cfg, &featurizer, neighbors.clone())?;
    let train = prepare_all(&featurizer, &ds.train(), InputMode::Full);
    let val = prepare_all(&featurizer, &ds.val(), InputMode::Full);
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    let hyper = AdamW {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamW::default()
    };
    let mut optimizer = OptimizerState::new(hyper, &store);
    let mut log = MetricsLog::default();
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, 0xE0 + epoch as u64));
        let mut sums = LossSums::default();
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<&SampleInputs> = idx.iter().map(|&i| &train[i]).collect();
            let masks = batch_masks(cfg, &items, mix_seed(cfg.seed, epoch as u64));
            let batch = make_batch(&featurizer, &items, masks.as_deref());
            let mut g = Graph::<f32>::new();
            let fwd = model.forward(&mut g, &store, &batch)?;
            let l = model.losses(&mut g, &fwd, &cfg.loss)?;
            let (a, m, t) = (
                g.value(l.align).item() as f64,
                g.value(l.mlm).item() as f64,
                g.value(l.total).item() as f64,
            );
            if !t.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi });
            }
            let grads = g.backward(l.total).into_param_grads(store.len());
            optimizer.step(&mut store, &grads)?;
            sums.add(a, m, t);
            log.rows.push(MetricRow {
                kind: "step".into(),
                epoch,
                step: optimizer.step,
                align: a,
                mlm: m,
                total: t,
            });
        }
        log.rows.push(sums.row("train_epoch", epoch, optimizer.step));
        let (va, vm, vt) = if val.is_empty() {
            (sums.align, sums.mlm, sums.total)
        } else {
            evaluate_loss(&model, &store, &featurizer, &val, cfg)?
        };
        log.rows.push(MetricRow {
            kind: "val_epoch".into(),
            epoch,
            step: optimizer.step,
            align: va,
            mlm: vm,
            total: vt,
        });
        log::info!("epoch {epoch}: train {:.4} val {:.4}", sums.row("", 0, 0).total, vt);
        if best.as_ref().map_or(true, |b| vt < b.0) {
            best = Some((vt, epoch, store.clone()));
        }
    }
    let (_, best_epoch, best_store) = best.expect("at least one epoch");
    Ok(Pretrained {
        model,
        store: best_store,
        optimizer,
        featurizer,
        config: *cfg,
        segment_neighbors: neighbors,
        best_epoch,
        log,
    })
}

/// JSON blob stored in the checkpoint header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub featurizer: Featurizer,
    pub segment_neighbors: Vec<Vec<usize>>,
    pub epoch: usize,
}

impl Pretrained {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let meta = CheckpointMeta {
            config: self.config,
            featurizer: self.featurizer.clone(),
            segment_neighbors: self.segment_neighbors.clone(),
            epoch: self.best_epoch,
        };
        let blob = serde_json::to_vec(&meta).map_err(|e| TrainError::Meta(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(CheckpointError::from)?;
        }
        let mut w = BufWriter::new(File::create(path).map_err(CheckpointError::from)?);
        checkpoint::write(&mut w, &blob, &self.store, Some(&self.optimizer))?;
        w.flush().map_err(CheckpointError::from)?;
        Ok(())
    }

    /// Rebuilds the model from the stored config and loads every parameter.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let r = BufReader::new(File::open(path).map_err(CheckpointError::from)?);
        let data = checkpoint::read(r)?;
        let meta: CheckpointMeta = serde_json::from_slice(&data.meta).map_err(|e| TrainError::Meta(e.to_string()))?;
        let (model, fresh) = build_model::<f32>(&meta.config, &meta.featurizer, meta.segment_neighbors.clone())?;
        if fresh.len() != data.params.len() {
            return Err(TrainError::Meta(format!(
                "checkpoint has {} parameters, model expects {}",
                data.params.len(),
                fresh.len()
            )));
        }
        for (id, p) in fresh.iter() {
            let q = data.params.get(id);
            if q.name != p.name || q.value.shape() != p.value.shape() {
                return Err(TrainError::Meta(format!("parameter mismatch at `{}`", p.name)));
            }
        }
        let optimizer = data
            .optimizer
            .unwrap_or_else(|| OptimizerState::new(AdamW::default(), &data.params));
        Ok(Pretrained {
            model,
            store: data.params,
            optimizer,
            featurizer: meta.featurizer,
            config: meta.config,
            segment_neighbors: meta.segment_neighbors,
            best_epoch: meta.epoch,
            log: MetricsLog::default(),
        })
    }
}
