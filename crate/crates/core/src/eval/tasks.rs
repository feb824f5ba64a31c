//! The four probe tasks, their targets, and the random control.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use trajfuse_autograd::TensorError;

use super::metrics::{self, MetricError};
use super::probe::{Classifier, ProbeConfig, Regressor};
use crate::model::{Featurizer, InputMode};
use crate::pipeline::{export_static_segment_embeddings, export_trajectory_embeddings, Dataset, Pretrained};
use crate::util::rng_for;
use crate::views::split_indices;

pub const ROAD_LABEL: &str = "road_label";
pub const ROAD_SPEED: &str = "road_speed";
pub const TRAVEL_TIME: &str = "travel_time";
pub const DESTINATION: &str = "destination_grid";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{task}: {source}")]
    Metric { task: String, source: MetricError },
    #[error("{0}: no usable samples")]
    Empty(String),
}

/// Frozen feature tables a probe can read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTables {
    pub segments: BTreeMap<usize, Vec<f64>>,
    /// Trajectory vectors exported with time information hidden.
    pub travel: BTreeMap<u64, Vec<f64>>,
    /// Trajectory vectors exported from destination-truncated inputs.
    pub destination: BTreeMap<u64, Vec<f64>>,
}

impl EmbeddingTables {
    pub fn export(pre: &Pretrained, ds: &Dataset) -> Result<Self, TensorError> {
        let all: Vec<_> = ds.samples.iter().collect();
        let f = &pre.featurizer;
        Ok(EmbeddingTables {
            segments: export_static_segment_embeddings(&pre.model, &pre.store, f, &all)?,
            travel: export_trajectory_embeddings(&pre.model, &pre.store, f, &all, InputMode::TimeMasked)?.vectors,
            destination: export_trajectory_embeddings(&pre.model, &pre.store, f, &all, InputMode::DestinationTruncated)?
                .vectors,
        })
    }

    pub fn segment_width(&self) -> usize {
        self.segments.values().next().map_or(0, Vec::len)
    }

    pub fn trajectory_width(&self) -> usize {
        self.travel.values().next().map_or(0, Vec::len)
    }
}

/// Ground truth for every task, keyed like [`EmbeddingTables`].
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub road_label: BTreeMap<usize, usize>,
    pub road_speed: BTreeMap<usize, f64>,
    pub travel_time: BTreeMap<u64, f64>,
    /// Cell-vocabulary index of the truncated destination.
    pub destination: BTreeMap<u64, usize>,
    pub destination_excluded: usize,
    pub n_cells: usize,
    pub segment_split: SegmentSplit,
}

/// Seeded train/val/test partition of segment ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Targets {
    pub fn build(ds: &Dataset, featurizer: &Featurizer, seed: u64) -> Self {
        let mut sum: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for truth in ds.truth.values() {
            for (&s, &v) in truth.segments.iter().zip(&truth.speeds) {
                let e = sum.entry(s).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
        let seen: Vec<usize> = featurizer.segments.ids().to_vec();
        let road_label = seen.iter().map(|&s| (s, ds.network.segments[s].road_type.index())).collect();
        let road_speed = seen
            .iter()
            .filter_map(|&s| sum.get(&s).map(|&(t, n)| (s, t / n as f64)))
            .collect();
        let travel_time = ds
            .samples
            .iter()
            .filter_map(|s| ds.truth.get(&s.id).map(|t| (s.id, t.travel_time)))
            .collect();
        let mut destination = BTreeMap::new();
        let mut destination_excluded = 0;
        for s in &ds.samples {
            if let Some(label) = featurizer.prepare(s, InputMode::DestinationTruncated).and_then(|i| i.destination_label) {
                match featurizer.cells.get(label) {
                    Some(idx) => {
                        destination.insert(s.id, idx);
                    }
                    None => destination_excluded += 1,
                }
            }
        }
        let (train, val, test) = split_indices(seen.len(), ds.meta.prep.fractions, seed).expect("valid fractions");
        let pick = |idx: Vec<usize>| idx.into_iter().map(|i| seen[i]).collect();
        Targets {
            road_label,
            road_speed,
            travel_time,
            destination,
            destination_excluded,
            n_cells: featurizer.cells.len(),
            segment_split: SegmentSplit {
                train: pick(train),
                val: pick(val),
                test: pick(test),
            },
        }
    }
}

/// Seeded standard-normal vectors with the same keys and widths as `like`.
pub fn random_control(like: &EmbeddingTables, seed: u64) -> EmbeddingTables {
    fn fill<K: Ord + Copy>(t: &BTreeMap<K, Vec<f64>>, seed: u64, stream: u64) -> BTreeMap<K, Vec<f64>> {
        let mut rng = rng_for(seed, stream);
        t.iter()
            .map(|(&k, v)| (k, (0..v.len()).map(|_| StandardNormal.sample(&mut rng)).collect()))
            .collect()
    }
    EmbeddingTables {
        segments: fill(&like.segments, seed, 0xC0),
        travel: fill(&like.travel, seed, 0xC1),
        destination: fill(&like.destination, seed, 0xC2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub metrics: BTreeMap<String, f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Test keys without a vector or label.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub task: String,
    pub key: u64,
    pub truth: f64,
    pub prediction: f64,
}

/// Rows with both a vector and a target, in key order.
fn rows<K: Ord + Copy, V: Copy>(
    keys: &[K],
    table: &BTreeMap<K, Vec<f64>>,
    targets: &BTreeMap<K, V>,
) -> (Vec<K>, Vec<Vec<f64>>, Vec<V>, usize) {
    let mut sorted = keys.to_vec();
    sorted.sort();
    let (mut ks, mut xs, mut ys, mut missing) = (Vec::new(), Vec::new(), Vec::new(), 0);
    for k in sorted {
        match (table.get(&k), targets.get(&k)) {
            (Some(x), Some(&y)) => {
                ks.push(k);
                xs.push(x.clone());
                ys.push(y);
            }
            _ => missing += 1,
        }
    }
    (ks, xs, ys, missing)
}

fn metric(task: &str, r: Result<f64, MetricError>) -> Result<f64, EvalError> {
    r.map_err(|source| EvalError::Metric {
        task: task.into(),
        source,
    })
}

pub struct Probed {
    pub report: TaskReport,
    pub predictions: Vec<Prediction>,
}

pub fn classify<K: Ord + Copy + Into<u64>>(
    task: &str,
    table: &BTreeMap<K, Vec<f64>>,
    labels: &BTreeMap<K, usize>,
    n_classes: usize,
    train: &[K],
    test: &[K],
    cfg: &ProbeConfig,
) -> Result<Probed, EvalError> {
    let (_, xtr, ytr, _) = rows(train, table, labels);
    let (kte, xte, yte, missing) = rows(test, table, labels);
    if xtr.is_empty() || xte.is_empty() {
        return Err(EvalError::Empty(task.into()));
    }
    let clf = Classifier::fit(&xtr, &ytr, n_classes, cfg)?;
    let scores = clf.scores(&xte)?;
    let k = 5.min(n_classes);
    let ranked: Vec<Vec<usize>> = scores.iter().map(|s| metrics::top_k(s, k)).collect();
    let pred: Vec<usize> = ranked.iter().map(|r| r[0]).collect();
    let mut m = BTreeMap::new();
    m.insert("micro_f1".into(), metric(task, metrics::micro_f1(&yte, &pred))?);
    m.insert("macro_f1".into(), metric(task, metrics::macro_f1(&yte, &pred))?);
    m.insert("acc@1".into(), metric(task, metrics::accuracy_at_k(&yte, &ranked, 1))?);
    if k == 5 {
        m.insert("acc@5".into(), metric(task, metrics::accuracy_at_k(&yte, &ranked, 5))?);
    }
    let mut freq = vec![0usize; n_classes];
    ytr.iter().for_each(|&y| freq[y] += 1);
    let majority = metrics::top_k(&freq.iter().map(|&c| c as f64).collect::<Vec<_>>(), 1)[0];
    let hits = yte.iter().filter(|&&y| y == majority).count();
    m.insert("majority_acc@1".into(), hits as f64 / yte.len() as f64);
    let predictions = kte
        .iter()
        .zip(yte.iter().zip(&pred))
        .map(|(&key, (&t, &p))| Prediction {
            task: task.into(),
            key: key.into(),
            truth: t as f64,
            prediction: p as f64,
        })
        .collect();
    Ok(Probed {
        report: TaskReport {
            metrics: m,
            n_train: xtr.len(),
            n_test: xte.len(),
            excluded: missing,
        },
        predictions,
    })
}

pub fn regress<K: Ord + Copy + Into<u64>>(
    task: &str,
    table: &BTreeMap<K, Vec<f64>>,
    values: &BTreeMap<K, f64>,
    train: &[K],
    test: &[K],
    cfg: &ProbeConfig,
) -> Result<Probed, EvalError> {
    let (_, xtr, ytr, _) = rows(train, table, values);
    let (kte, xte, yte, missing) = rows(test, table, values);
    if xtr.is_empty() || xte.is_empty() {
        return Err(EvalError::Empty(task.into()));
    }
    let reg = Regressor::fit(&xtr, &ytr, cfg)?;
    let pred = reg.predict(&xte)?;
    let mut m = BTreeMap::new();
    m.insert("mae".into(), metric(task, metrics::mae(&yte, &pred))?);
    m.insert("rmse".into(), metric(task, metrics::rmse(&yte, &pred))?);
    let predictions = kte
        .iter()
        .zip(yte.iter().zip(&pred))
        .map(|(&key, (&t, &p))| Prediction {
            task: task.into(),
            key: key.into(),
            truth: t,
            prediction: p,
        })
        .collect();
    Ok(Probed {
        report: TaskReport {
            metrics: m,
            n_train: xtr.len(),
            n_test: xte.len(),
            excluded: missing,
        },
        predictions,
    })
}

fn usize_keys(v: &[usize]) -> Vec<u64> {
    v.iter().map(|&i| i as u64).collect()
}

fn widen<V: Clone>(m: &BTreeMap<usize, V>) -> BTreeMap<u64, V> {
    m.iter().map(|(&k, v)| (k as u64, v.clone())).collect()
}

pub fn probe_road_label(tables: &EmbeddingTables, t: &Targets, cfg: &ProbeConfig) -> Result<Probed, EvalError> {
    let s = &t.segment_split;
    classify(
        ROAD_LABEL,
        &widen(&tables.segments),
        &widen(&t.road_label),
        crate::synth::RoadType::ALL.len(),
        &usize_keys(&s.train),
        &usize_keys(&s.test),
        cfg,
    )
}

pub fn probe_road_speed(tables: &EmbeddingTables, t: &Targets, cfg: &ProbeConfig) -> Result<Probed, EvalError> {
    let s = &t.segment_split;
    regress(
        ROAD_SPEED,
        &widen(&tables.segments),
        &widen(&t.road_speed),
        &usize_keys(&s.train),
        &usize_keys(&s.test),
        cfg,
    )
}

/// Sample ids of the given dataset indices.
pub fn ids_of(ds: &Dataset, idx: &[usize]) -> Vec<u64> {
    idx.iter().map(|&i| ds.samples[i].id).collect()
}

pub fn probe_travel_time(
    tables: &EmbeddingTables,
    t: &Targets,
    train: &[u64],
    test: &[u64],
    cfg: &ProbeConfig,
) -> Result<Probed, EvalError> {
    regress(TRAVEL_TIME, &tables.travel, &t.travel_time, train, test, cfg)
}

pub fn probe_destination(
    tables: &EmbeddingTables,
    t: &Targets,
    train: &[u64],
    test: &[u64],
    cfg: &ProbeConfig,
) -> Result<Probed, EvalError> {
    classify(DESTINATION, &tables.destination, &t.destination, t.n_cells, train, test, cfg)
}
