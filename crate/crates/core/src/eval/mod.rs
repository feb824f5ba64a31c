//! Frozen-probe evaluation and the random-feature control.

pub mod alignment;
pub mod metrics;
pub mod probe;
pub mod scratch;
pub mod tasks;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use alignment::{cross_view_cosine_gap, CosineGap};
pub use metrics::{accuracy_at_k, macro_f1, mae, micro_f1, rmse, top_k, MetricError};
pub use probe::{Classifier, ProbeConfig, Regressor};
pub use scratch::{probe_steps, train_from_scratch, ScratchResult};
pub use tasks::{
    ids_of, probe_destination, probe_road_label, probe_road_speed, probe_travel_time, random_control, EmbeddingTables,
    EvalError, Prediction, Probed, TaskReport, Targets, DESTINATION, ROAD_LABEL, ROAD_SPEED, TRAVEL_TIME,
};

use crate::pipeline::{Dataset, Pretrained, TrainConfig};

/// Which dataset split the trajectory probes are scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Val,
    Test,
}

pub fn probe_config(cfg: &TrainConfig) -> ProbeConfig {
    ProbeConfig {
        hidden: cfg.probe_hidden,
        epochs: cfg.probe_epochs,
        lr: cfg.probe_lr,
        weight_decay: cfg.weight_decay,
        batch_size: cfg.probe_batch_size,
        seed: cfg.seed,
    }
}

/// All four probes on one set of tables.
pub fn run_probes(
    tables: &EmbeddingTables,
    targets: &Targets,
    ds: &Dataset,
    split: EvalSplit,
    cfg: &ProbeConfig,
) -> Result<(BTreeMap<String, TaskReport>, Vec<Prediction>), EvalError> {
    let train = ids_of(ds, &ds.split.train);
    let eval = ids_of(
        ds,
        match split {
            EvalSplit::Val => &ds.split.val,
            EvalSplit::Test => &ds.split.test,
        },
    );
    let runs = [
        (ROAD_LABEL, probe_road_label(tables, targets, cfg)?),
        (ROAD_SPEED, probe_road_speed(tables, targets, cfg)?),
        (TRAVEL_TIME, probe_travel_time(tables, targets, &train, &eval, cfg)?),
        (DESTINATION, probe_destination(tables, targets, &train, &eval, cfg)?),
    ];
    let mut reports = BTreeMap::new();
    let mut preds = Vec::new();
    for (name, p) in runs {
        reports.insert(name.to_string(), p.report);
        preds.extend(p.predictions);
    }
    Ok((reports, preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub tasks: BTreeMap<String, TaskReport>,
    pub control: BTreeMap<String, TaskReport>,
    /// Pretrained minus control, per task and metric.
    pub deltas: BTreeMap<String, BTreeMap<String, f64>>,
    pub destination_excluded: usize,
}

impl EvalReport {
    pub fn metric(&self, task: &str, name: &str) -> Option<f64> {
        self.tasks.get(task)?.metrics.get(name).copied()
    }

    pub fn control_metric(&self, task: &str, name: &str) -> Option<f64> {
        self.control.get(task)?.metrics.get(name).copied()
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self).expect("serializable report"))
    }
}

pub struct Evaluation {
    pub report: EvalReport,
    /// Pretrained-feature predictions, then control predictions with a `random:` task prefix.
    pub predictions: Vec<Prediction>,
}

/// Exports frozen tables from `pre`, probes them and the random control.
pub fn evaluate(pre: &Pretrained, ds: &Dataset, split: EvalSplit) -> Result<Evaluation, EvalError> {
    let cfg = probe_config(&pre.config);
    let tables = EmbeddingTables::export(pre, ds)?;
    let targets = Targets::build(ds, &pre.featurizer, pre.config.seed);
    evaluate_tables(&tables, &targets, ds, split, &cfg)
}

pub fn evaluate_tables(
    tables: &EmbeddingTables,
    targets: &Targets,
    ds: &Dataset,
    split: EvalSplit,
    cfg: &ProbeConfig,
) -> Result<Evaluation, EvalError> {
    let (tasks, mut predictions) = run_probes(tables, targets, ds, split, cfg)?;
    let control_tables = random_control(tables, cfg.seed);
    let (control, control_preds) = run_probes(&control_tables, targets, ds, split, cfg)?;
    predictions.extend(control_preds.into_iter().map(|mut p| {
        p.task = format!("random:{}", p.task);
        p
    }));
    let deltas = tasks
        .iter()
        .map(|(task, r)| {
            let d = r
                .metrics
                .iter()
                .filter_map(|(k, v)| Some((k.clone(), v - control.get(task)?.metrics.get(k)?)))
                .collect();
            (task.clone(), d)
        })
        .collect();
    Ok(Evaluation {
        report: EvalReport {
            seed: cfg.seed,
            tasks,
            control,
            deltas,
            destination_excluded: targets.destination_excluded,
        },
        predictions,
    })
}

pub fn write_predictions_csv(path: &Path, preds: &[Prediction]) -> Result<(), csv::Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for p in preds {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
