use std::collections::BTreeMap;
use std::path::Path;

use trajfuse_autograd::{Graph, ParamStore, TensorError};

use crate::model::{Featurizer, InputMode, Modality, SampleInputs, TrajModel};
use crate::views::Sample;

use super::train::make_batch;

pub const EXPORT_BATCH: usize = 64;

/// Mean fused route-token vector per segment id over `samples`.
pub fn export_static_segment_embeddings(
    model: &TrajModel,
    store: &ParamStore<f32>,
    featurizer: &Featurizer,
    samples: &[&Sample],
) -> Result<BTreeMap<usize, Vec<f64>>, TensorError> {
    let d = model.config.d;
    let inputs: Vec<SampleInputs> = samples.iter().filter_map(|s| featurizer.prepare(s, InputMode::Full)).collect();
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    let refs: Vec<&SampleInputs> = inputs.iter().collect();
    for chunk in refs.chunks(EXPORT_BATCH) {
        let batch = make_batch(featurizer, chunk, None);
        let mut g = Graph::<f32>::new();
        let fwd = model.forward(&mut g, store, &batch)?;
        let fused = fwd.fused(Modality::Route).expect("route stream");
        let e = g.value(fused.e);
        for (s, item) in chunk.iter().enumerate() {
            let start = fused.seqs[s].start + 1;
            for (k, &tok) in item.route_tokens.iter().enumerate() {
                let Some(seg) = featurizer.segments.id_of(tok) else { continue };
                let entry = sums.entry(seg).or_insert_with(|| (vec![0.0; d], 0));
                for (acc, &v) in entry.0.iter_mut().zip(e.row(start + k)) {
                    *acc += v as f64;
                }
                entry.1 += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(seg, (sum, n))| (seg, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect())
}

/// Trajectory vectors under one input mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryExport {
    pub vectors: BTreeMap<u64, Vec<f64>>,
    /// Destination cell removed by truncation, per id.
    pub destination_labels: BTreeMap<u64, usize>,
    /// Samples whose prepared inputs would have an empty view.
    pub skipped: usize,
}

pub fn export_trajectory_embeddings(
    model: &TrajModel,
    store: &ParamStore<f32>,
    featurizer: &Featurizer,
    samples: &[&Sample],
    mode: InputMode,
) -> Result<TrajectoryExport, TensorError> {
    let mut out = TrajectoryExport::default();
    let mut inputs = Vec::with_capacity(samples.len());
    for s in samples {
        match featurizer.prepare(s, mode) {
            Some(i) => inputs.push(i),
            None => out.skipped += 1,
        }
    }
    let refs: Vec<&SampleInputs> = inputs.iter().collect();
    for chunk in refs.chunks(EXPORT_BATCH) {
        let batch = make_batch(featurizer, chunk, None);
        let mut g = Graph::<f32>::new();
        let fwd = model.forward(&mut g, store, &batch)?;
        let emb = model.trajectory_embedding(&mut g, &fwd)?;
        let t = g.value(emb);
        for (s, item) in chunk.iter().enumerate() {
            out.vectors.insert(item.id, t.row(s).iter().map(|&v| v as f64).collect());
            if let Some(label) = item.destination_label {
                out.destination_labels.insert(item.id, label);
            }
        }
    }
    Ok(out)
}

/// `key,v0,v1,...` rows.
pub fn write_embeddings_csv<K: std::fmt::Display>(path: &Path, table: &BTreeMap<K, Vec<f64>>) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for (k, v) in table {
        let mut rec = vec![k.to_string()];
        rec.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}
