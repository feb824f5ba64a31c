//! Cross-view agreement of pooled view vectors.

use trajfuse_autograd::{Graph, ParamStore, TensorError};

use crate::model::{Featurizer, InputMode, Modality, SampleInputs, TrajModel};
use crate::pipeline::{make_batch, prepare_all};
use crate::views::Sample;

/// Mean cosine of matching pairs and of in-batch mismatched pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineGap {
    pub positive: f64,
    pub negative: f64,
}

impl CosineGap {
    pub fn gap(&self) -> f64 {
        self.positive - self.negative
    }
}

fn unit(v: &[f32]) -> Vec<f64> {
    let n = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt().max(1e-12);
    v.iter().map(|&x| x as f64 / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Over the aligned pairs (r, p|r), (g, p|g), (p|r, p|g), batched like training.
pub fn cross_view_cosine_gap(
    model: &TrajModel,
    store: &ParamStore<f32>,
    featurizer: &Featurizer,
    samples: &[&Sample],
    batch_size: usize,
) -> Result<CosineGap, TensorError> {
    let inputs = prepare_all(featurizer, samples, InputMode::Full);
    let refs: Vec<&SampleInputs> = inputs.iter().collect();
    let pairs = [
        (Modality::Route, Modality::GpsRoute),
        (Modality::Grid, Modality::GpsGrid),
        (Modality::GpsRoute, Modality::GpsGrid),
    ];
    let (mut pos, mut np, mut neg, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for chunk in refs.chunks(batch_size.max(1)) {
        let batch = make_batch(featurizer, chunk, None);
        let mut g = Graph::<f32>::new();
        let views = model.encode(&mut g, store, &batch)?;
        let get = |m: Modality| views.iter().find(|(v, _)| *v == m).map(|(_, e)| g.value(e.h_t));
        for (a, b) in pairs {
            let (Some(ta), Some(tb)) = (get(a), get(b)) else { continue };
            let ua: Vec<Vec<f64>> = (0..ta.rows()).map(|i| unit(ta.row(i))).collect();
            let ub: Vec<Vec<f64>> = (0..tb.rows()).map(|i| unit(tb.row(i))).collect();
            for (i, x) in ua.iter().enumerate() {
                for (j, y) in ub.iter().enumerate() {
                    if i == j {
                        pos += dot(x, y);
                        np += 1;
                    } else {
                        neg += dot(x, y);
                        nn += 1;
                    }
                }
            }
        }
    }
    Ok(CosineGap {
        positive: pos / np.max(1) as f64,
        negative: neg / nn.max(1) as f64,
    })
}
