//! Classification and regression metrics.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} truths vs {1} predictions")]
    Length(usize, usize),
    #[error("k = {k} exceeds the {available} ranked candidates")]
    TooFewCandidates { k: usize, available: usize },
}

fn check(n: usize, m: usize) -> Result<(), MetricError> {
    if n != m {
        return Err(MetricError::Length(n, m));
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn counts(truth: &[usize], pred: &[usize], c: usize) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == c, p == c) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    let denom = 2.0 * tp + fp + fn_;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp / denom
    }
}

/// Classes seen in either truths or predictions.
fn present(truth: &[usize], pred: &[usize]) -> BTreeSet<usize> {
    truth.iter().chain(pred).copied().collect()
}

/// F1 from true positives, false positives and false negatives pooled over classes.
pub fn micro_f1(truth: &[usize], pred: &[usize]) -> Result<f64, MetricError> {
    check(truth.len(), pred.len())?;
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for c in present(truth, pred) {
        let (a, b, d) = counts(truth, pred, c);
        tp += a;
        fp += b;
        fn_ += d;
    }
    Ok(f1(tp, fp, fn_))
}

/// Unweighted mean of per-class F1 over the classes present.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> Result<f64, MetricError> {
    check(truth.len(), pred.len())?;
    let classes = present(truth, pred);
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let (tp, fp, fn_) = counts(truth, pred, c);
            f1(tp, fp, fn_)
        })
        .sum();
    Ok(total / classes.len() as f64)
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check(truth.len(), pred.len())?;
    Ok(truth.iter().zip(pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / truth.len() as f64)
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check(truth.len(), pred.len())?;
    Ok((truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / truth.len() as f64).sqrt())
}

/// Fraction of samples whose label is among the first `k` ranked candidates.
pub fn accuracy_at_k(truth: &[usize], ranked: &[Vec<usize>], k: usize) -> Result<f64, MetricError> {
    check(truth.len(), ranked.len())?;
    let mut hits = 0usize;
    for (t, r) in truth.iter().zip(ranked) {
        if r.len() < k {
            return Err(MetricError::TooFewCandidates { k, available: r.len() });
        }
        hits += usize::from(r[..k].contains(t));
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// Indices of the `k` largest scores, best first; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
