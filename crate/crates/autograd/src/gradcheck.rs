//! Central finite-difference verification of tape gradients.

use thiserror::Error;

use crate::error::TensorError;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Denominator floor of the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coords_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradCheckError {
    #[error("non-finite value at tensor {tensor}, coordinate {coord}")]
    NonFinite { tensor: usize, coord: usize },
    #[error("function output is {0:?}, expected a 1x1 scalar")]
    NotScalar((usize, usize)),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

struct Tracker {
    report: GradCheckReport,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            report: GradCheckReport {
                max_rel_error: 0.0,
                worst: None,
                analytic_at_worst: 0.0,
                numeric_at_worst: 0.0,
                coords_checked: 0,
            },
        }
    }

    fn record(&mut self, tensor: usize, coord: usize, analytic: f64, numeric: f64) -> Result<(), GradCheckError> {
        if !analytic.is_finite() || !numeric.is_finite() {
            return Err(GradCheckError::NonFinite { tensor, coord });
        }
        let err = relative_error(analytic, numeric);
        self.report.coords_checked += 1;
        if self.report.worst.is_none() || err > self.report.max_rel_error {
            self.report.max_rel_error = err;
            self.report.worst = Some((tensor, coord));
            self.report.analytic_at_worst = analytic;
            self.report.numeric_at_worst = numeric;
        }
        Ok(())
    }
}

fn scalar_output(g: &Graph<f64>, v: Var) -> Result<f64, GradCheckError> {
    let out = g.value(v);
    if out.shape() != (1, 1) {
        return Err(GradCheckError::NotScalar(out.shape()));
    }
    Ok(out.item())
}

/// Checks `d f / d inputs` where `f` builds a scalar from tracked inputs.
pub fn grad_check<F>(inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64, GradCheckError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.variable(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        scalar_output(&g, out)
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let base = scalar_output(&g, out)?;
    if !base.is_finite() {
        return Err(GradCheckError::NonFinite { tensor: usize::MAX, coord: 0 });
    }
    let grads = g.backward(out);
    let mut tracker = Tracker::new();
    let mut work = inputs.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let zero = Tensor::zeros(inputs[ti].rows(), inputs[ti].cols());
        let analytic = grads.wrt(*var).unwrap_or(&zero).clone();
        for c in 0..inputs[ti].len() {
            let orig = inputs[ti].data()[c];
            work[ti].data_mut()[c] = orig + eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[c] = orig - eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[c] = orig;
            tracker.record(ti, c, analytic.data()[c], (plus - minus) / (2.0 * eps))?;
        }
    }
    Ok(tracker.report)
}

/// Checks `d f / d θ` for every trainable parameter of `store`.
///
/// With `max_zero_coords = Some(n)`, coordinates whose analytic gradient is
/// exactly zero are sampled (at most `n` per tensor, evenly strided); every
/// coordinate with a nonzero analytic gradient is always checked.
pub fn grad_check_params<F>(
    store: &ParamStore<f64>,
    eps: f64,
    max_zero_coords: Option<usize>,
    f: F,
) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var, TensorError>,
{
    let eval = |s: &ParamStore<f64>| -> Result<f64, GradCheckError> {
        let mut g = Graph::new();
        let out = f(&mut g, s)?;
        scalar_output(&g, out)
    };
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    scalar_output(&g, out)?;
    let grads = g.backward(out);
    let mut tracker = Tracker::new();
    let mut work = store.clone();
    for (id, p) in store.iter() {
        if !p.trainable {
            continue;
        }
        let zero = Tensor::zeros(p.value.rows(), p.value.cols());
        let analytic = grads.param(id).unwrap_or(&zero).clone();
        let zero_coords: Vec<usize> = (0..p.value.len()).filter(|&c| analytic.data()[c] == 0.0).collect();
        let keep_zero: Vec<usize> = match max_zero_coords {
            Some(n) if zero_coords.len() > n => {
                let stride = zero_coords.len() / n.max(1);
                zero_coords.iter().step_by(stride.max(1)).take(n).copied().collect()
            }
            _ => zero_coords,
        };
        let coords = (0..p.value.len()).filter(|&c| analytic.data()[c] != 0.0 || keep_zero.binary_search(&c).is_ok());
        for c in coords {
            let orig = p.value.data()[c];
            set(&mut work, id, c, orig + eps);
            let plus = eval(&work)?;
            set(&mut work, id, c, orig - eps);
            let minus = eval(&work)?;
            set(&mut work, id, c, orig);
            tracker.record(id.0, c, analytic.data()[c], (plus - minus) / (2.0 * eps))?;
        }
    }
    Ok(tracker.report)
}

fn set(store: &mut ParamStore<f64>, id: ParamId, c: usize, v: f64) {
    store.get_mut(id).value.data_mut()[c] = v;
}
