use thiserror::Error;

use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment accumulators, one pair per parameter in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub hyper: AdamW,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("non-finite gradient in parameter `{name}`; step skipped")]
    NonFinite { name: String },
    #[error("gradient for `{name}` has shape {got:?}, parameter is {want:?}")]
    Shape {
        name: String,
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error("learning rate must be non-negative, got {0}")]
    LearningRate(f64),
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(hyper: AdamW, store: &ParamStore<T>) -> Self {
        let m = store
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols()))
            .collect::<Vec<_>>();
        OptimizerState {
            hyper,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One AdamW update with decoupled weight decay:
    /// `θ ← θ − lr·m̂/(√v̂+ε) − lr·λ·θ`.
    ///
    /// Parameters without a gradient (or frozen) are left untouched. If any
    /// gradient is non-finite nothing is updated and the step counter does
    /// not advance.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &[Option<Tensor<T>>],
    ) -> Result<(), OptimError> {
        let h = self.hyper;
        if h.lr < 0.0 {
            return Err(OptimError::LearningRate(h.lr));
        }
        for (id, p) in store.iter() {
            if let Some(g) = grads.get(id.0).and_then(Option::as_ref) {
                if g.shape() != p.value.shape() {
                    return Err(OptimError::Shape {
                        name: p.name.clone(),
                        got: g.shape(),
                        want: p.value.shape(),
                    });
                }
                if p.trainable && !g.is_finite() {
                    return Err(OptimError::NonFinite {
                        name: p.name.clone(),
                    });
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(h.beta1), T::from_f64_lossy(h.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let lr = T::from_f64_lossy(h.lr);
        let decay = T::from_f64_lossy(h.lr * h.weight_decay);
        let (inv_bc1, inv_bc2) = (T::from_f64_lossy(1.0 / bc1), T::from_f64_lossy(1.0 / bc2));
        let eps = T::from_f64_lossy(h.eps);
        for i in 0..store.len() {
            let id = ParamId(i);
            let Some(g) = grads.get(i).and_then(Option::as_ref) else {
                continue;
            };
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((theta, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let mhat = *mi * inv_bc1;
                let vhat = *vi * inv_bc2;
                *theta = *theta - lr * mhat / (vhat.sqrt() + eps) - decay * *theta;
            }
        }
        Ok(())
    }
}
