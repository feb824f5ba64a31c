use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer normalization. Returns `(y, xhat, rstd)`.
pub fn forward<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let n = T::from_usize(x.cols()).unwrap();
    let eps = T::from_f64_lossy(LAYER_NORM_EPS);
    let mut y = Tensor::zeros(x.rows(), x.cols());
    let mut xhat = Tensor::zeros(x.rows(), x.cols());
    let mut rstds = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let rstd = T::one() / (var + eps).sqrt();
        rstds.push(rstd);
        let xh = xhat.row_mut(r);
        for (o, &v) in xh.iter_mut().zip(row) {
            *o = (v - mean) * rstd;
        }
        let yr = y.row_mut(r);
        for (j, o) in yr.iter_mut().enumerate() {
            *o = xhat.get(r, j) * gain.data()[j] + bias.data()[j];
        }
    }
    (y, xhat, rstds)
}

/// Gradients `(dx, dgain, dbias)`.
pub fn backward<T: Scalar>(
    dy: &Tensor<T>,
    xhat: &Tensor<T>,
    rstd: &[T],
    gain: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let cols = xhat.cols();
    let n = T::from_usize(cols).unwrap();
    let mut dx = Tensor::zeros(xhat.rows(), cols);
    let mut dgain = Tensor::zeros(1, cols);
    let mut dbias = Tensor::zeros(1, cols);
    let mut dxhat = vec![T::zero(); cols];
    for r in 0..xhat.rows() {
        let g = dy.row(r);
        let xh = xhat.row(r);
        for j in 0..cols {
            dxhat[j] = g[j] * gain.data()[j];
            dgain.data_mut()[j] = dgain.data()[j] + g[j] * xh[j];
            dbias.data_mut()[j] = dbias.data()[j] + g[j];
        }
        let sum: T = dxhat.iter().copied().sum();
        let dot: T = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum();
        let scale = rstd[r] / n;
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = scale * (n * dxhat[j] - sum - xh[j] * dot);
        }
    }
    (dx, dgain, dbias)
}
