use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One attention problem inside a packed batch: queries
/// `q_start..q_start+q_len` attend over keys `k_start..k_start+k_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnGroup {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
}

impl AttnGroup {
    pub fn self_attention(start: usize, len: usize) -> Self {
        AttnGroup {
            q_start: start,
            q_len: len,
            k_start: start,
            k_len: len,
        }
    }
}

/// Multi-head scaled dot-product attention over packed groups.
///
/// Returns the output (same shape as `q`) and the attention probabilities,
/// laid out group-major then head-major, each block `q_len x k_len`.
pub fn forward<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
    groups: &[AttnGroup],
) -> (Tensor<T>, Vec<T>) {
    let d = q.cols();
    let dk = d / heads;
    let scale = T::one() / T::from_usize(dk).unwrap().sqrt();
    let total: usize = groups.iter().map(|g| g.q_len * g.k_len * heads).sum();
    let mut probs = vec![T::zero(); total];
    let mut out = Tensor::zeros(q.rows(), d);
    let ld = d as isize;
    let mut off = 0;
    for g in groups {
        let block = g.q_len * g.k_len;
        for h in 0..heads {
            let p = &mut probs[off..off + block];
            let qo = g.q_start * d + h * dk;
            let ko = g.k_start * d + h * dk;
            T::gemm(
                g.q_len,
                dk,
                g.k_len,
                scale,
                &q.data()[qo..],
                ld,
                1,
                &k.data()[ko..],
                1,
                ld,
                T::zero(),
                p,
                g.k_len as isize,
                1,
            );
            for row in p.chunks_mut(g.k_len) {
                softmax_in_place(row);
            }
            T::gemm(
                g.q_len,
                g.k_len,
                dk,
                T::one(),
                p,
                g.k_len as isize,
                1,
                &v.data()[ko..],
                ld,
                1,
                T::zero(),
                &mut out.data_mut()[qo..],
                ld,
                1,
            );
            off += block;
        }
    }
    (out, probs)
}

/// Gradients `(dq, dk, dv)` given the upstream gradient of the output.
#[allow(clippy::too_many_arguments)]
pub fn backward<T: Scalar>(
    dout: &Tensor<T>,
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
    groups: &[AttnGroup],
    probs: &[T],
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = q.cols();
    let dk = d / heads;
    let scale = T::one() / T::from_usize(dk).unwrap().sqrt();
    let ld = d as isize;
    let mut dq = Tensor::zeros(q.rows(), d);
    let mut dkey = Tensor::zeros(k.rows(), d);
    let mut dv = Tensor::zeros(v.rows(), d);
    let mut scratch: Vec<T> = Vec::new();
    let mut off = 0;
    for g in groups {
        let block = g.q_len * g.k_len;
        let lk = g.k_len as isize;
        for h in 0..heads {
            let p = &probs[off..off + block];
            let qo = g.q_start * d + h * dk;
            let ko = g.k_start * d + h * dk;
            // dV += P^T dO
            T::gemm(
                g.k_len,
                g.q_len,
                dk,
                T::one(),
                p,
                1,
                lk,
                &dout.data()[qo..],
                ld,
                1,
                T::one(),
                &mut dv.data_mut()[ko..],
                ld,
                1,
            );
            // dP = dO V^T
            scratch.clear();
            scratch.resize(block, T::zero());
            T::gemm(
                g.q_len,
                dk,
                g.k_len,
                T::one(),
                &dout.data()[qo..],
                ld,
                1,
                &v.data()[ko..],
                1,
                ld,
                T::zero(),
                &mut scratch,
                lk,
                1,
            );
            // dS = scale * P ⊙ (dP - rowsum(P ⊙ dP))
            for (prow, drow) in p.chunks(g.k_len).zip(scratch.chunks_mut(g.k_len)) {
                let dot: T = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum();
                for (dv_, &pv) in drow.iter_mut().zip(prow) {
                    *dv_ = scale * pv * (*dv_ - dot);
                }
            }
            // dQ += dS K
            T::gemm(
                g.q_len,
                g.k_len,
                dk,
                T::one(),
                &scratch,
                lk,
                1,
                &k.data()[ko..],
                ld,
                1,
                T::one(),
                &mut dq.data_mut()[qo..],
                ld,
                1,
            );
            // dK += dS^T Q
            T::gemm(
                g.k_len,
                g.q_len,
                dk,
                T::one(),
                &scratch,
                1,
                lk,
                &q.data()[qo..],
                ld,
                1,
                T::one(),
                &mut dkey.data_mut()[ko..],
                ld,
                1,
            );
            off += block;
        }
    }
    (dq, dkey, dv)
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in row.iter_mut() {
        *x = *x / sum;
    }
}
