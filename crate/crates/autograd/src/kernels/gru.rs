//! GRU recurrence over packed sequences.
//!
//! The input projection `x W_ih + b_ih` is an ordinary matmul done on the
//! tape; this kernel runs only the recurrent part. Gate columns are laid out
//! `[reset | update | candidate]`:
//!
//! ```text
//! a = h_prev W_hh + b_hh
//! r = sigmoid(gx_r + a_r)
//! z = sigmoid(gx_z + a_z)
//! n = tanh(gx_n + r * a_n)
//! h = (1 - z) * n + z * h_prev
//! ```

use std::ops::Range;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-step cache: `[r | z | n | a_n]`, N x 4h.
pub struct GruCache<T> {
    pub gates: Tensor<T>,
}

fn order(range: &Range<usize>, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new(range.clone().rev())
    } else {
        Box::new(range.clone())
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn forward<T: Scalar>(
    gx: &Tensor<T>,
    wh: &Tensor<T>,
    bh: &Tensor<T>,
    ranges: &[Range<usize>],
    reverse: bool,
) -> (Tensor<T>, GruCache<T>) {
    let h = wh.rows();
    let mut out = Tensor::zeros(gx.rows(), h);
    let mut gates = Tensor::zeros(gx.rows(), 4 * h);
    let mut a = vec![T::zero(); 3 * h];
    let mut hprev = vec![T::zero(); h];
    for range in ranges {
        hprev.iter_mut().for_each(|x| *x = T::zero());
        for t in order(range, reverse) {
            a.copy_from_slice(bh.data());
            for (i, &hp) in hprev.iter().enumerate() {
                if hp != T::zero() {
                    for (aj, &w) in a.iter_mut().zip(wh.row(i)) {
                        *aj = *aj + hp * w;
                    }
                }
            }
            let g = gx.row(t);
            let cache = gates.row_mut(t);
            let orow = out.row_mut(t);
            for j in 0..h {
                let r = sigmoid(g[j] + a[j]);
                let z = sigmoid(g[h + j] + a[h + j]);
                let n = (g[2 * h + j] + r * a[2 * h + j]).tanh();
                let hn = (T::one() - z) * n + z * hprev[j];
                cache[j] = r;
                cache[h + j] = z;
                cache[2 * h + j] = n;
                cache[3 * h + j] = a[2 * h + j];
                orow[j] = hn;
            }
            hprev.copy_from_slice(orow);
        }
    }
    (out, GruCache { gates })
}

/// Gradients `(dgx, dwh, dbh)`.
pub fn backward<T: Scalar>(
    dout: &Tensor<T>,
    out: &Tensor<T>,
    cache: &GruCache<T>,
    wh: &Tensor<T>,
    ranges: &[Range<usize>],
    reverse: bool,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let h = wh.rows();
    let mut dgx = Tensor::zeros(out.rows(), 3 * h);
    let mut dwh = Tensor::zeros(h, 3 * h);
    let mut dbh = Tensor::zeros(1, 3 * h);
    let mut carry = vec![T::zero(); h];
    let mut da = vec![T::zero(); 3 * h];
    let mut dn_pre = vec![T::zero(); h];
    let zeros = vec![T::zero(); h];
    for range in ranges {
        carry.iter_mut().for_each(|x| *x = T::zero());
        let steps: Vec<usize> = order(range, reverse).collect();
        for (pos, &t) in steps.iter().enumerate().rev() {
            let hprev: &[T] = if pos == 0 { &zeros } else { out.row(steps[pos - 1]) };
            let c = cache.gates.row(t);
            let go = dout.row(t);
            for j in 0..h {
                let (r, z, n, an) = (c[j], c[h + j], c[2 * h + j], c[3 * h + j]);
                let dh = go[j] + carry[j];
                let dn = dh * (T::one() - z);
                let dz = dh * (hprev[j] - n);
                dn_pre[j] = dn * (T::one() - n * n);
                da[j] = dn_pre[j] * an * r * (T::one() - r);
                da[h + j] = dz * z * (T::one() - z);
                da[2 * h + j] = dn_pre[j] * r;
                carry[j] = dh * z;
            }
            let g = dgx.row_mut(t);
            g[..2 * h].copy_from_slice(&da[..2 * h]);
            g[2 * h..].copy_from_slice(&dn_pre);
            for (b, &d) in dbh.data_mut().iter_mut().zip(&da) {
                *b = *b + d;
            }
            for (i, &hp) in hprev.iter().enumerate() {
                if hp != T::zero() {
                    for (w, &d) in dwh.row_mut(i).iter_mut().zip(&da) {
                        *w = *w + hp * d;
                    }
                }
            }
            for (i, cj) in carry.iter_mut().enumerate() {
                let dot: T = wh.row(i).iter().zip(&da).map(|(&w, &d)| w * d).sum();
                *cj = *cj + dot;
            }
        }
    }
    (dgx, dwh, dbh)
}
