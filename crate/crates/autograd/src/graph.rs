//! The operation tape.
//!
//! A [`Graph`] records every operation as a node holding its output value
//! and whatever the backward pass needs. [`Graph::backward`] walks the tape
//! in reverse and returns a [`Gradients`] table.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::kernels::attention::{self, AttnGroup};
use crate::kernels::gru::{self, GruCache};
use crate::kernels::{gat, norm};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    Elu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    /// tanh approximation
    Gelu,
}

enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Unary(Var, Activation),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor<T>,
        rstd: Vec<T>,
    },
    Gather(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SegmentMean(Var, Vec<Range<usize>>),
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
    L2Normalize {
        x: Var,
        norms: Vec<T>,
        floor: T,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        groups: Vec<AttnGroup>,
        probs: Vec<T>,
    },
    Gat {
        proj: Var,
        scores: Var,
        neighbors: Arc<Vec<Vec<usize>>>,
        alphas: Vec<T>,
        slope: T,
    },
    Gru {
        gx: Var,
        wh: Var,
        bh: Var,
        ranges: Vec<Range<usize>>,
        reverse: bool,
        cache: GruCache<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Reverse-mode tape over [`Tensor`] values.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Input that takes no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is tracked (used by gradient checks).
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    /// Frozen parameters enter the tape without gradient tracking.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Param, p.trainable);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = Tensor::zeros(av.rows(), bv.rows());
        T::gemm(
            av.rows(),
            av.cols(),
            bv.rows(),
            T::one(),
            av.data(),
            av.cols() as isize,
            1,
            bv.data(),
            1,
            bv.cols() as isize,
            T::zero(),
            out.data_mut(),
            bv.rows() as isize,
            1,
        );
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::MatMulNT(a, b), ng))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: xv.shape(),
                rhs: rv.shape(),
            });
        }
        let mut out = xv.clone();
        let cols = out.cols();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o = *o + b;
            }
        }
        debug_assert_eq!(cols, rv.cols());
        let ng = self.ng(&[x, row]);
        Ok(self.push(out, Op::AddRow(x, row), ng))
    }

    /// `x W + b`
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(op, av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let s = T::from_f64_lossy(s);
        let out = self.value(x).map(|v| v * s);
        let ng = self.ng(&[x]);
        self.push(out, Op::Scale(x, s), ng)
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let out = self.value(x).map(|v| activate(act, v));
        let ng = self.ng(&[x]);
        self.push(out, Op::Unary(x, act), ng)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let cols = out.cols();
        if cols > 0 {
            for row in out.data_mut().chunks_mut(cols) {
                attention::softmax_in_place(row);
            }
        }
        let ng = self.ng(&[x]);
        self.push(out, Op::Softmax(x), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        if gv.shape() != (1, xv.cols()) || bv.shape() != (1, xv.cols()) {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: xv.shape(),
                rhs: gv.shape(),
            });
        }
        let (y, xhat, rstd) = norm::forward(xv, gv, bv);
        let ng = self.ng(&[x, gain, bias]);
        Ok(self.push(
            y,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    /// Row gather; also serves as embedding lookup.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let mut out = Tensor::zeros(idx.len(), xv.cols());
        for (o, &i) in idx.iter().enumerate() {
            if i >= xv.rows() {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    len: xv.rows(),
                });
            }
            out.row_mut(o).copy_from_slice(xv.row(i));
        }
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::Gather(x, idx.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&p| self.value(p).cols())
            .ok_or_else(|| TensorError::invalid("concat_rows", "no inputs"))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: (rows, cols),
                    rhs: v.shape(),
                });
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let ng = self.ng(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| TensorError::invalid("concat_cols", "no inputs"))?;
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: (rows, cols),
                    rhs: v.shape(),
                });
            }
            cols += v.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut c0 = 0;
        for &p in parts {
            let v = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[c0..c0 + v.cols()].copy_from_slice(v.row(r));
            }
            c0 += v.cols();
        }
        let ng = self.ng(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + width > xv.cols() {
            return Err(TensorError::invalid(
                "slice_cols",
                format!("columns {start}..{} of {:?}", start + width, xv.shape()),
            ));
        }
        let mut out = Tensor::zeros(xv.rows(), width);
        for r in 0..xv.rows() {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + width]);
        }
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::SliceCols(x, start), ng))
    }

    /// Mean of each row range; one output row per range.
    pub fn segment_mean(&mut self, x: Var, ranges: &[Range<usize>]) -> Result<Var> {
        let xv = self.value(x);
        let mut out = Tensor::zeros(ranges.len(), xv.cols());
        for (o, r) in ranges.iter().enumerate() {
            if r.is_empty() || r.end > xv.rows() {
                return Err(TensorError::invalid(
                    "segment_mean",
                    format!("range {r:?} over {} rows", xv.rows()),
                ));
            }
            let inv = T::one() / T::from_usize(r.len()).unwrap();
            let orow = out.row_mut(o);
            for i in r.clone() {
                for (a, &b) in orow.iter_mut().zip(xv.row(i)) {
                    *a = *a + b;
                }
            }
            orow.iter_mut().for_each(|a| *a = *a * inv);
        }
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::SegmentMean(x, ranges.to_vec()), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let ng = self.ng(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = v.len().max(1);
        let s: T = v.data().iter().copied().sum::<T>() / T::from_usize(n).unwrap();
        let ng = self.ng(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    /// Mean softmax negative log-likelihood of `targets` under row logits.
    /// Zero rows give a loss of 0.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: lv.shape(),
                rhs: (targets.len(), 1),
            });
        }
        let mut probs = lv.clone();
        let cols = probs.cols();
        let mut loss = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: t,
                    len: cols,
                });
            }
            let row = probs.row_mut(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
            loss = loss + lse - row[t];
            attention::softmax_in_place(row);
        }
        if !targets.is_empty() {
            loss = loss / T::from_usize(targets.len()).unwrap();
        }
        let ng = self.ng(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// `x / (‖x‖ + floor)` per row.
    pub fn l2_normalize(&mut self, x: Var, floor: f64) -> Var {
        let floor = T::from_f64_lossy(floor);
        let mut out = self.value(x).clone();
        let mut norms = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            norms.push(n);
            row.iter_mut().for_each(|v| *v = *v / (n + floor));
        }
        let ng = self.ng(&[x]);
        self.push(out, Op::L2Normalize { x, norms, floor }, ng)
    }

    /// Multi-head scaled dot-product attention over packed groups.
    /// `q`, `k`, `v` are already projected.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        groups: &[AttnGroup],
    ) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if kv.shape() != vv.shape() || qv.cols() != kv.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                lhs: qv.shape(),
                rhs: kv.shape(),
            });
        }
        if heads == 0 || qv.cols() % heads != 0 {
            return Err(TensorError::invalid(
                "attention",
                format!("model width {} not divisible by {heads} heads", qv.cols()),
            ));
        }
        for g in groups {
            if g.k_len == 0 {
                return Err(TensorError::invalid("attention", "empty key/value sequence"));
            }
            if g.q_start + g.q_len > qv.rows() || g.k_start + g.k_len > kv.rows() {
                return Err(TensorError::invalid("attention", format!("group {g:?} out of range")));
            }
        }
        let (out, probs) = attention::forward(qv, kv, vv, heads, groups);
        let ng = self.ng(&[q, k, v]);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                groups: groups.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Attention probabilities of the most recent call for an attention node,
    /// group-major then head-major.
    pub fn attention_probs(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// GAT neighbor aggregation; see [`crate::kernels::gat`].
    pub fn gat_aggregate(
        &mut self,
        proj: Var,
        scores: Var,
        neighbors: Arc<Vec<Vec<usize>>>,
        slope: f64,
    ) -> Result<Var> {
        let (pv, sv) = (self.value(proj), self.value(scores));
        if sv.shape() != (pv.rows(), 2) || neighbors.len() != pv.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "gat_aggregate",
                lhs: pv.shape(),
                rhs: sv.shape(),
            });
        }
        for (v, n) in neighbors.iter().enumerate() {
            if n.is_empty() {
                return Err(TensorError::invalid(
                    "gat_aggregate",
                    format!("node {v} has no neighbors and no self-loop"),
                ));
            }
            if let Some(&u) = n.iter().find(|&&u| u >= pv.rows()) {
                return Err(TensorError::IndexOutOfRange {
                    op: "gat_aggregate",
                    index: u,
                    len: pv.rows(),
                });
            }
        }
        let slope = T::from_f64_lossy(slope);
        let (out, alphas) = gat::forward(pv, sv, &neighbors, slope);
        let ng = self.ng(&[proj, scores]);
        Ok(self.push(
            out,
            Op::Gat {
                proj,
                scores,
                neighbors,
                alphas,
                slope,
            },
            ng,
        ))
    }

    pub fn gat_alphas(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Gat { alphas, .. } => Some(alphas),
            _ => None,
        }
    }

    /// GRU recurrence over packed sequences; `gx` is the input projection.
    pub fn gru(
        &mut self,
        gx: Var,
        wh: Var,
        bh: Var,
        ranges: &[Range<usize>],
        reverse: bool,
    ) -> Result<Var> {
        let (gv, wv, bv) = (self.value(gx), self.value(wh), self.value(bh));
        let h = wv.rows();
        if wv.cols() != 3 * h || gv.cols() != 3 * h || bv.shape() != (1, 3 * h) {
            return Err(TensorError::ShapeMismatch {
                op: "gru",
                lhs: gv.shape(),
                rhs: wv.shape(),
            });
        }
        for r in ranges {
            if r.is_empty() || r.end > gv.rows() {
                return Err(TensorError::invalid("gru", format!("bad sequence range {r:?}")));
            }
        }
        let (out, cache) = gru::forward(gv, wv, bv, ranges, reverse);
        let ng = self.ng(&[gx, wh, bh]);
        Ok(self.push(
            out,
            Op::Gru {
                gx,
                wh,
                bh,
                ranges: ranges.to_vec(),
                reverse,
                cache,
            },
            ng,
        ))
    }

    /// Reverse pass from `root`, seeded with ones.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        let n = root.0 + 1;
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        let rv = self.value(root);
        grads[root.0] = Some(Tensor::full(rv.rows(), rv.cols(), T::one()));
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            let keep = matches!(node.op, Op::Leaf | Op::Param);
            let Some(g) = (if keep { grads[i].clone() } else { grads[i].take() }) else {
                continue;
            };
            self.backprop(&node.op, &node.value, g, &mut grads);
        }
        Gradients {
            grads,
            params: self.params.clone(),
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop(&self, op: &Op<T>, out: &Tensor<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].needs_grad {
                    // dA = G Bᵀ
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    T::gemm(
                        g.rows(),
                        g.cols(),
                        bv.rows(),
                        T::one(),
                        g.data(),
                        g.cols() as isize,
                        1,
                        bv.data(),
                        1,
                        bv.cols() as isize,
                        T::zero(),
                        da.data_mut(),
                        av.cols() as isize,
                        1,
                    );
                    self.accumulate(grads, *a, da);
                }
                if self.nodes[b.0].needs_grad {
                    // dB = Aᵀ G
                    let mut db = Tensor::zeros(bv.rows(), bv.cols());
                    T::gemm(
                        av.cols(),
                        av.rows(),
                        g.cols(),
                        T::one(),
                        av.data(),
                        1,
                        av.cols() as isize,
                        g.data(),
                        g.cols() as isize,
                        1,
                        T::zero(),
                        db.data_mut(),
                        bv.cols() as isize,
                        1,
                    );
                    self.accumulate(grads, *b, db);
                }
            }
            Op::MatMulNT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].needs_grad {
                    // C = A Bᵀ  =>  dA = G B
                    let da = g.matmul(bv).expect("shapes checked in forward");
                    self.accumulate(grads, *a, da);
                }
                if self.nodes[b.0].needs_grad {
                    // dB = Gᵀ A
                    let mut db = Tensor::zeros(bv.rows(), bv.cols());
                    T::gemm(
                        g.cols(),
                        g.rows(),
                        av.cols(),
                        T::one(),
                        g.data(),
                        1,
                        g.cols() as isize,
                        av.data(),
                        av.cols() as isize,
                        1,
                        T::zero(),
                        db.data_mut(),
                        bv.cols() as isize,
                        1,
                    );
                    self.accumulate(grads, *b, db);
                }
            }
            Op::AddRow(x, row) => {
                if self.nodes[row.0].needs_grad {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d = *d + v;
                        }
                    }
                    self.accumulate(grads, *row, db);
                }
                self.accumulate(grads, *x, g);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *b, g.clone());
                self.accumulate(grads, *a, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *b, g.map(|v| -v));
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].needs_grad {
                    let data = g.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::from_vec(g.rows(), g.cols(), data).unwrap());
                }
                if self.nodes[b.0].needs_grad {
                    let data = g.data().iter().zip(av.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::from_vec(g.rows(), g.cols(), data).unwrap());
                }
            }
            Op::Scale(x, s) => {
                let s = *s;
                self.accumulate(grads, *x, g.map(|v| v * s));
            }
            Op::Unary(x, act) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .zip(out.data())
                    .map(|((&gv, &xi), &yi)| gv * activation_grad(*act, xi, yi))
                    .collect();
                self.accumulate(grads, *x, Tensor::from_vec(g.rows(), g.cols(), data).unwrap());
            }
            Op::Softmax(x) => {
                let mut dx = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let (p, gr) = (out.row(r), g.row(r));
                    let dot: T = p.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for ((d, &pv), &gv) in dx.row_mut(r).iter_mut().zip(p).zip(gr) {
                        *d = pv * (gv - dot);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (dx, dg, db) = norm::backward(&g, xhat, rstd, self.value(*gain));
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gain, dg);
                self.accumulate(grads, *bias, db);
            }
            Op::Gather(x, idx) => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for (o, &i) in idx.iter().enumerate() {
                    for (d, &v) in dx.row_mut(i).iter_mut().zip(g.row(o)) {
                        *d = *d + v;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::ConcatRows(parts) => {
                let mut r0 = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    if self.nodes[p.0].needs_grad {
                        let cols = g.cols();
                        let data = g.data()[r0 * cols..(r0 + rows) * cols].to_vec();
                        self.accumulate(grads, p, Tensor::from_vec(rows, cols, data).unwrap());
                    }
                    r0 += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    if self.nodes[p.0].needs_grad {
                        let mut d = Tensor::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        self.accumulate(grads, p, d);
                    }
                    c0 += cols;
                }
            }
            Op::SliceCols(x, start) => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::SegmentMean(x, ranges) => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for (o, r) in ranges.iter().enumerate() {
                    let inv = T::one() / T::from_usize(r.len()).unwrap();
                    for i in r.clone() {
                        for (d, &v) in dx.row_mut(i).iter_mut().zip(g.row(o)) {
                            *d = *d + v * inv;
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Sum(x) => {
                let (r, c) = self.shape(*x);
                self.accumulate(grads, *x, Tensor::full(r, c, g.item()));
            }
            Op::Mean(x) => {
                let (r, c) = self.shape(*x);
                let n = T::from_usize((r * c).max(1)).unwrap();
                self.accumulate(grads, *x, Tensor::full(r, c, g.item() / n));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let mut d = probs.clone();
                if !targets.is_empty() {
                    let scale = g.item() / T::from_usize(targets.len()).unwrap();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = d.row_mut(r);
                        row[t] = row[t] - T::one();
                        row.iter_mut().for_each(|v| *v = *v * scale);
                    }
                }
                self.accumulate(grads, *logits, d);
            }
            Op::L2Normalize { x, norms, floor } => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let n = norms[r];
                    let s = n + *floor;
                    let (xr, gr) = (xv.row(r), g.row(r));
                    let dot: T = xr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    let coef = if n > T::zero() { dot / (s * s * n) } else { T::zero() };
                    for ((d, &xi), &gi) in dx.row_mut(r).iter_mut().zip(xr).zip(gr) {
                        *d = gi / s - xi * coef;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                groups,
                probs,
            } => {
                let (dq, dk, dv) = attention::backward(
                    &g,
                    self.value(*q),
                    self.value(*k),
                    self.value(*v),
                    *heads,
                    groups,
                    probs,
                );
                self.accumulate(grads, *q, dq);
                self.accumulate(grads, *k, dk);
                self.accumulate(grads, *v, dv);
            }
            Op::Gat {
                proj,
                scores,
                neighbors,
                alphas,
                slope,
            } => {
                let (dp, ds) = gat::backward(
                    &g,
                    self.value(*proj),
                    self.value(*scores),
                    neighbors,
                    alphas,
                    *slope,
                );
                self.accumulate(grads, *proj, dp);
                self.accumulate(grads, *scores, ds);
            }
            Op::Gru {
                gx,
                wh,
                bh,
                ranges,
                reverse,
                cache,
            } => {
                let (dgx, dwh, dbh) = gru::backward(&g, out, cache, self.value(*wh), ranges, *reverse);
                self.accumulate(grads, *gx, dgx);
                self.accumulate(grads, *wh, dwh);
                self.accumulate(grads, *bh, dbh);
            }
        }
    }
}

pub(crate) fn activate<T: Scalar>(act: Activation, x: T) -> T {
    match act {
        Activation::Relu => x.max(T::zero()),
        Activation::Elu => {
            if x > T::zero() {
                x
            } else {
                x.exp_m1()
            }
        }
        Activation::LeakyRelu(s) => {
            if x > T::zero() {
                x
            } else {
                x * T::from_f64_lossy(s)
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        Activation::Gelu => {
            let (u, _) = gelu_inner(x);
            T::from_f64_lossy(0.5) * x * (T::one() + u.tanh())
        }
    }
}

fn gelu_inner<T: Scalar>(x: T) -> (T, T) {
    let c = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    let k = T::from_f64_lossy(0.044715);
    let u = c * (x + k * x * x * x);
    let du = c * (T::one() + T::from_f64_lossy(3.0) * k * x * x);
    (u, du)
}

fn activation_grad<T: Scalar>(act: Activation, x: T, y: T) -> T {
    match act {
        Activation::Relu => {
            if x > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::Elu => {
            if x > T::zero() {
                T::one()
            } else {
                y + T::one()
            }
        }
        Activation::LeakyRelu(s) => {
            if x > T::zero() {
                T::one()
            } else {
                T::from_f64_lossy(s)
            }
        }
        Activation::Tanh => T::one() - y * y,
        Activation::Sigmoid => y * (T::one() - y),
        Activation::Gelu => {
            let (u, du) = gelu_inner(x);
            let t = u.tanh();
            let half = T::from_f64_lossy(0.5);
            half * (T::one() + t) + half * x * (T::one() - t * t) * du
        }
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf or parameter node, if any flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id).and_then(|v| self.wrt(*v))
    }

    /// Dense per-parameter table indexed by [`ParamId`].
    pub fn into_param_grads(mut self, n_params: usize) -> Vec<Option<Tensor<T>>> {
        let mut out: Vec<Option<Tensor<T>>> = (0..n_params).map(|_| None).collect();
        for (id, v) in &self.params {
            if id.0 < n_params {
                out[id.0] = self.grads.get_mut(v.0).and_then(Option::take);
            }
        }
        out
    }
}
