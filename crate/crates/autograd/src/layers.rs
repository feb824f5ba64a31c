//! Parameterized layers. Each layer registers its parameters in a
//! [`ParamStore`] under a name prefix and holds only the resulting ids.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::error::Result;
use crate::graph::{Activation, Graph, Var};
use crate::kernels::attention::AttnGroup;
use crate::params::{Init, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.init(format!("{name}.w"), d_in, d_out, Init::Glorot, rng)?;
        let b = if bias {
            Some(store.init(format!("{name}.b"), 1, d_out, Init::Zeros, rng)?)
        } else {
            None
        };
        Ok(Linear { w, b, d_in, d_out })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = self.b.map(|b| g.param(store, b));
        g.linear(x, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, d: usize, rng: &mut R) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.init(format!("{name}.gain"), 1, d, Init::Ones, rng)?,
            bias: store.init(format!("{name}.bias"), 1, d, Init::Zeros, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Multi-head attention with separate query/key/value/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(crate::TensorError::invalid(
                "multi_head_attention",
                format!("model width {d} not divisible by {heads} heads"),
            ));
        }
        Ok(MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), d, d, true, rng)?,
            // no key bias: it shifts every logit of a query row equally
            k: Linear::new(store, &format!("{name}.k"), d, d, false, rng)?,
            v: Linear::new(store, &format!("{name}.v"), d, d, true, rng)?,
            out: Linear::new(store, &format!("{name}.o"), d, d, true, rng)?,
            heads,
        })
    }

    /// `queries` and `keys_values` are packed row sets; `groups` index into them.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        queries: Var,
        keys_values: Var,
        groups: &[AttnGroup],
    ) -> Result<Var> {
        let q = self.q.forward(g, store, queries)?;
        let k = self.k.forward(g, store, keys_values)?;
        let v = self.v.forward(g, store, keys_values)?;
        let a = g.attention(q, k, v, self.heads, groups)?;
        self.out.forward(g, store, a)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        [&self.q, &self.k, &self.v, &self.out]
            .iter()
            .flat_map(|l| std::iter::once(l.w).chain(l.b))
            .collect()
    }
}

/// Pre-norm transformer block: `x + MHA(LN(x))`, then `x + FFN(LN(x))`.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl TransformerBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        ff_mult: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(TransformerBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d, rng)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), d, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d, rng)?,
            ff1: Linear::new(store, &format!("{name}.ff1"), d, d * ff_mult, true, rng)?,
            ff2: Linear::new(store, &format!("{name}.ff2"), d * ff_mult, d, true, rng)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        groups: &[AttnGroup],
    ) -> Result<Var> {
        let h = self.ln1.forward(g, store, x)?;
        let a = self.attn.forward(g, store, h, h, groups)?;
        let x = g.add(x, a)?;
        let h = self.ln2.forward(g, store, x)?;
        let h = self.ff1.forward(g, store, h)?;
        let h = g.activation(h, Activation::Gelu);
        let h = self.ff2.forward(g, store, h)?;
        g.add(x, h)
    }
}

#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub blocks: Vec<TransformerBlock>,
}

impl TransformerStack {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let blocks = (0..depth)
            .map(|i| TransformerBlock::new(store, &format!("{name}.{i}"), d, heads, 4, rng))
            .collect::<Result<_>>()?;
        Ok(TransformerStack { blocks })
    }

    /// Self-attention within each row range of the packed input.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        mut x: Var,
        seqs: &[Range<usize>],
    ) -> Result<Var> {
        let groups: Vec<AttnGroup> = seqs
            .iter()
            .map(|r| AttnGroup::self_attention(r.start, r.len()))
            .collect();
        for b in &self.blocks {
            x = b.forward(g, store, x, &groups)?;
        }
        Ok(x)
    }
}

/// Single-direction GRU layer (`W_ih`, `b_ih`, `W_hh`, `b_hh`).
#[derive(Debug, Clone)]
pub struct Gru {
    pub input: Linear,
    pub w_hh: ParamId,
    pub b_hh: ParamId,
    pub hidden: usize,
}

impl Gru {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Gru {
            input: Linear::new(store, &format!("{name}.ih"), d_in, 3 * hidden, true, rng)?,
            w_hh: store.init(format!("{name}.hh.w"), hidden, 3 * hidden, Init::Glorot, rng)?,
            b_hh: store.init(format!("{name}.hh.b"), 1, 3 * hidden, Init::Zeros, rng)?,
            hidden,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        seqs: &[Range<usize>],
        reverse: bool,
    ) -> Result<Var> {
        let gx = self.input.forward(g, store, x)?;
        let wh = g.param(store, self.w_hh);
        let bh = g.param(store, self.b_hh);
        g.gru(gx, wh, bh, seqs, reverse)
    }
}

/// Bidirectional GRU; per-step output is `[forward | backward]`.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

impl BiGru {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiGru {
            fwd: Gru::new(store, &format!("{name}.fwd"), d_in, hidden, rng)?,
            bwd: Gru::new(store, &format!("{name}.bwd"), d_in, hidden, rng)?,
        })
    }

    /// Per-step states (N x 2h) and per-sequence mean summaries.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        seqs: &[Range<usize>],
    ) -> Result<(Var, Var)> {
        let f = self.fwd.forward(g, store, x, seqs, false)?;
        let b = self.bwd.forward(g, store, x, seqs, true)?;
        let states = g.concat_cols(&[f, b])?;
        let summary = g.segment_mean(states, seqs)?;
        Ok((states, summary))
    }
}

/// Single-layer graph attention with ELU output.
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub w: ParamId,
    /// `d_out x 2`: column 0 scores the target node, column 1 the neighbor.
    pub attn: ParamId,
    pub slope: f64,
}

impl GatLayer {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(GatLayer {
            w: store.init(format!("{name}.w"), d_in, d_out, Init::Glorot, rng)?,
            attn: store.init(format!("{name}.attn"), d_out, 2, Init::Glorot, rng)?,
            slope: 0.2,
        })
    }

    /// `neighbors[v]` must already include `v` itself when self-loops are on.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        feats: Var,
        neighbors: Arc<Vec<Vec<usize>>>,
    ) -> Result<Var> {
        let w = g.param(store, self.w);
        let a = g.param(store, self.attn);
        let proj = g.matmul(feats, w)?;
        let scores = g.matmul(proj, a)?;
        let agg = g.gat_aggregate(proj, scores, neighbors, self.slope)?;
        Ok(g.activation(agg, Activation::Elu))
    }
}

/// Sinusoidal position table, `len x d`.
pub fn sinusoidal_positions<T: Scalar>(len: usize, d: usize) -> crate::Tensor<T> {
    let mut t = crate::Tensor::zeros(len, d);
    for pos in 0..len {
        for i in 0..d {
            let k = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * k / d as f64);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            t.set(pos, i, T::from_f64_lossy(v));
        }
    }
    t
}
