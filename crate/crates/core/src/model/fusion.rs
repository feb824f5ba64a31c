//! Inter-modal attention streams and the shared global-context transformer.

use std::ops::Range;

use rand::Rng;
use trajfuse_autograd::layers::{MultiHeadAttention, TransformerStack};
use trajfuse_autograd::{AttnGroup, Graph, Init, ParamId, ParamStore, Result, Scalar, Tensor, TensorError, Var};

use super::encoders::{position_rows, EncodedView};
use super::Modality;

/// `[h_T; h_S]` per sample, packed.
#[derive(Debug, Clone)]
pub struct ModalitySequence {
    pub x: Var,
    /// Row range of each sample; the first row is the trajectory token.
    pub seqs: Vec<Range<usize>>,
}

impl ModalitySequence {
    pub fn from_view<T: Scalar>(g: &mut Graph<T>, view: &EncodedView) -> Result<Self> {
        let b = view.seqs.len();
        let both = g.concat_rows(&[view.h_t, view.h_s])?;
        let mut idx = Vec::with_capacity(b + view.seqs.last().map_or(0, |r| r.end));
        let mut seqs = Vec::with_capacity(b);
        for (s, r) in view.seqs.iter().enumerate() {
            let start = idx.len();
            idx.push(s);
            idx.extend(r.clone().map(|k| b + k));
            seqs.push(start..idx.len());
        }
        let x = g.gather_rows(both, &idx)?;
        Ok(ModalitySequence { x, seqs })
    }
}

/// One attention stream per ordered pair of distinct modalities.
#[derive(Debug, Clone)]
pub struct InterModal {
    pub modalities: Vec<Modality>,
    /// `streams[a][b]`, `None` on the diagonal.
    pub streams: Vec<Vec<Option<MultiHeadAttention>>>,
}

impl InterModal {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        modalities: &[Modality],
        d: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut streams = Vec::new();
        for &a in modalities {
            let mut row = Vec::new();
            for &b in modalities {
                row.push(if a == b {
                    None
                } else {
                    let name = format!("fusion.inter.{}_{}", a.tag(), b.tag());
                    Some(MultiHeadAttention::new(store, &name, d, heads, rng)?)
                });
            }
            streams.push(row);
        }
        Ok(InterModal {
            modalities: modalities.to_vec(),
            streams,
        })
    }

    pub fn num_streams(&self) -> usize {
        self.streams.iter().flatten().filter(|s| s.is_some()).count()
    }

    /// `O_a = Σ_{b≠a} MHA_ab(X_a, X_b)`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, seqs: &[ModalitySequence]) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(seqs.len());
        for (a, xa) in seqs.iter().enumerate() {
            let mut acc: Option<Var> = None;
            for (b, xb) in seqs.iter().enumerate() {
                let Some(mha) = &self.streams[a][b] else { continue };
                let groups: Vec<AttnGroup> = xa
                    .seqs
                    .iter()
                    .zip(&xb.seqs)
                    .map(|(qa, kb)| AttnGroup {
                        q_start: qa.start,
                        q_len: qa.len(),
                        k_start: kb.start,
                        k_len: kb.len(),
                    })
                    .collect();
                let o = mha.forward(g, store, xa.x, xb.x, &groups)?;
                acc = Some(match acc {
                    None => o,
                    Some(prev) => g.add(prev, o)?,
                });
            }
            out.push(acc.ok_or_else(|| TensorError::invalid("inter_modal", "needs at least two modalities"))?);
        }
        Ok(out)
    }
}

/// Shared transformer over each sample's concatenated modality sequences.
#[derive(Debug, Clone)]
pub struct GlobalContext {
    pub type_emb: ParamId,
    pub transformer: TransformerStack,
}

impl GlobalContext {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        n_modalities: usize,
        d: usize,
        heads: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(GlobalContext {
            type_emb: store.init("fusion.type_emb", n_modalities, d, Init::Normal(0.02), rng)?,
            transformer: TransformerStack::new(store, "fusion.global", d, heads, depth, rng)?,
        })
    }

    /// Type- and position-augmented concatenation, sample-major, with the
    /// row each input row moved to.
    pub fn augmented_input<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        streams: &[Var],
        seqs: &[Vec<Range<usize>>],
        positions: &Tensor<f64>,
    ) -> Result<(Var, Vec<Range<usize>>, Vec<Vec<usize>>)> {
        let all = g.concat_rows(streams)?;
        let mut offsets = Vec::with_capacity(streams.len());
        let mut off = 0;
        for &s in streams {
            offsets.push(off);
            off += g.shape(s).0;
        }
        let n_samples = seqs[0].len();
        let mut order = Vec::with_capacity(off);
        let mut types = Vec::with_capacity(off);
        let mut pos = Vec::with_capacity(off);
        let mut sample_ranges = Vec::with_capacity(n_samples);
        let mut dest: Vec<Vec<usize>> = seqs.iter().map(|s| vec![0; s.last().map_or(0, |r| r.end)]).collect();
        for s in 0..n_samples {
            let start = order.len();
            for (m, mseqs) in seqs.iter().enumerate() {
                for (p, row) in mseqs[s].clone().enumerate() {
                    dest[m][row] = order.len();
                    order.push(offsets[m] + row);
                    types.push(m);
                    pos.push(p);
                }
            }
            sample_ranges.push(start..order.len());
        }
        let x = g.gather_rows(all, &order)?;
        let table = g.param(store, self.type_emb);
        let t = g.gather_rows(table, &types)?;
        let x = g.add(x, t)?;
        let p = g.constant(position_rows(positions, &pos));
        Ok((g.add(x, p)?, sample_ranges, dest))
    }

    /// Returns `E_a` for every input stream, row-aligned with the input.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        streams: &[Var],
        seqs: &[Vec<Range<usize>>],
        positions: &Tensor<f64>,
    ) -> Result<Vec<Var>> {
        let (x, sample_ranges, dest) = self.augmented_input(g, store, streams, seqs, positions)?;
        let y = self.transformer.forward(g, store, x, &sample_ranges)?;
        dest.iter().map(|rows| g.gather_rows(y, rows)).collect()
    }
}
