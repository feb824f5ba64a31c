//! The three view encoders. Each produces a token sequence `h_S` and its
//! mean `h_T` per sample.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use trajfuse_autograd::layers::{BiGru, GatLayer, Linear, TransformerStack};
use trajfuse_autograd::{Graph, Init, ParamId, ParamStore, Result, Scalar, Tensor, Var};

use super::batch::{RunStream, TokenStream};
use super::features::{TimeFeat, DAYS_PER_WEEK, MINUTES_PER_DAY, POINT_FEATURES};
use crate::synth::POI_CATEGORIES;

const EMBED_STD: f64 = 0.02;

/// Encoder output for one view over a batch.
#[derive(Debug, Clone)]
pub struct EncodedView {
    /// `B x d`
    pub h_t: Var,
    /// Packed tokens, `N x d`.
    pub h_s: Var,
    pub seqs: Vec<Range<usize>>,
}

fn mean_pool<T: Scalar>(g: &mut Graph<T>, h_s: Var, seqs: &[Range<usize>]) -> Result<EncodedView> {
    let h_t = g.segment_mean(h_s, seqs)?;
    Ok(EncodedView { h_t, h_s, seqs: seqs.to_vec() })
}

/// Constant `N x d` tensor of sinusoidal rows chosen by `pos`.
pub(crate) fn position_rows<T: Scalar>(table: &Tensor<f64>, pos: &[usize]) -> Tensor<T> {
    let d = table.cols();
    let mut out = Tensor::zeros(pos.len(), d);
    for (i, &p) in pos.iter().enumerate() {
        let src = table.row(p.min(table.rows() - 1));
        for (o, &v) in out.row_mut(i).iter_mut().zip(src) {
            *o = T::from_f64_lossy(v);
        }
    }
    out
}

/// Replaces rows listed in `masked` by the single row `fill`.
pub(crate) fn substitute_rows<T: Scalar>(g: &mut Graph<T>, x: Var, masked: &[usize], fill: Var) -> Result<Var> {
    if masked.is_empty() {
        return Ok(x);
    }
    let n = g.shape(x).0;
    let table = g.concat_rows(&[x, fill])?;
    let mut idx: Vec<usize> = (0..n).collect();
    for &m in masked {
        idx[m] = n;
    }
    g.gather_rows(table, &idx)
}

/// minute-of-day + day-of-week + scaled travel time, or the unknown-time vector.
#[derive(Debug, Clone)]
pub struct TemporalEmbedding {
    pub minute: ParamId,
    pub dow: ParamId,
    pub travel: ParamId,
    pub unknown: ParamId,
}

impl TemporalEmbedding {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, d: usize, rng: &mut R) -> Result<Self> {
        Ok(TemporalEmbedding {
            minute: store.init(format!("{name}.minute"), MINUTES_PER_DAY, d, Init::Normal(EMBED_STD), rng)?,
            dow: store.init(format!("{name}.dow"), DAYS_PER_WEEK, d, Init::Normal(EMBED_STD), rng)?,
            travel: store.init(format!("{name}.travel"), 1, d, Init::Glorot, rng)?,
            unknown: store.init(format!("{name}.unknown"), 1, d, Init::Normal(EMBED_STD), rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, feats: &[TimeFeat]) -> Result<Var> {
        let minute_idx: Vec<usize> = feats.iter().map(|f| f.minute).collect();
        let dow_idx: Vec<usize> = feats.iter().map(|f| f.dow).collect();
        let minute = g.param(store, self.minute);
        let dow = g.param(store, self.dow);
        let a = g.gather_rows(minute, &minute_idx)?;
        let b = g.gather_rows(dow, &dow_idx)?;
        let tt = Tensor::from_vec(feats.len(), 1, feats.iter().map(|f| T::from_f64_lossy(f.travel)).collect())?;
        let tt = g.constant(tt);
        let w = g.param(store, self.travel);
        let c = g.matmul(tt, w)?;
        let ab = g.add(a, b)?;
        let known = g.add(ab, c)?;
        let unknown: Vec<usize> = feats.iter().enumerate().filter(|(_, f)| f.unknown).map(|(i, _)| i).collect();
        let u = g.param(store, self.unknown);
        substitute_rows(g, known, &unknown, u)
    }
}

/// GAT over the segment graph, then token + time + position into a transformer.
#[derive(Debug, Clone)]
pub struct RouteEncoder {
    pub segment_emb: ParamId,
    pub mask: ParamId,
    pub unk: ParamId,
    pub gat: GatLayer,
    pub transformer: TransformerStack,
    /// Vocabulary-index neighbor lists including self-loops.
    pub neighbors: Arc<Vec<Vec<usize>>>,
}

impl RouteEncoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        d: usize,
        heads: usize,
        depth: usize,
        neighbors: Arc<Vec<Vec<usize>>>,
        rng: &mut R,
    ) -> Result<Self> {
        let v = neighbors.len();
        Ok(RouteEncoder {
            segment_emb: store.init("route.segment_emb", v, d, Init::Normal(EMBED_STD), rng)?,
            mask: store.init("route.mask", 1, d, Init::Normal(EMBED_STD), rng)?,
            unk: store.init("route.unk", 1, d, Init::Normal(EMBED_STD), rng)?,
            gat: GatLayer::new(store, "route.gat", d, d, rng)?,
            transformer: TransformerStack::new(store, "route.transformer", d, heads, depth, rng)?,
            neighbors,
        })
    }

    /// Graph-updated embeddings of every vocabulary segment (`V x d`).
    pub fn segment_table<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>) -> Result<Var> {
        let emb = g.param(store, self.segment_emb);
        self.gat.forward(g, store, emb, self.neighbors.clone())
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        stream: &TokenStream,
        time: Var,
        positions: &Tensor<f64>,
    ) -> Result<EncodedView> {
        let z = self.segment_table(g, store)?;
        let mask = g.param(store, self.mask);
        let unk = g.param(store, self.unk);
        let table = g.concat_rows(&[z, mask, unk])?;
        let x = g.gather_rows(table, &stream.tokens)?;
        let x = g.add(x, time)?;
        let pos = g.constant(position_rows(positions, &stream.pos));
        let x = g.add(x, pos)?;
        let h_s = self.transformer.forward(g, store, x, &stream.seqs)?;
        mean_pool(g, h_s, &stream.seqs)
    }
}

/// Two-level bidirectional GRU over GPS points grouped by unit.
#[derive(Debug, Clone)]
pub struct GpsEncoder {
    pub point_proj: Linear,
    pub level1: BiGru,
    pub level2: BiGru,
    pub out: Linear,
    pub mask: ParamId,
}

impl GpsEncoder {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, d: usize, rng: &mut R) -> Result<Self> {
        let h = d / 2;
        Ok(GpsEncoder {
            point_proj: Linear::new(store, "gps.point_proj", POINT_FEATURES, d, true, rng)?,
            level1: BiGru::new(store, "gps.level1", d, h, rng)?,
            level2: BiGru::new(store, "gps.level2", 2 * h, h, rng)?,
            out: Linear::new(store, "gps.out", 2 * h, d, true, rng)?,
            mask: store.init("gps.mask", 1, 2 * h, Init::Normal(EMBED_STD), rng)?,
        })
    }

    /// Projected point features, shared by both run partitions.
    pub fn embed_points<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, points: &[[f64; POINT_FEATURES]]) -> Result<Var> {
        let flat: Vec<T> = points.iter().flatten().map(|&v| T::from_f64_lossy(v)).collect();
        let p = g.constant(Tensor::from_vec(points.len(), POINT_FEATURES, flat)?);
        self.point_proj.forward(g, store, p)
    }

    /// `seqs` groups runs into samples (one run per aligned token).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        points: Var,
        runs: &RunStream,
        seqs: &[Range<usize>],
    ) -> Result<EncodedView> {
        let (_, summaries) = self.level1.forward(g, store, points, &runs.runs)?;
        let mask = g.param(store, self.mask);
        let summaries = substitute_rows(g, summaries, &runs.masked, mask)?;
        let (states, _) = self.level2.forward(g, store, summaries, seqs)?;
        let h_s = self.out.forward(g, store, states)?;
        mean_pool(g, h_s, seqs)
    }
}

/// Cell embedding + POI-weighted category embedding + time + position.
#[derive(Debug, Clone)]
pub struct GridEncoder {
    /// Cell vocabulary plus mask and unknown rows.
    pub cell_emb: ParamId,
    pub category_emb: ParamId,
    pub transformer: TransformerStack,
}

impl GridEncoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        n_cells: usize,
        d: usize,
        heads: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(GridEncoder {
            cell_emb: store.init("grid.cell_emb", n_cells + 2, d, Init::Normal(EMBED_STD), rng)?,
            category_emb: store.init("grid.category_emb", POI_CATEGORIES, d, Init::Normal(EMBED_STD), rng)?,
            transformer: TransformerStack::new(store, "grid.transformer", d, heads, depth, rng)?,
        })
    }

    /// Token inputs before the transformer.
    pub fn tokens<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        stream: &TokenStream,
        sem: &[[f64; POI_CATEGORIES]],
        time: Var,
    ) -> Result<Var> {
        let cells = g.param(store, self.cell_emb);
        let x = g.gather_rows(cells, &stream.tokens)?;
        let flat: Vec<T> = sem.iter().flatten().map(|&v| T::from_f64_lossy(v)).collect();
        let sem = g.constant(Tensor::from_vec(sem.len(), POI_CATEGORIES, flat)?);
        let cats = g.param(store, self.category_emb);
        let semantic = g.matmul(sem, cats)?;
        let x = g.add(x, semantic)?;
        g.add(x, time)
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        stream: &TokenStream,
        sem: &[[f64; POI_CATEGORIES]],
        time: Var,
        positions: &Tensor<f64>,
    ) -> Result<EncodedView> {
        let x = self.tokens(g, store, stream, sem, time)?;
        let pos = g.constant(position_rows(positions, &stream.pos));
        let x = g.add(x, pos)?;
        let h_s = self.transformer.forward(g, store, x, &stream.seqs)?;
        mean_pool(g, h_s, &stream.seqs)
    }
}
