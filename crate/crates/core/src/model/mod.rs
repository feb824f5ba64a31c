//! The multi-view model: three encoders, inter-modal attention, global
//! context and masked-token heads.

pub mod batch;
pub mod encoders;
pub mod features;
pub mod fusion;

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use trajfuse_autograd::layers::{sinusoidal_positions, Linear};
use trajfuse_autograd::{Graph, ParamStore, Result, Scalar, Tensor, Var};

use crate::objectives::{align_loss_var, mlm_loss_var, total_loss_var, LossConfig, ViewVectors};
use crate::synth::RoadNetwork;
use crate::util::rng_for;
pub use batch::Batch;
use encoders::{EncodedView, GpsEncoder, GridEncoder, RouteEncoder, TemporalEmbedding};
pub use features::{Featurizer, InputMode, SampleInputs, Vocab};
use fusion::{GlobalContext, InterModal, ModalitySequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Route,
    GpsRoute,
    Grid,
    GpsGrid,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Route, Modality::GpsRoute, Modality::Grid, Modality::GpsGrid];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Route => "r",
            Modality::GpsRoute => "pr",
            Modality::Grid => "g",
            Modality::GpsGrid => "pg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub heads: usize,
    /// Depth of the route and grid transformers.
    pub depth: usize,
    /// Depth of the global-context transformer.
    pub fusion_depth: usize,
    /// Longest sequence covered by the position table.
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            heads: 4,
            depth: 2,
            fusion_depth: 2,
            max_len: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    pub no_inter_modal: bool,
    pub no_grid_view: bool,
    pub no_align_loss: bool,
    pub no_mlm_loss: bool,
}

impl Ablations {
    pub fn none() -> Self {
        Ablations::default()
    }

    pub fn by_name(name: &str) -> Option<Self> {
        let mut a = Ablations::default();
        match name {
            "full" => {}
            "no_inter_modal" => a.no_inter_modal = true,
            "no_grid_view" => a.no_grid_view = true,
            "no_align_loss" => a.no_align_loss = true,
            "no_mlm_loss" => a.no_mlm_loss = true,
            _ => return None,
        }
        Some(a)
    }

    pub fn name(&self) -> &'static str {
        match (self.no_inter_modal, self.no_grid_view, self.no_align_loss, self.no_mlm_loss) {
            (false, false, false, false) => "full",
            (true, false, false, false) => "no_inter_modal",
            (false, true, false, false) => "no_grid_view",
            (false, false, true, false) => "no_align_loss",
            (false, false, false, true) => "no_mlm_loss",
            _ => "custom",
        }
    }

    pub fn modalities(&self) -> Vec<Modality> {
        if self.no_grid_view {
            vec![Modality::Route, Modality::GpsRoute]
        } else {
            Modality::ALL.to_vec()
        }
    }
}

/// Fused tokens of one modality, row-aligned with its [`ModalitySequence`].
#[derive(Debug, Clone)]
pub struct FusedStream {
    pub e: Var,
    pub seqs: Vec<Range<usize>>,
}

/// Masked-token logits of one stream.
#[derive(Debug, Clone)]
pub struct MlmStream {
    pub modality: Modality,
    pub logits: Var,
    pub targets: Vec<usize>,
    /// Masked positions left out because their target is the unknown token.
    pub excluded: usize,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub views: Vec<(Modality, EncodedView)>,
    pub fused: Vec<(Modality, FusedStream)>,
    pub mlm: Vec<MlmStream>,
}

impl Forward {
    pub fn view(&self, m: Modality) -> Option<&EncodedView> {
        self.views.iter().find(|(k, _)| *k == m).map(|(_, v)| v)
    }

    pub fn fused(&self, m: Modality) -> Option<&FusedStream> {
        self.fused.iter().find(|(k, _)| *k == m).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub align: Var,
    pub mlm: Var,
    pub total: Var,
}

/// Layer structure and parameter ids; values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct TrajModel {
    pub config: ModelConfig,
    pub ablations: Ablations,
    pub n_segments: usize,
    pub n_cells: usize,
    pub temporal: TemporalEmbedding,
    pub route: RouteEncoder,
    pub gps: GpsEncoder,
    pub grid: Option<GridEncoder>,
    pub inter: Option<InterModal>,
    pub global: GlobalContext,
    pub segment_head: Linear,
    pub cell_head: Option<Linear>,
    positions: Tensor<f64>,
}

/// Vocabulary-index adjacency with self-loops.
pub fn vocab_neighbors(network: &RoadNetwork, vocab: &Vocab) -> Vec<Vec<usize>> {
    vocab
        .ids()
        .iter()
        .enumerate()
        .map(|(i, &sid)| {
            let mut n: Vec<usize> = std::iter::once(i)
                .chain(network.neighbors[sid].iter().filter_map(|&u| vocab.get(u)))
                .collect();
            n.sort_unstable();
            n
        })
        .collect()
}

impl TrajModel {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        config: ModelConfig,
        ablations: Ablations,
        segment_neighbors: Vec<Vec<usize>>,
        n_cells: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_for(seed, 0x1417);
        let (d, h) = (config.d, config.heads);
        let n_segments = segment_neighbors.len();
        let modalities = ablations.modalities();
        let temporal = TemporalEmbedding::new(store, "temporal", d, &mut rng)?;
        let route = RouteEncoder::new(store, d, h, config.depth, Arc::new(segment_neighbors), &mut rng)?;
        let gps = GpsEncoder::new(store, d, &mut rng)?;
        let grid = if ablations.no_grid_view {
            None
        } else {
            Some(GridEncoder::new(store, n_cells, d, h, config.depth, &mut rng)?)
        };
        let inter = if ablations.no_inter_modal {
            None
        } else {
            Some(InterModal::new(store, &modalities, d, h, &mut rng)?)
        };
        let global = GlobalContext::new(store, modalities.len(), d, h, config.fusion_depth, &mut rng)?;
        let segment_head = Linear::new(store, "mlm.segment_head", d, n_segments, true, &mut rng)?;
        let cell_head = if ablations.no_grid_view {
            None
        } else {
            Some(Linear::new(store, "mlm.cell_head", d, n_cells, true, &mut rng)?)
        };
        Ok(TrajModel {
            config,
            ablations,
            n_segments,
            n_cells,
            temporal,
            route,
            gps,
            grid,
            inter,
            global,
            segment_head,
            cell_head,
            positions: sinusoidal_positions(config.max_len, d),
        })
    }

    pub fn modalities(&self) -> Vec<Modality> {
        self.ablations.modalities()
    }

    /// Width of the exported trajectory vector.
    pub fn embedding_width(&self) -> usize {
        self.modalities().len() * self.config.d
    }

    /// Encoders only.
    pub fn encode<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, batch: &Batch) -> Result<Vec<(Modality, EncodedView)>> {
        let time_r = self.temporal.forward(g, store, &batch.route.time)?;
        let r = self.route.forward(g, store, &batch.route, time_r, &self.positions)?;
        let points = self.gps.embed_points(g, store, &batch.points)?;
        let pr = self.gps.forward(g, store, points, &batch.gps_route, &batch.route.seqs)?;
        let mut views = vec![(Modality::Route, r), (Modality::GpsRoute, pr)];
        if let Some(grid) = &self.grid {
            let time_g = self.temporal.forward(g, store, &batch.grid.time)?;
            let gv = grid.forward(g, store, &batch.grid, &batch.grid_sem, time_g, &self.positions)?;
            let pg = self.gps.forward(g, store, points, &batch.gps_grid, &batch.grid.seqs)?;
            views.push((Modality::Grid, gv));
            views.push((Modality::GpsGrid, pg));
        }
        Ok(views)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, batch: &Batch) -> Result<Forward> {
        let views = self.encode(g, store, batch)?;
        let seqs: Vec<ModalitySequence> = views
            .iter()
            .map(|(_, v)| ModalitySequence::from_view(g, v))
            .collect::<Result<_>>()?;
        let o: Vec<Var> = match &self.inter {
            Some(inter) => inter.forward(g, store, &seqs)?,
            None => seqs.iter().map(|s| s.x).collect(),
        };
        let ranges: Vec<Vec<Range<usize>>> = seqs.iter().map(|s| s.seqs.clone()).collect();
        let e = self.global.forward(g, store, &o, &ranges, &self.positions)?;
        let fused: Vec<(Modality, FusedStream)> = views
            .iter()
            .zip(e)
            .zip(ranges)
            .map(|(((m, _), e), seqs)| (*m, FusedStream { e, seqs }))
            .collect();
        let mut mlm = Vec::new();
        for ((m, view), (_, f)) in views.iter().zip(&fused) {
            let (masked, targets, head, vocab) = match m {
                Modality::Route => (&batch.route.masked, &batch.route.targets, &self.segment_head, self.n_segments),
                Modality::GpsRoute => (&batch.gps_route.masked, &batch.route.targets, &self.segment_head, self.n_segments),
                Modality::Grid => (&batch.grid.masked, &batch.grid.targets, self.cell_head.as_ref().expect("grid view"), self.n_cells),
                Modality::GpsGrid => (&batch.gps_grid.masked, &batch.grid.targets, self.cell_head.as_ref().expect("grid view"), self.n_cells),
            };
            if masked.is_empty() {
                continue;
            }
            let sample_of = token_samples(&view.seqs);
            let mut rows = Vec::new();
            let mut tgt = Vec::new();
            let mut excluded = 0;
            for &k in masked {
                if targets[k] >= vocab {
                    excluded += 1;
                    continue;
                }
                let s = sample_of[k];
                rows.push(f.seqs[s].start + 1 + (k - view.seqs[s].start));
                tgt.push(targets[k]);
            }
            if rows.is_empty() {
                continue;
            }
            let x = g.gather_rows(f.e, &rows)?;
            let logits = head.forward(g, store, x)?;
            mlm.push(MlmStream {
                modality: *m,
                logits,
                targets: tgt,
                excluded,
            });
        }
        Ok(Forward { views, fused, mlm })
    }

    /// `w1·align + w2·mlm` with ablated terms weighted 0.
    pub fn losses<T: Scalar>(&self, g: &mut Graph<T>, fwd: &Forward, cfg: &LossConfig) -> Result<LossVars> {
        let h = |m| fwd.view(m).map(|v| v.h_t);
        let vv = ViewVectors {
            route: h(Modality::Route).expect("route view"),
            gps_route: h(Modality::GpsRoute).expect("gps view"),
            grid: h(Modality::Grid),
            gps_grid: h(Modality::GpsGrid),
        };
        let align = align_loss_var(g, &vv, cfg)?;
        let streams: Vec<(Var, &[usize])> = fwd.mlm.iter().map(|s| (s.logits, s.targets.as_slice())).collect();
        let mlm = mlm_loss_var(g, &streams)?;
        let w1 = if self.ablations.no_align_loss { 0.0 } else { cfg.w1 };
        let w2 = if self.ablations.no_mlm_loss { 0.0 } else { cfg.w2 };
        let total = total_loss_var(g, align, mlm, w1, w2)?;
        Ok(LossVars { align, mlm, total })
    }

    /// Concatenated fused trajectory tokens (position 0 of every stream), `B x k·d`.
    pub fn trajectory_embedding<T: Scalar>(&self, g: &mut Graph<T>, fwd: &Forward) -> Result<Var> {
        let parts: Vec<Var> = fwd
            .fused
            .iter()
            .map(|(_, f)| {
                let starts: Vec<usize> = f.seqs.iter().map(|r| r.start).collect();
                g.gather_rows(f.e, &starts)
            })
            .collect::<Result<_>>()?;
        g.concat_cols(&parts)
    }
}

/// Sample index of every packed token.
pub fn token_samples(seqs: &[Range<usize>]) -> Vec<usize> {
    let mut out = vec![0; seqs.last().map_or(0, |r| r.end)];
    for (s, r) in seqs.iter().enumerate() {
        out[r.clone()].iter_mut().for_each(|v| *v = s);
    }
    out
}
