//! Self-supervised losses: cross-view InfoNCE alignment, span masking and
//! masked-token prediction.

use rand::Rng;
use serde::{Deserialize, Serialize};
use trajfuse_autograd::{Graph, Scalar, Tensor, TensorError, Var};

use crate::util::rng_for;

/// Norm floor applied before cosine similarity.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub w1: f64,
    pub w2: f64,
    pub mask_prob: f64,
    pub mask_span: usize,
    /// Average both directions of every pair instead of anchoring on the first view.
    pub symmetric: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 0.07,
            w1: 2.0,
            w2: 1.0,
            mask_prob: 0.2,
            mask_span: 2,
            symmetric: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau > 0.0) {
            return Err(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(format!("loss weights must be >= 0, got ({}, {})", self.w1, self.w2));
        }
        if !(0.0..1.0).contains(&self.mask_prob) {
            return Err(format!("mask_prob must be in [0, 1), got {}", self.mask_prob));
        }
        if self.mask_span == 0 {
            return Err("mask_span must be >= 1".into());
        }
        Ok(())
    }
}

/// Directional InfoNCE: row `a` of `h_i` is the anchor, row `a` of `h_j` its
/// positive and every row of `h_j` is in the denominator. Mean over anchors.
pub fn pair_loss_var<T: Scalar>(g: &mut Graph<T>, h_i: Var, h_j: Var, tau: f64) -> Result<Var, TensorError> {
    if g.shape(h_i) != g.shape(h_j) {
        return Err(TensorError::ShapeMismatch {
            op: "pair_loss",
            lhs: g.shape(h_i),
            rhs: g.shape(h_j),
        });
    }
    let a = g.l2_normalize(h_i, NORM_FLOOR);
    let b = g.l2_normalize(h_j, NORM_FLOOR);
    let sim = g.matmul_nt(a, b)?;
    let logits = g.scale(sim, 1.0 / tau);
    let targets: Vec<usize> = (0..g.shape(h_i).0).collect();
    g.cross_entropy(logits, &targets)
}

fn pair_term<T: Scalar>(g: &mut Graph<T>, h_i: Var, h_j: Var, cfg: &LossConfig) -> Result<Var, TensorError> {
    let fwd = pair_loss_var(g, h_i, h_j, cfg.tau)?;
    if !cfg.symmetric {
        return Ok(fwd);
    }
    let bwd = pair_loss_var(g, h_j, h_i, cfg.tau)?;
    let both = g.add(fwd, bwd)?;
    Ok(g.scale(both, 0.5))
}

/// Trajectory-level vectors of the four views for one batch.
#[derive(Debug, Clone, Copy)]
pub struct ViewVectors {
    pub route: Var,
    pub gps_route: Var,
    pub grid: Option<Var>,
    pub gps_grid: Option<Var>,
}

/// `pair(r, p|r) + pair(g, p|g) + pair(p|r, p|g)`; only the first pair when
/// the grid views are absent.
pub fn align_loss_var<T: Scalar>(g: &mut Graph<T>, h: &ViewVectors, cfg: &LossConfig) -> Result<Var, TensorError> {
    let mut total = pair_term(g, h.route, h.gps_route, cfg)?;
    if let (Some(grid), Some(gps_grid)) = (h.grid, h.gps_grid) {
        let gg = pair_term(g, grid, gps_grid, cfg)?;
        let pp = pair_term(g, h.gps_route, gps_grid, cfg)?;
        total = g.add(total, gg)?;
        total = g.add(total, pp)?;
    }
    Ok(total)
}

/// Value of the pair loss for plain matrices.
pub fn pair_loss(h_i: &Tensor<f64>, h_j: &Tensor<f64>, tau: f64) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.constant(h_i.clone());
    let b = g.constant(h_j.clone());
    let l = pair_loss_var(&mut g, a, b, tau)?;
    Ok(g.value(l).item())
}

/// Value of the align loss for plain matrices (`[route, gps_route, grid, gps_grid]`).
pub fn align_loss(views: [&Tensor<f64>; 4], cfg: &LossConfig) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let v: Vec<Var> = views.iter().map(|t| g.constant((*t).clone())).collect();
    let h = ViewVectors {
        route: v[0],
        gps_route: v[1],
        grid: Some(v[2]),
        gps_grid: Some(v[3]),
    };
    let l = align_loss_var(&mut g, &h, cfg)?;
    Ok(g.value(l).item())
}

/// Start rate that makes the expected masked fraction equal `mask_prob`
/// when each span of length `span` is followed by one unmasked token:
/// the fraction is `q·s / (1 + q·s)`.
pub fn span_start_rate(mask_prob: f64, span: usize) -> f64 {
    mask_prob / (span as f64 * (1.0 - mask_prob))
}

/// Masked token indices (sorted, unique) for a sequence of `seq_len`
/// tokens. Token `i` sits at fusion position `i + 1`, so the
/// trajectory-level slot is never masked.
pub fn make_mask(seq_len: usize, mask_prob: f64, mask_span: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_for(seed, 0x3A5C);
    make_mask_with(seq_len, mask_prob, mask_span, &mut rng)
}

pub fn make_mask_with<R: Rng>(seq_len: usize, mask_prob: f64, mask_span: usize, rng: &mut R) -> Vec<usize> {
    if mask_prob <= 0.0 || seq_len == 0 {
        return Vec::new();
    }
    let span = mask_span.max(1);
    let rate = span_start_rate(mask_prob, span);
    let mut out = Vec::new();
    let mut i = 0;
    while i < seq_len {
        if rng.gen::<f64>() < rate {
            let end = (i + span).min(seq_len);
            out.extend(i..end);
            // keep spans from touching
            i = end + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Per-sample masked token indices of the four streams.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSet {
    pub route: Vec<usize>,
    pub gps_route: Vec<usize>,
    pub grid: Vec<usize>,
    pub gps_grid: Vec<usize>,
}

impl MaskSet {
    /// Independent masks for the four streams, seeded per (seed, sample).
    pub fn sample(route_len: usize, grid_len: usize, cfg: &LossConfig, seed: u64, sample_id: u64) -> Self {
        let mut rng = rng_for(seed, sample_id);
        let mut m = |n| make_mask_with(n, cfg.mask_prob, cfg.mask_span, &mut rng);
        MaskSet {
            route: m(route_len),
            gps_route: m(route_len),
            grid: m(grid_len),
            gps_grid: m(grid_len),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.route.is_empty() && self.gps_route.is_empty() && self.grid.is_empty() && self.gps_grid.is_empty()
    }
}

/// Sum over streams of the mean NLL at masked positions; streams without
/// masked positions contribute 0.
pub fn mlm_loss_var<T: Scalar>(g: &mut Graph<T>, streams: &[(Var, &[usize])]) -> Result<Var, TensorError> {
    let mut total = g.constant(Tensor::scalar(T::zero()));
    for &(logits, targets) in streams {
        let ce = g.cross_entropy(logits, targets)?;
        total = g.add(total, ce)?;
    }
    Ok(total)
}

/// `w1·align + w2·mlm`
pub fn total_loss_var<T: Scalar>(g: &mut Graph<T>, align: Var, mlm: Var, w1: f64, w2: f64) -> Result<Var, TensorError> {
    let a = g.scale(align, w1);
    let m = g.scale(mlm, w2);
    g.add(a, m)
}

pub fn total_loss(align: f64, mlm: f64, w1: f64, w2: f64) -> f64 {
    w1 * align + w2 * mlm
}
