use std::ops::Range;

use super::features::{SampleInputs, TimeFeat, POINT_FEATURES};
use crate::objectives::MaskSet;
use crate::synth::POI_CATEGORIES;

/// Token stream of one discrete view, packed over the batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenStream {
    /// Input token per position (mask token where masked).
    pub tokens: Vec<usize>,
    /// Unmasked token per position.
    pub targets: Vec<usize>,
    pub time: Vec<TimeFeat>,
    /// Position of each token within its sequence.
    pub pos: Vec<usize>,
    pub seqs: Vec<Range<usize>>,
    /// Packed indices of masked tokens, ascending.
    pub masked: Vec<usize>,
}

/// Runs of GPS points forming one GPS-derived stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStream {
    /// Packed point range of every run; run `k` aligns with token `k`.
    pub runs: Vec<Range<usize>>,
    /// Packed run indices whose summaries are replaced by the mask vector.
    pub masked: Vec<usize>,
}

/// A packed batch: every per-token array concatenates the samples in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<u64>,
    pub route: TokenStream,
    pub grid: TokenStream,
    pub grid_sem: Vec<[f64; POI_CATEGORIES]>,
    pub points: Vec<[f64; POINT_FEATURES]>,
    pub gps_route: RunStream,
    pub gps_grid: RunStream,
}

impl Batch {
    /// `masks[i]` (if given) applies to `samples[i]`; `mask_token_*` are the
    /// reserved mask rows of the two vocabularies.
    pub fn new(samples: &[&SampleInputs], masks: Option<&[MaskSet]>, mask_route: usize, mask_cell: usize) -> Self {
        let mut b = Batch {
            ids: Vec::with_capacity(samples.len()),
            route: TokenStream::default(),
            grid: TokenStream::default(),
            grid_sem: Vec::new(),
            points: Vec::new(),
            gps_route: RunStream::default(),
            gps_grid: RunStream::default(),
        };
        let empty = MaskSet::default();
        for (i, s) in samples.iter().enumerate() {
            let m = masks.map_or(&empty, |m| &m[i]);
            b.ids.push(s.id);
            let point_base = b.points.len();
            b.points.extend_from_slice(&s.points);

            let base = b.route.tokens.len();
            push_tokens(&mut b.route, &s.route_tokens, &s.route_time, &m.route, mask_route);
            b.gps_route
                .runs
                .extend(s.route_runs.iter().map(|r| r.start + point_base..r.end + point_base));
            b.gps_route.masked.extend(m.gps_route.iter().map(|&k| k + base));

            let base = b.grid.tokens.len();
            push_tokens(&mut b.grid, &s.grid_tokens, &s.grid_time, &m.grid, mask_cell);
            for (k, sem) in s.grid_sem.iter().enumerate() {
                let hidden = m.grid.binary_search(&k).is_ok();
                b.grid_sem.push(if hidden { [0.0; POI_CATEGORIES] } else { *sem });
            }
            b.gps_grid
                .runs
                .extend(s.grid_runs.iter().map(|r| r.start + point_base..r.end + point_base));
            b.gps_grid.masked.extend(m.gps_grid.iter().map(|&k| k + base));
        }
        b
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn push_tokens(stream: &mut TokenStream, tokens: &[usize], time: &[TimeFeat], masked: &[usize], mask_token: usize) {
    let base = stream.tokens.len();
    for (k, (&tok, &tf)) in tokens.iter().zip(time).enumerate() {
        let hidden = masked.binary_search(&k).is_ok();
        stream.tokens.push(if hidden { mask_token } else { tok });
        stream.targets.push(tok);
        stream.time.push(if hidden { TimeFeat::unknown() } else { tf });
        stream.pos.push(k);
    }
    stream.seqs.push(base..base + tokens.len());
    stream.masked.extend(masked.iter().map(|&k| k + base));
}
