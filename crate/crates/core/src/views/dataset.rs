use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::assignment::AssignmentMatrix;
use super::grid::{derive_grid_with, GridSpec, GridTrajectory, SemanticsTable};
use super::matching::{MapMatcher, RouteTrajectory};
use crate::synth::GpsTrajectory;
use crate::util::rng_for;

/// One trajectory with all three views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub gps: GpsTrajectory,
    pub route: RouteTrajectory,
    pub route_assignment: AssignmentMatrix,
    pub grid: GridTrajectory,
    pub grid_assignment: AssignmentMatrix,
    pub low_confidence: bool,
}

pub fn derive_sample(traj: &GpsTrajectory, matcher: &MapMatcher<'_>, spec: &GridSpec, table: &SemanticsTable) -> Sample {
    let m = matcher.match_trajectory(traj);
    let (grid, grid_assignment) = derive_grid_with(traj, spec, table);
    Sample {
        id: traj.id,
        gps: traj.clone(),
        route: m.route,
        route_assignment: m.assignment,
        grid,
        grid_assignment,
        low_confidence: m.low_confidence,
    }
}

/// Inclusive length bounds per view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterLimits {
    pub route: (usize, usize),
    pub grid: (usize, usize),
    pub gps: (usize, usize),
}

impl Default for FilterLimits {
    fn default() -> Self {
        FilterLimits {
            route: (10, 100),
            grid: (10, 100),
            gps: (10, 256),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCounts {
    pub route_length: usize,
    pub grid_length: usize,
    pub gps_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Sample>,
    /// Segments covered by at least one kept sample, ascending.
    pub segment_vocab: Vec<usize>,
    /// Cells visited by at least one kept sample, ascending.
    pub cell_vocab: Vec<usize>,
    pub rejected: RuleCounts,
}

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("every sample was filtered out (route: {}, grid: {}, gps: {})", .0.route_length, .0.grid_length, .0.gps_length)]
    Empty(RuleCounts),
}

pub fn filter_dataset(samples: Vec<Sample>) -> Result<FilterOutcome, FilterError> {
    filter_with(samples, &FilterLimits::default())
}

/// A sample violating several rules counts against each of them.
pub fn filter_with(samples: Vec<Sample>, limits: &FilterLimits) -> Result<FilterOutcome, FilterError> {
    let inside = |n: usize, (lo, hi): (usize, usize)| n >= lo && n <= hi;
    let mut rejected = RuleCounts::default();
    let mut kept = Vec::new();
    for s in samples {
        let r = inside(s.route.len(), limits.route);
        let g = inside(s.grid.len(), limits.grid);
        let p = inside(s.gps.points.len(), limits.gps);
        rejected.route_length += usize::from(!r);
        rejected.grid_length += usize::from(!g);
        rejected.gps_length += usize::from(!p);
        if r && g && p {
            kept.push(s);
        }
    }
    if kept.is_empty() {
        return Err(FilterError::Empty(rejected));
    }
    let segments: BTreeSet<usize> = kept.iter().flat_map(|s| s.route.segments()).collect();
    let cells: BTreeSet<usize> = kept.iter().flat_map(|s| s.grid.cells()).collect();
    Ok(FilterOutcome {
        kept,
        segment_vocab: segments.into_iter().collect(),
        cell_vocab: cells.into_iter().collect(),
        rejected,
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
}

/// Seeded shuffle, then cut at `round(f_train n)` and `round(f_val n)`.
pub fn split_dataset<T: Clone>(samples: &[T], fractions: [f64; 3], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>), SplitError> {
    let (train, val, test) = split_indices(samples.len(), fractions, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&train), pick(&val), pick(&test)))
}

pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), SplitError> {
    if fractions.iter().any(|&f| !(f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadFractions(fractions));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, 0x5B17));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok((order, val, test))
}
