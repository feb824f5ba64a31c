//! Route and grid views derived from GPS trajectories.

mod assignment;
mod dataset;
mod grid;
mod matching;

pub use assignment::{AssignmentError, AssignmentMatrix};
pub use dataset::{
    derive_sample, filter_dataset, filter_with, split_dataset, split_indices, FilterError, FilterLimits, FilterOutcome, RuleCounts, Sample,
    SplitError,
};
pub use grid::{derive_grid_trajectory, grid_semantics, CellSemantics, GridEntry, GridSpec, GridTrajectory, SemanticsTable};
pub use matching::{map_match, nearest_segment_oracle, MapMatcher, MatchResult, RouteEntry, RouteTrajectory, SpatialIndex};
