use serde::{Deserialize, Serialize};

use super::assignment::AssignmentMatrix;
use crate::geo::{LatLon, LocalFrame};
use crate::synth::{GpsTrajectory, Poi, RoadNetwork, POI_CATEGORIES};

/// Uniform square cells over a lat/lon box; cell ids are row-major with
/// rows counted northward from the box's southern edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub frame: LocalFrame,
    pub min: LatLon,
    pub max: LatLon,
    /// meters
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub const DEFAULT_CELL_SIZE: f64 = 250.0;

    pub fn new(frame: LocalFrame, min: LatLon, max: LatLon, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        let (x0, y0) = frame.to_xy(min);
        let (x1, y1) = frame.to_xy(max);
        let cols = (((x1 - x0) / cell_size).ceil() as usize).max(1);
        let rows = (((y1 - y0) / cell_size).ceil() as usize).max(1);
        GridSpec {
            frame,
            min,
            max,
            cell_size,
            rows,
            cols,
        }
    }

    /// Grid over the bounding box of the network's intersections.
    pub fn covering(network: &RoadNetwork, cell_size: f64) -> Self {
        let (a, b, c, d) = network.bounding_box();
        GridSpec::new(network.frame, LatLon { lat: a, lon: b }, LatLon { lat: c, lon: d }, cell_size)
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    fn origin_xy(&self) -> (f64, f64) {
        self.frame.to_xy(self.min)
    }

    /// `(row, col)` of a planar point; out-of-box points clamp to the nearest cell.
    pub fn row_col_xy(&self, x: f64, y: f64) -> (usize, usize) {
        let (x0, y0) = self.origin_xy();
        let col = ((x - x0) / self.cell_size).floor();
        let row = ((y - y0) / self.cell_size).floor();
        let clamp = |v: f64, n: usize| if v.is_nan() || v < 0.0 { 0 } else { (v as usize).min(n - 1) };
        (clamp(row, self.rows), clamp(col, self.cols))
    }

    pub fn cell_of_xy(&self, x: f64, y: f64) -> usize {
        let (r, c) = self.row_col_xy(x, y);
        r * self.cols + c
    }

    pub fn cell_of(&self, p: LatLon) -> usize {
        let (x, y) = self.frame.to_xy(p);
        self.cell_of_xy(x, y)
    }

    pub fn cell_center(&self, cell: usize) -> LatLon {
        let (x0, y0) = self.origin_xy();
        let (r, c) = (cell / self.cols, cell % self.cols);
        self.frame.to_latlon(
            x0 + (c as f64 + 0.5) * self.cell_size,
            y0 + (r as f64 + 0.5) * self.cell_size,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSemantics {
    pub freq: [f64; POI_CATEGORIES],
    pub empty: bool,
}

/// POI category frequencies of one cell.
pub fn grid_semantics(cell: usize, pois: &[Poi], spec: &GridSpec) -> CellSemantics {
    let mut counts = [0usize; POI_CATEGORIES];
    for p in pois.iter().filter(|p| spec.cell_of(p.position) == cell) {
        counts[p.category] += 1;
    }
    semantics_from_counts(&counts)
}

fn semantics_from_counts(counts: &[usize; POI_CATEGORIES]) -> CellSemantics {
    let total: usize = counts.iter().sum();
    let mut freq = [0.0; POI_CATEGORIES];
    if total > 0 {
        for (f, &c) in freq.iter_mut().zip(counts) {
            *f = c as f64 / total as f64;
        }
    }
    CellSemantics { freq, empty: total == 0 }
}

/// Per-cell semantics precomputed in one pass over the POIs.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticsTable {
    cells: Vec<CellSemantics>,
}

impl SemanticsTable {
    pub fn new(spec: &GridSpec, pois: &[Poi]) -> Self {
        let mut counts = vec![[0usize; POI_CATEGORIES]; spec.num_cells()];
        for p in pois {
            counts[spec.cell_of(p.position)][p.category] += 1;
        }
        SemanticsTable {
            cells: counts.iter().map(semantics_from_counts).collect(),
        }
    }

    pub fn get(&self, cell: usize) -> CellSemantics {
        self.cells[cell]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub cell: usize,
    pub sem: [f64; POI_CATEGORIES],
    pub empty: bool,
    /// seconds
    pub arrival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrajectory {
    pub entries: Vec<GridEntry>,
}

impl GridTrajectory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cells(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.cell).collect()
    }
}

pub fn derive_grid_trajectory(traj: &GpsTrajectory, spec: &GridSpec, pois: &[Poi]) -> (GridTrajectory, AssignmentMatrix) {
    derive_grid_with(traj, spec, &SemanticsTable::new(spec, pois))
}

pub(crate) fn derive_grid_with(
    traj: &GpsTrajectory,
    spec: &GridSpec,
    table: &SemanticsTable,
) -> (GridTrajectory, AssignmentMatrix) {
    let labels: Vec<usize> = traj
        .points
        .iter()
        .map(|p| spec.cell_of(LatLon { lat: p.lat, lon: p.lon }))
        .collect();
    let b = AssignmentMatrix::from_labels(&labels);
    let runs = b.runs();
    let entries = b
        .unit_ids
        .iter()
        .zip(&runs)
        .map(|(&cell, run)| {
            let sem = table.get(cell);
            GridEntry {
                cell,
                sem: sem.freq,
                empty: sem.empty,
                arrival: traj.points[run.start].t,
            }
        })
        .collect();
    (GridTrajectory { entries }, b)
}
