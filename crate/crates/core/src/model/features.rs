//! Turns derived views into model-ready token and point features.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::geo::LatLon;
use crate::synth::{RoadNetwork, POI_CATEGORIES};
use crate::views::{AssignmentMatrix, Sample};

pub const MINUTES_PER_DAY: usize = 1440;
pub const DAYS_PER_WEEK: usize = 7;
pub const POINT_FEATURES: usize = 4;

/// Dense index over a sorted id list, with two reserved rows after it:
/// `len()` is the mask token and `len() + 1` the unknown token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct Vocab {
    ids: Vec<usize>,
    index: HashMap<usize, usize>,
}

impl From<Vec<usize>> for Vocab {
    fn from(ids: Vec<usize>) -> Self {
        Vocab::new(ids)
    }
}

impl From<Vocab> for Vec<usize> {
    fn from(v: Vocab) -> Self {
        v.ids
    }
}

impl Vocab {
    pub fn new(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Vocab { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn mask(&self) -> usize {
        self.ids.len()
    }

    pub fn unk(&self) -> usize {
        self.ids.len() + 1
    }

    pub fn get(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Index of `id`, or the unknown token.
    pub fn encode(&self, id: usize) -> usize {
        self.get(id).unwrap_or(self.unk())
    }

    pub fn id_of(&self, index: usize) -> Option<usize> {
        self.ids.get(index).copied()
    }
}

/// Dataset-level normalization constants, taken from the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub min: LatLon,
    pub max: LatLon,
    pub route_travel_mean: f64,
    pub grid_travel_mean: f64,
    pub dt_mean: f64,
    pub dt_std: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
}

fn mean_std(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
    for x in xs {
        n += 1.0;
        s += x;
        s2 += x * x;
    }
    if n == 0.0 {
        return (0.0, 1.0);
    }
    let m = s / n;
    (m, (s2 / n - m * m).max(0.0).sqrt())
}

impl FeatureStats {
    pub fn fit(network: &RoadNetwork, train: &[&Sample]) -> Self {
        let (a, b, c, d) = network.bounding_box();
        let route = mean_std(train.iter().flat_map(|s| unit_travel_times(s, &s.route_assignment)));
        let grid = mean_std(train.iter().flat_map(|s| unit_travel_times(s, &s.grid_assignment)));
        let frame = network.frame;
        let dt = mean_std(train.iter().flat_map(|s| point_kinematics(s, &frame).into_iter().map(|k| k.0)));
        let sp = mean_std(train.iter().flat_map(|s| point_kinematics(s, &frame).into_iter().map(|k| k.1)));
        FeatureStats {
            min: LatLon { lat: a, lon: b },
            max: LatLon { lat: c, lon: d },
            route_travel_mean: route.0.max(1e-6),
            grid_travel_mean: grid.0.max(1e-6),
            dt_mean: dt.0,
            dt_std: dt.1.max(1e-6),
            speed_mean: sp.0,
            speed_std: sp.1.max(1e-6),
        }
    }
}

/// Time spent in each unit: next unit's arrival (or the last point) minus own arrival.
fn unit_travel_times(s: &Sample, b: &AssignmentMatrix) -> Vec<f64> {
    let runs = b.runs();
    let pts = &s.gps.points;
    runs.iter()
        .enumerate()
        .map(|(j, r)| {
            let end = runs.get(j + 1).map_or(pts[r.end - 1].t, |n| pts[n.start].t);
            (end - pts[r.start].t).max(0.0)
        })
        .collect()
}

/// `(Δt, speed)` per point; the first point reuses the second point's values.
fn point_kinematics(s: &Sample, frame: &crate::geo::LocalFrame) -> Vec<(f64, f64)> {
    let pts = &s.gps.points;
    let xy: Vec<(f64, f64)> = pts.iter().map(|p| frame.to_xy(LatLon { lat: p.lat, lon: p.lon })).collect();
    let mut out: Vec<(f64, f64)> = (1..pts.len())
        .map(|i| {
            let dt = pts[i].t - pts[i - 1].t;
            let v = if dt > 0.0 { crate::geo::distance(xy[i], xy[i - 1]) / dt } else { 0.0 };
            (dt, v)
        })
        .collect();
    let first = out.first().copied().unwrap_or((0.0, 0.0));
    out.insert(0, first);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFeat {
    pub minute: usize,
    pub dow: usize,
    /// Travel time divided by the dataset scale.
    pub travel: f64,
    pub unknown: bool,
}

impl TimeFeat {
    pub fn at(t: f64, travel: f64) -> Self {
        let t = t.max(0.0);
        TimeFeat {
            minute: ((t % 86_400.0) / 60.0).floor() as usize % MINUTES_PER_DAY,
            dow: (t / 86_400.0).floor() as usize % DAYS_PER_WEEK,
            travel,
            unknown: false,
        }
    }

    pub fn unknown() -> Self {
        TimeFeat {
            minute: 0,
            dow: 0,
            travel: 0.0,
            unknown: true,
        }
    }
}

/// How a sample's inputs are prepared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Full,
    /// Every temporal input is replaced by the unknown-time vector, GPS
    /// Δt/speed are zeroed and GPS runs are thinned to their end points so
    /// point counts carry no duration.
    TimeMasked,
    /// Drops the final grid cell's first visit and everything at or after it.
    DestinationTruncated,
}

impl std::str::FromStr for InputMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(InputMode::Full),
            "time_masked" => Ok(InputMode::TimeMasked),
            "destination_truncated" => Ok(InputMode::DestinationTruncated),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Model inputs of one trajectory (unmasked).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInputs {
    pub id: u64,
    pub route_tokens: Vec<usize>,
    pub route_time: Vec<TimeFeat>,
    pub points: Vec<[f64; POINT_FEATURES]>,
    /// Point ranges of each route entry.
    pub route_runs: Vec<Range<usize>>,
    /// Point ranges of each grid entry.
    pub grid_runs: Vec<Range<usize>>,
    pub grid_tokens: Vec<usize>,
    pub grid_sem: Vec<[f64; POI_CATEGORIES]>,
    pub grid_time: Vec<TimeFeat>,
    /// Grid cell id removed by destination truncation.
    pub destination_label: Option<usize>,
}

impl SampleInputs {
    pub fn route_len(&self) -> usize {
        self.route_tokens.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_tokens.len()
    }
}

/// Everything needed to featurize samples consistently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub segments: Vocab,
    pub cells: Vocab,
    pub stats: FeatureStats,
    /// Planar frame of the network, for speeds.
    pub frame: crate::geo::LocalFrame,
}

impl Featurizer {
    pub fn new(segments: Vocab, cells: Vocab, stats: FeatureStats, frame: crate::geo::LocalFrame) -> Self {
        Featurizer { segments, cells, stats, frame }
    }

    /// `None` when the mode leaves a view empty.
    pub fn prepare(&self, sample: &Sample, mode: InputMode) -> Option<SampleInputs> {
        match mode {
            InputMode::Full => Some(self.featurize(sample, false, None)),
            InputMode::TimeMasked => Some(self.featurize(&thin_to_run_ends(sample), true, None)),
            InputMode::DestinationTruncated => {
                let label = sample.grid.entries.last()?.cell;
                let first = sample.grid.entries.iter().find(|e| e.cell == label)?;
                let cut = truncate_before(sample, first.arrival)?;
                Some(self.featurize(&cut, false, Some(label)))
            }
        }
    }

    fn featurize(&self, s: &Sample, mask_time: bool, destination_label: Option<usize>) -> SampleInputs {
        let st = &self.stats;
        let kin = point_kinematics(s, &self.frame);
        let lat_span = (st.max.lat - st.min.lat).max(1e-12);
        let lon_span = (st.max.lon - st.min.lon).max(1e-12);
        let points = s
            .gps
            .points
            .iter()
            .zip(&kin)
            .map(|(p, &(dt, v))| {
                let (dtz, vz) = if mask_time {
                    (0.0, 0.0)
                } else {
                    ((dt - st.dt_mean) / st.dt_std, (v - st.speed_mean) / st.speed_std)
                };
                [(p.lat - st.min.lat) / lat_span, (p.lon - st.min.lon) / lon_span, dtz, vz]
            })
            .collect();
        let times = |b: &AssignmentMatrix, scale: f64| -> Vec<TimeFeat> {
            if mask_time {
                return vec![TimeFeat::unknown(); b.cols()];
            }
            b.runs()
                .iter()
                .zip(unit_travel_times(s, b))
                .map(|(r, tt)| TimeFeat::at(s.gps.points[r.start].t, tt / scale))
                .collect()
        };
        SampleInputs {
            id: s.id,
            route_tokens: s.route.entries.iter().map(|e| self.segments.encode(e.segment)).collect(),
            route_time: times(&s.route_assignment, st.route_travel_mean),
            points,
            route_runs: s.route_assignment.runs(),
            grid_runs: s.grid_assignment.runs(),
            grid_tokens: s.grid.entries.iter().map(|e| self.cells.encode(e.cell)).collect(),
            grid_sem: s.grid.entries.iter().map(|e| e.sem).collect(),
            grid_time: times(&s.grid_assignment, st.grid_travel_mean),
            destination_label,
        }
    }
}

/// Keeps only the first and last point of every route run and grid run.
pub fn thin_to_run_ends(s: &Sample) -> Sample {
    let n = s.gps.points.len();
    let mut keep = vec![false; n];
    for r in s.route_assignment.runs().into_iter().chain(s.grid_assignment.runs()) {
        keep[r.start] = true;
        keep[r.end - 1] = true;
    }
    let pick = |v: &[usize]| -> Vec<usize> { v.iter().zip(&keep).filter(|(_, &k)| k).map(|(&x, _)| x).collect() };
    let mut out = s.clone();
    out.gps.points = s.gps.points.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
    out.route_assignment = AssignmentMatrix::from_labels(&pick(&s.route_assignment.labels()));
    out.grid_assignment = AssignmentMatrix::from_labels(&pick(&s.grid_assignment.labels()));
    out
}

/// Keeps points, route entries and grid entries strictly before `t_cut`.
pub fn truncate_before(s: &Sample, t_cut: f64) -> Option<Sample> {
    let n_keep = s.gps.points.iter().take_while(|p| p.t < t_cut).count();
    if n_keep == 0 {
        return None;
    }
    let mut out = s.clone();
    out.gps.points.truncate(n_keep);
    out.route_assignment = s.route_assignment.truncate_rows(n_keep);
    out.grid_assignment = s.grid_assignment.truncate_rows(n_keep);
    out.route.entries.truncate(out.route_assignment.cols());
    out.grid.entries.truncate(out.grid_assignment.cols());
    Some(out)
}

