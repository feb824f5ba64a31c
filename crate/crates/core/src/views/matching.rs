use serde::{Deserialize, Serialize};

use super::assignment::AssignmentMatrix;
use crate::geo::{point_segment_distance, LatLon};
use crate::synth::{GpsTrajectory, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub segment: usize,
    /// seconds
    pub arrival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTrajectory {
    pub entries: Vec<RouteEntry>,
}

impl RouteTrajectory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn segments(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.segment).collect()
    }
}

/// Uniform bucket grid over segment bounding boxes, in network-frame meters.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    origin: (f64, f64),
    bucket: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
    geometry: Vec<((f64, f64), (f64, f64))>,
}

impl SpatialIndex {
    pub fn new(network: &RoadNetwork, bucket: f64) -> Self {
        let geometry: Vec<_> = (0..network.len()).map(|i| network.segment_xy(i)).collect();
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(a, b) in &geometry {
            for p in [a, b] {
                lo = (lo.0.min(p.0), lo.1.min(p.1));
                hi = (hi.0.max(p.0), hi.1.max(p.1));
            }
        }
        if geometry.is_empty() {
            lo = (0.0, 0.0);
            hi = (0.0, 0.0);
        }
        let nx = ((hi.0 - lo.0) / bucket).floor() as usize + 1;
        let ny = ((hi.1 - lo.1) / bucket).floor() as usize + 1;
        let mut index = SpatialIndex {
            origin: lo,
            bucket,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
            geometry,
        };
        for (id, &(a, b)) in index.geometry.clone().iter().enumerate() {
            let (c0, r0) = index.bucket_of(a.0.min(b.0), a.1.min(b.1));
            let (c1, r1) = index.bucket_of(a.0.max(b.0), a.1.max(b.1));
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.buckets[r * nx + c].push(id);
                }
            }
        }
        index
    }

    fn bucket_of(&self, x: f64, y: f64) -> (usize, usize) {
        let c = ((x - self.origin.0) / self.bucket).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let r = ((y - self.origin.1) / self.bucket).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (c, r)
    }

    /// Every segment within `radius` of `p`, as `(id, distance)` sorted by id.
    pub fn within(&self, p: (f64, f64), radius: f64) -> Vec<(usize, f64)> {
        let (c0, r0) = self.bucket_of(p.0 - radius, p.1 - radius);
        let (c1, r1) = self.bucket_of(p.0 + radius, p.1 + radius);
        let mut ids = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                ids.extend_from_slice(&self.buckets[r * self.nx + c]);
            }
        }
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
            .filter_map(|id| {
                let (a, b) = self.geometry[id];
                let d = point_segment_distance(p, a, b).0;
                (d <= radius).then_some((id, d))
            })
            .collect()
    }

    /// Nearest segment; ties go to the lowest id.
    pub fn nearest(&self, p: (f64, f64)) -> Option<(usize, f64)> {
        if self.geometry.is_empty() {
            return None;
        }
        let mut radius = self.bucket;
        loop {
            let found = self.within(p, radius);
            if let Some(best) = found.into_iter().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))) {
                return Some(best);
            }
            radius *= 2.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub route: RouteTrajectory,
    pub assignment: AssignmentMatrix,
    /// No adjacency-feasible path existed; labels are per-point nearest.
    pub low_confidence: bool,
}

/// Adjacency-constrained Viterbi matcher with a reusable spatial index.
#[derive(Debug, Clone)]
pub struct MapMatcher<'a> {
    network: &'a RoadNetwork,
    index: SpatialIndex,
    bbox: (f64, f64, f64, f64),
    pub sigma: f64,
    pub transition_penalty: f64,
    /// Candidates lie within `nearest + margin_sigmas * sigma` of a point.
    pub margin_sigmas: f64,
}

impl<'a> MapMatcher<'a> {
    pub const DEFAULT_SIGMA: f64 = 15.0;
    pub const DEFAULT_PENALTY: f64 = 1.0;

    pub fn new(network: &'a RoadNetwork, sigma: f64, transition_penalty: f64) -> Self {
        assert!(sigma > 0.0 && transition_penalty >= 0.0);
        MapMatcher {
            network,
            index: SpatialIndex::new(network, 100.0),
            bbox: network.bounding_box(),
            sigma,
            transition_penalty,
            margin_sigmas: 5.0,
        }
    }

    fn clamped_xy(&self, lat: f64, lon: f64) -> (f64, f64) {
        let (a, b, c, d) = self.bbox;
        self.network.frame.to_xy(LatLon {
            lat: lat.clamp(a, c),
            lon: lon.clamp(b, d),
        })
    }

    fn nearest_labels(&self, xy: &[(f64, f64)]) -> Vec<usize> {
        xy.iter().map(|&p| self.index.nearest(p).expect("non-empty network").0).collect()
    }

    pub fn match_trajectory(&self, traj: &GpsTrajectory) -> MatchResult {
        let xy: Vec<(f64, f64)> = traj.points.iter().map(|p| self.clamped_xy(p.lat, p.lon)).collect();
        let (labels, low_confidence) = match self.viterbi(&xy) {
            Some(l) => (l, false),
            None => (self.nearest_labels(&xy), true),
        };
        let assignment = AssignmentMatrix::from_labels(&labels);
        let runs = assignment.runs();
        let entries = assignment
            .unit_ids
            .iter()
            .zip(&runs)
            .map(|(&segment, run)| RouteEntry {
                segment,
                arrival: traj.points[run.start].t,
            })
            .collect();
        MatchResult {
            route: RouteTrajectory { entries },
            assignment,
            low_confidence,
        }
    }

    fn transition(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else if self.network.adjacent(from, to) {
            self.transition_penalty
        } else {
            f64::INFINITY
        }
    }

    fn viterbi(&self, xy: &[(f64, f64)]) -> Option<Vec<usize>> {
        if xy.is_empty() {
            return Some(Vec::new());
        }
        let two_s2 = 2.0 * self.sigma * self.sigma;
        let candidates: Vec<Vec<(usize, f64)>> = xy
            .iter()
            .map(|&p| {
                let (_, d0) = self.index.nearest(p).expect("non-empty network");
                self.index
                    .within(p, d0 + self.margin_sigmas * self.sigma)
                    .into_iter()
                    .map(|(id, d)| (id, d * d / two_s2))
                    .collect()
            })
            .collect();
        let mut cost: Vec<f64> = candidates[0].iter().map(|c| c.1).collect();
        let mut back: Vec<Vec<usize>> = vec![Vec::new()];
        for t in 1..xy.len() {
            let mut next = Vec::with_capacity(candidates[t].len());
            let mut ptr = Vec::with_capacity(candidates[t].len());
            for &(id, emission) in &candidates[t] {
                let mut best = (f64::INFINITY, 0usize);
                for (k, &(prev, _)) in candidates[t - 1].iter().enumerate() {
                    let c = cost[k] + self.transition(prev, id);
                    if c < best.0 {
                        best = (c, k);
                    }
                }
                next.push(best.0 + emission);
                ptr.push(best.1);
            }
            cost = next;
            back.push(ptr);
        }
        let (mut k, best) = cost
            .iter()
            .enumerate()
            .fold((0usize, f64::INFINITY), |acc, (i, &c)| if c < acc.1 { (i, c) } else { acc });
        if !best.is_finite() {
            return None;
        }
        let mut labels = vec![0; xy.len()];
        for t in (0..xy.len()).rev() {
            labels[t] = candidates[t][k].0;
            if t > 0 {
                k = back[t][k];
            }
        }
        Some(labels)
    }
}

pub fn map_match(traj: &GpsTrajectory, network: &RoadNetwork, sigma: f64, transition_penalty: f64) -> MatchResult {
    MapMatcher::new(network, sigma, transition_penalty).match_trajectory(traj)
}

/// Brute-force per-point nearest segment over the whole network.
pub fn nearest_segment_oracle(traj: &GpsTrajectory, network: &RoadNetwork) -> Vec<usize> {
    let (a, b, c, d) = network.bounding_box();
    traj.points
        .iter()
        .map(|p| {
            let xy = network.frame.to_xy(LatLon {
                lat: p.lat.clamp(a, c),
                lon: p.lon.clamp(b, d),
            });
            let mut best = (f64::INFINITY, usize::MAX);
            for s in 0..network.len() {
                let (sa, sb) = network.segment_xy(s);
                let dist = point_segment_distance(xy, sa, sb).0;
                if dist < best.0 {
                    best = (dist, s);
                }
            }
            best.1
        })
        .collect()
}
