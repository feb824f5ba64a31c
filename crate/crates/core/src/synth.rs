//! Deterministic synthetic city: lattice road network, zoned POIs and
//! simulated GPS trips with full ground truth.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{LatLon, LocalFrame};
use crate::util::rng_for;
use crate::views::GridSpec;

pub const POI_CATEGORIES: usize = 13;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("road network cannot be kept connected")]
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadType {
    Primary,
    Secondary,
    Tertiary,
    Residential,
}

impl RoadType {
    pub const ALL: [RoadType; 4] = [
        RoadType::Primary,
        RoadType::Secondary,
        RoadType::Tertiary,
        RoadType::Residential,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Configured free-flow speed in m/s.
    pub fn free_speed(self) -> f64 {
        match self {
            RoadType::Primary => 16.0,
            RoadType::Secondary => 12.0,
            RoadType::Tertiary => 9.0,
            RoadType::Residential => 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    /// Intersection ids of the two endpoints.
    pub from: usize,
    pub to: usize,
    pub start: LatLon,
    pub end: LatLon,
    pub road_type: RoadType,
    /// meters
    pub length: f64,
    /// m/s
    pub free_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub frame: LocalFrame,
    pub intersections: Vec<LatLon>,
    pub segments: Vec<Segment>,
    /// `neighbors[v]` = segments sharing an intersection with `v`, ascending.
    #[serde(rename = "adjacency")]
    pub neighbors: Vec<Vec<usize>>,
}

impl RoadNetwork {
    /// Rebuilds neighbor lists from segment endpoints.
    pub fn from_parts(frame: LocalFrame, intersections: Vec<LatLon>, segments: Vec<Segment>) -> Self {
        let mut incident = vec![Vec::new(); intersections.len()];
        for s in &segments {
            incident[s.from].push(s.id);
            incident[s.to].push(s.id);
        }
        let neighbors = segments
            .iter()
            .map(|s| {
                let mut n: Vec<usize> = incident[s.from]
                    .iter()
                    .chain(&incident[s.to])
                    .copied()
                    .filter(|&u| u != s.id)
                    .collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect();
        RoadNetwork {
            frame,
            intersections,
            segments,
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Dense symmetric adjacency matrix with zero diagonal.
    pub fn adjacency_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.len();
        let mut m = vec![vec![false; n]; n];
        for (v, nb) in self.neighbors.iter().enumerate() {
            for &u in nb {
                m[v][u] = true;
            }
        }
        m
    }

    pub fn segment_xy(&self, id: usize) -> ((f64, f64), (f64, f64)) {
        let s = &self.segments[id];
        (self.frame.to_xy(s.start), self.frame.to_xy(s.end))
    }

    /// `(min_lat, min_lon, max_lat, max_lon)` over intersections.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.intersections {
            b.0 = b.0.min(p.lat);
            b.1 = b.1.min(p.lon);
            b.2 = b.2.max(p.lat);
            b.3 = b.3.max(p.lon);
        }
        b
    }

    /// Whether every intersection is reachable from intersection 0.
    pub fn is_connected(&self) -> bool {
        connected(self.intersections.len(), self.segments.iter().map(|s| (s.from, s.to)))
    }
}

fn connected(n_nodes: usize, edges: impl Iterator<Item = (usize, usize)>) -> bool {
    if n_nodes == 0 {
        return true;
    }
    let mut adj = vec![Vec::new(); n_nodes];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n_nodes];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == n_nodes
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub rows: usize,
    pub cols: usize,
    pub drop_rate: f64,
    /// Lattice spacing in meters.
    pub spacing: f64,
    /// Uniform jitter of intersection positions, meters.
    pub jitter: f64,
    pub origin: LatLon,
}

impl NetworkConfig {
    pub fn new(rows: usize, cols: usize, drop_rate: f64) -> Self {
        NetworkConfig {
            rows,
            cols,
            drop_rate,
            spacing: 200.0,
            jitter: 20.0,
            origin: LatLon { lat: 30.65, lon: 104.05 },
        }
    }
}

pub fn generate_road_network(seed: u64, rows: usize, cols: usize, drop_rate: f64) -> Result<RoadNetwork, SynthError> {
    generate_road_network_with(&NetworkConfig::new(rows, cols, drop_rate), seed)
}

/// Lattice of `rows x cols` intersections; every lattice edge is a segment.
pub fn generate_road_network_with(cfg: &NetworkConfig, seed: u64) -> Result<RoadNetwork, SynthError> {
    let (rows, cols) = (cfg.rows, cfg.cols);
    if rows < 2 || cols < 2 {
        return Err(SynthError::InvalidArgument(format!("lattice {rows}x{cols} needs at least 2x2")));
    }
    if !(0.0..0.5).contains(&cfg.drop_rate) {
        return Err(SynthError::InvalidArgument(format!("drop_rate {} outside [0, 0.5)", cfg.drop_rate)));
    }
    let mut rng = rng_for(seed, 0x5EED_0001);
    let frame = LocalFrame::new(cfg.origin.lat, cfg.origin.lon);
    let node = |r: usize, c: usize| r * cols + c;
    let mut xy = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let jx = if cfg.jitter > 0.0 { rng.gen_range(-cfg.jitter..=cfg.jitter) } else { 0.0 };
            let jy = if cfg.jitter > 0.0 { rng.gen_range(-cfg.jitter..=cfg.jitter) } else { 0.0 };
            xy.push((c as f64 * cfg.spacing + jx, r as f64 * cfg.spacing + jy));
        }
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((node(r, c), node(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((node(r, c), node(r + 1, c)));
            }
        }
    }
    let target = (cfg.drop_rate * edges.len() as f64).floor() as usize;
    let mut alive = vec![true; edges.len()];
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(&mut rng);
    let mut dropped = 0;
    for &e in &order {
        if dropped == target {
            break;
        }
        alive[e] = false;
        let still = connected(
            rows * cols,
            edges.iter().zip(&alive).filter(|(_, &a)| a).map(|(&e, _)| e),
        );
        if still {
            dropped += 1;
        } else {
            alive[e] = true;
        }
    }
    let kept: Vec<(usize, usize)> = edges.iter().zip(&alive).filter(|(_, &a)| a).map(|(&e, _)| e).collect();
    if !connected(rows * cols, kept.iter().copied()) {
        return Err(SynthError::Disconnected);
    }

    // Ring depth of an intersection: lattice distance to the outer boundary.
    let ring = |n: usize| {
        let (r, c) = (n / cols, n % cols);
        r.min(rows - 1 - r).min(c).min(cols - 1 - c)
    };
    let seg_ring: Vec<usize> = kept.iter().map(|&(a, b)| ring(a).min(ring(b))).collect();
    let types = band_types(&seg_ring);

    let intersections: Vec<LatLon> = xy.iter().map(|&(x, y)| frame.to_latlon(x, y)).collect();
    let segments = kept
        .iter()
        .enumerate()
        .map(|(id, &(a, b))| {
            let road_type = types[id];
            Segment {
                id,
                from: a,
                to: b,
                start: intersections[a],
                end: intersections[b],
                road_type,
                length: crate::geo::distance(xy[a], xy[b]),
                free_speed: road_type.free_speed(),
            }
        })
        .collect();
    Ok(RoadNetwork::from_parts(frame, intersections, segments))
}

/// Outer rings get higher-class roads. Ring levels are cut at the
/// quartiles of the segment count so the four classes are near balanced.
fn band_types(rings: &[usize]) -> Vec<RoadType> {
    let max_ring = rings.iter().copied().max().unwrap_or(0);
    let mut per_level = vec![0usize; max_ring + 1];
    for &r in rings {
        per_level[r] += 1;
    }
    let total = rings.len() as f64;
    let mut level_type = Vec::with_capacity(per_level.len());
    let mut before = 0usize;
    for &count in &per_level {
        let mid = (before as f64 + count as f64 / 2.0) / total;
        let idx = ((mid * 4.0).floor() as usize).min(3);
        level_type.push(RoadType::ALL[idx]);
        before += count;
    }
    rings.iter().map(|&r| level_type[r]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub position: LatLon,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiConfig {
    pub zone_count: usize,
    /// POIs per square kilometer of bounding box.
    pub density_per_km2: f64,
    /// Probability mass on a zone's dominant category.
    pub concentration: f64,
}

impl PoiConfig {
    pub fn new(zone_count: usize) -> Self {
        PoiConfig {
            zone_count,
            density_per_km2: 150.0,
            concentration: 0.7,
        }
    }
}

/// Partition of the network bounding box into functional zones, each with
/// its own category distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneLayout {
    pub zone_count: usize,
    pub zone_cols: usize,
    pub zone_rows: usize,
    /// `(x_min, y_min, x_max, y_max)` in the network frame.
    pub extent: (f64, f64, f64, f64),
    pub distributions: Vec<[f64; POI_CATEGORIES]>,
}

impl ZoneLayout {
    pub fn new(network: &RoadNetwork, cfg: &PoiConfig) -> Result<Self, SynthError> {
        if cfg.zone_count == 0 {
            return Err(SynthError::InvalidArgument("zone_count must be >= 1".into()));
        }
        if cfg.zone_count > POI_CATEGORIES * (POI_CATEGORIES - 1) {
            return Err(SynthError::InvalidArgument(format!("at most {} zones", POI_CATEGORIES * 12)));
        }
        let (min_lat, min_lon, max_lat, max_lon) = network.bounding_box();
        let (x0, y0) = network.frame.to_xy(LatLon { lat: min_lat, lon: min_lon });
        let (x1, y1) = network.frame.to_xy(LatLon { lat: max_lat, lon: max_lon });
        let zone_cols = (cfg.zone_count as f64).sqrt().ceil() as usize;
        let zone_rows = cfg.zone_count.div_ceil(zone_cols);
        let distributions = (0..cfg.zone_count)
            .map(|z| {
                let dominant = z % POI_CATEGORIES;
                let mut d = [0.0; POI_CATEGORIES];
                if z < POI_CATEGORIES {
                    let rest = (1.0 - cfg.concentration) / (POI_CATEGORIES - 1) as f64;
                    for (c, v) in d.iter_mut().enumerate() {
                        *v = if c == dominant { cfg.concentration } else { rest };
                    }
                } else {
                    // a second peak keeps distributions distinct past 13 zones
                    let secondary = (dominant + 1 + z / POI_CATEGORIES) % POI_CATEGORIES;
                    let rest = (1.0 - cfg.concentration) / (POI_CATEGORIES - 2) as f64;
                    for (c, v) in d.iter_mut().enumerate() {
                        *v = rest;
                        if c == dominant {
                            *v = cfg.concentration * 0.75;
                        }
                        if c == secondary {
                            *v = cfg.concentration * 0.25;
                        }
                    }
                }
                d
            })
            .collect();
        Ok(ZoneLayout {
            zone_count: cfg.zone_count,
            zone_cols,
            zone_rows,
            extent: (x0, y0, x1, y1),
            distributions,
        })
    }

    fn cell_extent(&self, zr: usize, zc: usize) -> (f64, f64, f64, f64) {
        let (x0, y0, x1, y1) = self.extent;
        let w = (x1 - x0) / self.zone_cols as f64;
        let h = (y1 - y0) / self.zone_rows as f64;
        (x0 + zc as f64 * w, y0 + zr as f64 * h, x0 + (zc + 1) as f64 * w, y0 + (zr + 1) as f64 * h)
    }

    /// Zone of a planar point; the last zone absorbs surplus layout cells.
    pub fn zone_of_xy(&self, x: f64, y: f64) -> usize {
        let (x0, y0, x1, y1) = self.extent;
        let zc = (((x - x0) / (x1 - x0) * self.zone_cols as f64).floor() as isize).clamp(0, self.zone_cols as isize - 1);
        let zr = (((y - y0) / (y1 - y0) * self.zone_rows as f64).floor() as isize).clamp(0, self.zone_rows as isize - 1);
        (zr as usize * self.zone_cols + zc as usize).min(self.zone_count - 1)
    }

    /// Layout cells belonging to zone `z`.
    fn cells_of(&self, z: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for zr in 0..self.zone_rows {
            for zc in 0..self.zone_cols {
                if (zr * self.zone_cols + zc).min(self.zone_count - 1) == z {
                    out.push((zr, zc));
                }
            }
        }
        out
    }
}

pub fn generate_pois(network: &RoadNetwork, seed: u64, zone_count: usize) -> Result<Vec<Poi>, SynthError> {
    generate_pois_with(network, seed, &PoiConfig::new(zone_count))
}

pub fn generate_pois_with(network: &RoadNetwork, seed: u64, cfg: &PoiConfig) -> Result<Vec<Poi>, SynthError> {
    let layout = ZoneLayout::new(network, cfg)?;
    let mut rng = rng_for(seed, 0x5EED_0002);
    let mut pois = Vec::new();
    for z in 0..layout.zone_count {
        let cells = layout.cells_of(z);
        let area_km2: f64 = cells
            .iter()
            .map(|&(r, c)| {
                let (a, b, x, y) = layout.cell_extent(r, c);
                (x - a) * (y - b) / 1e6
            })
            .sum();
        let count = ((area_km2 * cfg.density_per_km2).round() as usize).max(1);
        let dist = rand_distr::WeightedIndex::new(layout.distributions[z]).expect("positive weights");
        for _ in 0..count {
            let &(r, c) = cells.choose(&mut rng).expect("zone has cells");
            let (x0, y0, x1, y1) = layout.cell_extent(r, c);
            let x = rng.gen_range(x0..=x1);
            let y = rng.gen_range(y0..=y1);
            pois.push(Poi {
                position: network.frame.to_latlon(x, y),
                category: dist.sample(&mut rng),
            });
        }
    }
    Ok(pois)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub lat: f64,
    pub lon: f64,
    /// seconds
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsTrajectory {
    pub id: u64,
    pub points: Vec<GpsPoint>,
}

/// What the simulator knows about a trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub segments: Vec<usize>,
    /// Realized traversal speed per path segment, m/s.
    pub speeds: Vec<f64>,
    /// Entry timestamp per path segment.
    pub entry_times: Vec<f64>,
    /// seconds
    pub travel_time: f64,
    /// Path index (into `segments`) of every GPS point.
    pub point_path_index: Vec<usize>,
    pub destination: LatLon,
    /// Destination cell under the default grid covering the network.
    pub destination_cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrip {
    #[serde(flatten)]
    pub gps: GpsTrajectory,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub sample_period: f64,
    pub noise_sigma: f64,
    /// Log-normal sigma of the multiplicative speed noise.
    pub speed_noise: f64,
    /// Departures are uniform over this many seconds from t = 0 (Monday 00:00).
    pub departure_window: f64,
}

impl SimConfig {
    pub fn new(n: usize, sample_period: f64, noise_sigma: f64) -> Self {
        SimConfig {
            n,
            sample_period,
            noise_sigma,
            speed_noise: 0.1,
            departure_window: 7.0 * 86_400.0,
        }
    }
}

pub fn simulate_trajectories(
    network: &RoadNetwork,
    seed: u64,
    n: usize,
    sample_period: f64,
    noise_sigma: f64,
) -> Result<Vec<SimulatedTrip>, SynthError> {
    simulate_with(network, seed, &SimConfig::new(n, sample_period, noise_sigma))
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem(f64, usize);
impl Eq for HeapItem {}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Free-flow fastest path between intersections as `(segment, entered_from)` steps.
pub fn fastest_path(network: &RoadNetwork, origin: usize, dest: usize) -> Option<Vec<(usize, usize)>> {
    let n = network.intersections.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for s in &network.segments {
        adj[s.from].push((s.to, s.id));
        adj[s.to].push((s.from, s.id));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(HeapItem(0.0, origin));
    while let Some(HeapItem(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        if v == dest {
            break;
        }
        for &(u, sid) in &adj[v] {
            let s = &network.segments[sid];
            let nd = d + s.length / s.free_speed;
            if nd < dist[u] {
                dist[u] = nd;
                prev[u] = Some((v, sid));
                heap.push(HeapItem(nd, u));
            }
        }
    }
    if !dist[dest].is_finite() {
        return None;
    }
    let mut steps = Vec::new();
    let mut v = dest;
    while v != origin {
        let (p, sid) = prev[v]?;
        steps.push((sid, p));
        v = p;
    }
    steps.reverse();
    Some(steps)
}

pub fn simulate_with(network: &RoadNetwork, seed: u64, cfg: &SimConfig) -> Result<Vec<SimulatedTrip>, SynthError> {
    if cfg.n == 0 {
        return Err(SynthError::InvalidArgument("n must be >= 1".into()));
    }
    if cfg.sample_period <= 0.0 || cfg.noise_sigma < 0.0 {
        return Err(SynthError::InvalidArgument("sample_period > 0 and noise_sigma >= 0 required".into()));
    }
    if network.intersections.len() < 2 {
        return Err(SynthError::InvalidArgument("network needs two intersections".into()));
    }
    let grid = GridSpec::covering(network, GridSpec::DEFAULT_CELL_SIZE);
    (0..cfg.n)
        .map(|i| simulate_one(network, &grid, seed, i as u64, cfg))
        .collect()
}

fn simulate_one(
    network: &RoadNetwork,
    grid: &GridSpec,
    seed: u64,
    index: u64,
    cfg: &SimConfig,
) -> Result<SimulatedTrip, SynthError> {
    let mut rng = rng_for(seed, 0x7000_0000 + index);
    let n_nodes = network.intersections.len();
    let speed_noise = Normal::new(0.0, cfg.speed_noise.max(0.0)).expect("finite sigma");
    let pos_noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    loop {
        let origin = rng.gen_range(0..n_nodes);
        let dest = rng.gen_range(0..n_nodes);
        if origin == dest {
            continue;
        }
        let Some(steps) = fastest_path(network, origin, dest) else {
            continue;
        };
        let t0 = rng.gen_range(0.0..cfg.departure_window).floor();
        let mut entry_times = Vec::with_capacity(steps.len());
        let mut speeds = Vec::with_capacity(steps.len());
        let mut t = t0;
        for &(sid, _) in &steps {
            let s = &network.segments[sid];
            let factor = if cfg.speed_noise > 0.0 { speed_noise.sample(&mut rng).exp() } else { 1.0 };
            let v = s.free_speed * factor;
            entry_times.push(t);
            speeds.push(v);
            t += s.length / v;
        }
        let travel_time: f64 = steps
            .iter()
            .zip(&speeds)
            .map(|(&(sid, _), v)| network.segments[sid].length / v)
            .sum();
        let n_points = (travel_time / cfg.sample_period).floor() as usize + 1;
        if n_points < 2 {
            continue;
        }
        let mut points = Vec::with_capacity(n_points);
        let mut point_path_index = Vec::with_capacity(n_points);
        let mut k = 0usize;
        for j in 0..n_points {
            let tj = t0 + j as f64 * cfg.sample_period;
            while k + 1 < steps.len() && tj >= entry_times[k + 1] {
                k += 1;
            }
            let (sid, from) = steps[k];
            let s = &network.segments[sid];
            let (a, b) = network.segment_xy(sid);
            let (pa, pb) = if from == s.from { (a, b) } else { (b, a) };
            let frac = ((tj - entry_times[k]) * speeds[k] / s.length).clamp(0.0, 1.0);
            let mut x = pa.0 + frac * (pb.0 - pa.0);
            let mut y = pa.1 + frac * (pb.1 - pa.1);
            if cfg.noise_sigma > 0.0 {
                x += pos_noise.sample(&mut rng);
                y += pos_noise.sample(&mut rng);
            }
            let p = network.frame.to_latlon(x, y);
            points.push(GpsPoint { lat: p.lat, lon: p.lon, t: tj });
            point_path_index.push(k);
        }
        let destination = network.intersections[dest];
        let (dx, dy) = network.frame.to_xy(destination);
        return Ok(SimulatedTrip {
            gps: GpsTrajectory { id: index, points },
            truth: GroundTruth {
                segments: steps.iter().map(|&(s, _)| s).collect(),
                speeds,
                entry_times,
                travel_time,
                point_path_index,
                destination,
                destination_cell: grid.cell_of_xy(dx, dy),
            },
        });
    }
}

/// Mean realized speed per segment over a set of trips; `None` if never traversed.
pub fn mean_segment_speeds(network: &RoadNetwork, trips: &[SimulatedTrip]) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; network.len()];
    let mut count = vec![0usize; network.len()];
    for trip in trips {
        for (&s, &v) in trip.truth.segments.iter().zip(&trip.truth.speeds) {
            sum[s] += v;
            count[s] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { Some(s / c as f64) } else { None })
        .collect()
}
