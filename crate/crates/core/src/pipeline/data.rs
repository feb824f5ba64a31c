use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::synth::{
    generate_pois_with, generate_road_network_with, simulate_with, GroundTruth, NetworkConfig, Poi, PoiConfig,
    RoadNetwork, SimConfig, SimulatedTrip, SynthError,
};
use crate::views::{
    derive_sample, filter_with, split_indices, FilterError, FilterLimits, GridSpec, MapMatcher, RuleCounts, Sample,
    SemanticsTable, SplitError,
};

/// Synthetic city parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub rows: usize,
    pub cols: usize,
    pub drop_rate: f64,
    pub zone_count: usize,
    pub trajectories: usize,
    pub sample_period: f64,
    pub noise_sigma: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            rows: 25,
            cols: 25,
            drop_rate: 0.1,
            zone_count: 9,
            trajectories: 2700,
            sample_period: 5.0,
            noise_sigma: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub network: RoadNetwork,
    pub pois: Vec<Poi>,
    pub trips: Vec<SimulatedTrip>,
}

pub fn generate_city(cfg: &GenConfig, seed: u64) -> Result<City, SynthError> {
    let network = generate_road_network_with(&NetworkConfig::new(cfg.rows, cfg.cols, cfg.drop_rate), seed)?;
    let pois = generate_pois_with(&network, seed, &PoiConfig::new(cfg.zone_count))?;
    let trips = simulate_with(
        &network,
        seed,
        &SimConfig::new(cfg.trajectories, cfg.sample_period, cfg.noise_sigma),
    )?;
    Ok(City { network, pois, trips })
}

impl City {
    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        io::write_network(&dir.join("network.json"), &self.network)?;
        io::write_pois(&dir.join("pois.csv"), &self.pois)?;
        io::write_trips(&dir.join("traj.jsonl"), &self.trips)
    }

    pub fn load(dir: &Path) -> Result<Self, IoError> {
        Ok(City {
            network: io::read_network(&dir.join("network.json"))?,
            pois: io::read_pois(&dir.join("pois.csv"))?,
            trips: io::read_trips(&dir.join("traj.jsonl"))?,
        })
    }
}

/// View derivation, filtering and split parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub sigma: f64,
    pub transition_penalty: f64,
    pub cell_size: f64,
    pub fractions: [f64; 3],
    pub limits: FilterLimits,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            sigma: MapMatcher::DEFAULT_SIGMA,
            transition_penalty: MapMatcher::DEFAULT_PENALTY,
            cell_size: GridSpec::DEFAULT_CELL_SIZE,
            fractions: [0.7, 0.1, 0.2],
            limits: FilterLimits::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PrepError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Everything downstream of view derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub network: RoadNetwork,
    pub grid: GridSpec,
    pub samples: Vec<Sample>,
    /// Simulator ground truth by trajectory id (empty for external data).
    pub truth: BTreeMap<u64, GroundTruth>,
    pub split: Split,
    pub meta: DatasetMeta,
}

/// Small bookkeeping saved next to `views.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub grid: GridSpec,
    pub split: Split,
    pub segment_vocab: Vec<usize>,
    pub cell_vocab: Vec<usize>,
    pub rejected: RuleCounts,
    pub low_confidence: usize,
    pub prep: PrepConfig,
}

pub fn prepare_dataset(city: &City, cfg: &PrepConfig, seed: u64) -> Result<Dataset, PrepError> {
    let grid = GridSpec::covering(&city.network, cfg.cell_size);
    let table = SemanticsTable::new(&grid, &city.pois);
    let matcher = MapMatcher::new(&city.network, cfg.sigma, cfg.transition_penalty);
    let samples: Vec<Sample> = city
        .trips
        .iter()
        .map(|t| derive_sample(&t.gps, &matcher, &grid, &table))
        .collect();
    let low_confidence = samples.iter().filter(|s| s.low_confidence).count();
    let outcome = filter_with(samples, &cfg.limits)?;
    let (train, val, test) = split_indices(outcome.kept.len(), cfg.fractions, seed)?;
    let split = Split { train, val, test };
    let truth = city.trips.iter().map(|t| (t.gps.id, t.truth.clone())).collect();
    Ok(Dataset {
        network: city.network.clone(),
        grid: grid.clone(),
        samples: outcome.kept,
        truth,
        split: split.clone(),
        meta: DatasetMeta {
            grid,
            split,
            segment_vocab: outcome.segment_vocab,
            cell_vocab: outcome.cell_vocab,
            rejected: outcome.rejected,
            low_confidence,
            prep: cfg.clone(),
        },
    })
}

impl Dataset {
    pub fn train(&self) -> Vec<&Sample> {
        self.split.train.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn val(&self) -> Vec<&Sample> {
        self.split.val.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn test(&self) -> Vec<&Sample> {
        self.split.test.iter().map(|&i| &self.samples[i]).collect()
    }

    /// Writes `views.jsonl` and `dataset.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        io::write_samples(&dir.join("views.jsonl"), &self.samples)?;
        io::write_json(&dir.join("dataset.json"), &self.meta)
    }

    /// Reads a prepared dataset; `city_dir` supplies the network and ground truth.
    pub fn load(city_dir: &Path, dir: &Path) -> Result<Self, IoError> {
        let network = io::read_network(&city_dir.join("network.json"))?;
        let truth_path = city_dir.join("traj.jsonl");
        let truth = if truth_path.exists() {
            io::read_trips(&truth_path)?.into_iter().map(|t| (t.gps.id, t.truth)).collect()
        } else {
            BTreeMap::new()
        };
        let meta: DatasetMeta = io::read_json(&dir.join("dataset.json"))?;
        Ok(Dataset {
            network,
            grid: meta.grid.clone(),
            samples: io::read_samples(&dir.join("views.jsonl"))?,
            truth,
            split: meta.split.clone(),
            meta,
        })
    }
}
