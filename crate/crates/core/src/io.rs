//! File formats shared by the CLI and the examples.
//!
//! * `network.json`: one [`RoadNetwork`] object.
//! * `pois.csv`: header `lat,lon,category`.
//! * `traj.jsonl`: one [`SimulatedTrip`] per line (`id`, `points`, `truth`).
//! * `views.jsonl`: one [`Sample`] per line.
//!
//! Coordinates are degrees, times seconds, lengths meters, speeds m/s.
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;
use crate::synth::{Poi, RoadNetwork, SimulatedTrip, POI_CATEGORIES};
use crate::views::Sample;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: String, line: usize, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(file_err(path))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(file_err(path))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        line: 0,
        source,
    })?;
    w.flush().map_err(file_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let r = BufReader::new(File::open(path).map_err(file_err(path))?);
    serde_json::from_reader(r).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        line: 0,
        source,
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut w = create(path)?;
    for (i, item) in items.iter().enumerate() {
        serde_json::to_writer(&mut w, item).map_err(|source| IoError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        w.write_all(b"\n").map_err(file_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let r = BufReader::new(File::open(path).map_err(file_err(path))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(file_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| IoError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_network(path: &Path, network: &RoadNetwork) -> Result<(), IoError> {
    write_json(path, network)
}

pub fn read_network(path: &Path) -> Result<RoadNetwork, IoError> {
    let net: RoadNetwork = read_json(path)?;
    let invalid = |msg: String| IoError::Invalid { path: path.display().to_string(), msg };
    if net.neighbors.len() != net.segments.len() {
        return Err(invalid("adjacency length differs from segment count".into()));
    }
    for (i, s) in net.segments.iter().enumerate() {
        if s.id != i {
            return Err(invalid(format!("segment {i} has id {}", s.id)));
        }
        if s.from >= net.intersections.len() || s.to >= net.intersections.len() {
            return Err(invalid(format!("segment {i} references a missing intersection")));
        }
    }
    Ok(net)
}

#[derive(Serialize, Deserialize)]
struct PoiRow {
    lat: f64,
    lon: f64,
    category: usize,
}

pub fn write_pois(path: &Path, pois: &[Poi]) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_writer(create(path)?);
    for p in pois {
        w.serialize(PoiRow {
            lat: p.position.lat,
            lon: p.position.lon,
            category: p.category,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(file_err(path))
}

pub fn read_pois(path: &Path) -> Result<Vec<Poi>, IoError> {
    let csv_err = |source| IoError::Csv { path: path.display().to_string(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: PoiRow = row.map_err(csv_err)?;
        if row.category >= POI_CATEGORIES {
            return Err(IoError::Invalid {
                path: path.display().to_string(),
                msg: format!("category {} out of range", row.category),
            });
        }
        out.push(Poi {
            position: LatLon { lat: row.lat, lon: row.lon },
            category: row.category,
        });
    }
    Ok(out)
}

pub fn write_trips(path: &Path, trips: &[SimulatedTrip]) -> Result<(), IoError> {
    write_jsonl(path, trips)
}

pub fn read_trips(path: &Path) -> Result<Vec<SimulatedTrip>, IoError> {
    read_jsonl(path)
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<(), IoError> {
    write_jsonl(path, samples)
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>, IoError> {
    read_jsonl(path)
}
