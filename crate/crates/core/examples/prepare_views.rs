//! Derive route and grid views from GPS, filter by length and split.

use trajfuse::pipeline::{generate_city, prepare_dataset, GenConfig, PrepConfig};

fn main() -> anyhow::Result<()> {
    let gen = GenConfig {
        rows: 14,
        cols: 14,
        trajectories: 300,
        ..GenConfig::default()
    };
    let city = generate_city(&gen, 5)?;
    let ds = prepare_dataset(&city, &PrepConfig::default(), 5)?;
    let meta = &ds.meta;
    println!(
        "{} of {} trajectories kept; rejected {:?}; {} low-confidence matches",
        ds.samples.len(),
        city.trips.len(),
        meta.rejected,
        meta.low_confidence
    );
    println!(
        "split {}/{}/{}, {} segments and {} cells visited, {} cells in the grid",
        ds.split.train.len(),
        ds.split.val.len(),
        ds.split.test.len(),
        meta.segment_vocab.len(),
        meta.cell_vocab.len(),
        ds.grid.num_cells()
    );

    let s = &ds.samples[0];
    println!("\nsample {}: {} GPS points", s.id, s.gps.points.len());
    println!("route: {:?}", s.route.segments());
    println!("grid:  {:?}", s.grid.cells());
    // every GPS point maps to exactly one route token and one grid token
    for (name, a) in [("route", &s.route_assignment), ("grid", &s.grid_assignment)] {
        a.validate()?;
        let runs: Vec<usize> = a.runs().iter().map(|r| r.len()).collect();
        println!("{name} assignment {}x{}, points per token {runs:?}", a.rows(), a.cols());
    }
    let busy = s.grid.entries.iter().find(|e| !e.empty);
    if let Some(e) = busy {
        println!("POI mix of cell {}: {:.2?}", e.cell, e.sem);
    }
    Ok(())
}
