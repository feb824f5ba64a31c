//! Synthesize a small city and print what came out.

use trajfuse::pipeline::{generate_city, GenConfig};
use trajfuse::synth::RoadType;

fn main() -> anyhow::Result<()> {
    let cfg = GenConfig {
        rows: 12,
        cols: 12,
        trajectories: 200,
        ..GenConfig::default()
    };
    let city = generate_city(&cfg, 1)?;
    let net = &city.network;
    println!("{} segments, connected: {}", net.len(), net.is_connected());
    for ty in RoadType::ALL {
        let n = net.segments.iter().filter(|s| s.road_type == ty).count();
        println!("  {ty:?}: {n} (free speed {:.1} m/s)", ty.free_speed());
    }
    println!("{} POIs", city.pois.len());

    let points: usize = city.trips.iter().map(|t| t.gps.points.len()).sum();
    let mean_tt = city.trips.iter().map(|t| t.truth.travel_time).sum::<f64>() / city.trips.len() as f64;
    println!("{} trips, {points} GPS points, mean travel time {mean_tt:.0}s", city.trips.len());

    let trip = &city.trips[0];
    println!("trip 0 visits segments {:?}", trip.truth.segments);
    Ok(())
}
