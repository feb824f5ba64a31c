//! Match noisy GPS traces to the road network and score against the simulator.

use trajfuse::synth::{generate_road_network, simulate_trajectories};
use trajfuse::views::{nearest_segment_oracle, MapMatcher};

fn main() -> anyhow::Result<()> {
    let network = generate_road_network(3, 12, 12, 0.1)?;
    let matcher = MapMatcher::new(&network, MapMatcher::DEFAULT_SIGMA, MapMatcher::DEFAULT_PENALTY);

    for noise in [0.0, 5.0, 15.0] {
        let trips = simulate_trajectories(&network, 4, 100, 5.0, noise)?;
        let (mut hit, mut hit_nearest, mut total) = (0, 0, 0);
        for trip in &trips {
            let labels = matcher.match_trajectory(&trip.gps).assignment.labels();
            let nearest = nearest_segment_oracle(&trip.gps, &network);
            for (k, &path_idx) in trip.truth.point_path_index.iter().enumerate() {
                let truth = trip.truth.segments[path_idx];
                hit += usize::from(labels[k] == truth);
                hit_nearest += usize::from(nearest[k] == truth);
                total += 1;
            }
        }
        println!(
            "noise {noise:>4.1} m: viterbi {:.3}, nearest segment {:.3} point accuracy",
            hit as f64 / total as f64,
            hit_nearest as f64 / total as f64
        );
    }
    Ok(())
}
