use proptest::prelude::*;
use trajfuse::geo::point_segment_distance;
use trajfuse::synth::*;

fn network() -> RoadNetwork {
    generate_road_network(3, 8, 8, 0.1).unwrap()
}

#[test]
fn lattice_sizes() {
    assert_eq!(generate_road_network(1, 2, 2, 0.0).unwrap().len(), 4);
    assert_eq!(generate_road_network(1, 4, 4, 0.0).unwrap().len(), 24);
}

#[test]
fn adjacency_symmetric_and_connected() {
    for seed in 0..5 {
        let n = generate_road_network(seed, 10, 10, 0.3).unwrap();
        let a = n.adjacency_matrix();
        for i in 0..n.len() {
            assert!(!a[i][i]);
            for j in 0..n.len() {
                assert_eq!(a[i][j], a[j][i]);
            }
        }
        assert!(n.is_connected());
    }
}

#[test]
fn invalid_arguments_rejected() {
    assert!(matches!(generate_road_network(1, 1, 5, 0.0), Err(SynthError::InvalidArgument(_))));
    assert!(matches!(generate_road_network(1, 4, 4, 1.5), Err(SynthError::InvalidArgument(_))));
    let n = network();
    assert!(generate_pois(&n, 1, 0).is_err());
    assert!(simulate_trajectories(&n, 1, 0, 5.0, 0.0).is_err());
    assert!(simulate_trajectories(&n, 1, 3, 0.0, 0.0).is_err());
}

#[test]
fn generation_is_deterministic() {
    let a = network();
    let b = network();
    assert_eq!(a, b);
    assert_eq!(generate_pois(&a, 4, 9).unwrap(), generate_pois(&b, 4, 9).unwrap());
    let ta = simulate_trajectories(&a, 5, 20, 5.0, 5.0).unwrap();
    let tb = simulate_trajectories(&b, 5, 20, 5.0, 5.0).unwrap();
    assert_eq!(ta, tb);
    let bits = |t: &[SimulatedTrip]| -> Vec<u64> {
        t.iter().flat_map(|x| x.gps.points.iter().flat_map(|p| [p.lat.to_bits(), p.lon.to_bits()])).collect()
    };
    assert_eq!(bits(&ta), bits(&tb));
}

#[test]
fn pois_inside_bounding_box() {
    let n = network();
    let (la0, lo0, la1, lo1) = n.bounding_box();
    let pois = generate_pois(&n, 2, 9).unwrap();
    assert!(!pois.is_empty());
    for p in &pois {
        assert!(p.position.lat >= la0 - 1e-9 && p.position.lat <= la1 + 1e-9);
        assert!(p.position.lon >= lo0 - 1e-9 && p.position.lon <= lo1 + 1e-9);
        assert!(p.category < POI_CATEGORIES);
    }
}

#[test]
fn concentrated_zone_dominates() {
    // with 9 zones, zone 3 puts its peak on category 3
    let n = generate_road_network(1, 20, 20, 0.0).unwrap();
    let cfg = PoiConfig::new(9);
    let layout = ZoneLayout::new(&n, &cfg).unwrap();
    let mut hits = 0;
    let mut total = 0;
    for seed in 0..10 {
        for p in generate_pois_with(&n, seed, &cfg).unwrap() {
            let (x, y) = n.frame.to_xy(p.position);
            if layout.zone_of_xy(x, y) == 3 {
                total += 1;
                hits += usize::from(p.category == 3);
            }
        }
    }
    assert!(total > 200);
    assert!(hits as f64 / total as f64 >= 0.6, "{hits}/{total}");
}

#[test]
fn zero_noise_points_lie_on_path() {
    let n = network();
    for trip in simulate_trajectories(&n, 9, 30, 5.0, 0.0).unwrap() {
        for (p, &k) in trip.gps.points.iter().zip(&trip.truth.point_path_index) {
            let (a, b) = n.segment_xy(trip.truth.segments[k]);
            let xy = n.frame.to_xy(trajfuse::geo::LatLon { lat: p.lat, lon: p.lon });
            let (d, _) = point_segment_distance(xy, a, b);
            assert!(d < 1e-6, "off-path by {d}");
        }
    }
}

#[test]
fn travel_time_is_sum_of_length_over_speed() {
    let n = network();
    for trip in simulate_trajectories(&n, 10, 30, 5.0, 5.0).unwrap() {
        let t: f64 = trip
            .truth
            .segments
            .iter()
            .zip(&trip.truth.speeds)
            .map(|(&s, v)| n.segments[s].length / v)
            .sum();
        assert!((t - trip.truth.travel_time).abs() < 1e-9);
    }
}

#[test]
fn paths_connected_and_timestamps_regular() {
    let n = network();
    for trip in simulate_trajectories(&n, 11, 50, 5.0, 3.0).unwrap() {
        for w in trip.truth.segments.windows(2) {
            assert!(n.adjacent(w[0], w[1]));
        }
        for w in trip.gps.points.windows(2) {
            assert!((w[1].t - w[0].t - 5.0).abs() < 1e-9);
        }
    }
}

#[test]
fn realized_speeds_track_free_speed() {
    let n = network();
    let trips = simulate_trajectories(&n, 12, 400, 5.0, 0.0).unwrap();
    let mut per_type = [(0.0, 0usize); 4];
    for t in &trips {
        for (&s, &v) in t.truth.segments.iter().zip(&t.truth.speeds) {
            let k = n.segments[s].road_type.index();
            per_type[k].0 += v;
            per_type[k].1 += 1;
        }
    }
    for rt in RoadType::ALL {
        let (sum, count) = per_type[rt.index()];
        if count < 200 {
            continue;
        }
        let mean = sum / count as f64;
        assert!((mean / rt.free_speed() - 1.0).abs() < 0.05, "{rt:?}: {mean}");
    }
    let per_seg = mean_segment_speeds(&n, &trips);
    for (s, v) in per_seg.iter().enumerate() {
        if let Some(v) = v {
            assert!(*v > 0.5 * n.segments[s].free_speed && *v < 1.5 * n.segments[s].free_speed);
        }
    }
}

#[test]
fn road_types_cover_all_classes() {
    let n = generate_road_network(1, 25, 25, 0.1).unwrap();
    let mut counts = [0usize; 4];
    n.segments.iter().for_each(|s| counts[s.road_type.index()] += 1);
    for c in counts {
        assert!(c as f64 > 0.15 * n.len() as f64, "{counts:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_network_is_connected_and_symmetric(seed in 0u64..1000, rows in 2usize..8, cols in 2usize..8, drop in 0.0f64..0.49) {
        let n = generate_road_network(seed, rows, cols, drop).unwrap();
        prop_assert!(n.is_connected());
        for s in 0..n.len() {
            for &u in &n.neighbors[s] {
                prop_assert!(n.neighbors[u].contains(&s));
            }
        }
    }
}
