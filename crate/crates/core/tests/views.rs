use std::collections::BTreeSet;

use proptest::prelude::*;
use trajfuse::geo::LatLon;
use trajfuse::synth::*;
use trajfuse::views::*;

fn city() -> (RoadNetwork, Vec<Poi>) {
    let n = generate_road_network(21, 10, 10, 0.1).unwrap();
    let p = generate_pois(&n, 21, 9).unwrap();
    (n, p)
}

fn traj(points: &[(f64, f64)], network: &RoadNetwork) -> GpsTrajectory {
    GpsTrajectory {
        id: 0,
        points: points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let p = network.frame.to_latlon(x, y);
                GpsPoint {
                    lat: p.lat,
                    lon: p.lon,
                    t: 5.0 * i as f64,
                }
            })
            .collect(),
    }
}

#[test]
fn point_on_segment_is_labeled_with_it() {
    let (n, _) = city();
    for sid in [0, 7, 33] {
        let (a, b) = n.segment_xy(sid);
        let mid = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        let m = map_match(&traj(&[mid], &n), &n, 15.0, 0.0);
        assert_eq!(m.route.segments(), vec![sid]);
    }
}

#[test]
fn zero_penalty_equals_oracle() {
    let (n, _) = city();
    let trips = simulate_trajectories(&n, 4, 100, 5.0, 2.0).unwrap();
    let matcher = MapMatcher::new(&n, 15.0, 0.0);
    for t in &trips {
        let m = matcher.match_trajectory(&t.gps);
        assert_eq!(m.assignment.labels(), nearest_segment_oracle(&t.gps, &n), "trajectory {}", t.gps.id);
    }
}

#[test]
fn zero_noise_recovers_ground_truth() {
    let (n, _) = city();
    let trips = simulate_trajectories(&n, 5, 200, 5.0, 0.0).unwrap();
    let matcher = MapMatcher::new(&n, MapMatcher::DEFAULT_SIGMA, MapMatcher::DEFAULT_PENALTY);
    let exact = trips
        .iter()
        .filter(|t| {
            let m = matcher.match_trajectory(&t.gps);
            m.route.segments() == t.truth.segments
        })
        .count();
    assert!(exact as f64 >= 0.99 * trips.len() as f64, "{exact}/{}", trips.len());
}

#[test]
fn grid_index_formula_and_clamping() {
    let (n, _) = city();
    let spec = GridSpec::covering(&n, 250.0);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let id = r * spec.cols + c;
            assert_eq!(spec.cell_of(spec.cell_center(id)), id);
        }
    }
    assert_eq!(spec.cell_of(spec.max), spec.num_cells() - 1);
    assert_eq!(spec.cell_of(spec.min), 0);
    let far = LatLon {
        lat: spec.max.lat + 1.0,
        lon: spec.max.lon + 1.0,
    };
    assert_eq!(spec.cell_of(far), spec.num_cells() - 1);
}

#[test]
fn stationary_trajectory_has_one_cell() {
    let (n, pois) = city();
    let spec = GridSpec::covering(&n, 250.0);
    let c = spec.cell_center(5);
    let (x, y) = n.frame.to_xy(c);
    let t = traj(&[(x, y), (x + 3.0, y - 2.0), (x - 1.0, y + 4.0)], &n);
    let (g, b) = derive_grid_trajectory(&t, &spec, &pois);
    assert_eq!(g.len(), 1);
    assert_eq!(g.cells(), vec![5]);
    assert_eq!(b.rows(), 3);
    assert_eq!(g.entries[0].arrival, 0.0);
}

#[test]
fn semantics_are_frequencies() {
    let (n, _) = city();
    let spec = GridSpec::covering(&n, 250.0);
    let at = spec.cell_center(12);
    let pois: Vec<Poi> = [3, 3, 7]
        .iter()
        .map(|&category| Poi { position: at, category })
        .collect();
    let s = grid_semantics(12, &pois, &spec);
    assert!(!s.empty);
    assert!((s.freq[3] - 2.0 / 3.0).abs() < 1e-12);
    assert!((s.freq[7] - 1.0 / 3.0).abs() < 1e-12);
    let e = grid_semantics(13, &pois, &spec);
    assert!(e.empty);
    assert!(e.freq.iter().all(|&v| v == 0.0));
}

#[test]
fn semantics_table_agrees_and_normalizes() {
    let (n, pois) = city();
    let spec = GridSpec::covering(&n, 250.0);
    let table = SemanticsTable::new(&spec, &pois);
    for cell in (0..spec.num_cells()).step_by(7) {
        let s = table.get(cell);
        assert_eq!(s, grid_semantics(cell, &pois, &spec));
        if !s.empty {
            assert!((s.freq.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

fn sample_with(route: usize, grid: usize, gps: usize) -> Sample {
    let points: Vec<GpsPoint> = (0..gps)
        .map(|i| GpsPoint {
            lat: 0.0,
            lon: 0.0,
            t: i as f64,
        })
        .collect();
    let labels = |k: usize| -> Vec<usize> { (0..gps).map(|i| i * k.max(1) / gps.max(1)).collect() };
    Sample {
        id: (route * 1000 + grid * 10 + gps) as u64,
        gps: GpsTrajectory { id: 0, points },
        route: RouteTrajectory {
            entries: (0..route).map(|s| RouteEntry { segment: s, arrival: 0.0 }).collect(),
        },
        route_assignment: AssignmentMatrix::from_labels(&labels(route)),
        grid: GridTrajectory {
            entries: (0..grid)
                .map(|c| GridEntry {
                    cell: c,
                    sem: [0.0; POI_CATEGORIES],
                    empty: true,
                    arrival: 0.0,
                })
                .collect(),
        },
        grid_assignment: AssignmentMatrix::from_labels(&labels(grid)),
        low_confidence: false,
    }
}

#[test]
fn filter_bounds() {
    let out = filter_dataset(vec![
        sample_with(9, 20, 50),
        sample_with(10, 20, 50),
        sample_with(100, 20, 256),
        sample_with(101, 20, 257),
        sample_with(20, 9, 50),
        sample_with(20, 20, 257),
    ])
    .unwrap();
    let kept: Vec<(usize, usize)> = out.kept.iter().map(|s| (s.route.len(), s.gps.points.len())).collect();
    assert_eq!(kept, vec![(10, 50), (100, 256)]);
    assert_eq!(out.rejected.route_length, 2);
    assert_eq!(out.rejected.grid_length, 1);
    assert_eq!(out.rejected.gps_length, 2);
}

#[test]
fn valid_input_passes_unchanged() {
    let all = vec![sample_with(10, 10, 10), sample_with(50, 40, 200)];
    assert_eq!(filter_dataset(all.clone()).unwrap().kept, all);
    assert!(matches!(filter_dataset(vec![sample_with(3, 3, 3)]), Err(FilterError::Empty(_))));
}

#[test]
fn split_sizes_and_determinism() {
    let ids: Vec<u32> = (0..100).collect();
    let (a, b, c) = split_dataset(&ids, [0.8, 0.1, 0.1], 3).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
    assert_eq!(split_dataset(&ids, [0.8, 0.1, 0.1], 3).unwrap(), (a.clone(), b.clone(), c.clone()));
    let union: BTreeSet<u32> = a.iter().chain(&b).chain(&c).copied().collect();
    assert_eq!(union, ids.iter().copied().collect());
    assert!(split_dataset(&ids, [0.8, 0.3, 0.1], 3).is_err());
    assert!(split_dataset(&ids, [-0.1, 0.6, 0.5], 3).is_err());
}

#[test]
fn derived_samples_are_consistent() {
    let (n, pois) = city();
    let spec = GridSpec::covering(&n, 250.0);
    let table = SemanticsTable::new(&spec, &pois);
    let matcher = MapMatcher::new(&n, 15.0, 1.0);
    for t in simulate_trajectories(&n, 6, 60, 5.0, 5.0).unwrap() {
        let s = derive_sample(&t.gps, &matcher, &spec, &table);
        for b in [&s.route_assignment, &s.grid_assignment] {
            b.validate().unwrap();
            assert_eq!(b.rows(), s.gps.points.len());
            for row in b.dense() {
                assert_eq!(row.iter().map(|&v| v as usize).sum::<usize>(), 1);
            }
        }
        assert_eq!(s.route_assignment.unit_ids, s.route.segments());
        assert_eq!(s.grid_assignment.unit_ids, s.grid.cells());
        for (e, run) in s.route.entries.iter().zip(s.route_assignment.runs()) {
            assert_eq!(e.arrival, s.gps.points[run.start].t);
        }
        for w in s.route.segments().windows(2) {
            assert!(s.low_confidence || n.adjacent(w[0], w[1]));
        }
    }
}

proptest! {
    #[test]
    fn assignment_from_labels_is_row_stochastic(labels in prop::collection::vec(0usize..6, 1..80)) {
        let b = AssignmentMatrix::from_labels(&labels);
        prop_assert!(b.validate().is_ok());
        prop_assert_eq!(b.labels(), labels.clone());
        let mut dedup = labels.clone();
        dedup.dedup();
        prop_assert_eq!(&b.unit_ids, &dedup);
        let covered: usize = b.runs().iter().map(|r| r.len()).sum();
        prop_assert_eq!(covered, labels.len());
    }

    #[test]
    fn split_partitions_indices(n in 0usize..300, f in 0.0f64..1.0, g in 0.0f64..1.0, seed in 0u64..50) {
        let train = f;
        let val = (1.0 - f) * g;
        let test = 1.0 - train - val;
        let (a, b, c) = split_indices(n, [train, val, test], seed).unwrap();
        prop_assert_eq!(a.len(), ((train * n as f64).round() as usize).min(n));
        let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn grid_cell_ids_in_range(x in -2000.0f64..8000.0, y in -2000.0f64..8000.0) {
        let n = generate_road_network(1, 6, 6, 0.0).unwrap();
        let spec = GridSpec::covering(&n, 250.0);
        prop_assert!(spec.cell_of_xy(x, y) < spec.num_cells());
    }
}
