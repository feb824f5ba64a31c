use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajfuse::eval::tasks::classify;
use trajfuse::eval::*;

// per-class F1 written out from the confusion counts
fn oracle_f1(truth: &[usize], pred: &[usize], c: usize) -> f64 {
    let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
    let fp = truth.iter().zip(pred).filter(|(t, p)| **t != c && **p == c).count() as f64;
    let fn_ = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p != c).count() as f64;
    let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if prec + rec > 0.0 {
        2.0 * prec * rec / (prec + rec)
    } else {
        0.0
    }
}

#[test]
fn perfect_classifier_scores_one() {
    let y = [0, 1, 2, 3, 1, 2];
    assert_eq!(micro_f1(&y, &y).unwrap(), 1.0);
    assert_eq!(macro_f1(&y, &y).unwrap(), 1.0);
}

#[test]
fn majority_predictor_on_balanced_four_classes() {
    let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let pred = vec![2; 40];
    assert_abs_diff_eq!(micro_f1(&truth, &pred).unwrap(), 0.25, epsilon = 1e-12);
}

#[test]
fn macro_f1_is_mean_of_per_class_f1() {
    let truth = [0, 0, 1, 1, 2, 2, 2];
    let pred = [0, 1, 1, 1, 2, 0, 2];
    let want = (0..3).map(|c| oracle_f1(&truth, &pred, c)).sum::<f64>() / 3.0;
    assert_abs_diff_eq!(macro_f1(&truth, &pred).unwrap(), want, epsilon = 1e-12);
}

#[test]
fn macro_f1_skips_classes_absent_from_both_sides() {
    let truth = [0, 0, 1];
    let pred = [0, 1, 1];
    let want = (oracle_f1(&truth, &pred, 0) + oracle_f1(&truth, &pred, 1)) / 2.0;
    assert_abs_diff_eq!(macro_f1(&truth, &pred).unwrap(), want, epsilon = 1e-12);
}

#[test]
fn regression_arithmetic() {
    assert_abs_diff_eq!(mae(&[5.0, 7.0], &[6.0, 9.0]).unwrap(), 1.5);
    assert_abs_diff_eq!(rmse(&[5.0, 7.0], &[6.0, 9.0]).unwrap(), 2.5f64.sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(rmse(&[5.0, 7.0], &[6.0, 9.0]).unwrap(), 1.58114, epsilon = 1e-5);
    assert_abs_diff_eq!(mae(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.5);
    assert_eq!(mae(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
    assert_eq!(rmse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
}

#[test]
fn mean_predictor_rmse_is_population_std() {
    let y = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    assert_abs_diff_eq!(rmse(&y, &[mean; 8]).unwrap(), 2.0, epsilon = 1e-12);
}

#[test]
fn acc_at_k_counts_any_hit() {
    assert_eq!(accuracy_at_k(&[3], &[vec![1, 3]], 2).unwrap(), 1.0);
    assert_eq!(accuracy_at_k(&[3], &[vec![1, 3]], 1).unwrap(), 0.0);
}

#[test]
fn errors_on_bad_input() {
    assert_eq!(mae(&[], &[]), Err(MetricError::Empty));
    assert_eq!(micro_f1(&[1], &[1, 2]), Err(MetricError::Length(1, 2)));
    assert!(matches!(
        accuracy_at_k(&[0], &[vec![0, 1]], 3),
        Err(MetricError::TooFewCandidates { k: 3, available: 2 })
    ));
}

#[test]
fn top_k_breaks_ties_low() {
    assert_eq!(top_k(&[0.1, 0.5, 0.5, 0.2], 3), vec![1, 2, 3]);
}

#[test]
fn uniform_random_scorer_hits_k_over_v() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v = 40;
    let n = 20_000;
    let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..v)).collect();
    let ranked: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let s: Vec<f64> = (0..v).map(|_| rng.gen()).collect();
            top_k(&s, 5)
        })
        .collect();
    for k in [1, 5] {
        let acc = accuracy_at_k(&truth, &ranked, k).unwrap();
        let p = k as f64 / v as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((acc - p).abs() < 4.0 * se, "k={k}: {acc} vs {p}");
    }
}

#[test]
fn probe_on_random_features_is_near_chance() {
    let mut f1 = Vec::new();
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 600u64;
        let table: BTreeMap<u64, Vec<f64>> = (0..n).map(|k| (k, (0..64).map(|_| rng.gen::<f64>() - 0.5).collect())).collect();
        let labels: BTreeMap<u64, usize> = (0..n).map(|k| (k, (k % 4) as usize)).collect();
        let train: Vec<u64> = (0..400).collect();
        let test: Vec<u64> = (400..n).collect();
        let cfg = ProbeConfig {
            seed,
            ..ProbeConfig::default()
        };
        let p = classify("road_label", &table, &labels, 4, &train, &test, &cfg).unwrap();
        f1.push(p.report.metrics["micro_f1"]);
    }
    let mean = f1.iter().sum::<f64>() / 3.0;
    assert!((mean - 0.25).abs() <= 0.07, "{f1:?}");
}

#[test]
fn probe_learns_a_separable_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let table: BTreeMap<u64, Vec<f64>> = (0..300u64).map(|k| (k, (0..8).map(|_| rng.gen::<f64>() - 0.5).collect())).collect();
    let labels: BTreeMap<u64, usize> = table.iter().map(|(&k, v)| (k, usize::from(v[0] > 0.0) + 2 * usize::from(v[1] > 0.0))).collect();
    let values: BTreeMap<u64, f64> = table.iter().map(|(&k, v)| (k, 3.0 * v[2] - v[3] + 10.0)).collect();
    let train: Vec<u64> = (0..240).collect();
    let test: Vec<u64> = (240..300).collect();
    let cfg = ProbeConfig {
        epochs: 200,
        lr: 1e-2,
        ..ProbeConfig::default()
    };
    let c = classify("t", &table, &labels, 4, &train, &test, &cfg).unwrap();
    assert!(c.report.metrics["micro_f1"] > 0.85, "{:?}", c.report);
    let r = tasks::regress("r", &table, &values, &train, &test, &cfg).unwrap();
    assert!(r.report.metrics["mae"] < 0.15, "{:?}", r.report);
}

#[test]
fn random_control_is_seeded_and_shaped() {
    let mut like = EmbeddingTables::default();
    like.segments.insert(3, vec![0.0; 64]);
    like.segments.insert(9, vec![0.0; 64]);
    like.travel.insert(1, vec![0.0; 256]);
    like.destination.insert(1, vec![0.0; 256]);
    let a = random_control(&like, 7);
    assert_eq!(a, random_control(&like, 7));
    assert_ne!(a, random_control(&like, 8));
    assert_eq!(a.segment_width(), 64);
    assert_eq!(a.trajectory_width(), 256);
    assert_eq!(a.segments.keys().collect::<Vec<_>>(), vec![&3, &9]);
}

fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(|n| (prop::collection::vec(0usize..5, n), prop::collection::vec(0usize..5, n)))
}

proptest! {
    #[test]
    fn micro_f1_equals_accuracy((truth, pred) in labels_strategy()) {
        let acc = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / truth.len() as f64;
        prop_assert!((micro_f1(&truth, &pred).unwrap() - acc).abs() < 1e-12);
    }

    #[test]
    fn f1_in_unit_interval((truth, pred) in labels_strategy()) {
        for v in [micro_f1(&truth, &pred).unwrap(), macro_f1(&truth, &pred).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn rmse_dominates_mae(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (a, r) = (mae(&t, &p).unwrap(), rmse(&t, &p).unwrap());
        prop_assert!(a >= 0.0);
        prop_assert!(r + 1e-9 >= a);
    }

    #[test]
    fn acc_at_k_is_monotone(scores in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 8), 1..30), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = scores.iter().map(|_| rng.gen_range(0..8)).collect();
        let ranked: Vec<Vec<usize>> = scores.iter().map(|s| top_k(s, 8)).collect();
        let mut prev = 0.0;
        for k in 1..=8 {
            let a = accuracy_at_k(&truth, &ranked, k).unwrap();
            prop_assert!(a >= prev);
            prev = a;
        }
        prop_assert_eq!(prev, 1.0);
    }
}
