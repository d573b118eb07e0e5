mod common;

use common::brute_force_auc;
use glore_core::metrics::aggregate_over_seeds;
use glore_core::{aggregate_auc, roc_auc, Error};
use proptest::prelude::*;
use rand::Rng;

/// Scores drawn from a few levels so ties are common.
fn tied_case(rng: &mut impl Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..80);
    let levels = rng.gen_range(1..6);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.25).collect();
    (scores, labels)
}

#[test]
fn matches_pairwise_oracle_with_ties() {
    let mut rng = common::rng(21);
    for _ in 0..500 {
        let (s, y) = tied_case(&mut rng);
        let got = roc_auc(&s, &y).unwrap().auc;
        assert!((got - brute_force_auc(&s, &y)).abs() < 1e-12);
    }
}

#[test]
fn negated_scores_are_exactly_complementary() {
    let mut rng = common::rng(22);
    for _ in 0..500 {
        let (s, y) = tied_case(&mut rng);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert_eq!(roc_auc(&s, &y).unwrap().auc + roc_auc(&neg, &y).unwrap().auc, 1.0);
    }
}

#[test]
fn extremes_and_errors() {
    let y = [true, true, false, false];
    assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &y).unwrap().auc, 1.0);
    assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &y).unwrap().auc, 0.0);
    assert_eq!(roc_auc(&[0.5; 4], &y).unwrap().auc, 0.5);
    assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedAuc { .. })));
    assert!(roc_auc(&[0.1, f64::NAN], &[true, false]).is_err());
}

#[test]
fn curve_is_monotone_and_area_matches() {
    let mut rng = common::rng(23);
    for _ in 0..200 {
        let (s, y) = tied_case(&mut rng);
        let c = roc_auc(&s, &y).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        assert!((c.trapezoid_area() - c.auc).abs() < 1e-12);
    }
}

#[test]
fn table_row_averages() {
    let chexpert = [0.685, 0.628, 0.694, 0.754, 0.717];
    let chexphoto = [0.719, 0.587, 0.700, 0.784, 0.694];
    assert_eq!(format!("{:.3}", aggregate_auc(&chexpert).unwrap().mean), "0.696");
    assert_eq!(format!("{:.3}", aggregate_auc(&chexphoto).unwrap().mean), "0.697");
}

#[test]
fn aggregation_is_population_std() {
    let s = aggregate_auc(&[0.8]).unwrap();
    assert_eq!((s.mean, s.std), (0.8, 0.0));
    let s = aggregate_auc(&[0.5, 1.0]).unwrap();
    assert!((s.std - 0.25).abs() < 1e-15);
    assert!(aggregate_auc(&[]).is_err());
    let seeds = aggregate_over_seeds(&[vec![0.6, 0.8], vec![0.8, 1.0]]).unwrap();
    assert!((seeds.mean - 0.8).abs() < 1e-15 && (seeds.std - 0.1).abs() < 1e-15);
}

proptest! {
    #[test]
    fn invariant_under_increasing_transforms(
        raw in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..60),
    ) {
        let (s, mut y): (Vec<f64>, Vec<bool>) = raw.into_iter().unzip();
        y[0] = true;
        y[1] = false;
        let base = roc_auc(&s, &y).unwrap().auc;
        let cubed: Vec<f64> = s.iter().map(|v| v * v * v + 2.0).collect();
        let squashed: Vec<f64> = s.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        prop_assert_eq!(roc_auc(&cubed, &y).unwrap().auc, base);
        prop_assert_eq!(roc_auc(&squashed, &y).unwrap().auc, base);
    }

    #[test]
    fn tie_free_trapezoid_equals_rank_statistic(seed in any::<u64>(), n in 2usize..100) {
        let mut rng = common::rng(seed);
        let mut y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        y[0] = true;
        y[1] = false;
        let s: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect();
        let c = roc_auc(&s, &y).unwrap();
        prop_assert!((c.trapezoid_area() - brute_force_auc(&s, &y)).abs() < 1e-9);
    }
}
