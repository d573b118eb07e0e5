mod common;

use std::collections::BTreeMap;

use common::{brute_force_auc, scan_argmax};
use glore_core::classify::{fit_linear_probe_with, mixed_score, sigmoid, zero_shot_scores_from_features};
use glore_core::encoders::Modality;
use glore_core::report::class_targets;
use glore_core::{
    classify_argmax, fit_linear_probe, probe_predict, LabelValue, LabelVector, LocalGlobalFeatures, Pathology,
    ProbeConfig, ProbeModel, PromptSet, Tensor, UncertainPolicy, ZeroShotConfig,
};
use proptest::prelude::*;
use rand::Rng;

const DIM: usize = 6;

/// Per pathology `p`, feature `p` sits near +2 for positives and -2 for
/// negatives; the last feature is noise.
fn separable(n: usize, seed: u64) -> (Tensor, Vec<LabelVector>) {
    let mut rng = common::rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut l = LabelVector::blank();
        let mut row = vec![0.0; DIM];
        for p in Pathology::ALL {
            let pos = (i + p.index()) % 3 == 0 || rng.gen_bool(0.2);
            l.set(p, if pos { LabelValue::Positive } else { LabelValue::Negative });
            row[p.index()] = if pos { 2.0 } else { -2.0 } + rng.gen_range(-1.0..1.0);
        }
        row[DIM - 1] = rng.gen_range(-1.0..1.0);
        rows.push(row);
        labels.push(l);
    }
    (Tensor::from_rows(&rows).unwrap(), labels)
}

#[test]
fn separable_clusters_reach_perfect_training_auc() {
    let (x, y) = separable(200, 1);
    let model = fit_linear_probe(&x, &y, &ProbeConfig::default()).unwrap();
    let probs = probe_predict(&model, &x).unwrap();
    for p in Pathology::ALL {
        let col: Vec<f64> = (0..x.rows()).map(|r| probs.get(r, p.index())).collect();
        let (s, t) = class_targets(&col, &y, p, UncertainPolicy::Exclude);
        assert_eq!(brute_force_auc(&s, &t), 1.0, "{p:?}");
    }
}

#[test]
fn probe_loss_never_increases_at_small_rate() {
    let (x, y) = separable(120, 2);
    let cfg = ProbeConfig {
        epochs: 300,
        learning_rate: 1e-2,
        ..ProbeConfig::default()
    };
    let mut losses = Vec::new();
    fit_linear_probe_with(&x, &y, &cfg, |_, l| losses.push(l)).unwrap();
    assert_eq!(losses.len(), 301);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn untrained_probe_predicts_one_half() {
    let (x, y) = separable(10, 3);
    let cfg = ProbeConfig {
        epochs: 0,
        ..ProbeConfig::default()
    };
    let model = fit_linear_probe(&x, &y, &cfg).unwrap();
    assert!(probe_predict(&model, &x).unwrap().data().iter().all(|&p| p == 0.5));
}

#[test]
fn fully_masked_pathology_keeps_zero_weights() {
    let (x, mut y) = separable(50, 4);
    for l in &mut y {
        l.set(Pathology::Edema, LabelValue::Uncertain);
    }
    let model = fit_linear_probe(&x, &y, &ProbeConfig::default()).unwrap();
    assert_eq!(model.skipped, vec![Pathology::Edema]);
    assert!(model.weights.row(Pathology::Edema.index()).iter().all(|&w| w == 0.0));
    assert_eq!(model.bias[Pathology::Edema.index()], 0.0);
}

#[test]
fn uncertain_policies_differ_only_where_labels_are_uncertain() {
    let (x, mut y) = separable(80, 5);
    for (i, l) in y.iter_mut().enumerate() {
        if i % 5 == 0 {
            l.set(Pathology::Cardiomegaly, LabelValue::Uncertain);
        }
    }
    let fit = |policy| {
        let cfg = ProbeConfig {
            epochs: 50,
            uncertain_policy: policy,
            ..ProbeConfig::default()
        };
        fit_linear_probe(&x, &y, &cfg).unwrap()
    };
    let excluded = fit(UncertainPolicy::Exclude);
    let as_pos = fit(UncertainPolicy::Positive);
    for p in Pathology::ALL {
        let same = excluded.weights.row(p.index()) == as_pos.weights.row(p.index())
            && excluded.bias[p.index()] == as_pos.bias[p.index()];
        assert_eq!(same, p != Pathology::Cardiomegaly, "{p:?}");
    }
}

#[test]
fn predictions_match_scalar_oracle() {
    let mut rng = common::rng(6);
    for _ in 0..20 {
        let d = rng.gen_range(1..10);
        let mut model = ProbeModel::zeros(d, &ProbeConfig::default()).unwrap();
        model.weights = common::random_matrix(&mut rng, 5, d);
        for b in &mut model.bias {
            *b = rng.gen_range(-1.0..1.0);
        }
        let x = common::random_matrix(&mut rng, 7, d);
        let got = probe_predict(&model, &x).unwrap();
        for r in 0..7 {
            for k in 0..5 {
                let z = common::dot(x.row(r), model.weights.row(k)) + model.bias[k];
                let want = 1.0 / (1.0 + (-z).exp());
                assert!((got.get(r, k) - want).abs() < 1e-12);
            }
        }
    }
    assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) == 0.0);
    assert!(probe_predict(&ProbeModel::zeros(3, &ProbeConfig::default()).unwrap(), &Tensor::zeros(&[1, 4]).unwrap()).is_err());
}

fn feat(local: Vec<Vec<f64>>, global: Vec<f64>, modality: Modality) -> LocalGlobalFeatures {
    LocalGlobalFeatures {
        local: Tensor::from_rows(&local).unwrap(),
        global: Tensor::vector(global).unwrap(),
        modality,
    }
}

fn basis(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; 5];
    v[k] = 1.0;
    v
}

#[test]
fn matching_global_prompt_scores_one_and_wins() {
    let image = feat(vec![basis(0)], basis(2), Modality::Image);
    let prompts: Vec<Vec<LocalGlobalFeatures>> =
        (0..5).map(|k| vec![feat(vec![basis(k)], basis(k), Modality::Text)]).collect();
    let cfg = ZeroShotConfig {
        global_weight: 1.0,
        ..ZeroShotConfig::default()
    };
    let scores = zero_shot_scores_from_features(&[image.clone()], &prompts, &cfg).unwrap();
    assert_eq!(scores.row(0), &[0.0, 0.0, 1.0, 0.0, 0.0]);
    assert_eq!(classify_argmax(&scores), vec![2]);

    let mut doubled = prompts.clone();
    let dup = doubled[3][0].clone();
    doubled[3].push(dup);
    let mixed = ZeroShotConfig::default();
    assert_eq!(
        zero_shot_scores_from_features(&[image.clone()], &doubled, &mixed).unwrap(),
        zero_shot_scores_from_features(&[image.clone()], &prompts, &mixed).unwrap()
    );
    let half = mixed_score(&image, &prompts[2][0], &mixed).unwrap();
    assert_eq!(half, 0.5);
}

#[test]
fn prompt_sets_need_every_pathology() {
    let mut map = BTreeMap::new();
    map.insert(Pathology::Edema, vec!["edema".to_string()]);
    assert!(PromptSet::new(map).is_err());
    let defaults = PromptSet::default_templates();
    for p in Pathology::ALL {
        assert!(!defaults.get(p).is_empty());
    }
}

proptest! {
    #[test]
    fn argmax_agrees_with_scan(rows in prop::collection::vec(prop::collection::vec(-3i32..3, 5), 1..20)) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        let t = Tensor::from_rows(&rows).unwrap();
        let want: Vec<usize> = rows.iter().map(|r| scan_argmax(r)).collect();
        prop_assert_eq!(classify_argmax(&t), want);
    }

    #[test]
    fn row_shift_keeps_argmax(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 5), 1..20), shift in -4i32..4) {
        let t = Tensor::from_rows(&rows).unwrap();
        // integer shifts of quarter-integers keep every comparison exact
        let q: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| (v * 4.0).round() / 4.0).collect()).collect();
        let shifted: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|v| v + f64::from(shift)).collect()).collect();
        prop_assert_eq!(classify_argmax(&Tensor::from_rows(&q).unwrap()), classify_argmax(&Tensor::from_rows(&shifted).unwrap()));
        prop_assert_eq!(classify_argmax(&t).len(), rows.len());
    }
}
