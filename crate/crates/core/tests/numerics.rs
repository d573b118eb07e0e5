mod common;

use common::{naive_lse, naive_softmax, random_matrix, to_rows};
use glore_core::numerics::gradcheck::relative_error;
use glore_core::{Tape, Tensor};
use proptest::prelude::*;

#[test]
fn gradient_suite_small() {
    let res = common::gradient_suite(10, 11);
    assert!(res.max_rel_error < 1e-4, "{res:?}");
    assert!(res.elements > 10 * 500);
}

#[test]
fn matmul_matches_loops() {
    let mut rng = common::rng(3);
    let a = random_matrix(&mut rng, 4, 6);
    let b = random_matrix(&mut rng, 6, 3);
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let c = tape.matmul(va, vb).unwrap();
    let c = tape.value(c);
    for i in 0..4 {
        for j in 0..3 {
            let want: f64 = (0..6).map(|k| a.get(i, k) * b.get(k, j)).sum();
            assert!((c.get(i, j) - want).abs() < 1e-14);
        }
    }
}

#[test]
fn relative_error_uses_floor_for_tiny_gradients() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
}

fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 1usize..7).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(-30.0f64..30.0, c), r))
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(rows in matrix_strategy(), scale in 0.1f64..8.0) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&rows).unwrap());
        let y = tape.softmax_rows(x, scale).unwrap();
        for (row, out) in rows.iter().zip(to_rows(tape.value(y))) {
            let sum: f64 = out.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(out.iter().all(|p| *p >= 0.0));
            if row.iter().all(|v| (v * scale).abs() < 300.0) {
                let want = naive_softmax(&row.iter().map(|v| v * scale).collect::<Vec<_>>());
                for (a, b) in out.iter().zip(want) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn logsumexp_is_stable_and_matches(rows in matrix_strategy(), shift in -700.0f64..700.0) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&rows).unwrap());
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let xs = tape.constant(Tensor::from_rows(&shifted).unwrap());
        let y = tape.logsumexp_rows(x).unwrap();
        let ys = tape.logsumexp_rows(xs).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let got = tape.value(y).data()[i];
            prop_assert!((got - naive_lse(row)).abs() < 1e-10);
            let got_s = tape.value(ys).data()[i];
            prop_assert!(got_s.is_finite());
            prop_assert!((got_s - got - shift).abs() < 1e-9 * (1.0 + shift.abs()));
        }
    }

    #[test]
    fn normalized_rows_have_unit_norm(rows in matrix_strategy()) {
        prop_assume!(rows.iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&rows).unwrap());
        let y = tape.l2_normalize_rows(x).unwrap();
        for out in to_rows(tape.value(y)) {
            let n: f64 = out.iter().map(|v| v * v).sum();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_rows_bounded(a in matrix_strategy(), seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let b = random_matrix(&mut rng, a.len(), a[0].len());
        let mut tape = Tape::new();
        let va = tape.constant(Tensor::from_rows(&a).unwrap());
        let vb = tape.constant(b);
        let c = tape.cosine_rows(va, vb).unwrap();
        prop_assert!(tape.value(c).data().iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }
}
