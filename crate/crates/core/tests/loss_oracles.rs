mod common;

use common::*;
use ordcal_core::losses::{cross_entropy, focal_loss, mdca_loss, total_loss, ts_loss, LossSpec, LossWeights, TsMode};
use ordcal_core::{LabelVector, LogitBatch, Matrix, RngSeed};
use proptest::prelude::*;

fn fd_check(spec: LossSpec, value_ref: impl Fn(&[Vec<f64>], &[usize]) -> f64, n: usize, k: usize, seed: u64, tol: f64) {
    let mut rng = RngSeed(seed).rng();
    let logits = random_logits(&mut rng, n, k, 3.0);
    let labels = random_labels(&mut rng, n, k);
    let out = spec.evaluate(&logits, &labels).unwrap();

    let flat = logits.values().as_slice().to_vec();
    let numeric = fd_gradient(|x| value_ref(&to_rows(x, k), labels.as_slice()), &flat);
    let err = rel_error(out.grad.as_slice(), &numeric);
    assert!(err < tol, "{}: relative error {err:e}", spec.name());
    let expected = value_ref(&rows_of(&logits), labels.as_slice());
    assert!((out.value - expected).abs() <= 1e-12 * expected.abs().max(1.0));
}

#[test]
fn cross_entropy_small_instance() {
    fd_check(LossSpec::CrossEntropy, ref_ce, 2, 3, 1, 1e-6);
}

#[test]
fn focal_gamma_two_instance() {
    fd_check(
        LossSpec::Focal { focal_gamma: 2.0 },
        |r, y| ref_focal(r, y, 2.0),
        4,
        4,
        2,
        1e-6,
    );
}

#[test]
fn soft_ts_instance() {
    fd_check(LossSpec::Ts { mode: TsMode::Soft }, ref_ts_soft, 4, 4, 3, 1e-6);
}

#[test]
fn mdca_instance_away_from_kinks() {
    let (n, k) = (8, 4);
    let mut rng = RngSeed(4).rng();
    let logits = random_logits(&mut rng, n, k, 3.0);
    let labels = random_labels(&mut rng, n, k);
    let gaps = ref_mdca_gaps(&rows_of(&logits), labels.as_slice());
    assert!(gaps.iter().all(|g| g.abs() > 1e-4), "instance sits on a kink: {gaps:?}");
    fd_check(LossSpec::Mdca, ref_mdca, n, k, 4, 1e-5);
}

#[test]
fn mdca_hand_value() {
    let l = LogitBatch::from_rows(&[vec![(0.7f64 / 0.3).ln(), 0.0], vec![0.0, 0.0]]).unwrap();
    let y = LabelVector::new(vec![0, 1], 2).unwrap();
    let p = ref_softmax(l.row(0));
    assert!((p[0] - 0.7).abs() < 1e-15);
    assert!((mdca_loss(&l, &y).unwrap().value - 0.1).abs() < 1e-15);
}

#[test]
fn composite_recomposes_from_components() {
    let (n, k) = (8, 4);
    let mut rng = RngSeed(5).rng();
    let logits = random_logits(&mut rng, n, k, 3.0);
    let labels = random_labels(&mut rng, n, k);
    let w = LossWeights::new(0.85, 0.10, 0.05).unwrap();
    let total = total_loss(&logits, &labels, &w, TsMode::Soft).unwrap();
    let rows = rows_of(&logits);
    let expected = 0.85 * ref_ce(&rows, labels.as_slice())
        + 0.10 * ref_mdca(&rows, labels.as_slice())
        + 0.05 * ref_ts_soft(&rows, labels.as_slice());
    assert!((total.value - expected).abs() < 1e-12);

    let ce = cross_entropy(&logits, &labels).unwrap();
    let md = mdca_loss(&logits, &labels).unwrap();
    let ts = ts_loss(&logits, &labels, TsMode::Soft).unwrap();
    for i in 0..n * k {
        let g = 0.85 * ce.grad.as_slice()[i] + 0.10 * md.grad.as_slice()[i] + 0.05 * ts.grad.as_slice()[i];
        assert!((total.grad.as_slice()[i] - g).abs() < 1e-15);
    }
}

#[test]
fn composite_degenerate_weights_are_exact() {
    let mut rng = RngSeed(6).rng();
    let logits = random_logits(&mut rng, 8, 4, 3.0);
    let labels = random_labels(&mut rng, 8, 4);
    let ce = cross_entropy(&logits, &labels).unwrap();
    let w = LossWeights::new(1.0, 0.0, 0.0).unwrap();
    assert_eq!(total_loss(&logits, &labels, &w, TsMode::Soft).unwrap(), ce);
    let ts = ts_loss(&logits, &labels, TsMode::Soft).unwrap();
    let w = LossWeights::new(0.0, 0.0, 1.0).unwrap();
    assert_eq!(total_loss(&logits, &labels, &w, TsMode::Soft).unwrap(), ts);
}

#[test]
fn focal_reduces_to_ce_on_random_batches() {
    for seed in 0..20 {
        let mut rng = RngSeed(seed).rng();
        let n = rng.random_range(1..20);
        let k = rng.random_range(2..7);
        let logits = random_logits(&mut rng, n, k, 5.0);
        let labels = random_labels(&mut rng, n, k);
        let ce = cross_entropy(&logits, &labels).unwrap();
        let fl = focal_loss(&logits, &labels, 0.0).unwrap();
        assert!((ce.value - fl.value).abs() < 1e-12);
        assert!(rel_error(ce.grad.as_slice(), fl.grad.as_slice()) < 1e-12);
    }
}

use rand::Rng;

fn batch_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..7, 1usize..33).prop_flat_map(|(k, n)| {
        (
            proptest::collection::vec(proptest::collection::vec(-6.0f64..6.0, k), n),
            proptest::collection::vec(0..k, n),
        )
    })
}

fn build(rows: &[Vec<f64>], ys: &[usize]) -> (LogitBatch, LabelVector) {
    let k = rows[0].len();
    (
        LogitBatch::from_rows(rows).unwrap(),
        LabelVector::new(ys.to_vec(), k).unwrap(),
    )
}

fn all_specs() -> Vec<LossSpec> {
    vec![
        LossSpec::CrossEntropy,
        LossSpec::Focal { focal_gamma: 2.0 },
        LossSpec::Mdca,
        LossSpec::Ts { mode: TsMode::Soft },
        LossSpec::Ts { mode: TsMode::Hard },
        LossSpec::Composite {
            weights: LossWeights::default(),
            mode: TsMode::Soft,
        },
    ]
}

proptest! {
    #[test]
    fn values_match_reference_and_ranges((rows, ys) in batch_strategy()) {
        let (l, y) = build(&rows, &ys);
        let ce = cross_entropy(&l, &y).unwrap().value;
        let fl = focal_loss(&l, &y, 2.0).unwrap().value;
        let md = mdca_loss(&l, &y).unwrap().value;
        let soft = ts_loss(&l, &y, TsMode::Soft).unwrap().value;
        let hard = ts_loss(&l, &y, TsMode::Hard).unwrap().value;
        prop_assert!(ce >= 0.0 && fl >= 0.0);
        prop_assert!((0.0..=1.0).contains(&md));
        prop_assert!((0.0..=1.0).contains(&soft) && (0.0..=1.0).contains(&hard));
        prop_assert!((ce - ref_ce(&rows, &ys)).abs() < 1e-12 * ce.max(1.0));
        prop_assert!((fl - ref_focal(&rows, &ys, 2.0)).abs() < 1e-12 * fl.max(1.0));
        prop_assert!((md - ref_mdca(&rows, &ys)).abs() < 1e-12);
        prop_assert!((soft - ref_ts_soft(&rows, &ys)).abs() < 1e-12);
        prop_assert!((hard - ref_ts_hard(&rows, &ys)).abs() < 1e-15);
    }

    #[test]
    fn losses_are_shift_invariant((rows, ys) in batch_strategy(), shifts in proptest::collection::vec(-50.0f64..50.0, 32)) {
        let (l, y) = build(&rows, &ys);
        let shifted: Vec<Vec<f64>> = rows.iter().zip(&shifts).map(|(r, s)| r.iter().map(|z| z + s).collect()).collect();
        let (ls, _) = build(&shifted, &ys);
        for spec in all_specs() {
            let a = spec.evaluate(&l, &y).unwrap().value;
            let b = spec.evaluate(&ls, &y).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9, "{}: {a} vs {b}", spec.name());
        }
    }

    #[test]
    fn hard_ts_is_permutation_invariant((rows, ys) in batch_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut RngSeed(seed).rng());
        let prow: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let pys: Vec<usize> = order.iter().map(|&i| ys[i]).collect();
        let (a, ya) = build(&rows, &ys);
        let (b, yb) = build(&prow, &pys);
        let va = ts_loss(&a, &ya, TsMode::Hard).unwrap().value;
        let vb = ts_loss(&b, &yb, TsMode::Hard).unwrap().value;
        prop_assert!((va - vb).abs() < 1e-15);
    }

    #[test]
    fn row_gradients_sum_to_zero((rows, ys) in batch_strategy()) {
        let (l, y) = build(&rows, &ys);
        for spec in [LossSpec::CrossEntropy, LossSpec::Focal { focal_gamma: 2.0 }, LossSpec::Composite { weights: LossWeights::default(), mode: TsMode::Soft }] {
            let out = spec.evaluate(&l, &y).unwrap();
            prop_assert!(out.grad.is_finite());
            for r in out.grad.row_iter() {
                prop_assert!(r.iter().sum::<f64>().abs() < 1e-9);
            }
        }
    }
}

#[test]
fn hard_ts_class_distance_table() {
    let k = 4;
    for truth in 0..k {
        for pred in 0..k {
            let mut row = vec![0.0; k];
            row[pred] = 3.0;
            let l = LogitBatch::new(Matrix::from_vec(1, k, row).unwrap()).unwrap();
            let y = LabelVector::new(vec![truth], k).unwrap();
            let v = ts_loss(&l, &y, TsMode::Hard).unwrap().value;
            let delta = truth.abs_diff(pred) as f64;
            assert_eq!(v, (delta / 3.0).powi(2));
        }
    }
}
