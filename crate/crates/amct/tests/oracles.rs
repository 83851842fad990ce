mod common;

use amct::data::TaskKind;
use amct::losses::{align_loss, motif_contrastive_loss, supervised_loss};
use amct::tensor::{Tape, Tensor};
use amct::train::{auc, rmse};
use common::{brute_auc, brute_contrastive};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn scalar_align(h: &[Vec<f64>], z: &[Vec<f64>], t: f64) -> f64 {
    let mut total = 0.0;
    for (hr, zr) in h.iter().zip(z) {
        let p = softmax(&hr.iter().map(|v| v / t).collect::<Vec<_>>());
        let q = softmax(&zr.iter().map(|v| v / t).collect::<Vec<_>>());
        total += p
            .iter()
            .zip(&q)
            .map(|(a, b)| a * (a.ln() - b.ln()))
            .sum::<f64>();
    }
    t * t * total / h.len() as f64
}

fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect()
}

fn align_value(h: &[Vec<f64>], z: &[Vec<f64>], t: f64) -> f64 {
    let mut tape = Tape::new();
    let hv = tape.constant(Tensor::from_rows(h).unwrap());
    let zv = tape.constant(Tensor::from_rows(z).unwrap());
    let l = align_loss(&mut tape, hv, zv, t).unwrap();
    tape.value(l).item()
}

fn contrastive_value(r: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::from_rows(r).unwrap());
    let l = motif_contrastive_loss(&mut tape, v, labels).unwrap();
    tape.value(l).item()
}

#[test]
fn align_of_identical_views_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in [0.5, 1.0, 4.0, 10.0] {
        let h = rows(&mut rng, 5, 7, 3.0);
        assert!(align_value(&h, &h, t).abs() <= 1e-12);
    }
}

#[test]
fn align_matches_scalar_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in [1.0, 2.0, 4.0] {
        let h = rows(&mut rng, 4, 6, 2.0);
        let z = rows(&mut rng, 4, 6, 2.0);
        let got = align_value(&h, &z, t);
        let want = scalar_align(&h, &z, t);
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "{got} vs {want}"
        );
        assert!(got > 0.0);
    }
}

#[test]
fn single_label_class_gives_zero_contrast() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for l in [1, 2, 7, 16] {
        let r = rows(&mut rng, l, 5, 1.0);
        assert!(contrastive_value(&r, &vec![3; l]).abs() <= 1e-12);
    }
}

#[test]
fn contrast_matches_pair_loop_on_small_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let l = rng.gen_range(1..=16);
        let r = rows(&mut rng, l, 4, 1.5);
        let labels: Vec<usize> = (0..l).map(|_| rng.gen_range(0..4)).collect();
        let got = contrastive_value(&r, &labels);
        let want = brute_contrastive(&r, &labels);
        assert!(
            (got - want).abs() <= 1e-12,
            "{got} vs {want} for {labels:?}"
        );
    }
}

#[test]
fn supervised_two_by_two() {
    let logits = [[0.3, -1.2], [2.0, 0.5]];
    let targets = [[1.0, 0.0], [0.0, 1.0]];
    let present = [true, false, true, true];
    let flat = |m: [[f64; 2]; 2]| Tensor::new(vec![2, 2], m.concat()).unwrap();

    let bce = |x: f64, y: f64| {
        let s = 1.0 / (1.0 + (-x).exp());
        -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
    };
    let mut want_c = 0.0;
    let mut want_r = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            if present[i * 2 + j] {
                want_c += bce(logits[i][j], targets[i][j]) / 3.0;
                want_r += (logits[i][j] - targets[i][j]).powi(2) / 3.0;
            }
        }
    }
    for (task, want) in [
        (TaskKind::Classification, want_c),
        (TaskKind::Regression, want_r),
    ] {
        let mut tape = Tape::new();
        let x = tape.constant(flat(logits));
        let l = supervised_loss(&mut tape, x, &flat(targets), &present, task).unwrap();
        let got = tape.value(l).item();
        assert!((got - want).abs() <= 1e-12, "{task:?}: {got} vs {want}");
    }
}

#[test]
fn auc_matches_all_pairs_on_500_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut scored = 0;
    for _ in 0..500 {
        let n = rng.gen_range(2..=12);
        // Few distinct values force ties.
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let got = auc(&scores, &labels);
        let want = brute_auc(&scores, &labels);
        assert_eq!(got.is_some(), want.is_some());
        if let (Some(g), Some(w)) = (got, want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
            scored += 1;
        }
    }
    assert!(scored > 400);
}

#[test]
fn auc_hand_case_with_tie() {
    let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.2];
    let labels = [false, true, false, true, false, true];
    assert_eq!(auc(&scores, &labels), brute_auc(&scores, &labels));
    assert_eq!(auc(&scores, &labels), Some(6.5 / 9.0));
}

#[test]
fn rmse_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.gen_range(1..20);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let want = (p
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        assert!((rmse(&p, &y).unwrap() - want).abs() <= 1e-12);
    }
    assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]), Some(0.0));
}

proptest! {
    #[test]
    fn auc_is_a_probability(
        pairs in prop::collection::vec((0u8..6, any::<bool>()), 2..40)
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        if let Some(a) = auc(&scores, &labels) {
            prop_assert!((0.0..=1.0).contains(&a));
            // Negating scores reflects the AUC.
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let b = auc(&neg, &labels).unwrap();
            prop_assert!((a + b - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn contrastive_is_non_negative(seed in any::<u64>(), l in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rows(&mut rng, l, 3, 2.0);
        let labels: Vec<usize> = (0..l).map(|_| rng.gen_range(0..3)).collect();
        prop_assert!(contrastive_value(&r, &labels) >= -1e-12);
    }

    #[test]
    fn align_is_non_negative(seed in any::<u64>(), t in 0.5f64..8.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rows(&mut rng, 3, 4, 3.0);
        let z = rows(&mut rng, 3, 4, 3.0);
        prop_assert!(align_value(&h, &z, t) >= -1e-12);
    }
}
