//! Brute-force reimplementation of the classification metrics, compared on
//! random instances.

use nirmal_core::metrics::confusion;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Weighted F1 computed directly from the label/prediction lists with
/// per-class counting loops; no confusion matrix involved.
fn weighted_f1_brute(preds: &[usize], labels: &[usize], k: usize) -> f64 {
    let total = labels.len() as f64;
    let mut out = 0.0;
    for class in 0..k {
        let tp = preds
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p == class && l == class)
            .count() as f64;
        let pred_count = preds.iter().filter(|&&p| p == class).count() as f64;
        let support = labels.iter().filter(|&&l| l == class).count() as f64;
        let precision = if pred_count == 0.0 { 0.0 } else { tp / pred_count };
        let recall = if support == 0.0 { 0.0 } else { tp / support };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        out += support / total * f1;
    }
    out
}

#[test]
fn weighted_f1_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for trial in 0..1000 {
        let k = rng.random_range(2..=5usize);
        let n = rng.random_range(1..=50usize);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let rep = confusion(&preds, &labels, k).unwrap().report().unwrap();
        let want = weighted_f1_brute(&preds, &labels, k);
        assert!(
            (rep.weighted_f1 - want).abs() <= 1e-12,
            "trial {trial}: {} vs {want}",
            rep.weighted_f1
        );
        // Accuracy against the direct comparison oracle.
        let acc = preds.iter().zip(&labels).filter(|&(p, l)| p == l).count() as f64 / n as f64;
        assert!((rep.accuracy - acc).abs() <= 1e-15);
    }
}

#[test]
fn confusion_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3141);
    for _ in 0..50 {
        let k = 10usize;
        let n = rng.random_range(1..=200usize);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let cm = confusion(&preds, &labels, k).unwrap();
        for t in 0..k {
            for p in 0..k {
                let want = labels
                    .iter()
                    .zip(&preds)
                    .filter(|&(&l, &pr)| l == t && pr == p)
                    .count() as u64;
                assert_eq!(cm.count(t, p), want);
            }
        }
    }
}

#[test]
fn class_permutation_preserves_aggregates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1618);
    for _ in 0..100 {
        let k = rng.random_range(2..=5usize);
        let n = rng.random_range(5..=50usize);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();

        // A rotation is a simple consistent relabeling.
        let rot = |v: &[usize]| -> Vec<usize> { v.iter().map(|&x| (x + 1) % k).collect() };
        let a = confusion(&preds, &labels, k).unwrap().report().unwrap();
        let b = confusion(&rot(&preds), &rot(&labels), k)
            .unwrap()
            .report()
            .unwrap();
        assert!((a.accuracy - b.accuracy).abs() <= 1e-12);
        assert!((a.weighted_f1 - b.weighted_f1).abs() <= 1e-12);
        // Per-class rows permute along.
        for c in 0..k {
            let d = (c + 1) % k;
            assert_eq!(a.per_class[c].support, b.per_class[d].support);
            assert!((a.per_class[c].f1 - b.per_class[d].f1).abs() <= 1e-12);
        }
    }
}

#[test]
fn aggregates_stay_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    for _ in 0..200 {
        let k = rng.random_range(2..=6usize);
        let n = rng.random_range(1..=30usize);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let rep = confusion(&preds, &labels, k).unwrap().report().unwrap();
        for v in [rep.accuracy, rep.weighted_f1, rep.macro_f1] {
            assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }
}
