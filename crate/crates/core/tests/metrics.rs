mod common;

use common::random_labels;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use yesno_core::eval::{cohens_kappa, mcnemar_from_counts, score};
use yesno_core::{Label, McNemarMethod};

/// Per-label F1 as 2tp / (2tp + fp + fn), zero when the label is absent.
fn brute_f1(gold: &[Label], pred: &[Label]) -> (Vec<f64>, f64, f64, f64) {
    let mut f1s = Vec::new();
    let mut weighted = 0.0;
    for l in Label::ALL {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (g, p) in gold.iter().zip(pred) {
            match (*g == l, *p == l) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        weighted += f1 * (tp + fn_);
        f1s.push(f1);
    }
    let n = gold.len() as f64;
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64;
    let macro_f1 = f1s.iter().sum::<f64>() / 3.0;
    (f1s, macro_f1, weighted / n, correct / n)
}

/// Chance agreement summed over all n^2 cross pairs.
fn brute_kappa(a: &[Label], b: &[Label]) -> f64 {
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut cross = 0.0;
    for x in a {
        for y in b {
            if x == y {
                cross += 1.0;
            }
        }
    }
    let pe = cross / (n * n);
    (po - pe) / (1.0 - pe)
}

#[test]
fn f1_and_kappa_match_brute_force_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let gold = random_labels(&mut rng, 50);
        let pred = random_labels(&mut rng, 50);
        let report = score(&gold, &pred).unwrap();
        let (f1s, macro_f1, weighted, accuracy) = brute_f1(&gold, &pred);
        for (l, f) in Label::ALL.iter().zip(&f1s) {
            assert!((report.per_label[l].f1 - f).abs() < 1e-9);
        }
        assert!((report.macro_f1 - macro_f1).abs() < 1e-9);
        assert!((report.weighted_f1 - weighted).abs() < 1e-9);
        assert!((report.accuracy - accuracy).abs() < 1e-9);
        let k = cohens_kappa(&gold, &pred).unwrap().kappa;
        assert!((k - brute_kappa(&gold, &pred)).abs() < 1e-9);
    }
}

#[test]
fn kappa_near_zero_for_independent_annotators() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a = random_labels(&mut rng, 10_000);
    let b = random_labels(&mut rng, 10_000);
    let k = cohens_kappa(&a, &b).unwrap().kappa;
    // standard error is about 1/sqrt(n) = 0.01
    assert!(k.abs() < 0.03, "{k}");
}

#[test]
fn mcnemar_methods_agree_on_large_discordance() {
    for b in 0..=40 {
        for c in 0..=40 {
            if b + c < 25 {
                continue;
            }
            let chi = mcnemar_from_counts(b, c, McNemarMethod::ContinuityCorrectedChi2).p_value;
            let exact = mcnemar_from_counts(b, c, McNemarMethod::ExactBinomial).p_value;
            assert!((chi - exact).abs() < 0.02, "b={b} c={c}: {chi} vs {exact}");
        }
    }
}

fn labels(max: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(prop::sample::select(Label::ALL.to_vec()), 2..max)
}

proptest! {
    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((0usize..3, 0usize..3), 2..60)) {
        let a: Vec<Label> = pairs.iter().map(|p| Label::ALL[p.0]).collect();
        let b: Vec<Label> = pairs.iter().map(|p| Label::ALL[p.1]).collect();
        match (cohens_kappa(&a, &b), cohens_kappa(&b, &a)) {
            (Ok(x), Ok(y)) => prop_assert!((x.kappa - y.kappa).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric failure"),
        }
    }

    #[test]
    fn scores_are_permutation_invariant(gold in labels(80), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = random_labels(&mut rng, gold.len());
        let mut order: Vec<usize> = (0..gold.len()).collect();
        order.shuffle(&mut rng);
        let g2: Vec<Label> = order.iter().map(|&i| gold[i]).collect();
        let p2: Vec<Label> = order.iter().map(|&i| pred[i]).collect();
        let r1 = score(&gold, &pred).unwrap();
        let r2 = score(&g2, &p2).unwrap();
        prop_assert!((r1.macro_f1 - r2.macro_f1).abs() < 1e-12);
        prop_assert!((r1.weighted_f1 - r2.weighted_f1).abs() < 1e-12);
        if let (Ok(k1), Ok(k2)) = (cohens_kappa(&gold, &pred), cohens_kappa(&g2, &p2)) {
            prop_assert!((k1.kappa - k2.kappa).abs() < 1e-12);
        }
    }
}
