mod oracles;

use gazelab_core::model::metrics::{auc, roc_curve};
use gazelab_core::stats::*;
use oracles::*;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const TAILS: [Tails; 3] = [Tails::Two, Tails::Greater, Tails::Less];

/// Values on a coarse grid so ties are common.
fn sample(r: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<f64> {
    (0..n).map(|_| (r.random_range(0.0..8.0f64) + shift).round() / 2.0).collect()
}

fn exact(mode: ExactMode, tails: Tails) -> RankOptions {
    RankOptions { tails, exact: mode, continuity: true }
}

#[test]
fn mann_whitney_exact_equals_enumeration() {
    let mut r = gazelab_core::rng::rng(1);
    for case in 0..300 {
        let n1 = r.random_range(1..=8);
        let n2 = r.random_range(1..=12 - n1);
        let a = sample(&mut r, n1, 1.0);
        let b = sample(&mut r, n2, 0.0);
        for tails in TAILS {
            let res = mann_whitney_u(&a, &b, &exact(ExactMode::Auto, tails)).unwrap();
            let f = res.exact.expect("small samples are exact");
            assert!(same_fraction((f.count, f.total), mann_whitney_brute(&a, &b, tails)), "case {case} {tails:?}");
        }
    }
}

#[test]
fn wilcoxon_exact_equals_enumeration() {
    let mut r = gazelab_core::rng::rng(2);
    for case in 0..300 {
        let n = r.random_range(1..=12);
        let a = sample(&mut r, n, 0.5);
        let b = sample(&mut r, n, 0.0);
        for tails in TAILS {
            match wilcoxon_signed_rank(&a, &b, &exact(ExactMode::Auto, tails)) {
                Ok(res) => {
                    let f = res.exact.unwrap();
                    assert!(same_fraction((f.count, f.total), wilcoxon_brute(&a, &b, tails)), "case {case}");
                }
                Err(_) => assert!(a == b, "only all-zero differences may fail"),
            }
        }
    }
}

#[test]
fn kruskal_exact_equals_enumeration() {
    let mut r = gazelab_core::rng::rng(3);
    let mut checked = 0;
    for case in 0..150 {
        let k = r.random_range(2..=4);
        let sizes: Vec<usize> = (0..k).map(|_| r.random_range(1..=12 / k)).collect();
        let data: Vec<Vec<f64>> = sizes.iter().enumerate().map(|(g, &n)| sample(&mut r, n, g as f64)).collect();
        let groups: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let res = kruskal_wallis(&groups, ExactMode::Auto).unwrap();
        // All-tied pools have no distribution to speak of.
        if let Some(f) = res.exact {
            assert!(same_fraction((f.count, f.total), kruskal_brute(&groups)), "case {case}: {data:?}");
            checked += 1;
        }
    }
    assert!(checked > 140);
}

/// Largest |approx − exact| over random fixtures with 25-40 observations.
pub fn approximation_gaps(seed: u64, cases: usize) -> (f64, f64) {
    let mut r = gazelab_core::rng::rng(seed);
    let (mut mw, mut w) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let n = r.random_range(25..=40);
        let n1 = r.random_range(10..=n - 10);
        let a: Vec<f64> = (0..n1).map(|_| r.random_range(0.0..1.0) + 0.2).collect();
        let b: Vec<f64> = (0..n - n1).map(|_| r.random_range(0.0..1.0)).collect();
        let ex = mann_whitney_u(&a, &b, &exact(ExactMode::Always, Tails::Two)).unwrap().p_value;
        let ap = mann_whitney_u(&a, &b, &exact(ExactMode::Never, Tails::Two)).unwrap().p_value;
        mw = mw.max((ex - ap).abs());
        let m = n.min(40);
        let x: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1.0) + 0.1).collect();
        let y: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1.0)).collect();
        let ex = wilcoxon_signed_rank(&x, &y, &exact(ExactMode::Always, Tails::Two)).unwrap().p_value;
        let ap = wilcoxon_signed_rank(&x, &y, &exact(ExactMode::Never, Tails::Two)).unwrap().p_value;
        w = w.max((ex - ap).abs());
    }
    (mw, w)
}

#[test]
fn normal_approximations_close_to_exact() {
    let (mw, w) = approximation_gaps(4, 60);
    eprintln!("gaps mw {mw} w {w}");
    assert!(mw <= 0.01 && w <= 0.01, "mw {mw} wilcoxon {w}");
}

#[test]
fn auc_is_normalized_u() {
    let mut r = gazelab_core::rng::rng(5);
    for _ in 0..200 {
        let n1 = r.random_range(1..30);
        let n0 = r.random_range(1..30);
        let pos = sample(&mut r, n1, 1.0);
        let neg = sample(&mut r, n0, 0.0);
        let y: Vec<u8> = std::iter::repeat_n(1, n1).chain(std::iter::repeat_n(0, n0)).collect();
        let scores: Vec<f64> = pos.iter().chain(&neg).copied().collect();
        let a = auc(&roc_curve(&y, &scores).unwrap());
        let u = mann_whitney_u(&pos, &neg, &RankOptions::default()).unwrap().statistic;
        assert!((a - u / (n1 * n0) as f64).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn mann_whitney_symmetry(a in prop::collection::vec(0u8..10, 1..9), b in prop::collection::vec(0u8..10, 1..9)) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let o = RankOptions::default();
        let ab = mann_whitney_u(&a, &b, &o).unwrap();
        let ba = mann_whitney_u(&b, &a, &o).unwrap();
        prop_assert!((ab.statistic + ba.statistic - (a.len() * b.len()) as f64).abs() < 1e-9);
        prop_assert_eq!(ab.p_value, ba.p_value);
        let g = mann_whitney_u(&a, &b, &exact(ExactMode::Auto, Tails::Greater)).unwrap();
        let l = mann_whitney_u(&b, &a, &exact(ExactMode::Auto, Tails::Less)).unwrap();
        prop_assert_eq!(g.p_value, l.p_value);
    }

    #[test]
    fn p_values_in_unit_interval(x in prop::collection::vec(-5.0f64..5.0, 3..30), y in prop::collection::vec(-5.0f64..5.0, 3..30)) {
        for mode in [ExactMode::Auto, ExactMode::Never] {
            let r = mann_whitney_u(&x, &y, &exact(mode, Tails::Two)).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
        let k = kruskal_wallis(&[&x, &y], ExactMode::Never).unwrap();
        prop_assert!((0.0..=1.0).contains(&k.p_value) && k.statistic >= 0.0);
    }

    #[test]
    fn bonferroni_is_monotone(p in prop::collection::vec(0.0f64..1.0, 1..10), extra in 0usize..5) {
        let m = p.len() + extra;
        let adj = bonferroni(&p, m).unwrap();
        for (a, q) in adj.iter().zip(&p) {
            prop_assert!(*a >= *q && *a <= 1.0);
        }
    }
}

#[test]
fn rank_sum_counting_oracle_agrees_with_enumeration() {
    let mut r = gazelab_core::rng::rng(6);
    for _ in 0..20 {
        let g: Vec<Vec<f64>> =
            (0..3).map(|k| (0..r.random_range(1..=4)).map(|_| r.random_range(0.0..1.0) + 0.2 * k as f64).collect()).collect();
        let (c, t) = kruskal_brute(&[&g[0], &g[1], &g[2]]);
        assert!((c as f64 / t as f64 - kruskal3_exact_untied([&g[0], &g[1], &g[2]])).abs() < 1e-12);
        let res = kruskal_wallis(&[&g[0], &g[1], &g[2]], ExactMode::Always).unwrap();
        assert!(same_fraction(res.exact.map(|f| (f.count, f.total)).unwrap(), (c, t)));
    }
}
