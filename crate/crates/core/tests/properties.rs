use std::collections::HashSet;

use hitscan_core::complexity::{cluster_count, dbscan, spearman};
use hitscan_core::metrics::smape;
use hitscan_core::theory::{information_gain, max_information_gain_exact, posterior_stddev};
use hitscan_core::{
    build_pool, hit_set, resolve_threshold, run_campaign, CampaignConfig, CandidatePool, Family, KernelSpec, OracleSpec,
    Strategy, Threshold,
};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    prop::sample::select(Strategy::ALL.to_vec())
}

fn pool_of(points: &[Vec<f64>]) -> CandidatePool {
    CandidatePool::from_rows(points).unwrap()
}

fn points(n: std::ops::RangeInclusive<usize>, d: usize) -> impl proptest::strategy::Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, d), n)
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn smape_symmetric_and_bounded(pairs in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 1..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = smape(&a, &b).unwrap();
        prop_assert_eq!(ab, smape(&b, &a).unwrap());
        prop_assert!((0.0..=200.0).contains(&ab));
        prop_assert_eq!(smape(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn smape_opposite_signs_hit_the_top(v in prop::collection::vec(1e-3..1e3f64, 1..20)) {
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        prop_assert!((smape(&v, &neg).unwrap() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn hit_set_shrinks_as_tau_grows(
        truth in prop::collection::vec(-10.0..10.0f64, 1..60),
        t1 in -12.0..12.0f64,
        dt in 0.0..5.0f64,
    ) {
        let low: HashSet<usize> = hit_set(&truth, t1).unwrap().into_iter().collect();
        let high = hit_set(&truth, t1 + dt).unwrap();
        prop_assert!(high.iter().all(|id| low.contains(id)));
        prop_assert!(high.iter().all(|&id| truth[id] > t1 + dt));
    }

    #[test]
    fn quantile_threshold_keeps_ceil_qn(
        set in prop::collection::hash_set(-1_000_000i64..1_000_000, 1..300),
        milli in 1usize..1000,
    ) {
        let truth: Vec<f64> = set.into_iter().map(|v| v as f64 * 1e-3).collect();
        let n = truth.len();
        let tau = resolve_threshold(Threshold::Quantile(milli as f64 / 1000.0), &truth).unwrap();
        let expected = ((milli * n).div_ceil(1000)).max(1);
        prop_assert_eq!(hit_set(&truth, tau).unwrap().len(), expected);
    }

    #[test]
    fn spearman_symmetric_in_unit_interval(
        pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..50),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = spearman(&a, &b).unwrap();
        let ba = spearman(&b, &a).unwrap();
        prop_assert!((ab.rho - ba.rho).abs() < 1e-12);
        prop_assert!(ab.rho.abs() <= 1.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn batches_disjoint_and_budget_accounted(
        n in 4usize..30,
        cycles in 1usize..5,
        b in 1usize..7,
        warm in 0usize..5,
        strat in strategy(),
        seed in any::<u64>(),
    ) {
        let mut cfg = CampaignConfig::new(
            OracleSpec::new(Family::Sine1d).with_pool_size(n),
            strat,
            Threshold::Quantile(0.2),
            cycles,
            b,
        );
        cfg.warm_start = Some(warm);
        let r = run_campaign(&cfg, seed).unwrap();
        let truth = build_pool(&cfg.oracle, seed).unwrap().truth;
        let mut seen: HashSet<usize> = r.warm_start.iter().copied().collect();
        prop_assert_eq!(seen.len(), warm.min(n));
        for c in &r.cycles {
            prop_assert!(c.batch.len() <= b);
            for &id in &c.batch {
                prop_assert!(id < n);
                prop_assert!(seen.insert(id), "id {} selected twice", id);
            }
        }
        prop_assert_eq!(seen.len(), n.min(warm.min(n) + cycles * b));
        let full = r.cycles.iter().filter(|c| c.batch.len() == b).count();
        prop_assert!(full + 1 >= r.cycles.len());
        if r.exhausted {
            prop_assert_eq!(seen.len(), n);
        } else {
            prop_assert_eq!(r.cycles.len(), cycles);
        }
        let mut h = 0;
        for c in &r.cycles {
            let hits = c.batch.iter().filter(|&&id| truth[id] > r.tau).count();
            prop_assert_eq!(hits, c.metrics.new_hits);
            h += c.metrics.new_hits;
            prop_assert_eq!(c.metrics.cumulative_hits, h);
            prop_assert_eq!(c.responses.len(), c.batch.len());
        }
        prop_assert!(r.final_hits <= r.total_hits);
        prop_assert!((0.0..=1.0).contains(&r.final_hit_ratio));
    }
}

proptest! {
    #![proptest_config(cases(300))]

    #[test]
    fn information_gain_monotone_and_submodular(
        pts in points(4..=12, 2),
        l in 0.1..1.5f64,
        lambda in 0.05..5.0f64,
        picks in prop::collection::vec(any::<bool>(), 12),
        extra in prop::collection::vec(any::<bool>(), 12),
    ) {
        let pool = pool_of(&pts);
        let k = KernelSpec::rbf(l, 1.0, lambda);
        let n = pool.len();
        let a: Vec<usize> = (0..n - 1).filter(|&i| picks[i]).collect();
        let bset: Vec<usize> = (0..n - 1).filter(|&i| picks[i] || extra[i]).collect();
        let x = n - 1;
        let with = |s: &[usize]| [s, &[x][..]].concat();
        let ig = |s: &[usize]| information_gain(&pool, s, &k, lambda).unwrap();
        prop_assert!(ig(&a) <= ig(&bset) + 1e-10);
        let gain_a = ig(&with(&a)) - ig(&a);
        let gain_b = ig(&with(&bset)) - ig(&bset);
        prop_assert!(gain_a + 1e-10 >= gain_b, "{} < {}", gain_a, gain_b);
    }

    #[test]
    fn greedy_within_one_minus_inverse_e(
        pts in points(4..=10, 2),
        l in 0.1..1.5f64,
        lambda in 0.05..5.0f64,
        size in 1usize..5,
    ) {
        let pool = pool_of(&pts);
        let size = size.min(pool.len());
        let g = max_information_gain_exact(&pool, size, &KernelSpec::rbf(l, 1.0, 1.0), lambda, 1e6).unwrap();
        prop_assert!(g.greedy <= g.exact + 1e-10);
        prop_assert!(g.greedy >= (1.0 - (-1.0f64).exp()) * g.exact - 1e-10);
    }

    #[test]
    fn more_observations_never_raise_posterior_sd(
        pts in points(3..=15, 3),
        l in 0.1..2.0f64,
        lambda in 1e-3..1.0f64,
        sub in subsequence((0..15usize).collect::<Vec<_>>(), 0..15),
    ) {
        let pool = pool_of(&pts);
        let n = pool.len();
        let k = KernelSpec::rbf(l, 1.0, lambda);
        let observed: Vec<usize> = sub.into_iter().filter(|&i| i < n - 1).collect();
        let all: Vec<usize> = (0..n).collect();
        let before = posterior_stddev(&pool, &observed, &all, &k, lambda).unwrap();
        let after = posterior_stddev(&pool, &[observed.clone(), vec![n - 1]].concat(), &all, &k, lambda).unwrap();
        for (x, y) in before.iter().zip(&after) {
            prop_assert!(*y <= *x + 1e-10);
        }
    }

    #[test]
    fn dbscan_count_ignores_order(
        pts in points(1..=40, 2),
        eps in 0.05..0.4f64,
        min_pts in 1usize..5,
        rot in 0usize..40,
    ) {
        let flat: Vec<f64> = pts.concat();
        let mut shifted = pts.clone();
        shifted.rotate_left(rot % pts.len());
        shifted.reverse();
        let a = cluster_count(&dbscan(&flat, 2, eps, min_pts).unwrap());
        let b = cluster_count(&dbscan(&shifted.concat(), 2, eps, min_pts).unwrap());
        prop_assert_eq!(a, b);
    }
}

