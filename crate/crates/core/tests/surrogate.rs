use hitscan_core::rng::{stream, Stream};
use hitscan_core::surrogate::default_grid;
use hitscan_core::{fit, fit_hyperparameters, CandidatePool, KernelSpec, Observation};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn observe(ids: &[usize], ys: &[f64]) -> Vec<Observation> {
    ids.iter()
        .zip(ys)
        .map(|(&candidate_id, &response)| Observation {
            candidate_id,
            response,
            cycle: 0,
        })
        .collect()
}

#[test]
fn recovers_generating_lengthscale() {
    let grid: Vec<KernelSpec> = [0.05, 0.2, 1.0].iter().map(|&l| KernelSpec::rbf(l, 1.0, 1e-2)).collect();
    let mut hits = 0;
    for seed in 0..50 {
        let mut rng = stream(seed, Stream::Audit);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        let pool = CandidatePool::from_rows(&rows).unwrap();
        let ids: Vec<usize> = (0..40).collect();
        let prior = fit(&[], &pool, &KernelSpec::rbf(0.2, 1.0, 0.0)).unwrap();
        let f = prior.joint_posterior(&pool, &ids).unwrap().sample(&mut rng);
        let y: Vec<f64> = f.iter().map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let chosen = fit_hyperparameters(&observe(&ids, &y), &pool, &grid).unwrap();
        hits += usize::from(chosen == grid[1]);
    }
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn constant_targets_select_by_likelihood() {
    let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0, (i * 7 % 12) as f64 / 11.0]).collect();
    let pool = CandidatePool::from_rows(&rows).unwrap();
    let ids: Vec<usize> = (0..12).collect();
    let grid = default_grid(2);
    let chosen = fit_hyperparameters(&observe(&ids, &[3.0; 12]), &pool, &grid).unwrap();

    // Standardized constant targets are all zero, so the likelihood is
    // -0.5 log det(K + lambda I) up to a constant.
    let score = |k: &KernelSpec| {
        let a = DMatrix::from_fn(12, 12, |i, j| {
            k.eval(&rows[i], &rows[j]) + if i == j { k.noise_variance } else { 0.0 }
        });
        -0.5 * a.lu().determinant().ln()
    };
    let best = grid
        .iter()
        .fold(None::<(f64, &KernelSpec)>, |acc, k| match acc {
            Some((s, _)) if s >= score(k) => acc,
            _ => Some((score(k), k)),
        })
        .unwrap()
        .1;
    assert_eq!(&chosen, best);
    let smallest = grid.iter().map(|k| k.noise_variance).fold(f64::INFINITY, f64::min);
    assert_eq!(chosen.noise_variance, smallest);
}

#[test]
fn noiseless_fit_reproduces_training_targets() {
    let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.2]).collect();
    let pool = CandidatePool::from_rows(&rows).unwrap();
    let ids: Vec<usize> = (0..6).collect();
    let y = [0.3, -1.2, 2.0, 0.0, 0.7, 5.5];
    let model = fit(&observe(&ids, &y), &pool, &KernelSpec::rbf(0.1, 1.0, 0.0)).unwrap();
    assert_eq!(model.jitter(), 0.0);
    let p = model.predict(&pool, &ids).unwrap();
    for (m, t) in p.means.iter().zip(&y) {
        assert!((m - t).abs() < 1e-6, "{m} vs {t}");
    }
}
