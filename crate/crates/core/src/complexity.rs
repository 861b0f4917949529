//! Dataset complexity metrics: local smoothness, hit clustering, effective
//! dimensionality, and rank correlations.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{resolve_threshold, Threshold};
use crate::error::{Error, Result};
use crate::oracle::{build_pool, min_max_columns, OracleSpec};
use crate::rng::{self, Stream};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_matrix(features: &[f64], d: usize, n: usize) -> Result<()> {
    if d == 0 || features.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            got: features.len(),
        });
    }
    Ok(())
}

/// Mean over points of the mean `|y_i - y_j|` across the `k` nearest
/// neighbours of `i` (Euclidean, self excluded, ties broken by index).
pub fn local_smoothness(features: &[f64], d: usize, responses: &[f64], k: usize) -> Result<f64> {
    let n = responses.len();
    check_matrix(features, d, n)?;
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!("need 1 <= k < N, got k = {k}, N = {n}")));
    }
    let row = |i: usize| &features[i * d..(i + 1) * d];
    let mut total = 0.0;
    let mut others: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        others.clear();
        others.extend((0..n).filter(|&j| j != i).map(|j| (sq_dist(row(i), row(j)), j)));
        others.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let s: f64 = others[..k].iter().map(|&(_, j)| (responses[i] - responses[j]).abs()).sum();
        total += s / k as f64;
    }
    Ok(total / n as f64)
}

/// DBSCAN. A point is core when at least `min_pts` points (itself
/// included) lie within `eps`. Returns a cluster label per point, `None`
/// for noise; clusters are numbered in order of their lowest-index core point.
pub fn dbscan(points: &[f64], d: usize, eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>> {
    if !(eps > 0.0 && eps.is_finite()) || min_pts == 0 {
        return Err(Error::InvalidInput("dbscan needs eps > 0 and min_pts >= 1".into()));
    }
    if d == 0 || !points.len().is_multiple_of(d) {
        return Err(Error::InvalidInput("point matrix does not match dimension".into()));
    }
    let n = points.len() / d;
    let row = |i: usize| &points[i * d..(i + 1) * d];
    let eps2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| sq_dist(row(i), row(j)) <= eps2).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    Ok(labels)
}

pub fn cluster_count(labels: &[Option<usize>]) -> usize {
    labels.iter().flatten().max().map_or(0, |m| m + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitClusterStats {
    pub n_hits: usize,
    pub n_clusters: usize,
    /// Population standard deviation of pairwise hit distances; `None`
    /// with fewer than two hits.
    pub hit_spread: Option<f64>,
}

/// Clusters the hits `responses > tau` with DBSCAN after min-max scaling the
/// features of the whole pool to the unit cube.
pub fn hit_cluster_stats(
    features: &[f64],
    d: usize,
    responses: &[f64],
    tau: f64,
    eps: f64,
    min_pts: usize,
) -> Result<HitClusterStats> {
    check_matrix(features, d, responses.len())?;
    let scaled = min_max_columns(features, d);
    let hits: Vec<usize> = (0..responses.len()).filter(|&i| responses[i] > tau).collect();
    let mut pts = Vec::with_capacity(hits.len() * d);
    for &i in &hits {
        pts.extend_from_slice(&scaled[i * d..(i + 1) * d]);
    }
    let n_clusters = if hits.is_empty() {
        0
    } else {
        cluster_count(&dbscan(&pts, d, eps, min_pts)?)
    };
    Ok(HitClusterStats {
        n_hits: hits.len(),
        n_clusters,
        hit_spread: pairwise_distance_spread(&pts, d),
    })
}

/// Population standard deviation of all pairwise Euclidean distances.
pub fn pairwise_distance_spread(points: &[f64], d: usize) -> Option<f64> {
    let n = points.len() / d;
    if n < 2 {
        return None;
    }
    let row = |i: usize| &points[i * d..(i + 1) * d];
    let dists: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(row(i), row(j)).sqrt())
        .collect();
    Some(crate::stats::mean_std(&dists).1)
}

/// Smallest number of principal components whose eigenvalues reach
/// `fraction` of the covariance trace; 1 when the trace is zero.
pub fn effective_dimensionality(features: &[f64], d: usize, fraction: f64) -> Result<usize> {
    if d == 0 || !features.len().is_multiple_of(d) {
        return Err(Error::InvalidInput("feature matrix does not match dimension".into()));
    }
    let n = features.len() / d;
    if n < 2 {
        return Err(Error::InvalidInput("effective dimensionality needs at least 2 points".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput("variance fraction must lie in (0, 1]".into()));
    }
    let x = DMatrix::from_row_slice(n, d, features);
    let mean = x.row_mean();
    let mut centered = x;
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let trace: f64 = eig.iter().sum();
    if trace <= 0.0 {
        return Ok(1);
    }
    let target = fraction * trace * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (m, v) in eig.iter().enumerate() {
        acc += v;
        if acc >= target {
            return Ok(m + 1);
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Set when either input is constant; `rho` is then 0.
    pub degenerate: bool,
}

/// Ranks starting at 1, ties sharing their mean rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
    }
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<Spearman> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("spearman needs at least 2 values".into()));
    }
    crate::error::ensure_finite(a, "spearman input")?;
    crate::error::ensure_finite(b, "spearman input")?;
    Ok(match pearson(&mid_ranks(a), &mid_ranks(b)) {
        Some(rho) => Spearman { rho, degenerate: false },
        None => Spearman {
            rho: 0.0,
            degenerate: true,
        },
    })
}

/// Which point pairs enter the distance/response-difference correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSampling {
    Exact,
    /// This many pairs drawn uniformly with replacement; all pairs are used
    /// when there are no more than that.
    Subsample(usize),
}

impl Default for PairSampling {
    fn default() -> Self {
        PairSampling::Subsample(10_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub rho_max: f64,
    pub rho_max_degenerate: bool,
    pub rho_dy: f64,
    pub rho_dy_degenerate: bool,
}

pub fn feature_response_correlations<R: Rng + ?Sized>(
    features: &[f64],
    d: usize,
    responses: &[f64],
    pairs: PairSampling,
    rng: &mut R,
) -> Result<Correlations> {
    let n = responses.len();
    check_matrix(features, d, n)?;
    if n < 2 {
        return Err(Error::InvalidInput("correlations need at least 2 points".into()));
    }
    let mut rho_max = 0.0_f64;
    let mut all_degenerate = true;
    let mut column = vec![0.0; n];
    for j in 0..d {
        for i in 0..n {
            column[i] = features[i * d + j];
        }
        let s = spearman(&column, responses)?;
        if !s.degenerate {
            all_degenerate = false;
            rho_max = rho_max.max(s.rho.abs());
        }
    }

    let total_pairs = n * (n - 1) / 2;
    let pair_list: Vec<(usize, usize)> = match pairs {
        PairSampling::Subsample(m) if m < total_pairs => (0..m)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect(),
        _ => (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect(),
    };
    let row = |i: usize| &features[i * d..(i + 1) * d];
    let dist: Vec<f64> = pair_list.iter().map(|&(i, j)| sq_dist(row(i), row(j)).sqrt()).collect();
    let dy: Vec<f64> = pair_list
        .iter()
        .map(|&(i, j)| (responses[i] - responses[j]).abs())
        .collect();
    let (rho_dy, rho_dy_degenerate) = if pair_list.len() < 2 {
        (0.0, true)
    } else {
        let s = spearman(&dist, &dy)?;
        (s.rho, s.degenerate)
    };
    Ok(Correlations {
        rho_max,
        rho_max_degenerate: all_degenerate,
        rho_dy,
        rho_dy_degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexityParams {
    pub k_neighbors: usize,
    /// DBSCAN radius on unit-scaled features; `0.1 * sqrt(d)` when unset.
    pub eps: Option<f64>,
    pub min_pts: usize,
    pub variance_fraction: f64,
    pub pairs: PairSampling,
    pub threshold: Threshold,
}

impl Default for ComplexityParams {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            eps: None,
            min_pts: 3,
            variance_fraction: 0.95,
            pairs: PairSampling::default(),
            threshold: Threshold::Quantile(0.1),
        }
    }
}

impl ComplexityParams {
    pub fn eps_for(&self, d: usize) -> f64 {
        self.eps.unwrap_or(0.1 * (d as f64).sqrt())
    }
}

/// One row of a complexity report. `seed` is `None` on the mean row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub seed: Option<u64>,
    pub smoothness: f64,
    pub n_clusters: f64,
    pub hit_spread: Option<f64>,
    pub d_eff: f64,
    pub rho_max: f64,
    pub rho_dy: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub family: String,
    pub rows: Vec<ComplexityRow>,
    pub mean: ComplexityRow,
}

/// Metrics of one dataset.
pub fn complexity_of(
    features: &[f64],
    d: usize,
    responses: &[f64],
    params: &ComplexityParams,
    seed: u64,
) -> Result<ComplexityRow> {
    let tau = resolve_threshold(params.threshold, responses)?;
    let smoothness = local_smoothness(features, d, responses, params.k_neighbors)?;
    let clusters = hit_cluster_stats(features, d, responses, tau, params.eps_for(d), params.min_pts)?;
    let d_eff = effective_dimensionality(features, d, params.variance_fraction)?;
    let mut rng = rng::stream(seed, Stream::Complexity);
    let corr = feature_response_correlations(features, d, responses, params.pairs, &mut rng)?;
    Ok(ComplexityRow {
        seed: Some(seed),
        smoothness,
        n_clusters: clusters.n_clusters as f64,
        hit_spread: clusters.hit_spread,
        d_eff: d_eff as f64,
        rho_max: corr.rho_max,
        rho_dy: corr.rho_dy,
        degenerate: corr.rho_max_degenerate,
    })
}

/// Builds the oracle's pool once per seed, draws one noisy response per
/// candidate, and reports per-seed metrics plus their mean.
pub fn compute_complexity(spec: &OracleSpec, seeds: &[u64], params: &ComplexityParams) -> Result<ComplexityReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("at least one seed is required".into()));
    }
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let oracle = build_pool(spec, seed)?;
        let responses = (0..oracle.len())
            .map(|i| oracle.observe(i, 0))
            .collect::<Result<Vec<_>>>()?;
        rows.push(complexity_of(
            oracle.pool.as_slice(),
            oracle.pool.dimension(),
            &responses,
            params,
            seed,
        )?);
    }
    let mean = mean_row(&rows);
    Ok(ComplexityReport {
        family: spec.family.to_string(),
        rows,
        mean,
    })
}

fn mean_row(rows: &[ComplexityRow]) -> ComplexityRow {
    let n = rows.len() as f64;
    let avg = |f: fn(&ComplexityRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let spreads: Vec<f64> = rows.iter().filter_map(|r| r.hit_spread).collect();
    ComplexityRow {
        seed: None,
        smoothness: avg(|r| r.smoothness),
        n_clusters: avg(|r| r.n_clusters),
        hit_spread: (!spreads.is_empty()).then(|| spreads.iter().sum::<f64>() / spreads.len() as f64),
        d_eff: avg(|r| r.d_eff),
        rho_max: avg(|r| r.rho_max),
        rho_dy: avg(|r| r.rho_dy),
        degenerate: rows.iter().all(|r| r.degenerate),
    }
}
