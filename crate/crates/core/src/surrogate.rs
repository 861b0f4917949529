//! Exact Gaussian-process surrogate with an RBF kernel.
//!
//! Targets are standardized before conditioning (zero prior mean in
//! standardized units) and every prediction is mapped back to response
//! units, so callers compare means directly against thresholds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{CandidatePool, Observation};
use crate::error::{ensure_finite, Error, Result};

/// Lower bound applied to every reported predictive standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-9;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lengthscale {
    Isotropic(f64),
    PerDimension(Vec<f64>),
}

impl Lengthscale {
    fn get(&self, dim: usize) -> f64 {
        match self {
            Lengthscale::Isotropic(l) => *l,
            Lengthscale::PerDimension(v) => v[dim],
        }
    }
}

/// Kernel hyperparameters plus the observation-noise variance `lambda`,
/// all expressed in standardized target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default)]
    pub family: KernelFamily,
    pub lengthscale: Lengthscale,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn rbf(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            family: KernelFamily::Rbf,
            lengthscale: Lengthscale::Isotropic(lengthscale),
            signal_variance,
            noise_variance,
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let ok_ls = match &self.lengthscale {
            Lengthscale::Isotropic(l) => positive(*l),
            Lengthscale::PerDimension(v) => {
                if v.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        got: v.len(),
                    });
                }
                v.iter().all(|&l| positive(l))
            }
        };
        if !ok_ls {
            return Err(Error::InvalidInput("lengthscale must be positive".into()));
        }
        if !positive(self.signal_variance) {
            return Err(Error::InvalidInput("signal variance must be positive".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidInput("noise variance must be nonnegative".into()));
        }
        Ok(())
    }

    /// `k(a, b) = s * exp(-0.5 * sum_i ((a_i - b_i) / l_i)^2)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| {
                let d = (x - y) / self.lengthscale.get(i);
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }

    /// Gram matrix over rows of `pool` indexed by `ids`.
    pub fn gram(&self, pool: &CandidatePool, ids: &[usize]) -> DMatrix<f64> {
        let n = ids.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.signal_variance;
            for j in 0..i {
                let v = self.eval(pool.row(ids[i]), pool.row(ids[j]));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// Default hyperparameter grid for a `d`-dimensional unit-scale domain.
pub fn default_grid(dimension: usize) -> Vec<KernelSpec> {
    let scale = (dimension as f64).sqrt();
    let mut grid = Vec::new();
    for ls in [0.05, 0.1, 0.2, 0.5, 1.0] {
        for noise in [1e-4, 1e-2, 1e-1] {
            grid.push(KernelSpec::rbf(ls * scale, 1.0, noise));
        }
    }
    grid
}

/// Per-candidate predictive marginals in response units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub ids: Vec<usize>,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl PosteriorSummary {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Conditioning {
    lower: DMatrix<f64>,
    alpha: DVector<f64>,
}

/// A GP conditioned on a labeled history.
#[derive(Debug, Clone)]
pub struct FittedSurrogate {
    kernel: KernelSpec,
    dimension: usize,
    train_x: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
    jitter: f64,
    conditioning: Option<Conditioning>,
}

fn standardize(targets: &[f64]) -> (f64, f64) {
    if targets.is_empty() {
        return (0.0, 1.0);
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Cholesky of `matrix + (noise + jitter) I` with jitter escalation.
/// Returns the lower factor and the jitter that succeeded.
fn factor_with_jitter(
    mut matrix: DMatrix<f64>,
    noise: f64,
    signal_variance: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let n = matrix.nrows();
    for i in 0..n {
        matrix[(i, i)] += noise;
    }
    let mut added = 0.0;
    let mut next = JITTER_START * signal_variance;
    loop {
        if let Some(chol) = matrix.clone().cholesky() {
            return Ok((chol.unpack(), added));
        }
        if next > JITTER_MAX * signal_variance * (1.0 + 1e-9) {
            return Err(Error::NotPositiveDefinite { jitter: added });
        }
        for i in 0..n {
            matrix[(i, i)] += next - added;
        }
        added = next;
        next *= 10.0;
    }
}

impl FittedSurrogate {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Jitter added to the Gram diagonal on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn training_size(&self) -> usize {
        self.train_x.len() / self.dimension
    }

    fn train_row(&self, i: usize) -> &[f64] {
        &self.train_x[i * self.dimension..(i + 1) * self.dimension]
    }

    fn check_pool(&self, pool: &CandidatePool, ids: &[usize]) -> Result<()> {
        if pool.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: pool.dimension(),
            });
        }
        ids.iter().try_for_each(|&id| pool.check_id(id))
    }

    /// Training-by-query cross covariance, `n_train x m`.
    fn cross(&self, pool: &CandidatePool, ids: &[usize]) -> DMatrix<f64> {
        let n = self.training_size();
        DMatrix::from_fn(n, ids.len(), |i, j| {
            self.kernel.eval(self.train_row(i), pool.row(ids[j]))
        })
    }

    /// Latent posterior mean and `V = L^-1 K_*` in standardized units.
    fn latent(&self, pool: &CandidatePool, ids: &[usize]) -> (DVector<f64>, Option<DMatrix<f64>>) {
        match &self.conditioning {
            None => (DVector::zeros(ids.len()), None),
            Some(c) => {
                let kstar = self.cross(pool, ids);
                let mean = kstar.tr_mul(&c.alpha);
                let v = c
                    .lower
                    .solve_lower_triangular(&kstar)
                    .expect("Cholesky factor has a nonzero diagonal");
                (mean, Some(v))
            }
        }
    }

    /// Gaussian predictive marginals of the latent function at `ids`.
    pub fn predict(&self, pool: &CandidatePool, ids: &[usize]) -> Result<PosteriorSummary> {
        self.check_pool(pool, ids)?;
        let (mean, v) = self.latent(pool, ids);
        let sv = self.kernel.signal_variance;
        let means = mean
            .iter()
            .map(|m| m * self.target_scale + self.target_mean)
            .collect();
        let stddevs = (0..ids.len())
            .map(|j| {
                let reduction = v.as_ref().map_or(0.0, |v| v.column(j).norm_squared());
                let var = (sv - reduction).max(0.0);
                (var.sqrt() * self.target_scale).max(SIGMA_FLOOR)
            })
            .collect();
        Ok(PosteriorSummary {
            ids: ids.to_vec(),
            means,
            stddevs,
        })
    }

    /// Joint posterior over `ids`, factored for repeated sampling.
    pub fn joint_posterior(&self, pool: &CandidatePool, ids: &[usize]) -> Result<JointPosterior> {
        if ids.is_empty() {
            return Err(Error::InvalidInput("joint posterior needs at least one query".into()));
        }
        self.check_pool(pool, ids)?;
        let (mean, v) = self.latent(pool, ids);
        let mut cov = self.kernel.gram(pool, ids);
        if let Some(v) = v {
            cov -= v.tr_mul(&v);
        }
        let factor = semidefinite_cholesky(&cov, self.kernel.signal_variance)?;
        Ok(JointPosterior {
            ids: ids.to_vec(),
            mean: mean.iter().copied().collect(),
            factor,
            target_mean: self.target_mean,
            target_scale: self.target_scale,
        })
    }
}

/// Factored joint Gaussian posterior over a fixed query set.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    ids: Vec<usize>,
    mean: Vec<f64>,
    /// Row-major square factor from [`semidefinite_cholesky`].
    factor: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
}

impl JointPosterior {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// One draw `mean + L z`, in response units, aligned with `ids()`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.ids.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        (0..m)
            .map(|i| {
                let row = &self.factor[i * m..(i + 1) * m];
                let noise: f64 = row.iter().zip(&z).map(|(l, z)| l * z).sum();
                (self.mean[i] + noise) * self.target_scale + self.target_mean
            })
            .collect()
    }
}

/// Pivoted Cholesky factor of a positive semidefinite matrix.
///
/// Returns a row-major `n x n` matrix `L` with `L L^T = a`. Each step
/// eliminates the largest remaining diagonal entry, and elimination stops
/// once every remaining diagonal is below `1e-10 * scale`; the columns left
/// are zero, so rank-deficient covariances give exact draws along degenerate
/// directions. A diagonal below `-1e-4 * scale` means the matrix is not PSD
/// and is reported as an error.
pub fn semidefinite_cholesky(a: &DMatrix<f64>, scale: f64) -> Result<Vec<f64>> {
    let n = a.nrows();
    let zero_tol = JITTER_START * scale;
    let neg_tol = JITTER_MAX * scale;
    let mut l = vec![0.0; n * n];
    let mut residual: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut done = vec![false; n];
    for k in 0..n {
        let mut pick: Option<usize> = None;
        for i in (0..n).filter(|&i| !done[i]) {
            let d = residual[i];
            if d < -neg_tol || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { jitter: 0.0 });
            }
            if pick.is_none_or(|p| d > residual[p]) {
                pick = Some(i);
            }
        }
        let Some(p) = pick.filter(|&p| residual[p] > zero_tol) else {
            break;
        };
        done[p] = true;
        let pivot = residual[p].sqrt();
        let row_p = l[p * n..p * n + k].to_vec();
        l[p * n + k] = pivot;
        for i in (0..n).filter(|&i| !done[i]) {
            let row_i = &mut l[i * n..i * n + n];
            let dot: f64 = row_i[..k].iter().zip(&row_p).map(|(x, y)| x * y).sum();
            let v = (a[(i, p)] - dot) / pivot;
            row_i[k] = v;
            residual[i] -= v * v;
        }
    }
    Ok(l)
}

fn training_data(history: &[Observation], pool: &CandidatePool) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut ids = Vec::with_capacity(history.len());
    let mut ys = Vec::with_capacity(history.len());
    for obs in history {
        pool.check_id(obs.candidate_id)?;
        ids.push(obs.candidate_id);
        ys.push(obs.response);
    }
    ensure_finite(&ys, "training targets")?;
    Ok((ids, ys))
}

/// Conditions a GP with the given kernel on `history`.
pub fn fit(history: &[Observation], pool: &CandidatePool, kernel: &KernelSpec) -> Result<FittedSurrogate> {
    kernel.validate(pool.dimension())?;
    let (ids, ys) = training_data(history, pool)?;
    let (target_mean, target_scale) = standardize(&ys);
    let mut train_x = Vec::with_capacity(ids.len() * pool.dimension());
    for &id in &ids {
        train_x.extend_from_slice(pool.row(id));
    }
    let (conditioning, jitter) = if ids.is_empty() {
        (None, 0.0)
    } else {
        let gram = kernel.gram(pool, &ids);
        let (lower, jitter) = factor_with_jitter(gram, kernel.noise_variance, kernel.signal_variance)?;
        let y = DVector::from_iterator(ys.len(), ys.iter().map(|y| (y - target_mean) / target_scale));
        let w = lower
            .solve_lower_triangular(&y)
            .expect("Cholesky factor has a nonzero diagonal");
        let alpha = lower
            .tr_solve_lower_triangular(&w)
            .expect("Cholesky factor has a nonzero diagonal");
        (Some(Conditioning { lower, alpha }), jitter)
    };
    Ok(FittedSurrogate {
        kernel: kernel.clone(),
        dimension: pool.dimension(),
        train_x,
        target_mean,
        target_scale,
        jitter,
        conditioning,
    })
}

/// Exact log marginal likelihood of the standardized targets.
pub fn log_marginal_likelihood(
    history: &[Observation],
    pool: &CandidatePool,
    kernel: &KernelSpec,
) -> Result<f64> {
    let fitted = fit(history, pool, kernel)?;
    let Some(c) = &fitted.conditioning else {
        return Ok(0.0);
    };
    let (_, ys) = training_data(history, pool)?;
    let y = DVector::from_iterator(
        ys.len(),
        ys.iter().map(|y| (y - fitted.target_mean) / fitted.target_scale),
    );
    let n = ys.len() as f64;
    let log_det_half: f64 = c.lower.diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * y.dot(&c.alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Grid element with the highest log marginal likelihood; ties keep the
/// earliest entry. Entries whose Gram matrix cannot be factored are skipped.
pub fn fit_hyperparameters(
    history: &[Observation],
    pool: &CandidatePool,
    grid: &[KernelSpec],
) -> Result<KernelSpec> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("hyperparameter grid is empty".into()));
    }
    if history.len() < 2 {
        return Err(Error::InvalidInput(
            "hyperparameter selection needs at least two observations".into(),
        ));
    }
    let mut best: Option<(f64, &KernelSpec)> = None;
    let mut last_err = None;
    for spec in grid {
        match log_marginal_likelihood(history, pool, spec) {
            Ok(ll) if ll.is_finite() => {
                if best.is_none_or(|(b, _)| ll > b) {
                    best = Some((ll, spec));
                }
            }
            Ok(_) => {}
            Err(e @ Error::NotPositiveDefinite { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.map(|(_, s)| s.clone())
        .ok_or_else(|| last_err.unwrap_or(Error::NotPositiveDefinite { jitter: JITTER_MAX }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(ids_y: &[(usize, f64)]) -> Vec<Observation> {
        ids_y
            .iter()
            .map(|&(candidate_id, response)| Observation {
                candidate_id,
                response,
                cycle: 1,
            })
            .collect()
    }

    fn line_pool(n: usize) -> CandidatePool {
        CandidatePool::new(1, (0..n).map(|i| i as f64 / (n - 1) as f64).collect()).unwrap()
    }

    #[test]
    fn empty_history_is_prior() {
        let pool = line_pool(5);
        let k = KernelSpec::rbf(0.3, 2.5, 0.1);
        let s = fit(&[], &pool, &k).unwrap();
        let p = s.predict(&pool, &[0, 2, 4]).unwrap();
        assert!(p.means.iter().all(|&m| m == 0.0));
        for sd in p.stddevs {
            assert!((sd * sd - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_interpolates() {
        let pool = line_pool(5);
        let k = KernelSpec::rbf(0.3, 1.0, 0.0);
        let s = fit(&obs(&[(1, 0.7)]), &pool, &k).unwrap();
        let p = s.predict(&pool, &[1]).unwrap();
        assert!((p.means[0] - 0.7).abs() < 1e-12);
        assert_eq!(p.stddevs[0], SIGMA_FLOOR);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let pool = CandidatePool::new(1, vec![0.0, 0.1, 50.0]).unwrap();
        let k = KernelSpec::rbf(0.5, 1.0, 0.01);
        let s = fit(&obs(&[(0, 1.0), (1, 3.0)]), &pool, &k).unwrap();
        let p = s.predict(&pool, &[2]).unwrap();
        // prior mean in response units is the training mean
        assert!((p.means[0] - 2.0).abs() < 1e-6);
        // prior sd in response units is the training sd (1.0)
        assert!((p.stddevs[0].powi(2) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn duplicated_points_need_jitter() {
        let pool = CandidatePool::new(1, vec![0.5, 0.5, 0.9]).unwrap();
        let mut history = obs(&[(0, 1.0)]);
        history.push(Observation {
            candidate_id: 1,
            response: 1.0,
            cycle: 1,
        });
        let s = fit(&history, &pool, &KernelSpec::rbf(0.2, 1.0, 0.0)).unwrap();
        assert!(s.jitter() > 0.0);
        assert!(s.jitter() <= JITTER_MAX);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let pool = line_pool(4);
        let s = fit(&obs(&[(0, 1.0)]), &pool, &KernelSpec::rbf(0.3, 1.0, 0.1)).unwrap();
        let other = CandidatePool::new(2, vec![0.0; 4]).unwrap();
        assert!(matches!(s.predict(&other, &[0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(s.predict(&pool, &[7]), Err(Error::UnknownCandidate(7))));
    }

    #[test]
    fn invalid_kernel_rejected() {
        let pool = line_pool(3);
        assert!(fit(&[], &pool, &KernelSpec::rbf(0.0, 1.0, 0.1)).is_err());
        assert!(fit(&[], &pool, &KernelSpec::rbf(1.0, -1.0, 0.1)).is_err());
        assert!(fit(&[], &pool, &KernelSpec::rbf(1.0, 1.0, -0.1)).is_err());
    }

    #[test]
    fn zero_variance_draw_is_exact() {
        let pool = line_pool(5);
        let k = KernelSpec::rbf(0.3, 1.0, 0.0);
        let s = fit(&obs(&[(2, -0.4)]), &pool, &k).unwrap();
        let mut rng = crate::rng::stream(1, crate::rng::Stream::Posterior);
        for _ in 0..10 {
            let draw = s.joint_posterior(&pool, &[2]).unwrap().sample(&mut rng);
            assert!((draw[0] + 0.4).abs() < 1e-12, "{}", draw[0]);
        }
    }

    #[test]
    fn identical_queries_draw_together() {
        let pool = CandidatePool::new(1, vec![0.1, 0.4, 0.4]).unwrap();
        let s = fit(&obs(&[(0, 1.0)]), &pool, &KernelSpec::rbf(0.3, 1.0, 0.1)).unwrap();
        let mut rng = crate::rng::stream(2, crate::rng::Stream::Posterior);
        let jp = s.joint_posterior(&pool, &[1, 2]).unwrap();
        for _ in 0..20 {
            let d = jp.sample(&mut rng);
            assert!((d[0] - d[1]).abs() <= 1e-12 * d[0].abs().max(1.0), "{d:?}");
        }
    }

    #[test]
    fn semidefinite_cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(semidefinite_cholesky(&a, 1.0).is_err());
        let b = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        let l = semidefinite_cholesky(&b, 1.0).unwrap();
        assert_eq!(l, vec![2.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn near_singular_prior_factors() {
        let pool = line_pool(40);
        let ids: Vec<usize> = (0..40).collect();
        for ls in [0.2, 0.5, 1.0] {
            let k = KernelSpec::rbf(ls, 1.0, 1e-2);
            let a = k.gram(&pool, &ids);
            let l = DMatrix::from_row_slice(40, 40, &semidefinite_cholesky(&a, 1.0).unwrap());
            let err = (&l * l.transpose() - &a).abs().max();
            assert!(err < 1e-8, "lengthscale {ls}: {err:e}");
            let draw = fit(&[], &pool, &k).unwrap().joint_posterior(&pool, &ids).unwrap();
            assert!(draw.sample(&mut crate::rng::stream(0, crate::rng::Stream::Posterior)).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn hyperparameter_grid_of_one() {
        let pool = line_pool(6);
        let h = obs(&[(0, 0.0), (3, 1.0), (5, 0.5)]);
        let only = KernelSpec::rbf(0.4, 1.0, 0.01);
        assert_eq!(fit_hyperparameters(&h, &pool, std::slice::from_ref(&only)).unwrap(), only);
        assert!(fit_hyperparameters(&h[..1], &pool, std::slice::from_ref(&only)).is_err());
        assert!(fit_hyperparameters(&h, &pool, &[]).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid(4);
        assert_eq!(g.len(), 15);
        assert_eq!(g[0].lengthscale, Lengthscale::Isotropic(0.1));
        assert!(g.iter().all(|k| k.signal_variance == 1.0));
    }

    #[test]
    fn lengthscale_serde_forms() {
        let iso: KernelSpec =
            serde_json::from_str(r#"{"lengthscale":0.5,"signal_variance":1.0,"noise_variance":0.1}"#).unwrap();
        assert_eq!(iso.lengthscale, Lengthscale::Isotropic(0.5));
        let ard: KernelSpec = serde_json::from_str(
            r#"{"family":"rbf","lengthscale":[0.5,0.2],"signal_variance":1.0,"noise_variance":0.1}"#,
        )
        .unwrap();
        assert_eq!(ard.lengthscale, Lengthscale::PerDimension(vec![0.5, 0.2]));
        assert!(ard.validate(3).is_err());
    }
}
