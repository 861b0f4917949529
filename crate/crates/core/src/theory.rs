//! Numerical checks of the hit-discovery guarantee: information gain,
//! confidence widths, and the supporting inequalities on small instances.

use nalgebra::Cholesky;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::Strategy;
use crate::campaign::{run_campaign, CampaignConfig};
use crate::domain::{CandidatePool, Observation, Threshold};
use crate::error::{Error, Result};
use crate::oracle::{Family, OracleSpec};
use crate::rng::{self, Stream};
use crate::stats::normal_cdf;
use crate::surrogate::{self, KernelSpec};

pub const DEFAULT_ENUMERATION_GUARD: f64 = 1e6;

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("noise variance must be positive, got {lambda}")))
    }
}

/// `0.5 * log det(I + K_A / lambda)` in nats.
pub fn information_gain(pool: &CandidatePool, subset: &[usize], kernel: &KernelSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    subset.iter().try_for_each(|&id| pool.check_id(id))?;
    if subset.is_empty() {
        return Ok(0.0);
    }
    let mut m = kernel.gram(pool, subset) / lambda;
    for i in 0..subset.len() {
        m[(i, i)] += 1.0;
    }
    let chol = Cholesky::new(m).ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
    Ok(chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum())
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaResult {
    pub n: usize,
    pub exact: f64,
    pub argmax: Vec<usize>,
    pub greedy: f64,
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic
/// order; false after the last.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
        return false;
    };
    idx[i] += 1;
    for j in i + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// Largest information gain over `n`-subsets of the pool by enumeration,
/// alongside the greedy value.
pub fn max_information_gain_exact(
    pool: &CandidatePool,
    n: usize,
    kernel: &KernelSpec,
    lambda: f64,
    guard: f64,
) -> Result<GammaResult> {
    check_lambda(lambda)?;
    let total = pool.len();
    if n > total {
        return Err(Error::InvalidInput(format!("subset size {n} exceeds pool size {total}")));
    }
    let count = binomial(total, n);
    if count > guard {
        return Err(Error::EnumerationGuard {
            n: total,
            k: n,
            count,
            guard,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = (f64::NEG_INFINITY, idx.clone());
    loop {
        let g = information_gain(pool, &idx, kernel, lambda)?;
        if g > best.0 {
            best = (g, idx.clone());
        }
        if !next_combination(&mut idx, total) {
            break;
        }
    }
    Ok(GammaResult {
        n,
        exact: best.0,
        argmax: best.1,
        greedy: greedy_information_gain(pool, n, kernel, lambda)?.0,
    })
}

/// Greedy maximization: each step adds the point of largest marginal gain,
/// ties to the smaller id. Returns the final gain and the chosen order.
pub fn greedy_information_gain(
    pool: &CandidatePool,
    n: usize,
    kernel: &KernelSpec,
    lambda: f64,
) -> Result<(f64, Vec<usize>)> {
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut value = 0.0;
    for _ in 0..n.min(pool.len()) {
        let mut best: Option<(f64, usize)> = None;
        for id in pool.ids() {
            if chosen.contains(&id) {
                continue;
            }
            chosen.push(id);
            let g = information_gain(pool, &chosen, kernel, lambda)?;
            chosen.pop();
            if best.is_none_or(|(b, _)| g > b) {
                best = Some((g, id));
            }
        }
        let (g, id) = best.expect("pool has unchosen points");
        chosen.push(id);
        value = g;
    }
    Ok((value, chosen))
}

/// `beta_t = sqrt(2 ln(N pi^2 t^2 / (6 delta)))`.
pub fn beta_schedule(pool_size: usize, t: usize, delta: f64) -> Result<f64> {
    if t == 0 || pool_size == 0 {
        return Err(Error::InvalidInput("beta schedule needs t >= 1 and N >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let arg = pool_size as f64 * std::f64::consts::PI.powi(2) * (t as f64).powi(2) / (6.0 * delta);
    Ok((2.0 * arg.ln()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfAudit {
    pub points: usize,
    pub min_slack: f64,
    pub argmin_z: f64,
    pub violations: usize,
    pub pass: bool,
}

/// Checks `Phi(z) >= 1/2 - (-z)_+ / sqrt(2 pi)` on `z = -10, -10 + step, ..., 10`.
pub fn audit_cdf_bound(step: f64) -> CdfAudit {
    let points = (20.0 / step).round() as usize + 1;
    let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut min_slack = f64::INFINITY;
    let mut argmin_z = 0.0;
    let mut violations = 0;
    for i in 0..points {
        let z = -10.0 + i as f64 * step;
        let slack = normal_cdf(z) - (0.5 - inv * (-z).max(0.0));
        if slack < min_slack {
            min_slack = slack;
            argmin_z = z;
        }
        if slack < -1e-12 {
            violations += 1;
        }
    }
    CdfAudit {
        points,
        min_slack,
        argmin_z,
        violations,
        pass: violations == 0,
    }
}

/// Posterior standard deviation of a zero-mean GP with the given kernel and
/// noise variance, conditioned on observations at `observed`.
pub fn posterior_stddev(
    pool: &CandidatePool,
    observed: &[usize],
    query: &[usize],
    kernel: &KernelSpec,
    lambda: f64,
) -> Result<Vec<f64>> {
    let k = KernelSpec {
        noise_variance: lambda,
        ..kernel.clone()
    };
    let history: Vec<Observation> = observed
        .iter()
        .map(|&id| Observation {
            candidate_id: id,
            response: 0.0,
            cycle: 1,
        })
        .collect();
    Ok(surrogate::fit(&history, pool, &k)?.predict(pool, query)?.stddevs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSigmaAudit {
    pub cycles: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub gamma_t: f64,
    pub gamma_tb: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Sum of batch posterior deviations, each batch conditioned only on the
/// earlier ones, against the information-gain bound
/// `sqrt(2 g_Tb / c * (T b + 2 b^2 g_T / c))`, `c = ln(1 + 1/lambda)`.
pub fn audit_batch_sigma_sum(
    pool: &CandidatePool,
    batches: &[Vec<usize>],
    kernel: &KernelSpec,
    lambda: f64,
    guard: f64,
) -> Result<BatchSigmaAudit> {
    check_lambda(lambda)?;
    let t = batches.len();
    let b = batches.iter().map(Vec::len).max().unwrap_or(0);
    let mut observed = Vec::new();
    let mut lhs = 0.0;
    for batch in batches {
        lhs += posterior_stddev(pool, &observed, batch, kernel, lambda)?.iter().sum::<f64>();
        observed.extend_from_slice(batch);
    }
    let tb = (t * b).min(pool.len());
    let gamma_tb = max_information_gain_exact(pool, tb, kernel, lambda, guard)?.exact;
    let gamma_t = max_information_gain_exact(pool, t.min(pool.len()), kernel, lambda, guard)?.exact;
    let c = (1.0 + 1.0 / lambda).ln();
    let rhs = (2.0 * gamma_tb / c * ((t * b) as f64 + 2.0 * (b * b) as f64 * gamma_t / c)).sqrt();
    Ok(BatchSigmaAudit {
        cycles: t,
        batch_size: b,
        lambda,
        gamma_t,
        gamma_tb,
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + 1e-12),
    })
}

/// Posterior over the whole pool at the start of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSnapshot {
    pub cycle: usize,
    /// Unsampled ids when the batch was chosen.
    pub candidates: Vec<usize>,
    pub batch: Vec<usize>,
    /// Indexed by pool id.
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistakeViolation {
    pub cycle: usize,
    pub candidate: usize,
    pub sigma: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MistakeAudit {
    pub cycles: usize,
    /// Cycles where `|f - mu| <= beta sigma` held on the whole pool.
    pub confident_cycles: usize,
    /// Confident cycles with an unqueried, unselected margin hit.
    pub applicable_cycles: usize,
    /// Selected candidates with `f <= tau - epsilon` in applicable cycles.
    pub checked: usize,
    pub violations: Vec<MistakeViolation>,
}

/// In every cycle where the confidence event holds and some `g*` with
/// `f(g*) >= tau + epsilon` remained a candidate but was not selected,
/// each selected `g` with `f(g) <= tau - epsilon` must have
/// `sigma_t(g) >= epsilon / (2 beta_t)`.
pub fn audit_mistake_implies_uncertainty(
    snapshots: &[CycleSnapshot],
    truth: &[f64],
    tau: f64,
    epsilon: f64,
    delta: f64,
) -> Result<MistakeAudit> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let mut audit = MistakeAudit {
        cycles: snapshots.len(),
        ..MistakeAudit::default()
    };
    for s in snapshots {
        if s.means.len() != truth.len() || s.stddevs.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: s.means.len(),
            });
        }
        let beta = beta_schedule(truth.len(), s.cycle, delta)?;
        let confident = (0..truth.len()).all(|g| (truth[g] - s.means[g]).abs() <= beta * s.stddevs[g]);
        if !confident {
            continue;
        }
        audit.confident_cycles += 1;
        let margin_hit_left = s
            .candidates
            .iter()
            .any(|&g| truth[g] >= tau + epsilon && !s.batch.contains(&g));
        if !margin_hit_left {
            continue;
        }
        audit.applicable_cycles += 1;
        let bound = epsilon / (2.0 * beta);
        for &g in s.batch.iter().filter(|&&g| truth[g] <= tau - epsilon) {
            audit.checked += 1;
            if s.stddevs[g] < bound {
                audit.violations.push(MistakeViolation {
                    cycle: s.cycle,
                    candidate: g,
                    sigma: s.stddevs[g],
                    bound,
                });
            }
        }
    }
    Ok(audit)
}

/// Cumulative fraction of queried points that are true hits, per cycle.
pub fn empirical_hit_fraction(batches: &[Vec<usize>], truth: &[f64], tau: f64) -> Vec<f64> {
    let mut hits = 0usize;
    let mut queried = 0usize;
    batches
        .iter()
        .map(|batch| {
            queried += batch.len();
            hits += batch.iter().filter(|&&g| truth[g] > tau).count();
            if queried == 0 {
                0.0
            } else {
                hits as f64 / queried as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub seed: u64,
    pub delta: f64,
    pub epsilon: f64,
    /// Pool size of the random batch instances.
    pub pool_size: usize,
    pub dimension: usize,
    pub cycles: usize,
    pub batch_size: usize,
    pub trials: usize,
    pub lambdas: Vec<f64>,
    pub lengthscale: f64,
    pub guard: f64,
    pub cdf_step: f64,
    /// Noiseless Sine-1D probability-of-hit campaigns for the
    /// mistake/uncertainty check.
    pub mistake_seeds: usize,
    pub mistake_pool_size: usize,
    pub mistake_cycles: usize,
    pub mistake_batch_size: usize,
    pub threshold: Threshold,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: 0.1,
            epsilon: 0.02,
            pool_size: 12,
            dimension: 2,
            cycles: 3,
            batch_size: 2,
            trials: 100,
            lambdas: vec![0.1, 1.0, 10.0],
            lengthscale: 0.5,
            guard: DEFAULT_ENUMERATION_GUARD,
            cdf_step: 1e-3,
            mistake_seeds: 50,
            mistake_pool_size: 100,
            mistake_cycles: 10,
            mistake_batch_size: 2,
            threshold: Threshold::Quantile(0.1),
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInput("audit.delta must lie in (0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("audit.epsilon must be positive".into()));
        }
        if self.pool_size == 0 || self.pool_size > 64 {
            return Err(Error::InvalidInput("audit.pool_size must lie in 1..=64".into()));
        }
        if self.dimension == 0 || self.cycles == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("audit dimension, cycles and batch_size must be positive".into()));
        }
        if self.cycles * self.batch_size > self.pool_size {
            return Err(Error::InvalidInput("audit.cycles * audit.batch_size exceeds audit.pool_size".into()));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput("audit.lambdas must be positive".into()));
        }
        if !(self.lengthscale > 0.0) || !(self.cdf_step > 0.0) {
            return Err(Error::InvalidInput("audit.lengthscale and audit.cdf_step must be positive".into()));
        }
        self.threshold.validate()?;
        for n in [self.cycles, self.cycles * self.batch_size] {
            let count = binomial(self.pool_size, n);
            if count > self.guard {
                return Err(Error::EnumerationGuard {
                    n: self.pool_size,
                    k: n,
                    count,
                    guard: self.guard,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCheck {
    pub trial: usize,
    pub lambda: f64,
    pub n: usize,
    pub exact: f64,
    pub greedy: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub beta: Vec<f64>,
    pub cdf: CdfAudit,
    pub batch_sigma: Vec<BatchSigmaAudit>,
    pub batch_sigma_violations: usize,
    pub gamma: Vec<GammaCheck>,
    pub gamma_violations: usize,
    pub mistake: MistakeAudit,
    /// Per-seed cumulative hit fraction of the mistake-audit campaigns.
    pub hit_fraction: Vec<Vec<f64>>,
    pub pass: bool,
}

/// Random pool in the unit cube with random disjoint batches.
fn random_instance<R: Rng + ?Sized>(cfg: &AuditConfig, rng: &mut R) -> Result<(CandidatePool, Vec<Vec<usize>>)> {
    let features: Vec<f64> = (0..cfg.pool_size * cfg.dimension).map(|_| rng.random()).collect();
    let pool = CandidatePool::new(cfg.dimension, features)?;
    let mut order: Vec<usize> = pool.ids().collect();
    order.shuffle(rng);
    let batches = order[..cfg.cycles * cfg.batch_size]
        .chunks(cfg.batch_size)
        .map(<[usize]>::to_vec)
        .collect();
    Ok((pool, batches))
}

pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let kernel = KernelSpec::rbf(cfg.lengthscale, 1.0, 0.0);
    let mut rng = rng::stream(cfg.seed, Stream::Audit);
    let beta = (1..=cfg.cycles.max(cfg.mistake_cycles))
        .map(|t| beta_schedule(cfg.pool_size, t, cfg.delta))
        .collect::<Result<Vec<_>>>()?;
    let cdf = audit_cdf_bound(cfg.cdf_step);

    let mut batch_sigma = Vec::new();
    let mut gamma = Vec::new();
    for trial in 0..cfg.trials {
        let (pool, batches) = random_instance(cfg, &mut rng)?;
        for &lambda in &cfg.lambdas {
            batch_sigma.push(audit_batch_sigma_sum(&pool, &batches, &kernel, lambda, cfg.guard)?);
            for n in [cfg.cycles, cfg.cycles * cfg.batch_size] {
                let g = max_information_gain_exact(&pool, n, &kernel, lambda, cfg.guard)?;
                let lower = (1.0 - (-1.0f64).exp()) * g.exact;
                gamma.push(GammaCheck {
                    trial,
                    lambda,
                    n,
                    exact: g.exact,
                    greedy: g.greedy,
                    pass: g.greedy >= lower - 1e-12 && g.greedy <= g.exact + 1e-12,
                });
            }
        }
    }

    let mut mistake = MistakeAudit::default();
    let mut hit_fraction = Vec::new();
    let campaign = CampaignConfig {
        record_posteriors: true,
        ..CampaignConfig::new(
            OracleSpec::new(Family::Sine1d)
                .with_pool_size(cfg.mistake_pool_size)
                .with_noise(0.0),
            Strategy::ProbabilityOfHit,
            cfg.threshold,
            cfg.mistake_cycles,
            cfg.mistake_batch_size,
        )
    };
    for s in 0..cfg.mistake_seeds as u64 {
        let seed = cfg.seed.wrapping_add(s);
        let result = run_campaign(&campaign, seed)?;
        let oracle = crate::oracle::build_pool(&campaign.oracle, seed)?;
        let a = audit_mistake_implies_uncertainty(&result.snapshots, &oracle.truth, result.tau, cfg.epsilon, cfg.delta)?;
        mistake.cycles += a.cycles;
        mistake.confident_cycles += a.confident_cycles;
        mistake.applicable_cycles += a.applicable_cycles;
        mistake.checked += a.checked;
        mistake.violations.extend(a.violations);
        hit_fraction.push(empirical_hit_fraction(&result.batches(), &oracle.truth, result.tau));
    }

    let batch_sigma_violations = batch_sigma.iter().filter(|a| !a.pass).count();
    let gamma_violations = gamma.iter().filter(|g| !g.pass).count();
    let pass = cdf.pass && batch_sigma_violations == 0 && gamma_violations == 0 && mistake.violations.is_empty();
    Ok(AuditReport {
        config: cfg.clone(),
        beta,
        cdf,
        batch_sigma,
        batch_sigma_violations,
        gamma,
        gamma_violations,
        mistake,
        hit_fraction,
        pass,
    })
}
