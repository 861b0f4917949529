//! Batch selection rules.
//!
//! Every selector returns `min(b, |C_t|)` distinct ids drawn from the
//! unsampled set `C_t`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::CandidatePool;
use crate::error::{Error, Result};
use crate::stats::normal_sf;
use crate::surrogate::{FittedSurrogate, PosteriorSummary, SIGMA_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ProbabilityOfHit,
    Thompson,
    ThompsonHit,
    TopK,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::ProbabilityOfHit,
        Strategy::TopK,
        Strategy::Thompson,
        Strategy::ThompsonHit,
        Strategy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::ProbabilityOfHit => "probability_of_hit",
            Strategy::Thompson => "thompson",
            Strategy::ThompsonHit => "thompson_hit",
            Strategy::TopK => "top_k",
            Strategy::Random => "random",
        }
    }

    /// Whether the rule consumes posterior draws.
    pub fn samples_posterior(self) -> bool {
        matches!(self, Strategy::Thompson | Strategy::ThompsonHit)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown strategy `{s}` (expected one of probability_of_hit, top_k, thompson, thompson_hit, random)"
                ))
            })
    }
}

/// How plain Thompson sampling fills a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThompsonMode {
    /// One independent joint draw per slot, argmax over ids not yet chosen.
    #[default]
    PerSlot,
    /// A single joint draw, top-b by sampled value.
    SingleDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    pub strategy: Strategy,
    pub batch_size: usize,
    #[serde(default)]
    pub thompson_mode: ThompsonMode,
}

impl AcquisitionSpec {
    pub fn new(strategy: Strategy, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        Ok(Self {
            strategy,
            batch_size,
            thompson_mode: ThompsonMode::default(),
        })
    }
}

/// `P(f > tau)` under `N(mu, sigma^2)`; the indicator `mu > tau` when
/// `sigma` is below the surrogate floor.
pub fn hit_probability(mu: f64, sigma: f64, tau: f64) -> Result<f64> {
    if !(mu.is_finite() && sigma.is_finite() && tau.is_finite()) {
        return Err(Error::NonFinite("hit probability inputs"));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidInput("sigma must be nonnegative".into()));
    }
    if sigma < SIGMA_FLOOR {
        return Ok(if mu > tau { 1.0 } else { 0.0 });
    }
    Ok(normal_sf((tau - mu) / sigma))
}

/// Monotone surrogate for the hit probability: the z-score `(mu - tau) / sigma`.
pub fn hit_score(mu: f64, sigma: f64, tau: f64) -> f64 {
    (mu - tau) / sigma.max(SIGMA_FLOOR)
}

fn descending(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// Top-`b` positions by score, exact ties permuted uniformly by `rng`.
pub fn top_b_random_ties<R: Rng + ?Sized>(scores: &[f64], b: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&i, &j| descending(scores[i], scores[j]));
    order.truncate(b);
    order
}

/// Top-`b` positions by score, ties resolved by position.
fn top_b_stable(scores: &[f64], b: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| descending(scores[i], scores[j]));
    order.truncate(b);
    order
}

fn ensure_nonempty(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidInput("no unsampled candidates left".into()))
    } else {
        Ok(())
    }
}

/// Probability-of-Hit: the `b` candidates with the largest posterior hit
/// probability, ranked through the equivalent z-score.
pub fn select_poh<R: Rng + ?Sized>(
    posterior: &PosteriorSummary,
    tau: f64,
    b: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    ensure_nonempty(posterior.len())?;
    let scores: Vec<f64> = posterior
        .means
        .iter()
        .zip(&posterior.stddevs)
        .map(|(&m, &s)| hit_score(m, s, tau))
        .collect();
    Ok(top_b_random_ties(&scores, b, rng)
        .into_iter()
        .map(|i| posterior.ids[i])
        .collect())
}

/// Top-K greedy on the posterior mean; ties go to the smaller id.
pub fn select_topk(posterior: &PosteriorSummary, b: usize) -> Result<Vec<usize>> {
    ensure_nonempty(posterior.len())?;
    let mut order: Vec<usize> = (0..posterior.len()).collect();
    order.sort_by(|&i, &j| {
        descending(posterior.means[i], posterior.means[j]).then(posterior.ids[i].cmp(&posterior.ids[j]))
    });
    Ok(order.into_iter().take(b).map(|i| posterior.ids[i]).collect())
}

/// Uniform `b`-subset of the candidates.
pub fn select_random<R: Rng + ?Sized>(candidates: &[usize], b: usize, rng: &mut R) -> Result<Vec<usize>> {
    ensure_nonempty(candidates.len())?;
    let b = b.min(candidates.len());
    Ok(index::sample(rng, candidates.len(), b)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}

/// Batch Thompson sampling from precomputed draws, one draw per slot:
/// slot `j` takes the argmax of `draws[j]` among ids not yet chosen.
pub fn thompson_from_draws(candidates: &[usize], draws: &[Vec<f64>]) -> Vec<usize> {
    let mut taken = vec![false; candidates.len()];
    let mut batch = Vec::with_capacity(draws.len());
    for draw in draws {
        let best = (0..candidates.len())
            .filter(|&i| !taken[i])
            .max_by(|&i, &j| draw[i].total_cmp(&draw[j]).then(j.cmp(&i)));
        if let Some(i) = best {
            taken[i] = true;
            batch.push(candidates[i]);
        }
    }
    batch
}

pub fn select_thompson<R: Rng + ?Sized>(
    surrogate: &FittedSurrogate,
    pool: &CandidatePool,
    candidates: &[usize],
    b: usize,
    mode: ThompsonMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    ensure_nonempty(candidates.len())?;
    let b = b.min(candidates.len());
    let joint = surrogate.joint_posterior(pool, candidates)?;
    match mode {
        ThompsonMode::PerSlot => {
            let draws: Vec<Vec<f64>> = (0..b).map(|_| joint.sample(rng)).collect();
            Ok(thompson_from_draws(candidates, &draws))
        }
        ThompsonMode::SingleDraw => {
            let draw = joint.sample(rng);
            Ok(top_b_stable(&draw, b).into_iter().map(|i| candidates[i]).collect())
        }
    }
}

/// Thompson-Hit on a given draw: a uniform `b`-subset of the sampled hits
/// when there are enough of them, otherwise every sampled hit topped up by
/// the best remaining draws.
pub fn thompson_hit_from_draw<R: Rng + ?Sized>(
    candidates: &[usize],
    draw: &[f64],
    tau: f64,
    b: usize,
    rng: &mut R,
) -> Vec<usize> {
    let (hits, rest): (Vec<usize>, Vec<usize>) = (0..candidates.len()).partition(|&i| draw[i] > tau);
    if hits.len() >= b {
        return index::sample(rng, hits.len(), b)
            .into_iter()
            .map(|k| candidates[hits[k]])
            .collect();
    }
    let rest_scores: Vec<f64> = rest.iter().map(|&i| draw[i]).collect();
    let fill = top_b_stable(&rest_scores, b - hits.len());
    hits.iter()
        .copied()
        .chain(fill.into_iter().map(|k| rest[k]))
        .map(|i| candidates[i])
        .collect()
}

/// Thompson-Hit. The joint draw uses `posterior_rng`; the subset choice uses
/// `subset_rng`.
pub fn select_thompson_hit<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    surrogate: &FittedSurrogate,
    pool: &CandidatePool,
    candidates: &[usize],
    tau: f64,
    b: usize,
    posterior_rng: &mut R1,
    subset_rng: &mut R2,
) -> Result<Vec<usize>> {
    ensure_nonempty(candidates.len())?;
    let draw = surrogate.joint_posterior(pool, candidates)?.sample(posterior_rng);
    Ok(thompson_hit_from_draw(candidates, &draw, tau, b, subset_rng))
}
