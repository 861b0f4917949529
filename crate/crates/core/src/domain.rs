//! Domain types shared by every module: candidates, observations,
//! thresholds and the mutable campaign state.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, Stream};

/// Borrowed view of one candidate in a pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub id: usize,
    pub features: &'a [f64],
}

/// Finite candidate set with dense ids `0..len`.
///
/// Features are stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    dimension: usize,
    features: Vec<f64>,
}

impl CandidatePool {
    pub fn new(dimension: usize, features: Vec<f64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("pool dimension must be at least 1".into()));
        }
        if features.is_empty() {
            return Err(Error::InvalidInput("candidate pool is empty".into()));
        }
        if !features.len().is_multiple_of(dimension) {
            return Err(Error::InvalidInput(format!(
                "{} feature values do not split into rows of dimension {}",
                features.len(),
                dimension
            )));
        }
        ensure_finite(&features, "candidate features")?;
        Ok(Self {
            dimension,
            features,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dimension = rows.first().map(Vec::len).unwrap_or(0);
        let mut features = Vec::with_capacity(rows.len() * dimension);
        for row in rows {
            if row.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::new(dimension, features)
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Feature row of candidate `id`. Panics when `id` is out of range.
    pub fn row(&self, id: usize) -> &[f64] {
        &self.features[id * self.dimension..(id + 1) * self.dimension]
    }

    pub fn get(&self, id: usize) -> Option<Candidate<'_>> {
        (id < self.len()).then(|| Candidate {
            id,
            features: self.row(id),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Candidate<'_>> {
        self.features
            .chunks_exact(self.dimension)
            .enumerate()
            .map(|(id, features)| Candidate { id, features })
    }

    pub fn ids(&self) -> std::ops::Range<usize> {
        0..self.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.features
    }

    pub fn check_id(&self, id: usize) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownCandidate(id))
        }
    }
}

/// A labeled candidate. Cycle 0 marks warm-start labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub candidate_id: usize,
    pub response: f64,
    pub cycle: usize,
}

/// Hit threshold, either in response units or as a top fraction of the
/// ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    Quantile(f64),
}

impl Threshold {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Threshold::Absolute(v) if v.is_finite() => Ok(()),
            Threshold::Absolute(_) => Err(Error::NonFinite("absolute threshold")),
            Threshold::Quantile(q) if q > 0.0 && q < 1.0 => Ok(()),
            Threshold::Quantile(q) => Err(Error::InvalidInput(format!(
                "quantile threshold {q} must lie in (0, 1)"
            ))),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Absolute(v) => write!(f, "a{v}"),
            Threshold::Quantile(q) => write!(f, "q{q}"),
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    /// Parses `q0.10` (top fraction) or `a0.5` (absolute value).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidInput(format!("threshold `{s}` is not of the form q<frac> or a<value>"));
        let (mode, rest) = s.split_at_checked(1).ok_or_else(bad)?;
        let value: f64 = rest.parse().map_err(|_| bad())?;
        let threshold = match mode {
            "q" | "Q" => Threshold::Quantile(value),
            "a" | "A" => Threshold::Absolute(value),
            _ => return Err(bad()),
        };
        threshold.validate()?;
        Ok(threshold)
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of hits a quantile threshold asks for: `ceil(q * n)`, guarded
/// against round-off in the product.
pub fn quantile_hit_count(q: f64, n: usize) -> usize {
    let raw = q * n as f64;
    let k = (raw - 1e-9 * raw.abs().max(1.0)).ceil();
    (k.max(1.0) as usize).min(n)
}

/// Turns a threshold into an absolute cut-off on the given truth vector.
///
/// Quantile mode places the cut-off halfway between the `k`-th and
/// `(k+1)`-th largest truth values with `k = ceil(q * n)`, so that with
/// distinct values exactly `k` candidates satisfy `f > tau`.
pub fn resolve_threshold(threshold: Threshold, truth: &[f64]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("truth vector is empty".into()));
    }
    ensure_finite(truth, "truth")?;
    threshold.validate()?;
    match threshold {
        Threshold::Absolute(v) => Ok(v),
        Threshold::Quantile(q) => {
            let n = truth.len();
            let k = quantile_hit_count(q, n);
            let mut sorted = truth.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if k >= n {
                Ok(sorted[n - 1] - 1.0)
            } else {
                Ok(0.5 * (sorted[k - 1] + sorted[k]))
            }
        }
    }
}

/// Ids with `truth[id] > tau`, ascending.
pub fn hit_set(truth: &[f64], tau: f64) -> Result<Vec<usize>> {
    if !tau.is_finite() {
        return Err(Error::NonFinite("tau"));
    }
    ensure_finite(truth, "truth")?;
    Ok(truth
        .iter()
        .enumerate()
        .filter(|(_, &y)| y > tau)
        .map(|(id, _)| id)
        .collect())
}

/// Mutable state of one campaign: labeled history, batches, and the
/// generator streams owned by the campaign.
#[derive(Debug, Clone)]
pub struct CampaignState {
    pub history: Vec<Observation>,
    pub warm_start: Vec<usize>,
    pub batches: Vec<Vec<usize>>,
    pub cycle: usize,
    pub batch_size: usize,
    pub total_cycles: usize,
    pub rng_seed: u64,
    pub acquisition_rng: ChaCha8Rng,
    pub posterior_rng: ChaCha8Rng,
    sampled: Vec<bool>,
}

impl CampaignState {
    pub fn new(pool_size: usize, batch_size: usize, total_cycles: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        if total_cycles == 0 {
            return Err(Error::InvalidInput("cycle count must be at least 1".into()));
        }
        Ok(Self {
            history: Vec::new(),
            warm_start: Vec::new(),
            batches: Vec::new(),
            cycle: 0,
            batch_size,
            total_cycles,
            rng_seed: seed,
            acquisition_rng: rng::stream(seed, Stream::Acquisition),
            posterior_rng: rng::stream(seed, Stream::Posterior),
            sampled: vec![false; pool_size],
        })
    }

    pub fn pool_size(&self) -> usize {
        self.sampled.len()
    }

    pub fn is_sampled(&self, id: usize) -> bool {
        self.sampled.get(id).copied().unwrap_or(false)
    }

    /// Unsampled ids in ascending order.
    pub fn unsampled(&self) -> Vec<usize> {
        self.sampled
            .iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn observed_count(&self) -> usize {
        self.history.len()
    }

    fn mark(&mut self, ids: &[usize]) -> Result<()> {
        for (i, &id) in ids.iter().enumerate() {
            if id >= self.sampled.len() {
                return Err(Error::UnknownCandidate(id));
            }
            if self.sampled[id] || ids[..i].contains(&id) {
                return Err(Error::AlreadyObserved(id));
            }
        }
        for &id in ids {
            self.sampled[id] = true;
        }
        Ok(())
    }

    /// Labels the initial set before cycle 1.
    pub fn record_warm_start(&mut self, ids: &[usize], responses: &[f64]) -> Result<()> {
        if self.cycle != 0 || !self.warm_start.is_empty() {
            return Err(Error::InvalidInput("warm start must precede the first cycle".into()));
        }
        self.append(ids, responses, 0)?;
        self.warm_start = ids.to_vec();
        Ok(())
    }

    /// Appends batch `B_t` and its observed responses, advancing the cycle.
    pub fn record_batch(&mut self, ids: &[usize], responses: &[f64]) -> Result<()> {
        if ids.len() > self.batch_size {
            return Err(Error::InvalidInput(format!(
                "batch of {} exceeds batch size {}",
                ids.len(),
                self.batch_size
            )));
        }
        let cycle = self.cycle + 1;
        self.append(ids, responses, cycle)?;
        self.batches.push(ids.to_vec());
        self.cycle = cycle;
        Ok(())
    }

    fn append(&mut self, ids: &[usize], responses: &[f64], cycle: usize) -> Result<()> {
        if ids.len() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                got: responses.len(),
            });
        }
        ensure_finite(responses, "observed responses")?;
        self.mark(ids)?;
        self.history
            .extend(ids.iter().zip(responses).map(|(&candidate_id, &response)| Observation {
                candidate_id,
                response,
                cycle,
            }));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_threshold_is_identity() {
        assert_eq!(resolve_threshold(Threshold::Absolute(0.5), &[3.0, -1.0]).unwrap(), 0.5);
    }

    #[test]
    fn median_split() {
        let truth = [1.0, 2.0, 3.0, 4.0];
        let tau = resolve_threshold(Threshold::Quantile(0.5), &truth).unwrap();
        assert!(tau > 2.0 && tau < 3.0);
        assert_eq!(hit_set(&truth, tau).unwrap(), vec![2, 3]);
    }

    #[test]
    fn quantile_covering_everything() {
        let truth = [1.0, 2.0, 3.0];
        let tau = resolve_threshold(Threshold::Quantile(0.99), &truth).unwrap();
        assert_eq!(hit_set(&truth, tau).unwrap().len(), 3);
    }

    #[test]
    fn resolve_errors() {
        assert!(resolve_threshold(Threshold::Quantile(0.1), &[]).is_err());
        assert!(resolve_threshold(Threshold::Quantile(0.1), &[1.0, f64::NAN]).is_err());
        assert!(resolve_threshold(Threshold::Quantile(1.0), &[1.0]).is_err());
    }

    #[test]
    fn hit_set_strict() {
        assert_eq!(hit_set(&[0.0, 1.0, 2.0], 0.5).unwrap(), vec![1, 2]);
        assert_eq!(hit_set(&[0.0, 1.0, 2.0], 1.0).unwrap(), vec![2]);
        assert!(hit_set(&[0.0, 1.0, 2.0], 5.0).unwrap().is_empty());
        assert!(hit_set(&[0.0], f64::INFINITY).is_err());
    }

    #[test]
    fn quantile_count_guards_round_off() {
        assert_eq!(quantile_hit_count(0.1, 500), 50);
        assert_eq!(quantile_hit_count(0.1, 1000), 100);
        assert_eq!(quantile_hit_count(0.3, 10), 3);
        assert_eq!(quantile_hit_count(0.15, 10), 2);
        assert_eq!(quantile_hit_count(0.001, 10), 1);
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("q0.10".parse::<Threshold>().unwrap(), Threshold::Quantile(0.1));
        assert_eq!("a-0.5".parse::<Threshold>().unwrap(), Threshold::Absolute(-0.5));
        assert!("x0.1".parse::<Threshold>().is_err());
        assert!("q1.5".parse::<Threshold>().is_err());
        assert!("".parse::<Threshold>().is_err());
        let t = Threshold::Quantile(0.05);
        assert_eq!(t.to_string().parse::<Threshold>().unwrap(), t);
    }

    #[test]
    fn pool_validation() {
        assert!(CandidatePool::new(2, vec![]).is_err());
        assert!(CandidatePool::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(CandidatePool::new(1, vec![f64::NAN]).is_err());
        assert!(CandidatePool::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let pool = CandidatePool::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.row(1), &[3.0, 4.0]);
        let ids: Vec<usize> = pool.iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![0, 1]);
        assert!(pool.get(2).is_none());
    }

    #[test]
    fn campaign_state_rejects_repeats() {
        let mut state = CampaignState::new(5, 2, 3, 0).unwrap();
        state.record_warm_start(&[0], &[1.0]).unwrap();
        state.record_batch(&[1, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(state.record_batch(&[2], &[0.0]), Err(Error::AlreadyObserved(2)));
        assert_eq!(state.record_batch(&[3, 3], &[0.0, 0.0]), Err(Error::AlreadyObserved(3)));
        assert!(state.record_batch(&[3, 4, 0], &[0.0; 3]).is_err());
        assert_eq!(state.record_batch(&[9], &[0.0]), Err(Error::UnknownCandidate(9)));
        assert_eq!(state.unsampled(), vec![3, 4]);
        assert_eq!(state.cycle, 1);
        assert_eq!(state.history.len(), 3);
    }
}
