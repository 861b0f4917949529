//! Campaign scoring: cumulative hits, hit ratio, and SMAPE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub new_hits: usize,
    pub cumulative_hits: usize,
    pub hit_ratio: f64,
    /// Percent on the held-out pool; `None` when nothing is held out.
    pub smape: Option<f64>,
}

/// Per-cycle hit counts for `batches`, judged on noiseless `truth > tau`.
/// `hit_ratio` is `H / |hits|`, or 0 when the hit set is empty.
pub fn cumulative_hits(batches: &[Vec<usize>], truth: &[f64], tau: f64) -> Result<Vec<CycleMetrics>> {
    if !tau.is_finite() {
        return Err(Error::NonFinite("threshold"));
    }
    let total = truth.iter().filter(|&&f| f > tau).count();
    let mut seen = vec![false; truth.len()];
    let mut h = 0;
    let mut out = Vec::with_capacity(batches.len());
    for (t, batch) in batches.iter().enumerate() {
        let mut new_hits = 0;
        for &id in batch {
            let f = *truth.get(id).ok_or(Error::UnknownCandidate(id))?;
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::AlreadyObserved(id));
            }
            if f > tau {
                new_hits += 1;
            }
        }
        h += new_hits;
        out.push(CycleMetrics {
            cycle: t + 1,
            new_hits,
            cumulative_hits: h,
            hit_ratio: hit_ratio(h, total),
            smape: None,
        });
    }
    Ok(out)
}

pub fn hit_ratio(found: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        found as f64 / total as f64
    }
}

/// Symmetric mean absolute percentage error,
/// `100 * mean(|p - a| / ((|p| + |a|) / 2))`, with `0/0` terms counted as 0.
pub fn smape(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::InvalidInput("smape of an empty vector".into()));
    }
    crate::error::ensure_finite(predicted, "predictions")?;
    crate::error::ensure_finite(actual, "actual values")?;
    let total: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(&p, &a)| {
            let denom = (p.abs() + a.abs()) / 2.0;
            if denom == 0.0 {
                0.0
            } else {
                ((p - a).abs() / denom).min(2.0)
            }
        })
        .sum();
    Ok(100.0 * total / predicted.len() as f64)
}

/// Pool ids not in `sampled`, ascending.
pub fn evaluation_split(pool_size: usize, sampled: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; pool_size];
    for &id in sampled {
        if id < pool_size {
            mask[id] = true;
        }
    }
    (0..pool_size).filter(|&i| !mask[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_trajectory() {
        let m = cumulative_hits(&[vec![3], vec![0]], &[0.0, 1.0, 2.0, 3.0], 1.5).unwrap();
        assert_eq!(m.iter().map(|c| c.cumulative_hits).collect::<Vec<_>>(), vec![1, 1]);
        assert_eq!(m.iter().map(|c| c.hit_ratio).collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert_eq!(m[0].new_hits, 1);
        assert_eq!(m[1].new_hits, 0);
    }

    #[test]
    fn all_hits_and_no_hits() {
        let truth = [5.0, 6.0, 7.0, 8.0, 0.0];
        let m = cumulative_hits(&[vec![0, 1], vec![2, 3]], &truth, 1.0).unwrap();
        assert_eq!(m[1].hit_ratio, 1.0);
        let m = cumulative_hits(&[vec![4]], &truth, 1.0).unwrap();
        assert_eq!((m[0].cumulative_hits, m[0].hit_ratio), (0, 0.0));
    }

    #[test]
    fn rejects_overlap_and_bad_tau() {
        assert!(cumulative_hits(&[vec![0], vec![0]], &[1.0, 2.0], 0.0).is_err());
        assert!(cumulative_hits(&[vec![2]], &[1.0, 2.0], 0.0).is_err());
        assert!(cumulative_hits(&[], &[1.0], f64::NAN).is_err());
    }

    #[test]
    fn smape_cases() {
        assert_eq!(smape(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(smape(&[0.0], &[1.0]).unwrap(), 200.0);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!((smape(&[1.0, 3.0], &[2.0, 3.0]).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(smape(&[2.0, 0.5], &[1.0, 4.0]).unwrap(), smape(&[1.0, 4.0], &[2.0, 0.5]).unwrap());
        assert!(smape(&[1.0], &[1.0, 2.0]).is_err());
        assert!(smape(&[], &[]).is_err());
    }

    #[test]
    fn split() {
        assert_eq!(evaluation_split(4, &[]), vec![0, 1, 2, 3]);
        assert!(evaluation_split(3, &[2, 0, 1]).is_empty());
        assert_eq!(evaluation_split(5, &[1, 3]), vec![0, 2, 4]);
    }
}
