//! Brute-force enumeration oracle.
//!
//! Everything here recomputes quantities the fast paths obtain by dynamic
//! programming, but by direct summation over all 2^n presence/absence
//! outcomes. That makes the oracle useless at scale and invaluable for
//! testing: it shares the score implementation with [`crate::metrics`] but
//! none of the recursions, so agreement between routes is meaningful.
//!
//! All entry points refuse universes larger than [`OracleLimits`] allows,
//! with an explicit message, rather than silently grinding.

use crate::error::{Error, Result};
use crate::metrics::{ConfusionCounts, ScoreSpec};
use crate::setdist::validate_probabilities;

/// Size guardrail for the enumeration routines.
#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    /// Largest universe the oracle will enumerate (cost is 2^n outcomes).
    pub max_species: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_species: 20 }
    }
}

fn check_limit(n: usize, limits: OracleLimits) -> Result<()> {
    if n > limits.max_species {
        return Err(Error::OracleLimit {
            n_species: n,
            max_species: limits.max_species,
        });
    }
    Ok(())
}

/// Probability of every joint presence/absence outcome, indexed by bitmask
/// (bit i set means species i present). Length 2^n.
fn outcome_probabilities(probabilities: &[f64]) -> Vec<f64> {
    let mut out = vec![1.0];
    for &eta in probabilities {
        let half = out.len();
        out.resize(half * 2, 0.0);
        for mask in 0..half {
            let p = out[mask];
            out[mask] = p * (1.0 - eta);
            out[mask + half] = p * eta;
        }
    }
    out
}

fn candidate_mask(candidate: &[usize], n: usize) -> Result<u64> {
    let mut mask = 0u64;
    for &i in candidate {
        if i >= n {
            return Err(Error::InvalidValue(format!(
                "candidate species index {i} outside universe of size {n}"
            )));
        }
        mask |= 1 << i;
    }
    Ok(mask)
}

fn expected_score_of_mask(
    mask: u64,
    outcome_probs: &[f64],
    spec: &ScoreSpec,
    n: usize,
) -> f64 {
    let predicted = mask.count_ones() as u64;
    let mut total = 0.0;
    for (outcome, &p) in outcome_probs.iter().enumerate() {
        let outcome = outcome as u64;
        let tp = (mask & outcome).count_ones() as u64;
        let fp = predicted - tp;
        let fn_ = outcome.count_ones() as u64 - tp;
        let tn = n as u64 - tp - fp - fn_;
        total += p * spec.score(ConfusionCounts::new(tp, fp, fn_, tn));
    }
    total
}

/// Exact expected score of one candidate set, by summing the score over all
/// 2^n outcomes weighted by their joint probabilities.
pub fn exact_expected_score(
    candidate: &[usize],
    probabilities: &[f64],
    spec: &ScoreSpec,
    limits: OracleLimits,
) -> Result<f64> {
    let n = probabilities.len();
    check_limit(n, limits)?;
    validate_probabilities(probabilities)?;
    let mask = candidate_mask(candidate, n)?;
    let outcome_probs = outcome_probabilities(probabilities);
    Ok(expected_score_of_mask(mask, &outcome_probs, spec, n))
}

/// The best subset of the universe by exact expected score, found by
/// scoring all 2^n candidate sets against all 2^n outcomes.
///
/// Ties go to the lexicographically smallest index set, so the empty set
/// wins any tie it is part of.
pub fn exhaustive_best_set(
    probabilities: &[f64],
    spec: &ScoreSpec,
    limits: OracleLimits,
) -> Result<(Vec<usize>, f64)> {
    let n = probabilities.len();
    check_limit(n, limits)?;
    validate_probabilities(probabilities)?;
    let outcome_probs = outcome_probabilities(probabilities);
    let mut best_mask = 0u64;
    let mut best_score = expected_score_of_mask(0, &outcome_probs, spec, n);
    for mask in 1..(1u64 << n) {
        let score = expected_score_of_mask(mask, &outcome_probs, spec, n);
        if score > best_score {
            best_score = score;
            best_mask = mask;
        } else if score == best_score && mask_to_set(mask) < mask_to_set(best_mask) {
            best_mask = mask;
        }
    }
    Ok((mask_to_set(best_mask), best_score))
}

/// Set-size distribution computed by enumerating outcomes instead of by the
/// convolution recursion. Length n + 1.
pub fn enumerated_pmf(probabilities: &[f64], limits: OracleLimits) -> Result<Vec<f64>> {
    let n = probabilities.len();
    check_limit(n, limits)?;
    validate_probabilities(probabilities)?;
    let outcome_probs = outcome_probabilities(probabilities);
    let mut pmf = vec![0.0; n + 1];
    for (outcome, &p) in outcome_probs.iter().enumerate() {
        pmf[outcome.count_ones() as usize] += p;
    }
    Ok(pmf)
}

fn mask_to_set(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask & (1 << i) != 0).collect()
}
