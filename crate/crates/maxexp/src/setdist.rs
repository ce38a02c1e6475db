//! Poisson-binomial set-size distributions.
//!
//! For a site with independent presence probabilities, the number of species
//! among any subset that actually occur follows a Poisson-binomial
//! distribution. The expected-score optimizer needs two families of these at
//! once: for every cut k after sorting the probabilities in decreasing
//! order, the size distribution of the k *retained* species (prefix) and of
//! the n-k *dropped* species (suffix). Both families are built here with the
//! standard one-species-at-a-time convolution recursion, exactly and in
//! O(n^2) time.

use crate::error::{Error, Result};

/// Reject any entry that is not a finite number in [0, 1].
pub(crate) fn validate_probabilities(probabilities: &[f64]) -> Result<()> {
    for (i, &p) in probabilities.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidValue(format!(
                "probability {p} at index {i} is outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// Presence probabilities sorted in decreasing order, remembering where each
/// value came from.
///
/// Ties are broken by ascending original index, so selections derived from
/// this ordering are deterministic.
#[derive(Debug, Clone)]
pub struct SortedProbabilities {
    values: Vec<f64>,
    permutation: Vec<usize>,
}

impl SortedProbabilities {
    /// Validate and sort a probability vector. Every entry must be a finite
    /// number in [0, 1]; NaN is rejected, not sorted around.
    pub fn new(probabilities: &[f64]) -> Result<Self> {
        validate_probabilities(probabilities)?;
        let mut permutation: Vec<usize> = (0..probabilities.len()).collect();
        permutation.sort_by(|&a, &b| {
            probabilities[b]
                .partial_cmp(&probabilities[a])
                .expect("probabilities validated finite")
                .then(a.cmp(&b))
        });
        let values = permutation.iter().map(|&i| probabilities[i]).collect();
        Ok(SortedProbabilities {
            values,
            permutation,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The probabilities in decreasing order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Original index of the value at the given sorted rank.
    pub fn original_index(&self, rank: usize) -> usize {
        self.permutation[rank]
    }

    /// Original indices of the k largest probabilities, as a sorted index
    /// set.
    pub fn top(&self, k: usize) -> Vec<usize> {
        let mut set: Vec<usize> = self.permutation[..k].to_vec();
        set.sort_unstable();
        set
    }
}

/// Exact probability mass function of the Poisson-binomial sum of
/// independent indicators with the given success probabilities.
///
/// Returns a vector of length n + 1; the empty product is the point mass
/// `[1.0]`.
pub fn poisson_binomial_pmf(probabilities: &[f64]) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for &eta in probabilities {
        pmf = convolve_bernoulli(&pmf, eta);
    }
    pmf
}

fn convolve_bernoulli(pmf: &[f64], eta: f64) -> Vec<f64> {
    let mut next = vec![0.0; pmf.len() + 1];
    for (j, &mass) in pmf.iter().enumerate() {
        next[j] += (1.0 - eta) * mass;
        next[j + 1] += eta * mass;
    }
    next
}

/// All prefix and suffix set-size distributions of a sorted probability
/// vector, one pmf per cut position.
///
/// `prefix_pmf(k)` is the size distribution of the k largest probabilities;
/// `suffix_pmf(m)` of the m smallest. Rows are stored triangularly (row k
/// has k + 1 entries), so the whole pair costs O(n^2) memory.
#[derive(Debug, Clone)]
pub struct SetSizeDistributionPair {
    prefix: Vec<Vec<f64>>,
    suffix: Vec<Vec<f64>>,
}

impl SetSizeDistributionPair {
    /// Build both table families in O(n^2) time.
    pub fn build(sorted: &SortedProbabilities) -> Self {
        let n = sorted.len();
        let values = sorted.values();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(vec![1.0]);
        for k in 1..=n {
            let row = convolve_bernoulli(&prefix[k - 1], values[k - 1]);
            prefix.push(row);
        }
        let mut suffix = Vec::with_capacity(n + 1);
        suffix.push(vec![1.0]);
        for m in 1..=n {
            let row = convolve_bernoulli(&suffix[m - 1], values[n - m]);
            suffix.push(row);
        }
        SetSizeDistributionPair { prefix, suffix }
    }

    /// Number of species the tables were built over.
    pub fn n(&self) -> usize {
        self.prefix.len() - 1
    }

    /// Size distribution of the k largest probabilities (length k + 1).
    pub fn prefix_pmf(&self, k: usize) -> &[f64] {
        &self.prefix[k]
    }

    /// Size distribution of the m smallest probabilities (length m + 1).
    pub fn suffix_pmf(&self, m: usize) -> &[f64] {
        &self.suffix[m]
    }

    /// Size distribution of the full vector.
    pub fn total_pmf(&self) -> &[f64] {
        &self.prefix[self.prefix.len() - 1]
    }
}
