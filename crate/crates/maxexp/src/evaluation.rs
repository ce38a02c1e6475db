//! Scoring predictions against truth, and the statistics around it.
//!
//! One scoring entry point handles both orientations: per-site scores
//! (sample orientation, one comparison per row) and per-species scores
//! (macro orientation, one comparison per column). On top of that sit a
//! paired sign-flip permutation test for method comparisons, reliability
//! (calibration) curves with binomial uncertainty bands, and per-species
//! prevalence tallies.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{OccurrenceMatrix, ProbabilityMatrix};
use crate::metrics::{ConfusionCounts, ScoreSpec};
use crate::optimizer::Orientation;

/// Scores per comparison unit plus their mean.
#[derive(Debug, Clone)]
pub struct ScoreVector {
    /// One score per site (sample orientation) or per species (macro).
    pub per_unit: Vec<f64>,
    /// Arithmetic mean of `per_unit`.
    pub mean: f64,
    pub orientation: Orientation,
}

/// Score per-site index-set predictions against a truth matrix.
///
/// `sets[i]` holds the predicted species indices for site i, matching the
/// truth matrix's row order. Sample orientation scores each site's set
/// against its true set; macro orientation scores each species' predicted
/// site list against its true site list.
pub fn score_predictions(
    sets: &[Vec<usize>],
    truth: &OccurrenceMatrix,
    spec: &ScoreSpec,
    orientation: Orientation,
) -> Result<ScoreVector> {
    let n_sites = truth.n_sites();
    let n_species = truth.n_species();
    if sets.len() != n_sites {
        return Err(Error::ShapeMismatch(format!(
            "{} prediction sets for {} sites",
            sets.len(),
            n_sites
        )));
    }
    if n_sites == 0 {
        return Err(Error::EmptyInput("no sites to score".to_string()));
    }
    let mut predicted = vec![false; n_sites * n_species];
    for (i, set) in sets.iter().enumerate() {
        for &j in set {
            if j >= n_species {
                return Err(Error::InvalidValue(format!(
                    "predicted species index {j} outside universe of size {n_species}"
                )));
            }
            predicted[i * n_species + j] = true;
        }
    }
    let count = |cells: &mut dyn Iterator<Item = (bool, bool)>| {
        let mut c = ConfusionCounts::default();
        for (p, t) in cells {
            match (p, t) {
                (true, true) => c.true_positives += 1,
                (true, false) => c.false_positives += 1,
                (false, true) => c.false_negatives += 1,
                (false, false) => c.true_negatives += 1,
            }
        }
        c
    };
    let per_unit: Vec<f64> = match orientation {
        Orientation::Sample => (0..n_sites)
            .map(|i| {
                let row = &predicted[i * n_species..(i + 1) * n_species];
                let counts =
                    count(&mut (0..n_species).map(|j| (row[j], truth.get(i, j))));
                spec.score(counts)
            })
            .collect(),
        Orientation::Macro => (0..n_species)
            .map(|j| {
                let counts = count(
                    &mut (0..n_sites).map(|i| (predicted[i * n_species + j], truth.get(i, j))),
                );
                spec.score(counts)
            })
            .collect(),
    };
    let mean = per_unit.iter().sum::<f64>() / per_unit.len() as f64;
    Ok(ScoreVector {
        per_unit,
        mean,
        orientation,
    })
}

/// Result of a paired sign-flip permutation test.
#[derive(Debug, Clone, Serialize)]
pub struct PermutationTestResult {
    /// Mean of the paired differences a - b.
    pub observed: f64,
    /// One-sided add-one p-value for "a scores higher than b".
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

/// Paired sign-flip permutation test on two equal-length score vectors.
///
/// The statistic is the mean difference; each permutation flips the sign of
/// every pair independently. Each permutation index derives its own
/// counter-based random stream from the seed, so the p-value is identical
/// across thread counts and runs. The add-one convention keeps p in
/// (0, 1]: p = (1 + #{permutations >= observed}) / (1 + n).
pub fn permutation_test(
    scores_a: &[f64],
    scores_b: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<PermutationTestResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::ShapeMismatch(format!(
            "paired test needs equal lengths, got {} and {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    if scores_a.is_empty() {
        return Err(Error::EmptyInput("paired test needs at least one pair".to_string()));
    }
    if n_permutations == 0 {
        return Err(Error::InvalidParameter(
            "permutation count must be at least 1".to_string(),
        ));
    }
    let diffs: Vec<f64> = scores_a
        .iter()
        .zip(scores_b)
        .map(|(a, b)| a - b)
        .collect();
    let len = diffs.len() as f64;
    let observed = diffs.iter().sum::<f64>() / len;
    let n_exceeding: u64 = (0..n_permutations as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index);
            let mut sum = 0.0;
            for &d in &diffs {
                if rng.next_u32() & 1 == 1 {
                    sum -= d;
                } else {
                    sum += d;
                }
            }
            u64::from(sum / len >= observed)
        })
        .sum();
    Ok(PermutationTestResult {
        observed,
        p_value: (n_exceeding as f64 + 1.0) / (n_permutations as f64 + 1.0),
        n_permutations,
        seed,
    })
}

/// One bin of a reliability curve.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationBin {
    /// Inclusive lower edge.
    pub lower: f64,
    /// Exclusive upper edge, except the last bin which includes 1.0.
    pub upper: f64,
    /// Number of cells whose probability fell in the bin.
    pub count: u64,
    /// Mean predicted probability of those cells; `None` for empty bins.
    pub mean_probability: Option<f64>,
    /// Fraction of those cells that were truly present; `None` if empty.
    pub observed_fraction: Option<f64>,
    /// Binomial standard error of the fraction, with the fraction pulled
    /// away from 0 and 1 by half a count so the band never collapses.
    pub sigma: Option<f64>,
}

/// Reliability curve over all matrix cells.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationCurve {
    pub bins: Vec<CalibrationBin>,
}

/// Bin every (probability, occurrence) cell pair into `n_bins` equal-width
/// probability bins and summarize observed presence rates per bin.
pub fn calibration_curve(
    probs: &ProbabilityMatrix,
    truth: &OccurrenceMatrix,
    n_bins: usize,
) -> Result<CalibrationCurve> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter(
            "calibration curve needs at least one bin".to_string(),
        ));
    }
    if probs.site_ids() != truth.site_ids() || probs.species_ids() != truth.species_ids() {
        return Err(Error::IdMismatch(
            "probability and truth matrices must share aligned axes".to_string(),
        ));
    }
    let mut count = vec![0u64; n_bins];
    let mut sum_probability = vec![0.0; n_bins];
    let mut present = vec![0u64; n_bins];
    for i in 0..probs.n_sites() {
        for j in 0..probs.n_species() {
            let p = probs.get(i, j);
            let bin = ((p * n_bins as f64) as usize).min(n_bins - 1);
            count[bin] += 1;
            sum_probability[bin] += p;
            present[bin] += u64::from(truth.get(i, j));
        }
    }
    let bins = (0..n_bins)
        .map(|b| {
            let lower = b as f64 / n_bins as f64;
            let upper = (b + 1) as f64 / n_bins as f64;
            if count[b] == 0 {
                return CalibrationBin {
                    lower,
                    upper,
                    count: 0,
                    mean_probability: None,
                    observed_fraction: None,
                    sigma: None,
                };
            }
            let n = count[b] as f64;
            let fraction = present[b] as f64 / n;
            let pulled = fraction.clamp(0.5 / n, 1.0 - 0.5 / n);
            CalibrationBin {
                lower,
                upper,
                count: count[b],
                mean_probability: Some(sum_probability[b] / n),
                observed_fraction: Some(fraction),
                sigma: Some((pulled * (1.0 - pulled) / n).sqrt()),
            }
        })
        .collect();
    Ok(CalibrationCurve { bins })
}

/// Predicted and observed presence counts for one species.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PrevalenceEntry {
    /// Species index (column) in the truth matrix.
    pub species: usize,
    /// Number of sites where the species was predicted.
    pub predicted: u64,
    /// Number of sites where it truly occurs.
    pub observed: u64,
}

/// Per-species predicted vs observed prevalence over all sites.
pub fn prevalence_table(
    sets: &[Vec<usize>],
    truth: &OccurrenceMatrix,
) -> Result<Vec<PrevalenceEntry>> {
    if sets.len() != truth.n_sites() {
        return Err(Error::ShapeMismatch(format!(
            "{} prediction sets for {} sites",
            sets.len(),
            truth.n_sites()
        )));
    }
    let n_species = truth.n_species();
    let mut predicted = vec![0u64; n_species];
    for set in sets {
        for &j in set {
            if j >= n_species {
                return Err(Error::InvalidValue(format!(
                    "predicted species index {j} outside universe of size {n_species}"
                )));
            }
            predicted[j] += 1;
        }
    }
    Ok((0..n_species)
        .map(|j| PrevalenceEntry {
            species: j,
            predicted: predicted[j],
            observed: truth.column_set(j).len() as u64,
        })
        .collect())
}
