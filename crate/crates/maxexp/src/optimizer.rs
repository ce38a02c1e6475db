//! Expected-score-maximizing set selection.
//!
//! Given a vector of independent presence probabilities, [`select`] returns
//! the species set with the highest exact expected set-similarity score.
//! The search space collapses from 2^n subsets to n + 1 candidates because
//! the optimum at any fixed set size is always the top-k probabilities; the
//! remaining problem is choosing k, which is solved by evaluating the
//! expected score at every cut (or stopping at the first local drop).
//!
//! The expectation at one cut sums the score over the joint distribution of
//! (hits inside the kept set, misses among the dropped set), both
//! Poisson-binomial and computed exactly in [`crate::setdist`]. A dedicated
//! F-beta path avoids the O(n^3) double loop by exploiting the fact that
//! F-beta depends only on the hit count and the total presence count,
//! giving the whole curve in O(n^2) with O(n) extra memory.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::ProbabilityMatrix;
use crate::metrics::{ConfusionCounts, ScoreKind, ScoreSpec};
use crate::setdist::{poisson_binomial_pmf, SetSizeDistributionPair, SortedProbabilities};

/// How the set-size search walks the candidate cuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Evaluate all n + 1 cuts and take the argmax. Authoritative.
    #[default]
    FullScan,
    /// Stop at the first cut whose score falls below the running maximum.
    /// Exact whenever the score curve is unimodal, which it is empirically;
    /// on a multimodal curve it may return an earlier local maximum.
    FirstMaximum,
}

/// Which axis of a probability matrix forms one optimization problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// One problem per site (row): predict the species set at each site.
    #[default]
    Sample,
    /// One problem per species (column): predict the site set for each
    /// species.
    Macro,
}

impl Orientation {
    pub fn token(&self) -> &'static str {
        match self {
            Orientation::Sample => "sample",
            Orientation::Macro => "macro",
        }
    }

    pub fn parse_token(token: &str) -> Result<Self> {
        match token {
            "sample" => Ok(Orientation::Sample),
            "macro" => Ok(Orientation::Macro),
            _ => Err(Error::InvalidToken {
                what: "orientation",
                token: token.to_string(),
            }),
        }
    }
}

/// Everything [`select`] needs besides the probabilities themselves.
#[derive(Debug, Clone, Copy)]
pub struct MaxExpConfig {
    /// Score family whose expectation is maximized.
    pub score: ScoreSpec,
    pub search_mode: SearchMode,
    /// Axis interpretation used by [`select_matrix`].
    pub orientation: Orientation,
    /// Use the O(n^2) F-beta curve computation instead of the generic
    /// O(n^3) one. Ignored for Jaccard and TSS, which have no shortcut.
    pub fbeta_shortcut: bool,
    /// Retain the per-cut score curve even under `FirstMaximum` (the curve
    /// is then truncated at the stopping point). `FullScan` always keeps
    /// the full curve.
    pub keep_curve: bool,
}

impl Default for MaxExpConfig {
    fn default() -> Self {
        MaxExpConfig {
            score: ScoreSpec::f1(),
            search_mode: SearchMode::FullScan,
            orientation: Orientation::Sample,
            fbeta_shortcut: false,
            keep_curve: false,
        }
    }
}

/// Outcome of one set-size optimization.
#[derive(Debug, Clone)]
pub struct MaxExpResult {
    /// Optimal number of indices to keep.
    pub k_star: usize,
    /// The selected index set, ascending. Always the `k_star` largest
    /// probabilities (ties by ascending index).
    pub selected: Vec<usize>,
    /// Exact expected score of the selected set.
    pub expected_score: f64,
    /// Expected score at each evaluated cut, `curve[k]` for size k.
    /// `None` when `FirstMaximum` runs without `keep_curve`.
    pub score_curve: Option<Vec<f64>>,
}

/// Exact expected score of keeping the k most probable indices, computed
/// from prebuilt set-size distributions.
///
/// This is the generic route that works for every score family; it sums the
/// score over the (k1, k2) = (hits kept, presences dropped) joint
/// distribution, O(k * (n - k)) per call.
pub fn expected_score_at_k(
    k: usize,
    dist: &SetSizeDistributionPair,
    spec: &ScoreSpec,
) -> Result<f64> {
    let n = dist.n();
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "set size {k} exceeds universe size {n}"
        )));
    }
    Ok(expected_score_generic(k, dist, spec))
}

fn expected_score_generic(k: usize, dist: &SetSizeDistributionPair, spec: &ScoreSpec) -> f64 {
    let n = dist.n();
    let kept = dist.prefix_pmf(k);
    let dropped = dist.suffix_pmf(n - k);
    let mut total = 0.0;
    for (k1, &p1) in kept.iter().enumerate() {
        if p1 == 0.0 {
            continue;
        }
        let fp = (k - k1) as u64;
        let mut inner = 0.0;
        for (k2, &p2) in dropped.iter().enumerate() {
            let counts =
                ConfusionCounts::new(k1 as u64, fp, k2 as u64, (n - k - k2) as u64);
            inner += p2 * spec.score(counts);
        }
        total += p1 * inner;
    }
    total
}

/// Walk candidate cuts in order, tracking the running argmax; shared by
/// both search modes. `score_at` is called with k = 0, 1, ... and the walk
/// stops early in `FirstMaximum` mode once a score drops below the best so
/// far. Ties keep the earlier (smaller) k.
fn scan_cuts(
    n: usize,
    mode: SearchMode,
    keep_curve: bool,
    mut score_at: impl FnMut(usize) -> f64,
) -> (usize, f64, Option<Vec<f64>>) {
    let retain = keep_curve || mode == SearchMode::FullScan;
    let mut curve = if retain { Some(Vec::with_capacity(n + 1)) } else { None };
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=n {
        let score = score_at(k);
        if let Some(curve) = curve.as_mut() {
            curve.push(score);
        }
        if score > best {
            best = score;
            best_k = k;
        } else if mode == SearchMode::FirstMaximum && score < best {
            break;
        }
    }
    (best_k, best, curve)
}

/// Pick the expected-score-maximizing subset of one probability vector.
///
/// The returned set is always a prefix of the probabilities sorted in
/// decreasing order (ties by ascending index); among equally scoring cuts
/// the smallest k wins. An empty input is legal and yields k* = 0.
pub fn select(probabilities: &[f64], cfg: &MaxExpConfig) -> Result<MaxExpResult> {
    let sorted = SortedProbabilities::new(probabilities)?;
    let n = sorted.len();
    let shortcut_beta = match cfg.score.kind {
        ScoreKind::FBeta(beta) if cfg.fbeta_shortcut => Some(beta),
        _ => None,
    };
    let (k_star, expected_score, score_curve) = if let Some(beta) = shortcut_beta {
        let curve = FBetaCurve::new(sorted.values(), beta, &cfg.score);
        scan_cuts(n, cfg.search_mode, cfg.keep_curve, curve.into_score_fn())
    } else {
        let dist = SetSizeDistributionPair::build(&sorted);
        scan_cuts(n, cfg.search_mode, cfg.keep_curve, |k| {
            expected_score_generic(k, &dist, &cfg.score)
        })
    };
    Ok(MaxExpResult {
        k_star,
        selected: sorted.top(k_star),
        expected_score,
        score_curve,
    })
}

/// Run [`select`] over every row (sample orientation) or column (macro
/// orientation) of a probability matrix, in parallel. Results are in
/// site order or species order respectively.
pub fn select_matrix(matrix: &ProbabilityMatrix, cfg: &MaxExpConfig) -> Result<Vec<MaxExpResult>> {
    if matrix.n_sites() == 0 {
        return Err(Error::EmptyInput(
            "probability matrix has no sites".to_string(),
        ));
    }
    match cfg.orientation {
        Orientation::Sample => (0..matrix.n_sites())
            .into_par_iter()
            .map(|i| select(matrix.row(i), cfg))
            .collect(),
        Orientation::Macro => (0..matrix.n_species())
            .into_par_iter()
            .map(|j| select(&matrix.column(j), cfg))
            .collect(),
    }
}

/// Incremental O(n^2) computation of the F-beta expected-score curve.
///
/// F-beta of a cut depends only on (hits kept, total presences):
/// with s presences overall of which k1 fall in the kept set of size k,
/// the score is (1 + b^2) * k1 / (b^2 * s + k). Summing k1 against the
/// joint distribution of (k1, s) needs only the partial means
/// w[s] = E[hits kept; total = s], which update in O(n) per cut using the
/// leave-one-out distribution of the newly kept index. That distribution
/// comes from deconvolving the full Poisson-binomial pmf, run in the
/// numerically stable direction for each probability.
struct FBetaCurve {
    values: Vec<f64>,
    total_pmf: Vec<f64>,
    beta_squared: f64,
    empty_match_value: f64,
    /// w[s] = E[hits kept; total presences = s] for the current cut.
    w: Vec<f64>,
    next_k: usize,
}

impl FBetaCurve {
    fn new(values_desc: &[f64], beta: f64, spec: &ScoreSpec) -> Self {
        let n = values_desc.len();
        FBetaCurve {
            values: values_desc.to_vec(),
            total_pmf: poisson_binomial_pmf(values_desc),
            beta_squared: beta * beta,
            empty_match_value: spec.score(ConfusionCounts::default()),
            w: vec![0.0; n + 1],
            next_k: 0,
        }
    }

    fn into_score_fn(mut self) -> impl FnMut(usize) -> f64 {
        move |k| self.score_at(k)
    }

    /// Expected F-beta at cut k. Must be called with k = 0, 1, 2, ... in
    /// order; each call folds one more index into the running partial
    /// means.
    fn score_at(&mut self, k: usize) -> f64 {
        assert_eq!(k, self.next_k, "cuts must be scored in order");
        self.next_k += 1;
        if k == 0 {
            // Only the all-absent outcome scores nonzero (by convention);
            // any presence is a miss with an empty numerator.
            return self.empty_match_value * self.total_pmf[0];
        }
        let eta = self.values[k - 1];
        let loo = deconvolve_bernoulli(&self.total_pmf, eta);
        for s in 1..self.w.len() {
            self.w[s] += eta * loo[s - 1];
        }
        let mut total = 0.0;
        for (s, &w) in self.w.iter().enumerate().skip(1) {
            total += w / (self.beta_squared * s as f64 + k as f64);
        }
        (1.0 + self.beta_squared) * total
    }
}

/// Remove one Bernoulli factor from a Poisson-binomial pmf.
///
/// Solves pmf = q * Bernoulli(eta) for q. The linear recurrence is run
/// forward for eta <= 1/2 and backward otherwise, so the divisor is always
/// the larger of eta and 1 - eta and rounding errors shrink instead of
/// compounding. Exact for eta in {0, 1}.
fn deconvolve_bernoulli(pmf: &[f64], eta: f64) -> Vec<f64> {
    let n = pmf.len() - 1;
    let mut q = vec![0.0; n];
    if n == 0 {
        return q;
    }
    if eta <= 0.5 {
        let keep = 1.0 - eta;
        q[0] = pmf[0] / keep;
        for s in 1..n {
            q[s] = (pmf[s] - eta * q[s - 1]) / keep;
        }
    } else {
        q[n - 1] = pmf[n] / eta;
        for s in (0..n - 1).rev() {
            q[s] = (pmf[s + 1] - (1.0 - eta) * q[s + 1]) / eta;
        }
    }
    q
}
