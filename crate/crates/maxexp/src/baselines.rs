//! Baseline binarization methods and their calibration.
//!
//! Five ways to turn a probability vector into a set without optimizing an
//! expected score: a global threshold, per-species thresholds, a fixed set
//! size (top-k), the rounded sum of probabilities (expected richness), and
//! a split-conformal threshold with a coverage guarantee. The supervised
//! ones are fitted by [`calibrate`], which runs an exhaustive grid search
//! over the finitely many thresholds (or sizes) that matter and reports
//! what it achieved; fitted methods serialize to a small JSON document via
//! [`MethodFile`] so a later `binarize` run can replay them.
//!
//! Thresholds are inclusive (`p >= t` selects) and every tie rule matches
//! the optimizer's: top-k breaks probability ties by ascending index, and
//! grid ties go to the smallest threshold or size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::score_predictions;
use crate::io::{OccurrenceMatrix, ProbabilityMatrix};
use crate::metrics::ScoreSpec;
use crate::optimizer::Orientation;
use crate::setdist::{validate_probabilities, SortedProbabilities};
use rayon::prelude::*;

/// How the sum of probabilities becomes an integer set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SseRounding {
    /// Banker's rounding: halves go to the even neighbor.
    #[default]
    HalfEven,
    Floor,
    Ceil,
}

impl SseRounding {
    fn apply(self, sum: f64) -> usize {
        let rounded = match self {
            SseRounding::HalfEven => sum.round_ties_even(),
            SseRounding::Floor => sum.floor(),
            SseRounding::Ceil => sum.ceil(),
        };
        rounded as usize
    }
}

/// A fully parameterized binarization rule, ready to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum BinarizationMethod {
    /// Select every index with probability >= threshold.
    GlobalThreshold { threshold: f64 },
    /// One inclusive threshold per species, in column order.
    PerSpeciesThreshold { thresholds: Vec<f64> },
    /// Select the k most probable indices (ties by ascending index).
    #[serde(rename = "topk")]
    TopK { k: usize },
    /// Select the top round(sum of probabilities) indices.
    Sse { rounding: SseRounding },
    /// Split-conformal threshold targeting coverage 1 - alpha of true
    /// presences. `threshold` is produced by calibration.
    Conformal {
        alpha: f64,
        threshold: Option<f64>,
    },
}

impl BinarizationMethod {
    /// Short descriptor for metadata and summaries, e.g. "topk:5".
    pub fn descriptor(&self) -> String {
        match self {
            BinarizationMethod::GlobalThreshold { threshold } => format!("threshold:{threshold}"),
            BinarizationMethod::PerSpeciesThreshold { .. } => "per-species-threshold".to_string(),
            BinarizationMethod::TopK { k } => format!("topk:{k}"),
            BinarizationMethod::Sse { rounding } => match rounding {
                SseRounding::HalfEven => "sse".to_string(),
                SseRounding::Floor => "sse:floor".to_string(),
                SseRounding::Ceil => "sse:ceil".to_string(),
            },
            BinarizationMethod::Conformal { alpha, .. } => format!("conformal:{alpha}"),
        }
    }

    /// Check that the method's parameters are in range.
    pub fn validate(&self) -> Result<()> {
        let check_threshold = |t: f64| -> Result<()> {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!(
                    "threshold {t} is outside [0, 1]"
                )));
            }
            Ok(())
        };
        match self {
            BinarizationMethod::GlobalThreshold { threshold } => check_threshold(*threshold),
            BinarizationMethod::PerSpeciesThreshold { thresholds } => {
                thresholds.iter().try_for_each(|&t| check_threshold(t))
            }
            BinarizationMethod::TopK { .. } | BinarizationMethod::Sse { .. } => Ok(()),
            BinarizationMethod::Conformal { alpha, threshold } => {
                check_alpha(*alpha)?;
                threshold.map_or(Ok(()), check_threshold)
            }
        }
    }

    /// Apply the rule to one site's probability vector, returning the
    /// selected indices in ascending order.
    pub fn apply(&self, probabilities: &[f64]) -> Result<Vec<usize>> {
        self.validate()?;
        validate_probabilities(probabilities)?;
        let n = probabilities.len();
        let above = |t: f64| -> Vec<usize> {
            (0..n).filter(|&j| probabilities[j] >= t).collect()
        };
        match self {
            BinarizationMethod::GlobalThreshold { threshold } => Ok(above(*threshold)),
            BinarizationMethod::PerSpeciesThreshold { thresholds } => {
                if thresholds.len() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "{} thresholds for {n} species",
                        thresholds.len()
                    )));
                }
                Ok((0..n).filter(|&j| probabilities[j] >= thresholds[j]).collect())
            }
            BinarizationMethod::TopK { k } => {
                if *k > n {
                    return Err(Error::InvalidParameter(format!(
                        "top-k size {k} exceeds {n} species"
                    )));
                }
                Ok(SortedProbabilities::new(probabilities)?.top(*k))
            }
            BinarizationMethod::Sse { rounding } => {
                let sum: f64 = probabilities.iter().sum();
                let k = rounding.apply(sum).min(n);
                Ok(SortedProbabilities::new(probabilities)?.top(k))
            }
            BinarizationMethod::Conformal { threshold, .. } => match threshold {
                Some(t) => Ok(above(*t)),
                None => Err(Error::MissingParameter(
                    "conformal method has no fitted threshold; run calibrate first".to_string(),
                )),
            },
        }
    }

    /// Apply the rule to every site of a matrix.
    pub fn apply_matrix(&self, probs: &ProbabilityMatrix) -> Result<Vec<Vec<usize>>> {
        (0..probs.n_sites()).map(|i| self.apply(probs.row(i))).collect()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "conformal miscoverage level {alpha} must lie strictly between 0 and 1"
        )));
    }
    Ok(())
}

/// The method families [`calibrate`] can fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibratableMethod {
    GlobalThreshold,
    PerSpeciesThreshold,
    TopK,
    Conformal { alpha: f64 },
}

/// Outcome of fitting a method on a calibration split.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    /// The fitted, ready-to-apply method.
    pub method: BinarizationMethod,
    /// Mean objective of the fitted method on the calibration data;
    /// re-scoring the fitted method reproduces this exactly.
    pub achieved_score: f64,
    /// Number of candidate parameter settings evaluated (0 for conformal,
    /// which computes its threshold directly).
    pub grid_evaluations: usize,
}

/// Fit a supervised binarization method on probabilities plus truth.
///
/// Threshold and size searches are exhaustive over the candidate values
/// that can change the predictions — the distinct probabilities plus the
/// endpoints 0 and 1, or every k from 0 to n — so the reported optimum is
/// exact, not a local one. Ties prefer the smallest threshold or size.
pub fn calibrate(
    kind: CalibratableMethod,
    probs: &ProbabilityMatrix,
    truth: &OccurrenceMatrix,
    objective: &ScoreSpec,
    orientation: Orientation,
) -> Result<CalibrationReport> {
    if probs.site_ids() != truth.site_ids() || probs.species_ids() != truth.species_ids() {
        return Err(Error::IdMismatch(
            "probability and truth matrices must share aligned axes".to_string(),
        ));
    }
    if probs.n_sites() == 0 {
        return Err(Error::EmptyInput("calibration set has no sites".to_string()));
    }
    let mean_objective = |method: &BinarizationMethod| -> Result<f64> {
        let sets = method.apply_matrix(probs)?;
        Ok(score_predictions(&sets, truth, objective, orientation)?.mean)
    };
    let (method, grid_evaluations) = match kind {
        CalibratableMethod::GlobalThreshold => {
            let grid = threshold_grid(probs.values());
            let scored: Vec<f64> = grid
                .par_iter()
                .map(|&t| mean_objective(&BinarizationMethod::GlobalThreshold { threshold: t }))
                .collect::<Result<_>>()?;
            let best = argmax_first(&scored);
            (
                BinarizationMethod::GlobalThreshold { threshold: grid[best] },
                grid.len(),
            )
        }
        CalibratableMethod::TopK => {
            let sizes: Vec<usize> = (0..=probs.n_species()).collect();
            let scored: Vec<f64> = sizes
                .par_iter()
                .map(|&k| mean_objective(&BinarizationMethod::TopK { k }))
                .collect::<Result<_>>()?;
            let best = argmax_first(&scored);
            (BinarizationMethod::TopK { k: sizes[best] }, sizes.len())
        }
        CalibratableMethod::PerSpeciesThreshold => {
            let fitted: Vec<(f64, usize)> = (0..probs.n_species())
                .into_par_iter()
                .map(|j| fit_column_threshold(probs, truth, objective, j))
                .collect();
            let evaluations = fitted.iter().map(|(_, e)| e).sum();
            let thresholds = fitted.into_iter().map(|(t, _)| t).collect();
            (
                BinarizationMethod::PerSpeciesThreshold { thresholds },
                evaluations,
            )
        }
        CalibratableMethod::Conformal { alpha } => {
            check_alpha(alpha)?;
            let threshold = conformal_threshold(probs, truth, alpha)?;
            (
                BinarizationMethod::Conformal {
                    alpha,
                    threshold: Some(threshold),
                },
                0,
            )
        }
    };
    let achieved_score = mean_objective(&method)?;
    Ok(CalibrationReport {
        method,
        achieved_score,
        grid_evaluations,
    })
}

/// Candidate thresholds: the endpoints plus every distinct probability.
fn threshold_grid(values: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = values.to_vec();
    grid.push(0.0);
    grid.push(1.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Index of the maximum, preferring the earliest on ties.
fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Best threshold for a single species column against its own column
/// score, independent of every other species.
fn fit_column_threshold(
    probs: &ProbabilityMatrix,
    truth: &OccurrenceMatrix,
    objective: &ScoreSpec,
    j: usize,
) -> (f64, usize) {
    let column = probs.column(j);
    let grid = threshold_grid(&column);
    let scored: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let mut counts = crate::metrics::ConfusionCounts::default();
            for (i, &p) in column.iter().enumerate() {
                match (p >= t, truth.get(i, j)) {
                    (true, true) => counts.true_positives += 1,
                    (true, false) => counts.false_positives += 1,
                    (false, true) => counts.false_negatives += 1,
                    (false, false) => counts.true_negatives += 1,
                }
            }
            objective.score(counts)
        })
        .collect();
    (grid[argmax_first(&scored)], grid.len())
}

/// Split-conformal presence threshold at miscoverage alpha.
///
/// The nonconformity score of a true presence is 1 - p; the fitted
/// threshold is the ceil((1 - alpha) * (n + 1))-th largest presence
/// probability, which guarantees coverage >= 1 - alpha of exchangeable new
/// presences. When that rank exceeds n (tiny calibration sets or tiny
/// alpha) the threshold collapses to 0 and everything is selected.
fn conformal_threshold(
    probs: &ProbabilityMatrix,
    truth: &OccurrenceMatrix,
    alpha: f64,
) -> Result<f64> {
    let mut presence_probs: Vec<f64> = Vec::new();
    for i in 0..probs.n_sites() {
        for j in 0..probs.n_species() {
            if truth.get(i, j) {
                presence_probs.push(probs.get(i, j));
            }
        }
    }
    if presence_probs.is_empty() {
        return Err(Error::EmptyInput(
            "calibration set contains no presences; conformal threshold is undefined".to_string(),
        ));
    }
    let n = presence_probs.len();
    let rank = ((1.0 - alpha) * (n as f64 + 1.0)).ceil() as usize;
    if rank > n {
        return Ok(0.0);
    }
    presence_probs.sort_by(|a, b| f64::total_cmp(b, a));
    Ok(presence_probs[rank - 1])
}

/// On-disk form of a fitted method: the method itself plus fitting
/// provenance. Serializes as `{"kind", "params", "objective", "fitted_on",
/// "achieved_score"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFile {
    #[serde(flatten)]
    pub method: BinarizationMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_on: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieved_score: Option<f64>,
}

impl MethodFile {
    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        body.push('\n');
        std::fs::write(path, body).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: MethodFile = serde_json::from_str(&raw).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        file.method.validate()?;
        Ok(file)
    }
}

/// Parse a ready-to-apply method token: `sse[:rounding]`, `topk:<k>`,
/// `threshold:<t>`, `conformal`, or `per-species-threshold`. Supervised
/// tokens without inline parameters fail with a pointer at `calibrate`.
pub fn parse_method_token(token: &str) -> Result<BinarizationMethod> {
    let invalid = || Error::InvalidToken {
        what: "method",
        token: token.to_string(),
    };
    let needs_fit = |what: &str| {
        Error::MissingParameter(format!(
            "{what} has no inline parameters; fit it with calibrate and pass the fitted file"
        ))
    };
    let (head, arg) = match token.split_once(':') {
        Some((head, arg)) => (head, Some(arg)),
        None => (token, None),
    };
    match (head, arg) {
        ("sse", None) => Ok(BinarizationMethod::Sse { rounding: SseRounding::default() }),
        ("sse", Some("half-even")) => Ok(BinarizationMethod::Sse { rounding: SseRounding::HalfEven }),
        ("sse", Some("floor")) => Ok(BinarizationMethod::Sse { rounding: SseRounding::Floor }),
        ("sse", Some("ceil")) => Ok(BinarizationMethod::Sse { rounding: SseRounding::Ceil }),
        ("sse", Some(_)) => Err(invalid()),
        ("topk", Some(arg)) => {
            let k = arg.parse().map_err(|_| invalid())?;
            Ok(BinarizationMethod::TopK { k })
        }
        ("topk", None) => Err(needs_fit("topk")),
        ("threshold", Some(arg)) => {
            let threshold: f64 = arg.parse().map_err(|_| invalid())?;
            let method = BinarizationMethod::GlobalThreshold { threshold };
            method.validate()?;
            Ok(method)
        }
        ("threshold", None) => Err(needs_fit("threshold")),
        ("per-species-threshold", None) => Err(needs_fit("per-species-threshold")),
        ("conformal", _) => Err(Error::MissingParameter(
            "conformal needs a fitted threshold; run calibrate and pass the fitted file"
                .to_string(),
        )),
        _ => Err(invalid()),
    }
}

/// Parse a calibratable method token for `calibrate`: `threshold`,
/// `per-species-threshold`, `topk`, or `conformal:<alpha>`.
pub fn parse_calibrate_token(token: &str) -> Result<CalibratableMethod> {
    match token {
        "threshold" => Ok(CalibratableMethod::GlobalThreshold),
        "per-species-threshold" => Ok(CalibratableMethod::PerSpeciesThreshold),
        "topk" => Ok(CalibratableMethod::TopK),
        "conformal" => Err(Error::InvalidParameter(
            "conformal needs a coverage level, e.g. conformal:0.1".to_string(),
        )),
        _ => {
            if let Some(arg) = token.strip_prefix("conformal:") {
                let alpha: f64 = arg.parse().map_err(|_| Error::InvalidToken {
                    what: "method",
                    token: token.to_string(),
                })?;
                check_alpha(alpha)?;
                Ok(CalibratableMethod::Conformal { alpha })
            } else {
                Err(Error::InvalidToken {
                    what: "method",
                    token: token.to_string(),
                })
            }
        }
    }
}
