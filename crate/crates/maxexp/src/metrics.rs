//! Confusion counts and set-similarity scores.
//!
//! Everything downstream — the expected-score optimizer, the baselines, the
//! evaluation statistics, the brute-force oracle — funnels through
//! [`ScoreSpec::score`], so the score formulas live here and nowhere else.
//!
//! Scores are parameterized by [`ScoreSpec`], which bundles the score family
//! with the conventions for degenerate confusion tables (no positives in
//! either prediction or truth; an empty class for TSS).

use crate::error::{Error, Result};

/// A 2x2 confusion table over one prediction/truth pair of index sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
        }
    }

    /// Total number of cells (the universe size for one comparison).
    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }
}

/// Value assigned when both the predicted and the true set are empty
/// (F-beta and Jaccard only; TSS has its own convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyMatchConvention {
    /// An empty prediction against an empty truth is a perfect match.
    #[default]
    One,
    /// Score degenerate comparisons as zero.
    Zero,
}

impl EmptyMatchConvention {
    fn value(self) -> f64 {
        match self {
            EmptyMatchConvention::One => 1.0,
            EmptyMatchConvention::Zero => 0.0,
        }
    }
}

/// The supported score families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreKind {
    /// F-beta with beta > 0; beta = 1 is the usual F1.
    FBeta(f64),
    /// Intersection over union.
    Jaccard,
    /// True skill statistic: sensitivity + specificity - 1.
    Tss,
}

/// A score family plus the conventions for degenerate confusion tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSpec {
    pub kind: ScoreKind,
    /// Applies to F-beta and Jaccard when tp + fp + fn = 0.
    pub empty_match: EmptyMatchConvention,
    /// Substituted for sensitivity (or specificity) when the positive (or
    /// negative) class is empty in a TSS comparison. Expected in [-1, 1].
    pub tss_empty_class_value: f64,
}

impl ScoreSpec {
    fn with_kind(kind: ScoreKind) -> Self {
        ScoreSpec {
            kind,
            empty_match: EmptyMatchConvention::One,
            tss_empty_class_value: 0.0,
        }
    }

    pub fn f1() -> Self {
        Self::with_kind(ScoreKind::FBeta(1.0))
    }

    pub fn f2() -> Self {
        Self::with_kind(ScoreKind::FBeta(2.0))
    }

    /// General F-beta. Fails unless beta is finite and positive.
    pub fn fbeta(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "F-beta requires a finite beta > 0, got {beta}"
            )));
        }
        Ok(Self::with_kind(ScoreKind::FBeta(beta)))
    }

    pub fn jaccard() -> Self {
        Self::with_kind(ScoreKind::Jaccard)
    }

    pub fn tss() -> Self {
        Self::with_kind(ScoreKind::Tss)
    }

    /// Same score family with a different empty-vs-empty convention.
    pub fn with_empty_match(mut self, convention: EmptyMatchConvention) -> Self {
        self.empty_match = convention;
        self
    }

    /// Same score family with a different TSS empty-class substitute.
    pub fn with_tss_empty_class_value(mut self, value: f64) -> Self {
        self.tss_empty_class_value = value;
        self
    }

    /// Evaluate the score on one confusion table.
    ///
    /// Always finite: degenerate tables fall back to the configured
    /// conventions instead of producing 0/0.
    pub fn score(&self, c: ConfusionCounts) -> f64 {
        let tp = c.true_positives as f64;
        let fp = c.false_positives as f64;
        let fn_ = c.false_negatives as f64;
        let tn = c.true_negatives as f64;
        match self.kind {
            ScoreKind::FBeta(beta) => {
                if tp + fp + fn_ == 0.0 {
                    self.empty_match.value()
                } else {
                    let b2 = beta * beta;
                    (1.0 + b2) * tp / ((1.0 + b2) * tp + b2 * fn_ + fp)
                }
            }
            ScoreKind::Jaccard => {
                if tp + fp + fn_ == 0.0 {
                    self.empty_match.value()
                } else {
                    tp / (tp + fn_ + fp)
                }
            }
            ScoreKind::Tss => {
                let positives = tp + fn_;
                let negatives = tn + fp;
                // Nothing on either side (empty universe): neutral zero.
                if positives == 0.0 && negatives == 0.0 {
                    return 0.0;
                }
                let sensitivity = if positives > 0.0 {
                    tp / positives
                } else {
                    self.tss_empty_class_value
                };
                let specificity = if negatives > 0.0 {
                    tn / negatives
                } else {
                    self.tss_empty_class_value
                };
                sensitivity + specificity - 1.0
            }
        }
    }

    /// Canonical command-line token for this score family.
    ///
    /// Conventions are not encoded; two specs differing only in conventions
    /// share a token.
    pub fn token(&self) -> String {
        match self.kind {
            ScoreKind::FBeta(1.0) => "f1".to_string(),
            ScoreKind::FBeta(2.0) => "f2".to_string(),
            ScoreKind::FBeta(beta) => format!("fbeta:{beta}"),
            ScoreKind::Jaccard => "jaccard".to_string(),
            ScoreKind::Tss => "tss".to_string(),
        }
    }

    /// Parse a command-line score token: `f1`, `f2`, `fbeta:<beta>`,
    /// `jaccard`, or `tss`.
    pub fn parse_token(token: &str) -> Result<Self> {
        match token {
            "f1" => Ok(Self::f1()),
            "f2" => Ok(Self::f2()),
            "jaccard" => Ok(Self::jaccard()),
            "tss" => Ok(Self::tss()),
            _ => {
                if let Some(rest) = token.strip_prefix("fbeta:") {
                    let beta: f64 = rest.parse().map_err(|_| Error::InvalidToken {
                        what: "score",
                        token: token.to_string(),
                    })?;
                    Self::fbeta(beta)
                } else {
                    Err(Error::InvalidToken {
                        what: "score",
                        token: token.to_string(),
                    })
                }
            }
        }
    }
}

impl std::fmt::Display for ScoreSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.token())
    }
}

/// Build the confusion table for one site: `predicted` and `truth` are sets
/// of species indices inside a universe of `universe_size` species.
///
/// Inputs are treated as sets (order and duplicates are irrelevant); indices
/// at or beyond `universe_size` are an error.
pub fn confusion_counts(
    predicted: &[usize],
    truth: &[usize],
    universe_size: usize,
) -> Result<ConfusionCounts> {
    let mut in_predicted = vec![false; universe_size];
    let mut in_truth = vec![false; universe_size];
    for &i in predicted {
        *in_predicted.get_mut(i).ok_or_else(|| {
            Error::InvalidValue(format!(
                "predicted species index {i} outside universe of size {universe_size}"
            ))
        })? = true;
    }
    for &i in truth {
        *in_truth.get_mut(i).ok_or_else(|| {
            Error::InvalidValue(format!(
                "true species index {i} outside universe of size {universe_size}"
            ))
        })? = true;
    }
    let mut counts = ConfusionCounts::default();
    for i in 0..universe_size {
        match (in_predicted[i], in_truth[i]) {
            (true, true) => counts.true_positives += 1,
            (true, false) => counts.false_positives += 1,
            (false, true) => counts.false_negatives += 1,
            (false, false) => counts.true_negatives += 1,
        }
    }
    Ok(counts)
}
