//! Turn per-species presence probabilities into binary multispecies set
//! predictions.
//!
//! The centerpiece is an exact optimizer ([`select`]) that picks, for each
//! site, the species set maximizing the *expected* set-similarity score
//! (F-beta, Jaccard, or TSS) under the model's own probabilities. The
//! expectation is computed exactly with Poisson-binomial dynamic programming,
//! so no sampling or heuristics are involved. Alongside it live the usual
//! binarization baselines (global/per-species thresholds, top-k, sum-based
//! set size, conformal), evaluation utilities (paired permutation tests,
//! reliability curves, prevalence tables), and a brute-force enumeration
//! oracle for cross-checking on small universes.
//!
//! Matrices move in and out as dense CSV (`site_id,<species>...` header);
//! predictions as long-format CSV plus a JSON metadata sidecar. The `maxexp`
//! binary wraps all of this in a pipeline-friendly CLI.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod metrics;
pub mod optimizer;
pub mod oracle;
pub mod setdist;
pub mod synthetic;

pub use error::{Error, Result};
pub use metrics::{ConfusionCounts, EmptyMatchConvention, ScoreKind, ScoreSpec};
pub use optimizer::{
    select, select_matrix, MaxExpConfig, MaxExpResult, Orientation, SearchMode,
};
pub use setdist::{SetSizeDistributionPair, SortedProbabilities};
