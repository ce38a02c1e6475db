//! Command-line surface tying the library together: binarize probability
//! matrices, fit supervised baselines, evaluate and compare predictions,
//! emit calibration curves, and run the exhaustive oracle.
//!
//! Conventions shared by every subcommand:
//! - machine-readable JSON summaries go to stdout; tables go to the files
//!   named by `--out`-style flags;
//! - exit codes: 0 success, 1 usage errors, 2 data errors, 3 refused
//!   enumeration limits;
//! - a JSON config file (`--config`) may supply any long flag, keyed by the
//!   flag name; values given on the command line win;
//! - every seeded command is bit-reproducible across runs and thread counts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::baselines::{
    parse_calibrate_token, parse_method_token, BinarizationMethod, MethodFile,
};
use crate::error::{Error, ErrorCategory, Result};
use crate::evaluation::{
    calibration_curve, permutation_test, prevalence_table, score_predictions,
};
use crate::io::{
    creation_timestamp, OccurrenceMatrix, PredictionMetadata, Predictions, ProbabilityMatrix,
};
use crate::metrics::ScoreSpec;
use crate::optimizer::{select, select_matrix, MaxExpConfig, Orientation, SearchMode};
use crate::oracle::{enumerated_pmf, exact_expected_score, exhaustive_best_set, OracleLimits};
use crate::synthetic::{generate, SyntheticConfig};

/// Parse the process arguments, run the chosen subcommand, and translate
/// the outcome into an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Usage => 1,
                ErrorCategory::Data => 2,
                ErrorCategory::Limit => 3,
            })
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "maxexp",
    version,
    about = "Turn per-species presence probabilities into set predictions that exactly maximize an expected similarity score, plus baselines, evaluation, and an exhaustive oracle."
)]
struct Cli {
    /// JSON object supplying defaults for any long flag of the subcommand,
    /// keyed by flag name (e.g. {"score": "f2"}); command-line values win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for site-level parallelism (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn a probability matrix into per-site species sets.
    Binarize(BinarizeArgs),
    /// Fit a supervised binarization method on probabilities plus truth.
    Calibrate(CalibrateArgs),
    /// Score a prediction file against a truth matrix.
    Evaluate(EvaluateArgs),
    /// Score several methods side by side with paired permutation tests.
    Compare(CompareArgs),
    /// Reliability table: binned predicted probability vs observed rate.
    Curve(CurveArgs),
    /// Exhaustive enumeration over all 2^n species sets (small n only).
    Oracle {
        #[command(subcommand)]
        op: OracleOp,
    },
    /// Time the optimizer on seeded synthetic probability vectors.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Default)]
struct BinarizeArgs {
    /// Probability matrix CSV (site_id header plus one column per species).
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Method token: maxexp, sse[:half-even|floor|ceil], threshold[:t],
    /// topk[:k]; supervised methods come fitted from --params.
    #[arg(long)]
    method: Option<String>,
    /// Threshold value, shorthand for `--method threshold:<t>`.
    #[arg(long)]
    t: Option<f64>,
    /// Set size, shorthand for `--method topk:<k>`.
    #[arg(long)]
    k: Option<usize>,
    /// Fitted method JSON written by `calibrate` (replaces --method).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Score to maximize (maxexp only): f1, f2, fbeta:<b>, jaccard, tss.
    #[arg(long)]
    score: Option<String>,
    /// Optimization axis for maxexp: sample (per site) or macro (per species).
    #[arg(long)]
    orientation: Option<String>,
    /// Stop the set-size scan at the first local maximum instead of
    /// scanning every size (exact only when the score curve is unimodal).
    #[arg(long = "first-max")]
    first_max: bool,
    /// Use the quadratic F-beta curve recursion instead of the generic
    /// cubic scan (identical results, much faster for large matrices).
    #[arg(long = "fbeta-shortcut")]
    fbeta_shortcut: bool,
    /// Output predictions CSV; a `<out>.meta.json` sidecar is written too.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct CalibrateArgs {
    /// Probability matrix CSV for the calibration split.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Occurrence matrix CSV aligned with --probs (0/1 cells).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Method family to fit: threshold, per-species-threshold, topk,
    /// or conformal:<alpha>.
    #[arg(long)]
    method: Option<String>,
    /// Score the fit maximizes: f1, f2, fbeta:<b>, jaccard, tss.
    #[arg(long)]
    objective: Option<String>,
    /// Averaging axis for the objective: sample or macro.
    #[arg(long)]
    orientation: Option<String>,
    /// Output path for the fitted method JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct EvaluateArgs {
    /// Predictions CSV written by `binarize` (with its sidecar).
    #[arg(long)]
    preds: Option<PathBuf>,
    /// Occurrence matrix CSV covering the predicted sites and species.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Score token: f1, f2, fbeta:<b>, jaccard, tss.
    #[arg(long)]
    score: Option<String>,
    /// Averaging axis: sample (per site) or macro (per species).
    #[arg(long)]
    orientation: Option<String>,
    /// Optional CSV of per-site (or per-species) scores.
    #[arg(long = "per-unit-out")]
    per_unit_out: Option<PathBuf>,
    /// Optional CSV of predicted vs observed prevalence per species.
    #[arg(long = "prevalence-out")]
    prevalence_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct CompareArgs {
    /// Probability matrix CSV.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Occurrence matrix CSV aligned with --probs.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Comma-separated method tokens; `maxexp` is re-optimized per score,
    /// `@file.json` loads a fitted method.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated score tokens (default: f1).
    #[arg(long, value_delimiter = ',')]
    scores: Option<Vec<String>>,
    /// Permutations for each paired test.
    #[arg(long = "n-permutations")]
    n_permutations: Option<usize>,
    /// Base seed; pair i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV of mean sample-averaged scores (methods x scores).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV of one-sided p-values of maxexp superiority.
    #[arg(long = "pvalues-out")]
    pvalues_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct CurveArgs {
    /// Probability matrix CSV.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Occurrence matrix CSV aligned with --probs.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Number of equal-width probability bins.
    #[arg(long)]
    bins: Option<usize>,
    /// Optional CSV with one row per bin.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum OracleOp {
    /// Enumerate all species sets per site and report the best one.
    BestSet(OracleArgs),
    /// Exact expected score of one fixed species set on each site.
    ExpectedScore(OracleArgs),
    /// Enumerated distribution of the number of present species per site.
    Pmf(OracleArgs),
}

#[derive(Args, Debug, Default)]
struct OracleArgs {
    /// Probability matrix CSV.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Restrict to one site id (default: every site).
    #[arg(long)]
    site: Option<String>,
    /// Score token for best-set / expected-score.
    #[arg(long)]
    score: Option<String>,
    /// Comma-separated species ids for expected-score ("" = empty set).
    #[arg(long)]
    set: Option<String>,
    /// Refuse enumeration above this many species (cost doubles per species).
    #[arg(long = "max-species")]
    max_species: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct BenchArgs {
    /// Species count of each synthetic probability vector.
    #[arg(long = "n-species")]
    n_species: Option<usize>,
    /// Number of timed repeats (vector i uses seed + i).
    #[arg(long)]
    repeats: Option<usize>,
    /// Score token to optimize.
    #[arg(long)]
    score: Option<String>,
    /// Base seed for the synthetic vectors.
    #[arg(long)]
    seed: Option<u64>,
    /// Time the quadratic F-beta recursion instead of the generic scan.
    #[arg(long = "fbeta-shortcut")]
    fbeta_shortcut: bool,
}

// ---------------------------------------------------------------------------
// Config-file merging
// ---------------------------------------------------------------------------

/// The parsed `--config` JSON object; keys are consumed as they merge so
/// that leftovers can be reported as unknown.
struct ConfigMap(Map<String, Value>);

impl ConfigMap {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigMap(Map::new()));
        };
        let raw = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let value: Value = serde_json::from_str(&raw).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        match value {
            Value::Object(map) => Ok(ConfigMap(map)),
            other => Err(Error::InvalidParameter(format!(
                "config root must be a JSON object, got {}",
                json_type(&other)
            ))),
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    /// Error on any key that matched no flag of the subcommand.
    fn finish(self) -> Result<()> {
        match self.0.into_iter().next() {
            None => Ok(()),
            Some((key, _)) => Err(Error::InvalidParameter(format!(
                "config: unknown key {key:?} for this subcommand"
            ))),
        }
    }
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn bad_config(key: &str, want: &str, got: &Value) -> Error {
    Error::InvalidParameter(format!(
        "config: key {key:?} must be {want}, got {}",
        json_type(got)
    ))
}

fn merge_string(slot: &mut Option<String>, cfg: &mut ConfigMap, key: &str) -> Result<()> {
    if let Some(v) = cfg.take(key) {
        let Value::String(s) = v else {
            return Err(bad_config(key, "a string", &v));
        };
        if slot.is_none() {
            *slot = Some(s);
        }
    }
    Ok(())
}

fn merge_path(slot: &mut Option<PathBuf>, cfg: &mut ConfigMap, key: &str) -> Result<()> {
    let mut s = slot.as_ref().map(|p| p.display().to_string());
    merge_string(&mut s, cfg, key)?;
    if slot.is_none() {
        *slot = s.map(PathBuf::from);
    }
    Ok(())
}

fn merge_f64(slot: &mut Option<f64>, cfg: &mut ConfigMap, key: &str) -> Result<()> {
    if let Some(v) = cfg.take(key) {
        let Some(x) = v.as_f64() else {
            return Err(bad_config(key, "a number", &v));
        };
        if slot.is_none() {
            *slot = Some(x);
        }
    }
    Ok(())
}

fn merge_usize(slot: &mut Option<usize>, cfg: &mut ConfigMap, key: &str) -> Result<()> {
    if let Some(v) = cfg.take(key) {
        let parsed = v.as_u64().and_then(|x| usize::try_from(x).ok());
        let Some(x) = parsed else {
            return Err(bad_config(key, "a non-negative integer", &v));
        };
        if slot.is_none() {
            *slot = Some(x);
        }
    }
    Ok(())
}

fn merge_u64(slot: &mut Option<u64>, cfg: &mut ConfigMap, key: &str) -> Result<()> {
    if let Some(v) = cfg.take(key) {
        let Some(x) = v.as_u64() else {
            return Err(bad_config(key, "a non-negative integer", &v));
        };
        if slot.is_none() {
            *slot = Some(x);
        }
    }
    Ok(())
}

/// Boolean flags can only be switched on by the config, never off, since an
/// absent command-line flag is indistinguishable from an explicit "no".
fn merge_flag(slot: &mut bool, cfg: &mut ConfigMap, key: &str) -> Result<()> {
    if let Some(v) = cfg.take(key) {
        let Value::Bool(b) = v else {
            return Err(bad_config(key, "a boolean", &v));
        };
        *slot = *slot || b;
    }
    Ok(())
}

/// List values may be a JSON array of strings or one comma-separated string.
fn merge_list(slot: &mut Option<Vec<String>>, cfg: &mut ConfigMap, key: &str) -> Result<()> {
    if let Some(v) = cfg.take(key) {
        let parsed = match &v {
            Value::String(s) => Some(s.split(',').map(str::to_string).collect()),
            Value::Array(items) => items
                .iter()
                .map(|item| item.as_str().map(str::to_string))
                .collect::<Option<Vec<String>>>(),
            _ => None,
        };
        let Some(list) = parsed else {
            return Err(bad_config(key, "an array of strings or a string", &v));
        };
        if slot.is_none() {
            *slot = Some(list);
        }
    }
    Ok(())
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::MissingParameter(format!("--{flag} is required")))
}

impl BinarizeArgs {
    fn merge(&mut self, cfg: &mut ConfigMap) -> Result<()> {
        merge_path(&mut self.probs, cfg, "probs")?;
        merge_string(&mut self.method, cfg, "method")?;
        merge_f64(&mut self.t, cfg, "t")?;
        merge_usize(&mut self.k, cfg, "k")?;
        merge_path(&mut self.params, cfg, "params")?;
        merge_string(&mut self.score, cfg, "score")?;
        merge_string(&mut self.orientation, cfg, "orientation")?;
        merge_flag(&mut self.first_max, cfg, "first-max")?;
        merge_flag(&mut self.fbeta_shortcut, cfg, "fbeta-shortcut")?;
        merge_path(&mut self.out, cfg, "out")
    }
}

impl CalibrateArgs {
    fn merge(&mut self, cfg: &mut ConfigMap) -> Result<()> {
        merge_path(&mut self.probs, cfg, "probs")?;
        merge_path(&mut self.truth, cfg, "truth")?;
        merge_string(&mut self.method, cfg, "method")?;
        merge_string(&mut self.objective, cfg, "objective")?;
        merge_string(&mut self.orientation, cfg, "orientation")?;
        merge_path(&mut self.out, cfg, "out")
    }
}

impl EvaluateArgs {
    fn merge(&mut self, cfg: &mut ConfigMap) -> Result<()> {
        merge_path(&mut self.preds, cfg, "preds")?;
        merge_path(&mut self.truth, cfg, "truth")?;
        merge_string(&mut self.score, cfg, "score")?;
        merge_string(&mut self.orientation, cfg, "orientation")?;
        merge_path(&mut self.per_unit_out, cfg, "per-unit-out")?;
        merge_path(&mut self.prevalence_out, cfg, "prevalence-out")
    }
}

impl CompareArgs {
    fn merge(&mut self, cfg: &mut ConfigMap) -> Result<()> {
        merge_path(&mut self.probs, cfg, "probs")?;
        merge_path(&mut self.truth, cfg, "truth")?;
        merge_list(&mut self.methods, cfg, "methods")?;
        merge_list(&mut self.scores, cfg, "scores")?;
        merge_usize(&mut self.n_permutations, cfg, "n-permutations")?;
        merge_u64(&mut self.seed, cfg, "seed")?;
        merge_path(&mut self.out, cfg, "out")?;
        merge_path(&mut self.pvalues_out, cfg, "pvalues-out")
    }
}

impl CurveArgs {
    fn merge(&mut self, cfg: &mut ConfigMap) -> Result<()> {
        merge_path(&mut self.probs, cfg, "probs")?;
        merge_path(&mut self.truth, cfg, "truth")?;
        merge_usize(&mut self.bins, cfg, "bins")?;
        merge_path(&mut self.out, cfg, "out")
    }
}

impl OracleArgs {
    fn merge(&mut self, cfg: &mut ConfigMap) -> Result<()> {
        merge_path(&mut self.probs, cfg, "probs")?;
        merge_string(&mut self.site, cfg, "site")?;
        merge_string(&mut self.score, cfg, "score")?;
        merge_string(&mut self.set, cfg, "set")?;
        merge_usize(&mut self.max_species, cfg, "max-species")
    }
}

impl BenchArgs {
    fn merge(&mut self, cfg: &mut ConfigMap) -> Result<()> {
        merge_usize(&mut self.n_species, cfg, "n-species")?;
        merge_usize(&mut self.repeats, cfg, "repeats")?;
        merge_string(&mut self.score, cfg, "score")?;
        merge_u64(&mut self.seed, cfg, "seed")?;
        merge_flag(&mut self.fbeta_shortcut, cfg, "fbeta-shortcut")
    }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<()> {
    let mut config = ConfigMap::load(cli.config.as_deref())?;
    let mut threads = cli.threads;
    merge_usize(&mut threads, &mut config, "threads")?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "--threads must be at least 1".to_string(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Binarize(mut args) => {
            args.merge(&mut config)?;
            config.finish()?;
            run_binarize(args)
        }
        Command::Calibrate(mut args) => {
            args.merge(&mut config)?;
            config.finish()?;
            run_calibrate(args)
        }
        Command::Evaluate(mut args) => {
            args.merge(&mut config)?;
            config.finish()?;
            run_evaluate(args)
        }
        Command::Compare(mut args) => {
            args.merge(&mut config)?;
            config.finish()?;
            run_compare(args)
        }
        Command::Curve(mut args) => {
            args.merge(&mut config)?;
            config.finish()?;
            run_curve(args)
        }
        Command::Oracle { op } => {
            let (name, mut args) = match op {
                OracleOp::BestSet(a) => ("best-set", a),
                OracleOp::ExpectedScore(a) => ("expected-score", a),
                OracleOp::Pmf(a) => ("pmf", a),
            };
            args.merge(&mut config)?;
            config.finish()?;
            run_oracle(name, args)
        }
        Command::Bench(mut args) => {
            args.merge(&mut config)?;
            config.finish()?;
            run_bench(args)
        }
    }
}

fn parse_score(token: Option<&str>) -> Result<ScoreSpec> {
    ScoreSpec::parse_token(token.unwrap_or("f1"))
}

fn parse_orientation(token: Option<&str>) -> Result<Orientation> {
    Orientation::parse_token(token.unwrap_or("sample"))
}

fn emit(summary: &Value) {
    use std::io::Write;
    let body = serde_json::to_string_pretty(summary).expect("summary serializes");
    // A closed pipe downstream (e.g. `maxexp ... | head`) is a normal way
    // for a pipeline to stop consuming; die quietly instead of panicking.
    if let Err(e) = writeln!(std::io::stdout(), "{body}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: failed writing summary to stdout: {e}");
        std::process::exit(2);
    }
}

/// Write one CSV table, wrapping any failure as an I/O error on `path`.
fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io_err = |message: String| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(message),
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).map_err(|e| io_err(e.to_string()))?;
    for row in rows {
        writer.write_record(row).map_err(|e| io_err(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| io_err(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn opt_cell<T: ToString>(value: Option<T>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// binarize
// ---------------------------------------------------------------------------

enum ResolvedMethod {
    MaxExp,
    Baseline {
        method: BinarizationMethod,
        /// Score token recorded in the sidecar: the fitting objective when
        /// the method came from a fitted file, otherwise "none".
        meta_score: String,
    },
}

fn resolve_binarize_method(args: &BinarizeArgs) -> Result<ResolvedMethod> {
    if args.t.is_some() && args.k.is_some() {
        return Err(Error::InvalidParameter(
            "--t and --k cannot be combined".to_string(),
        ));
    }
    if let Some(params) = &args.params {
        if args.method.is_some() || args.t.is_some() || args.k.is_some() {
            return Err(Error::InvalidParameter(
                "--params supplies the whole method; drop --method/--t/--k".to_string(),
            ));
        }
        let file = MethodFile::read(params)?;
        return Ok(ResolvedMethod::Baseline {
            meta_score: file.objective.unwrap_or_else(|| "none".to_string()),
            method: file.method,
        });
    }
    let token = args
        .method
        .as_deref()
        .ok_or_else(|| Error::MissingParameter("--method is required".to_string()))?;
    if token == "maxexp" {
        if args.t.is_some() || args.k.is_some() {
            return Err(Error::InvalidParameter(
                "--t/--k do not apply to --method maxexp".to_string(),
            ));
        }
        return Ok(ResolvedMethod::MaxExp);
    }
    let method = if let Some(t) = args.t {
        if token != "threshold" {
            return Err(Error::InvalidParameter(
                "--t is only valid with --method threshold".to_string(),
            ));
        }
        let method = BinarizationMethod::GlobalThreshold { threshold: t };
        method.validate()?;
        method
    } else if let Some(k) = args.k {
        if token != "topk" {
            return Err(Error::InvalidParameter(
                "--k is only valid with --method topk".to_string(),
            ));
        }
        BinarizationMethod::TopK { k }
    } else {
        parse_method_token(token)?
    };
    Ok(ResolvedMethod::Baseline {
        method,
        meta_score: "none".to_string(),
    })
}

fn run_binarize(args: BinarizeArgs) -> Result<()> {
    let resolved = resolve_binarize_method(&args)?;
    let probs_path = require(args.probs, "probs")?;
    let out = require(args.out, "out")?;
    let score = parse_score(args.score.as_deref())?;
    let orientation = parse_orientation(args.orientation.as_deref())?;
    let search_mode = if args.first_max {
        SearchMode::FirstMaximum
    } else {
        SearchMode::FullScan
    };
    let probs = ProbabilityMatrix::read(&probs_path)?;

    let (sets, descriptor, meta_score, detail) = match resolved {
        ResolvedMethod::MaxExp => {
            let cfg = MaxExpConfig {
                score,
                search_mode,
                orientation,
                fbeta_shortcut: args.fbeta_shortcut,
                keep_curve: false,
            };
            let results = select_matrix(&probs, &cfg)?;
            let (sets, detail) = match orientation {
                Orientation::Sample => {
                    let sets: Vec<Vec<usize>> =
                        results.iter().map(|r| r.selected.clone()).collect();
                    let rows: Vec<Value> = results
                        .iter()
                        .zip(probs.site_ids())
                        .map(|(r, id)| {
                            json!({
                                "site_id": id,
                                "k_star": r.k_star,
                                "expected_score": r.expected_score,
                            })
                        })
                        .collect();
                    (sets, ("sites", rows))
                }
                Orientation::Macro => {
                    let mut sets = vec![Vec::new(); probs.n_sites()];
                    for (j, result) in results.iter().enumerate() {
                        for &i in &result.selected {
                            sets[i].push(j);
                        }
                    }
                    let rows: Vec<Value> = results
                        .iter()
                        .zip(probs.species_ids())
                        .map(|(r, id)| {
                            json!({
                                "species_id": id,
                                "k_star": r.k_star,
                                "expected_score": r.expected_score,
                            })
                        })
                        .collect();
                    (sets, ("species", rows))
                }
            };
            (sets, "maxexp".to_string(), score.token(), detail)
        }
        ResolvedMethod::Baseline { method, meta_score } => {
            let sets = method.apply_matrix(&probs)?;
            let rows: Vec<Value> = sets
                .iter()
                .zip(probs.site_ids())
                .map(|(set, id)| json!({ "site_id": id, "size": set.len() }))
                .collect();
            (sets, method.descriptor(), meta_score, ("sites", rows))
        }
    };

    let metadata = PredictionMetadata {
        method: descriptor.clone(),
        score: meta_score,
        timestamp: creation_timestamp(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let predictions = Predictions::new(
        probs.site_ids().to_vec(),
        probs.species_ids().to_vec(),
        sets,
        metadata,
    )?;
    predictions.write(&out)?;

    let mut summary = json!({
        "command": "binarize",
        "method": descriptor,
        "orientation": orientation.token(),
        "n_sites": probs.n_sites(),
        "n_species": probs.n_species(),
        "out": out.display().to_string(),
    });
    if matches!(summary, Value::Object(_)) {
        let obj = summary.as_object_mut().expect("object");
        if descriptor == "maxexp" {
            obj.insert("score".to_string(), json!(score.token()));
            obj.insert(
                "search_mode".to_string(),
                json!(match search_mode {
                    SearchMode::FullScan => "full-scan",
                    SearchMode::FirstMaximum => "first-max",
                }),
            );
        }
        let (key, rows) = detail;
        obj.insert(key.to_string(), Value::Array(rows));
    }
    emit(&summary);
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

fn run_calibrate(args: CalibrateArgs) -> Result<()> {
    let probs_path = require(args.probs, "probs")?;
    let truth_path = require(args.truth, "truth")?;
    let out = require(args.out, "out")?;
    let kind = parse_calibrate_token(&require(args.method, "method")?)?;
    let objective = parse_score(args.objective.as_deref())?;
    let orientation = parse_orientation(args.orientation.as_deref())?;

    let probs = ProbabilityMatrix::read(&probs_path)?;
    let truth = OccurrenceMatrix::read(&truth_path)?
        .aligned_to(probs.site_ids(), probs.species_ids())?;
    let report = crate::baselines::calibrate(kind, &probs, &truth, &objective, orientation)?;

    let file = MethodFile {
        method: report.method.clone(),
        objective: Some(objective.token()),
        fitted_on: Some(probs_path.display().to_string()),
        achieved_score: Some(report.achieved_score),
    };
    file.write(&out)?;

    emit(&json!({
        "command": "calibrate",
        "method": report.method.descriptor(),
        "objective": objective.token(),
        "orientation": orientation.token(),
        "achieved_score": report.achieved_score,
        "grid_evaluations": report.grid_evaluations,
        "n_sites": probs.n_sites(),
        "n_species": probs.n_species(),
        "out": out.display().to_string(),
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let preds_path = require(args.preds, "preds")?;
    let truth_path = require(args.truth, "truth")?;
    let score = parse_score(args.score.as_deref())?;
    let orientation = parse_orientation(args.orientation.as_deref())?;

    let predictions = Predictions::read(&preds_path)?;
    let truth = OccurrenceMatrix::read(&truth_path)?
        .aligned_to(predictions.site_ids(), predictions.species_ids())?;
    let scores = score_predictions(predictions.sets(), &truth, &score, orientation)?;

    if let Some(path) = &args.per_unit_out {
        let (id_header, ids) = match orientation {
            Orientation::Sample => ("site_id", predictions.site_ids()),
            Orientation::Macro => ("species_id", predictions.species_ids()),
        };
        let rows: Vec<Vec<String>> = ids
            .iter()
            .zip(&scores.per_unit)
            .map(|(id, s)| vec![id.clone(), s.to_string()])
            .collect();
        write_csv(path, &[id_header, "score"], &rows)?;
    }
    if let Some(path) = &args.prevalence_out {
        let table = prevalence_table(predictions.sets(), &truth)?;
        let rows: Vec<Vec<String>> = table
            .iter()
            .map(|entry| {
                vec![
                    predictions.species_ids()[entry.species].clone(),
                    entry.predicted.to_string(),
                    entry.observed.to_string(),
                ]
            })
            .collect();
        write_csv(path, &["species_id", "predicted", "observed"], &rows)?;
    }

    emit(&json!({
        "command": "evaluate",
        "score": score.token(),
        "orientation": orientation.token(),
        "method": predictions.metadata.method,
        "n_sites": predictions.site_ids().len(),
        "n_species": predictions.species_ids().len(),
        "mean_score": scores.mean,
        "per_unit_out": args.per_unit_out.map(|p| p.display().to_string()),
        "prevalence_out": args.prevalence_out.map(|p| p.display().to_string()),
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

enum PreparedMethod {
    MaxExp,
    Fixed {
        label: String,
        sets: Vec<Vec<usize>>,
    },
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let probs_path = require(args.probs, "probs")?;
    let truth_path = require(args.truth, "truth")?;
    let out = require(args.out, "out")?;
    let method_tokens = require(args.methods, "methods")?;
    if method_tokens.iter().all(|t| t.trim().is_empty()) {
        return Err(Error::MissingParameter(
            "--methods needs at least one method token".to_string(),
        ));
    }
    let score_tokens = args.scores.unwrap_or_else(|| vec!["f1".to_string()]);
    let scores: Vec<ScoreSpec> = score_tokens
        .iter()
        .map(|t| ScoreSpec::parse_token(t))
        .collect::<Result<_>>()?;
    let n_permutations = args.n_permutations.unwrap_or(9999);
    let base_seed = args.seed.unwrap_or(0);

    let probs = ProbabilityMatrix::read(&probs_path)?;
    let truth = OccurrenceMatrix::read(&truth_path)?
        .aligned_to(probs.site_ids(), probs.species_ids())?;

    let methods: Vec<PreparedMethod> = method_tokens
        .iter()
        .map(|token| -> Result<PreparedMethod> {
            let token = token.trim();
            if token == "maxexp" {
                Ok(PreparedMethod::MaxExp)
            } else {
                let method = if let Some(path) = token.strip_prefix('@') {
                    MethodFile::read(path)?.method
                } else {
                    parse_method_token(token)?
                };
                Ok(PreparedMethod::Fixed {
                    label: method.descriptor(),
                    sets: method.apply_matrix(&probs)?,
                })
            }
        })
        .collect::<Result<_>>()?;

    // Per score, maxexp re-optimizes for that score; fixed methods keep one
    // set of predictions. Sample orientation throughout: the table reports
    // mean per-site scores.
    let mut maxexp_sets_per_score: Vec<Vec<Vec<usize>>> = Vec::new();
    for score in &scores {
        let cfg = MaxExpConfig {
            score: *score,
            ..MaxExpConfig::default()
        };
        if methods.iter().any(|m| matches!(m, PreparedMethod::MaxExp)) {
            let results = select_matrix(&probs, &cfg)?;
            maxexp_sets_per_score.push(results.into_iter().map(|r| r.selected).collect());
        } else {
            maxexp_sets_per_score.push(Vec::new());
        }
    }

    let labels: Vec<String> = methods
        .iter()
        .map(|m| match m {
            PreparedMethod::MaxExp => "maxexp".to_string(),
            PreparedMethod::Fixed { label, .. } => label.clone(),
        })
        .collect();

    // score_vectors[method][score]
    let mut score_vectors: Vec<Vec<Vec<f64>>> = Vec::with_capacity(methods.len());
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(methods.len());
    for method in &methods {
        let mut per_score = Vec::with_capacity(scores.len());
        let mut mean_row = Vec::with_capacity(scores.len());
        for (s, score) in scores.iter().enumerate() {
            let sets = match method {
                PreparedMethod::MaxExp => &maxexp_sets_per_score[s],
                PreparedMethod::Fixed { sets, .. } => sets,
            };
            let vector = score_predictions(sets, &truth, score, Orientation::Sample)?;
            mean_row.push(vector.mean);
            per_score.push(vector.per_unit);
        }
        score_vectors.push(per_score);
        means.push(mean_row);
    }

    // One-sided tests of maxexp superiority against every other row; the
    // reference is the first maxexp entry. Pair i uses seed base + i so the
    // tests are independent yet reproducible.
    let reference = methods
        .iter()
        .position(|m| matches!(m, PreparedMethod::MaxExp));
    let mut p_rows: Vec<Value> = Vec::new();
    let mut pvalue_csv_rows: Vec<Vec<String>> = Vec::new();
    if let Some(reference) = reference {
        let mut pair = 0u64;
        for (m, label) in labels.iter().enumerate() {
            if m == reference {
                continue;
            }
            for (s, token) in score_tokens.iter().enumerate() {
                let seed = base_seed + pair;
                pair += 1;
                let test = permutation_test(
                    &score_vectors[reference][s],
                    &score_vectors[m][s],
                    n_permutations,
                    seed,
                )?;
                p_rows.push(json!({
                    "method": label,
                    "score": scores[s].token(),
                    "observed": test.observed,
                    "p_value": test.p_value,
                    "n_permutations": test.n_permutations,
                    "seed": test.seed,
                }));
                let _ = token;
                pvalue_csv_rows.push(vec![
                    label.clone(),
                    scores[s].token(),
                    test.observed.to_string(),
                    test.p_value.to_string(),
                    test.n_permutations.to_string(),
                    test.seed.to_string(),
                ]);
            }
        }
    }

    let score_headers: Vec<String> = scores.iter().map(|s| s.token()).collect();
    let mut header: Vec<&str> = vec!["method"];
    header.extend(score_headers.iter().map(String::as_str));
    let mean_rows: Vec<Vec<String>> = labels
        .iter()
        .zip(&means)
        .map(|(label, row)| {
            let mut cells = vec![label.clone()];
            cells.extend(row.iter().map(|m| m.to_string()));
            cells
        })
        .collect();
    write_csv(&out, &header, &mean_rows)?;

    if let Some(path) = &args.pvalues_out {
        write_csv(
            path,
            &["method", "score", "observed", "p_value", "n_permutations", "seed"],
            &pvalue_csv_rows,
        )?;
    }

    let mean_entries: Vec<Value> = labels
        .iter()
        .enumerate()
        .flat_map(|(m, label)| {
            let means = &means[m];
            scores
                .iter()
                .enumerate()
                .map(move |(s, score)| {
                    json!({
                        "method": label,
                        "score": score.token(),
                        "mean": means[s],
                    })
                })
                .collect::<Vec<Value>>()
        })
        .collect();
    emit(&json!({
        "command": "compare",
        "methods": labels,
        "scores": score_headers,
        "n_sites": probs.n_sites(),
        "n_species": probs.n_species(),
        "n_permutations": n_permutations,
        "seed": base_seed,
        "means": mean_entries,
        "p_values": p_rows,
        "out": out.display().to_string(),
        "pvalues_out": args.pvalues_out.map(|p| p.display().to_string()),
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// curve
// ---------------------------------------------------------------------------

fn run_curve(args: CurveArgs) -> Result<()> {
    let probs_path = require(args.probs, "probs")?;
    let truth_path = require(args.truth, "truth")?;
    let n_bins = args.bins.unwrap_or(10);

    let probs = ProbabilityMatrix::read(&probs_path)?;
    let truth = OccurrenceMatrix::read(&truth_path)?
        .aligned_to(probs.site_ids(), probs.species_ids())?;
    let curve = calibration_curve(&probs, &truth, n_bins)?;

    if let Some(path) = &args.out {
        let rows: Vec<Vec<String>> = curve
            .bins
            .iter()
            .enumerate()
            .map(|(b, bin)| {
                vec![
                    b.to_string(),
                    bin.lower.to_string(),
                    bin.upper.to_string(),
                    bin.count.to_string(),
                    opt_cell(bin.mean_probability),
                    opt_cell(bin.observed_fraction),
                    opt_cell(bin.sigma),
                ]
            })
            .collect();
        write_csv(
            path,
            &[
                "bin",
                "lower",
                "upper",
                "count",
                "mean_probability",
                "observed_fraction",
                "sigma",
            ],
            &rows,
        )?;
    }

    emit(&json!({
        "command": "curve",
        "n_bins": n_bins,
        "n_cells": probs.n_sites() * probs.n_species(),
        "bins": serde_json::to_value(&curve.bins).expect("bins serialize"),
        "out": args.out.map(|p| p.display().to_string()),
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

fn run_oracle(op: &str, args: OracleArgs) -> Result<()> {
    let probs_path = require(args.probs, "probs")?;
    let score = parse_score(args.score.as_deref())?;
    let limits = OracleLimits {
        max_species: args.max_species.unwrap_or(OracleLimits::default().max_species),
    };
    let probs = ProbabilityMatrix::read(&probs_path)?;

    let site_indices: Vec<usize> = match &args.site {
        None => (0..probs.n_sites()).collect(),
        Some(id) => {
            let index = probs
                .site_ids()
                .iter()
                .position(|s| s == id)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("--site {id:?} is not in the matrix"))
                })?;
            vec![index]
        }
    };

    let fixed_set: Option<Vec<usize>> = match op {
        "expected-score" => {
            let tokens = require(args.set, "set")?;
            let mut indices = Vec::new();
            for id in tokens.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let j = probs
                    .species_ids()
                    .iter()
                    .position(|s| s == id)
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!("--set species {id:?} is not in the matrix"))
                    })?;
                indices.push(j);
            }
            indices.sort_unstable();
            indices.dedup();
            Some(indices)
        }
        _ => None,
    };

    let mut rows: Vec<Value> = Vec::with_capacity(site_indices.len());
    for &i in &site_indices {
        let site_id = &probs.site_ids()[i];
        let row = probs.row(i);
        let entry = match op {
            "best-set" => {
                let (set, expected) = exhaustive_best_set(row, &score, limits)?;
                let ids: Vec<&str> = set
                    .iter()
                    .map(|&j| probs.species_ids()[j].as_str())
                    .collect();
                json!({
                    "site_id": site_id,
                    "set": ids,
                    "size": set.len(),
                    "expected_score": expected,
                })
            }
            "expected-score" => {
                let set = fixed_set.as_ref().expect("set parsed above");
                let expected = exact_expected_score(set, row, &score, limits)?;
                json!({ "site_id": site_id, "expected_score": expected })
            }
            "pmf" => {
                let pmf = enumerated_pmf(row, limits)?;
                json!({ "site_id": site_id, "pmf": pmf })
            }
            _ => unreachable!("oracle op"),
        };
        rows.push(entry);
    }

    let mut summary = json!({
        "command": "oracle",
        "op": op,
        "max_species": limits.max_species,
        "sites": rows,
    });
    let obj = summary.as_object_mut().expect("object");
    if op != "pmf" {
        obj.insert("score".to_string(), json!(score.token()));
    }
    if let Some(set) = &fixed_set {
        let ids: Vec<&str> = set
            .iter()
            .map(|&j| probs.species_ids()[j].as_str())
            .collect();
        obj.insert("set".to_string(), json!(ids));
    }
    emit(&summary);
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn run_bench(args: BenchArgs) -> Result<()> {
    let n_species = args.n_species.unwrap_or(1000);
    let repeats = args.repeats.unwrap_or(3).max(1);
    let score = parse_score(args.score.as_deref())?;
    let seed = args.seed.unwrap_or(0);
    let cfg = MaxExpConfig {
        score,
        fbeta_shortcut: args.fbeta_shortcut,
        ..MaxExpConfig::default()
    };

    let mut timings_ms = Vec::with_capacity(repeats);
    let mut k_stars = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let (probs, _) = generate(&SyntheticConfig::new(1, n_species, seed + rep as u64))?;
        let start = Instant::now();
        let result = select(probs.row(0), &cfg)?;
        timings_ms.push(start.elapsed().as_secs_f64() * 1e3);
        k_stars.push(result.k_star);
    }
    let mut sorted = timings_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let median_ms = sorted[sorted.len() / 2];

    emit(&json!({
        "command": "bench",
        "n_species": n_species,
        "score": score.token(),
        "seed": seed,
        "repeats": repeats,
        "fbeta_shortcut": args.fbeta_shortcut,
        "k_star": k_stars,
        "timings_ms": timings_ms,
        "median_ms": median_ms,
        "note": "selections are seed-reproducible; wall-clock timings are not",
    }));
    Ok(())
}
