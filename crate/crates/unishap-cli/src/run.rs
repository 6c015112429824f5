//! The estimate, sweep, and faithfulness subcommand runners.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use unishap::diagnostics::{self, TheoryReport, FULL_VECTOR_MAX_D};
use unishap::estimators::{estimate, preset, EstimateMetadata, EstimatorConfig, EstimatorKind};
use unishap::exact::{exact_bruteforce, BRUTEFORCE_MAX_D};
use unishap::games::{Game, DEFAULT_BATCH_SIZE};
use unishap::sampling::Strategy;

use crate::experiment::{ExperimentSpec, Metric};
use crate::gamespec;
use crate::report::{csv_field, fmt_f64, iqr, median};
use crate::Failure;

/// Flags for `unishap estimate`.
#[derive(Debug, clap::Args)]
pub struct EstimateArgs {
    /// Game spec: adversarial:d=..,n=..[,xi=..,chi=..,eps0=..] |
    /// random:d=..[,seed=..] | table:PATH | "external:CMD ARG.."
    #[arg(long)]
    pub game: String,
    /// Named base configuration: kernelshap, unbiased_kernelshap, or
    /// leverageshap. Explicit flags override its fields.
    #[arg(long)]
    pub preset: Option<String>,
    /// Estimator kind: regression or matvec.
    #[arg(long)]
    pub kind: Option<String>,
    /// Sampling-family interpolation exponent in [0, 1].
    #[arg(long)]
    pub tau: Option<f64>,
    /// with_replacement or without_replacement.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Draw coalitions in complement pairs.
    #[arg(long)]
    pub paired: bool,
    /// Draw coalitions independently.
    #[arg(long, conflicts_with = "paired")]
    pub no_paired: bool,
    /// Target offset: alpha, zero, or a number.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Sample budget in sketch rows.
    #[arg(long)]
    pub m: Option<usize>,
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on per-bucket multiplicity draws (without replacement).
    #[arg(long)]
    pub maxval: Option<f64>,
    /// Directory receiving phi.csv and phi.meta.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Largest per-request batch for external games.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

/// Flags for `unishap sweep`.
#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Experiment file, one `key value` per line; see the README.
    pub spec: PathBuf,
    /// Worker threads for grid execution (0 = all cores). Defaults to
    /// UNISHAP_THREADS, then all cores. Output is thread-count invariant.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Flags for `unishap faithfulness`.
#[derive(Debug, clap::Args)]
pub struct FaithfulnessArgs {
    /// Game spec, same forms as `estimate --game`.
    #[arg(long)]
    pub game: String,
    /// Repeatable method: exact, kernelshap, unbiased_kernelshap, or
    /// leverageshap. Defaults to the three presets.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// Repeatable sample budgets. Defaults to 1024.
    #[arg(long = "m")]
    pub ms: Vec<usize>,
    /// Base RNG seed shared by all estimator rows.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Features in the insertion/deletion prefix (default: all d).
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Cap on per-bucket multiplicity draws (without replacement).
    #[arg(long)]
    pub maxval: Option<f64>,
    /// Directory receiving metrics.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Largest per-request batch for external games.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Worker threads for the (method, m) rows (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run_estimate(args: &EstimateArgs) -> Result<(), Failure> {
    let spec = gamespec::parse(&args.game).map_err(Failure::from)?;
    let game = gamespec::build(&spec, args.batch_size.unwrap_or(DEFAULT_BATCH_SIZE))
        .map_err(Failure::from)?;
    let config = resolve_config(args)?;
    let result = estimate(game.as_ref(), &config).map_err(Failure::from)?;

    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::config(format!("output directory {}: {e}", args.out.display())))?;
    let phi_path = args.out.join("phi.csv");
    let mut csv = Vec::new();
    result
        .write_csv(&mut csv)
        .map_err(|e| Failure::config(format!("writing {}: {e}", phi_path.display())))?;
    write_file(&phi_path, &csv)?;

    let meta_path = args.out.join("phi.meta.json");
    let mut json = result.metadata_json();
    if !json.ends_with('\n') {
        json.push('\n');
    }
    write_file(&meta_path, json.as_bytes())?;

    println!("wrote {}", phi_path.display());
    println!("wrote {}", meta_path.display());
    Ok(())
}

/// Merges preset defaults with explicit flag overrides. Without
/// `--preset` the base is kernelshap, so the bare flag form
/// `--kind regression --tau 1 --lambda alpha --paired` resolves to the
/// same configuration as `--preset kernelshap`.
fn resolve_config(args: &EstimateArgs) -> Result<EstimatorConfig, Failure> {
    let mut config =
        preset(args.preset.as_deref().unwrap_or("kernelshap")).map_err(Failure::from)?;
    if let Some(kind) = &args.kind {
        config.kind = kind.parse().map_err(Failure::from)?;
    }
    if let Some(tau) = args.tau {
        config.tau = tau;
    }
    if let Some(strategy) = &args.strategy {
        config.strategy = strategy.parse().map_err(Failure::from)?;
    }
    if args.paired {
        config.paired = true;
    }
    if args.no_paired {
        config.paired = false;
    }
    if let Some(lambda) = &args.lambda {
        config.lambda_mode = lambda.parse().map_err(Failure::from)?;
    }
    if let Some(m) = args.m {
        config.m = m;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(maxval) = args.maxval {
        config.maxval = maxval;
    }
    Ok(config)
}

pub fn run_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Failure::config(format!("spec file {}: {e}", args.spec.display())))?;
    let spec = ExperimentSpec::parse(&text).map_err(Failure::from)?;
    let game = gamespec::build(&spec.game, spec.batch_size).map_err(Failure::from)?;
    let threads = resolve_threads(args.threads)?;

    let rows = execute_sweep(&spec, game.as_ref(), threads)?;
    let d = game.d();
    let top_k = spec.top_k.unwrap_or(d);

    fs::create_dir_all(&spec.out)
        .map_err(|e| Failure::config(format!("output directory {}: {e}", spec.out.display())))?;
    let results_path = spec.out.join("results.csv");
    write_file(&results_path, render_results(&spec, d, top_k, &rows).as_bytes())?;
    let summary_path = spec.out.join("summary.csv");
    write_file(&summary_path, render_summary(&spec, d, &rows).as_bytes())?;

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} rows failed; see the status column",
            rows.len()
        );
    }
    println!("wrote {}", results_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

#[derive(Debug, Clone)]
struct Task {
    kind: EstimatorKind,
    tau_idx: usize,
    strategy: Strategy,
    lambda_idx: usize,
    m: usize,
    seed: u64,
}

#[derive(Debug, Default)]
struct MetricValues {
    mse: Option<f64>,
    mse_is_raw: bool,
    insertion: Option<f64>,
    deletion: Option<f64>,
    rank: Option<f64>,
}

#[derive(Debug)]
struct SweepRow {
    task: Task,
    lambda: f64,
    meta: Option<EstimateMetadata>,
    metrics: MetricValues,
    /// gamma_b, gamma_proj, eta, bound_matvec, bound_regression for the
    /// row's (tau, lambda) point.
    theory: Option<[f64; 5]>,
    error: Option<String>,
}

fn expand_grid(spec: &ExperimentSpec) -> Vec<Task> {
    let mut tasks = Vec::with_capacity(spec.grid_len() * spec.seeds.len());
    for &kind in &spec.kinds {
        for tau_idx in 0..spec.taus.len() {
            for &strategy in &spec.strategies {
                for lambda_idx in 0..spec.lambdas.len() {
                    for &m in &spec.ms {
                        for &seed in &spec.seeds {
                            tasks.push(Task {
                                kind,
                                tau_idx,
                                strategy,
                                lambda_idx,
                                m,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    tasks
}

fn execute_sweep(
    spec: &ExperimentSpec,
    game: &dyn Game,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>, Failure> {
    let d = game.d();
    let top_k = spec.top_k.unwrap_or(d);
    if top_k > d {
        return Err(Failure::config(format!(
            "top_k = {top_k} exceeds the number of features d = {d}"
        )));
    }
    let alpha = (game.v_full() - game.v_empty()) / d as f64;

    let reference = if spec.wants(Metric::Mse) || spec.wants(Metric::RankCorr) {
        Some(exact_reference(game)?)
    } else {
        None
    };
    let ref_norm_sq = reference
        .as_ref()
        .map(|phi| phi.iter().map(|x| x * x).sum::<f64>());

    let mut theory: HashMap<(usize, usize), [f64; 5]> = HashMap::new();
    if spec.wants(Metric::TheoryReport) {
        if d > FULL_VECTOR_MAX_D {
            return Err(Failure::config(format!(
                "theory_report enumerates all coalitions and needs d <= {FULL_VECTOR_MAX_D}, got {d}"
            )));
        }
        for (tau_idx, &tau) in spec.taus.iter().enumerate() {
            for (lambda_idx, &mode) in spec.lambdas.iter().enumerate() {
                let TheoryReport {
                    gamma_b,
                    gamma_proj,
                    eta,
                    bound_matvec,
                    bound_regression,
                    ..
                } = diagnostics::theorem_bounds(game, tau, mode.resolve(alpha), spec.eps, spec.delta)
                    .map_err(Failure::from)?;
                theory.insert(
                    (tau_idx, lambda_idx),
                    [gamma_b, gamma_proj, eta, bound_matvec, bound_regression],
                );
            }
        }
    }

    let tasks = expand_grid(spec);
    let run_one = |task: &Task| -> SweepRow {
        let config = EstimatorConfig {
            kind: task.kind,
            tau: spec.taus[task.tau_idx],
            strategy: task.strategy,
            paired: spec.paired,
            lambda_mode: spec.lambdas[task.lambda_idx],
            m: task.m,
            seed: task.seed,
            maxval: spec.maxval,
        };
        let mut row = SweepRow {
            task: task.clone(),
            lambda: config.lambda_mode.resolve(alpha),
            meta: None,
            metrics: MetricValues::default(),
            theory: theory.get(&(task.tau_idx, task.lambda_idx)).copied(),
            error: None,
        };
        let output = match estimate(game, &config) {
            Ok(output) => output,
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        };
        if let (Some(reference), true) = (&reference, spec.wants(Metric::Mse)) {
            let sum: f64 = output
                .phi
                .iter()
                .zip(reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            match ref_norm_sq {
                Some(norm) if norm > 0.0 => {
                    row.metrics.mse = Some(sum / norm);
                }
                _ => {
                    row.metrics.mse = Some(sum);
                    row.metrics.mse_is_raw = true;
                }
            }
        }
        if let (Some(reference), true) = (&reference, spec.wants(Metric::RankCorr)) {
            if row.error.is_none() {
                match diagnostics::rank_correlation(&output.phi, reference) {
                    Ok(v) => row.metrics.rank = Some(v),
                    Err(e) => row.error = Some(format!("rank_corr: {e}")),
                }
            }
        }
        if spec.wants(Metric::InsertionAuc) && row.error.is_none() {
            match diagnostics::insertion_auc(game, &output.phi, top_k) {
                Ok(v) => row.metrics.insertion = Some(v),
                Err(e) => row.error = Some(format!("insertion_auc: {e}")),
            }
        }
        if spec.wants(Metric::DeletionAuc) && row.error.is_none() {
            match diagnostics::deletion_auc(game, &output.phi, top_k) {
                Ok(v) => row.metrics.deletion = Some(v),
                Err(e) => row.error = Some(format!("deletion_auc: {e}")),
            }
        }
        row.meta = Some(output.metadata);
        row
    };
    run_tasks(&tasks, threads, game.concurrent(), run_one)
}

fn render_results(spec: &ExperimentSpec, d: usize, top_k: usize, rows: &[SweepRow]) -> String {
    let mut header: Vec<&str> = vec![
        "game",
        "d",
        "kind",
        "tau",
        "strategy",
        "paired",
        "lambda_mode",
        "lambda",
        "m",
        "seed",
        "maxval",
        "batch_size",
        "rows",
        "evaluations",
        "solver",
        "efficiency_gap",
        "status",
        "error",
    ];
    let auc = spec.wants(Metric::InsertionAuc) || spec.wants(Metric::DeletionAuc);
    if auc {
        header.push("top_k");
    }
    if spec.wants(Metric::Mse) {
        header.extend(["mse", "mse_is_raw"]);
    }
    if spec.wants(Metric::InsertionAuc) {
        header.push("insertion_auc");
    }
    if spec.wants(Metric::DeletionAuc) {
        header.push("deletion_auc");
    }
    if spec.wants(Metric::RankCorr) {
        header.push("rank_corr");
    }
    if spec.wants(Metric::TheoryReport) {
        header.extend([
            "eps",
            "delta",
            "gamma_b",
            "gamma_proj",
            "eta",
            "bound_matvec",
            "bound_regression",
        ]);
    }

    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut fields: Vec<String> = vec![
            csv_field(&spec.game_text),
            d.to_string(),
            row.task.kind.to_string(),
            fmt_f64(spec.taus[row.task.tau_idx]),
            row.task.strategy.to_string(),
            spec.paired.to_string(),
            spec.lambdas[row.task.lambda_idx].label(),
            fmt_f64(row.lambda),
            row.task.m.to_string(),
            row.task.seed.to_string(),
            fmt_f64(spec.maxval),
            spec.batch_size.to_string(),
        ];
        match &row.meta {
            Some(meta) => {
                fields.push(meta.rows.to_string());
                fields.push(meta.evaluations.to_string());
                fields.push(meta.solver.clone());
                fields.push(fmt_f64(meta.efficiency_gap));
            }
            None => fields.extend([String::new(), String::new(), String::new(), String::new()]),
        }
        match &row.error {
            Some(message) => {
                fields.push("error".into());
                fields.push(csv_field(message));
            }
            None => {
                fields.push("ok".into());
                fields.push(String::new());
            }
        }
        if auc {
            fields.push(top_k.to_string());
        }
        if spec.wants(Metric::Mse) {
            match row.metrics.mse {
                Some(v) => {
                    fields.push(fmt_f64(v));
                    fields.push(row.metrics.mse_is_raw.to_string());
                }
                None => fields.extend([String::new(), String::new()]),
            }
        }
        if spec.wants(Metric::InsertionAuc) {
            fields.push(row.metrics.insertion.map(fmt_f64).unwrap_or_default());
        }
        if spec.wants(Metric::DeletionAuc) {
            fields.push(row.metrics.deletion.map(fmt_f64).unwrap_or_default());
        }
        if spec.wants(Metric::RankCorr) {
            fields.push(row.metrics.rank.map(fmt_f64).unwrap_or_default());
        }
        if spec.wants(Metric::TheoryReport) {
            fields.push(fmt_f64(spec.eps));
            fields.push(fmt_f64(spec.delta));
            match row.theory {
                Some(values) => fields.extend(values.map(fmt_f64)),
                None => fields.extend(std::iter::repeat_with(String::new).take(5)),
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn render_summary(spec: &ExperimentSpec, d: usize, rows: &[SweepRow]) -> String {
    let header = [
        "game",
        "d",
        "kind",
        "tau",
        "strategy",
        "paired",
        "lambda_mode",
        "lambda",
        "m",
        "maxval",
        "batch_size",
        "seeds",
        "ok",
    ];
    let numeric: Vec<(Metric, &str)> = vec![
        (Metric::Mse, "mse"),
        (Metric::InsertionAuc, "insertion_auc"),
        (Metric::DeletionAuc, "deletion_auc"),
        (Metric::RankCorr, "rank_corr"),
    ];
    let mut metric_headers: Vec<String> = Vec::new();
    for (metric, name) in &numeric {
        if spec.wants(*metric) {
            metric_headers.push(format!("{name}_median"));
            metric_headers.push(format!("{name}_iqr"));
        }
    }
    if spec.wants(Metric::TheoryReport) {
        for name in ["gamma_b", "gamma_proj", "eta", "bound_matvec", "bound_regression"] {
            metric_headers.push(name.to_string());
        }
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    if !metric_headers.is_empty() {
        out.push(',');
        out.push_str(&metric_headers.join(","));
    }
    out.push('\n');

    for chunk in rows.chunks(spec.seeds.len()) {
        let first = &chunk[0];
        let ok = chunk.iter().filter(|r| r.error.is_none()).count();
        let mut fields: Vec<String> = vec![
            csv_field(&spec.game_text),
            d.to_string(),
            first.task.kind.to_string(),
            fmt_f64(spec.taus[first.task.tau_idx]),
            first.task.strategy.to_string(),
            spec.paired.to_string(),
            spec.lambdas[first.task.lambda_idx].label(),
            fmt_f64(first.lambda),
            first.task.m.to_string(),
            fmt_f64(spec.maxval),
            spec.batch_size.to_string(),
            chunk.len().to_string(),
            ok.to_string(),
        ];
        for (metric, _) in &numeric {
            if !spec.wants(*metric) {
                continue;
            }
            let mut values: Vec<f64> = chunk
                .iter()
                .filter_map(|r| match metric {
                    Metric::Mse => r.metrics.mse,
                    Metric::InsertionAuc => r.metrics.insertion,
                    Metric::DeletionAuc => r.metrics.deletion,
                    Metric::RankCorr => r.metrics.rank,
                    Metric::TheoryReport => None,
                })
                .collect();
            if values.is_empty() {
                fields.extend([String::new(), String::new()]);
            } else {
                values.sort_by(f64::total_cmp);
                fields.push(fmt_f64(median(&values)));
                fields.push(fmt_f64(iqr(&values)));
            }
        }
        if spec.wants(Metric::TheoryReport) {
            match first.theory {
                Some(values) => fields.extend(values.map(fmt_f64)),
                None => fields.extend(std::iter::repeat_with(String::new).take(5)),
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Exact attributions for metric references: the game's closed form when
/// it has one, full enumeration otherwise.
fn exact_reference(game: &dyn Game) -> Result<Vec<f64>, Failure> {
    if let Some(phi) = game.exact_shapley() {
        return Ok(phi);
    }
    let d = game.d();
    if d <= BRUTEFORCE_MAX_D {
        Ok(exact_bruteforce(game).map_err(Failure::from)?.phi)
    } else {
        Err(Failure::config(format!(
            "metrics mse and rank_corr need an exact reference: d = {d} exceeds the enumeration limit {BRUTEFORCE_MAX_D} and the game has no closed form"
        )))
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("UNISHAP_THREADS") {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::config(format!("UNISHAP_THREADS must be an integer, got {text:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::config(format!("UNISHAP_THREADS: {e}"))),
    }
}

/// Runs tasks in order-preserving parallel batches. Games that forbid
/// concurrent evaluation run sequentially regardless of `threads`.
fn run_tasks<T, R>(
    tasks: &[T],
    threads: Option<usize>,
    concurrent: bool,
    run: impl Fn(&T) -> R + Send + Sync,
) -> Result<Vec<R>, Failure>
where
    T: Sync,
    R: Send,
{
    if !concurrent || threads == Some(1) {
        return Ok(tasks.iter().map(&run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(&run).collect()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::config(format!("writing {}: {e}", path.display())))
}

enum FaithMethod {
    Exact,
    Preset(String),
}

struct FaithTask {
    label: String,
    config: Option<EstimatorConfig>,
}

struct FaithRow {
    meta: Option<EstimateMetadata>,
    insertion: Option<f64>,
    deletion: Option<f64>,
    rank: Option<f64>,
    efficiency_gap: Option<f64>,
    error: Option<String>,
}

pub fn run_faithfulness(args: &FaithfulnessArgs) -> Result<(), Failure> {
    let spec = gamespec::parse(&args.game).map_err(Failure::from)?;
    let game = gamespec::build(&spec, args.batch_size.unwrap_or(DEFAULT_BATCH_SIZE))
        .map_err(Failure::from)?;
    let d = game.d();
    let top_k = args.top_k.unwrap_or(d);
    if top_k == 0 || top_k > d {
        return Err(Failure::config(format!(
            "top_k = {top_k} must lie in 1..={d}"
        )));
    }
    let threads = resolve_threads(args.threads)?;

    let method_names: Vec<String> = if args.methods.is_empty() {
        ["kernelshap", "unbiased_kernelshap", "leverageshap"]
            .map(String::from)
            .to_vec()
    } else {
        args.methods.clone()
    };
    let mut methods: Vec<FaithMethod> = Vec::new();
    for name in &method_names {
        if name == "exact" {
            methods.push(FaithMethod::Exact);
        } else {
            preset(name).map_err(Failure::from)?;
            methods.push(FaithMethod::Preset(name.clone()));
        }
    }
    let ms = if args.ms.is_empty() {
        vec![1024]
    } else {
        args.ms.clone()
    };

    let exact_available = game.exact_shapley().is_some() || d <= BRUTEFORCE_MAX_D;
    if !exact_available && methods.iter().any(|m| matches!(m, FaithMethod::Exact)) {
        return Err(Failure::config(format!(
            "method exact needs d <= {BRUTEFORCE_MAX_D} or a game with a closed form, got d = {d}"
        )));
    }
    let reference = if exact_available {
        Some(exact_reference(game.as_ref())?)
    } else {
        None
    };

    let mut tasks: Vec<FaithTask> = Vec::new();
    for method in &methods {
        match method {
            FaithMethod::Exact => tasks.push(FaithTask {
                label: "exact".into(),
                config: None,
            }),
            FaithMethod::Preset(name) => {
                for &m in &ms {
                    let mut config = preset(name).map_err(Failure::from)?;
                    config.m = m;
                    config.seed = args.seed;
                    if let Some(maxval) = args.maxval {
                        config.maxval = maxval;
                    }
                    tasks.push(FaithTask {
                        label: name.clone(),
                        config: Some(config),
                    });
                }
            }
        }
    }

    let span = game.v_full() - game.v_empty();
    let run_one = |task: &FaithTask| -> FaithRow {
        let mut row = FaithRow {
            meta: None,
            insertion: None,
            deletion: None,
            rank: None,
            efficiency_gap: None,
            error: None,
        };
        let phi = match &task.config {
            None => {
                let phi = reference.clone().expect("exact availability checked above");
                row.efficiency_gap = Some((phi.iter().sum::<f64>() - span).abs());
                phi
            }
            Some(config) => match estimate(game.as_ref(), config) {
                Ok(output) => {
                    row.efficiency_gap = Some(output.metadata.efficiency_gap);
                    row.meta = Some(output.metadata);
                    output.phi
                }
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            },
        };
        match diagnostics::insertion_auc(game.as_ref(), &phi, top_k) {
            Ok(v) => row.insertion = Some(v),
            Err(e) => {
                row.error = Some(format!("insertion_auc: {e}"));
                return row;
            }
        }
        match diagnostics::deletion_auc(game.as_ref(), &phi, top_k) {
            Ok(v) => row.deletion = Some(v),
            Err(e) => {
                row.error = Some(format!("deletion_auc: {e}"));
                return row;
            }
        }
        if let Some(reference) = &reference {
            match diagnostics::rank_correlation(&phi, reference) {
                Ok(v) => row.rank = Some(v),
                Err(e) => {
                    row.error = Some(format!("rank_corr: {e}"));
                    return row;
                }
            }
        }
        row
    };
    let rows = run_tasks(&tasks, threads, game.concurrent(), run_one)?;

    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::config(format!("output directory {}: {e}", args.out.display())))?;
    let path = args.out.join("metrics.csv");
    write_file(&path, render_faithfulness(args, &spec, d, top_k, &tasks, &rows).as_bytes())?;

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} rows failed; see the status column",
            rows.len()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn render_faithfulness(
    args: &FaithfulnessArgs,
    _spec: &gamespec::GameSpec,
    d: usize,
    top_k: usize,
    tasks: &[FaithTask],
    rows: &[FaithRow],
) -> String {
    let header = [
        "game",
        "d",
        "method",
        "kind",
        "tau",
        "strategy",
        "paired",
        "lambda_mode",
        "lambda",
        "m",
        "seed",
        "top_k",
        "rows",
        "evaluations",
        "solver",
        "efficiency_gap",
        "status",
        "error",
        "insertion_auc",
        "deletion_auc",
        "rank_corr",
    ];
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (task, row) in tasks.iter().zip(rows) {
        let mut fields: Vec<String> = vec![
            csv_field(&args.game),
            d.to_string(),
            task.label.clone(),
        ];
        match &task.config {
            Some(config) => {
                fields.push(config.kind.to_string());
                fields.push(fmt_f64(config.tau));
                fields.push(config.strategy.to_string());
                fields.push(config.paired.to_string());
                fields.push(config.lambda_mode.label());
                fields.push(
                    row.meta
                        .as_ref()
                        .map(|m| fmt_f64(m.lambda))
                        .unwrap_or_default(),
                );
                fields.push(config.m.to_string());
                fields.push(config.seed.to_string());
            }
            None => {
                fields.extend([
                    "exact".to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
            }
        }
        fields.push(top_k.to_string());
        match &row.meta {
            Some(meta) => {
                fields.push(meta.rows.to_string());
                fields.push(meta.evaluations.to_string());
                fields.push(meta.solver.clone());
            }
            None => fields.extend([String::new(), String::new(), String::new()]),
        }
        fields.push(row.efficiency_gap.map(fmt_f64).unwrap_or_default());
        match &row.error {
            Some(message) => {
                fields.push("error".into());
                fields.push(csv_field(message));
            }
            None => {
                fields.push("ok".into());
                fields.push(String::new());
            }
        }
        fields.push(row.insertion.map(fmt_f64).unwrap_or_default());
        fields.push(row.deletion.map(fmt_f64).unwrap_or_default());
        fields.push(row.rank.map(fmt_f64).unwrap_or_default());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
