//! Flat key-value experiment files for `unishap sweep`.

use std::path::PathBuf;
use std::str::FromStr;

use unishap::estimators::{EstimatorKind, LambdaMode};
use unishap::games::DEFAULT_BATCH_SIZE;
use unishap::sampling::{Strategy, DEFAULT_MAXVAL};
use unishap::{Error, Result};

use crate::gamespec::{self, GameSpec};

/// Per-row outputs a sweep can compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    InsertionAuc,
    DeletionAuc,
    RankCorr,
    TheoryReport,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "mse" => Ok(Metric::Mse),
            "insertion_auc" => Ok(Metric::InsertionAuc),
            "deletion_auc" => Ok(Metric::DeletionAuc),
            "rank_corr" => Ok(Metric::RankCorr),
            "theory_report" => Ok(Metric::TheoryReport),
            other => Err(Error::Parse(format!(
                "unknown metric {other:?}; expected mse, insertion_auc, deletion_auc, rank_corr, or theory_report"
            ))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Mse => "mse",
            Metric::InsertionAuc => "insertion_auc",
            Metric::DeletionAuc => "deletion_auc",
            Metric::RankCorr => "rank_corr",
            Metric::TheoryReport => "theory_report",
        })
    }
}

/// One sweep description: a game, an estimator grid, seeds, and outputs.
///
/// The file holds one `key value` pair per line; lines starting with `#`
/// are comments. List-valued keys (`kind`, `tau`, `strategy`, `lambda`,
/// `m`, `seed`, `metric`) repeat, one line per element, and `seeds A..B`
/// appends the half-open integer range. Rows expand in
/// kind, tau, strategy, lambda, m, seed order with seed innermost.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub game_text: String,
    pub game: GameSpec,
    pub out: PathBuf,
    pub kinds: Vec<EstimatorKind>,
    pub taus: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub lambdas: Vec<LambdaMode>,
    pub ms: Vec<usize>,
    pub seeds: Vec<u64>,
    pub paired: bool,
    pub maxval: f64,
    pub batch_size: usize,
    pub metrics: Vec<Metric>,
    pub top_k: Option<usize>,
    pub eps: f64,
    pub delta: f64,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<ExperimentSpec> {
        let mut game: Option<String> = None;
        let mut out: Option<PathBuf> = None;
        let mut kinds: Vec<EstimatorKind> = Vec::new();
        let mut taus: Vec<f64> = Vec::new();
        let mut strategies: Vec<Strategy> = Vec::new();
        let mut lambdas: Vec<LambdaMode> = Vec::new();
        let mut ms: Vec<usize> = Vec::new();
        let mut seeds: Vec<u64> = Vec::new();
        let mut paired: Option<bool> = None;
        let mut maxval: Option<f64> = None;
        let mut batch_size: Option<usize> = None;
        let mut metrics: Vec<Metric> = Vec::new();
        let mut top_k: Option<usize> = None;
        let mut eps: Option<f64> = None;
        let mut delta: Option<f64> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once(char::is_whitespace).ok_or_else(|| {
                Error::Parse(format!(
                    "spec line {line}: expected `key value`, got {content:?}"
                ))
            })?;
            let value = value.trim();
            match key {
                "game" => set_once(&mut game, line, key, value.to_string())?,
                "out" => set_once(&mut out, line, key, PathBuf::from(value))?,
                "kind" => kinds.push(parse_at(line, key, value)?),
                "tau" => taus.push(parse_at(line, key, value)?),
                "strategy" => strategies.push(parse_at(line, key, value)?),
                "lambda" => lambdas.push(parse_at(line, key, value)?),
                "m" => ms.push(parse_at(line, key, value)?),
                "seed" => seeds.push(parse_at(line, key, value)?),
                "seeds" => {
                    let (start, end) = parse_range(line, value)?;
                    seeds.extend(start..end);
                }
                "paired" => {
                    let flag = parse_bool(line, value)?;
                    set_once(&mut paired, line, key, flag)?;
                }
                "maxval" => {
                    let v = parse_at(line, key, value)?;
                    set_once(&mut maxval, line, key, v)?;
                }
                "batch_size" => {
                    let v = parse_at(line, key, value)?;
                    set_once(&mut batch_size, line, key, v)?;
                }
                "metric" => {
                    let metric: Metric = parse_at(line, key, value)?;
                    if !metrics.contains(&metric) {
                        metrics.push(metric);
                    }
                }
                "top_k" => {
                    let v = parse_at(line, key, value)?;
                    set_once(&mut top_k, line, key, v)?;
                }
                "eps" => {
                    let v = parse_at(line, key, value)?;
                    set_once(&mut eps, line, key, v)?;
                }
                "delta" => {
                    let v = parse_at(line, key, value)?;
                    set_once(&mut delta, line, key, v)?;
                }
                other => {
                    return Err(Error::Parse(format!(
                        "spec line {line}: unknown key {other:?}"
                    )))
                }
            }
        }

        let game_text = game.ok_or_else(|| Error::Parse("spec is missing the `game` key".into()))?;
        let game = gamespec::parse(&game_text)?;

        if kinds.is_empty() {
            kinds.push(EstimatorKind::Regression);
        }
        if taus.is_empty() {
            taus.push(1.0);
        }
        if strategies.is_empty() {
            strategies.push(Strategy::WithReplacement);
        }
        if lambdas.is_empty() {
            lambdas.push(LambdaMode::Alpha);
        }
        if ms.is_empty() {
            ms.push(1024);
        }
        if seeds.is_empty() {
            seeds.push(0);
        }
        if metrics.is_empty() {
            metrics.push(Metric::Mse);
        }
        let paired = paired.unwrap_or(true);
        let maxval = maxval.unwrap_or(DEFAULT_MAXVAL);
        let batch_size = batch_size.unwrap_or(DEFAULT_BATCH_SIZE);
        let eps = eps.unwrap_or(0.1);
        let delta = delta.unwrap_or(0.1);

        for &tau in &taus {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::Parse(format!("tau = {tau} must lie in [0, 1]")));
            }
        }
        for &m in &ms {
            if m < 2 {
                return Err(Error::Parse(format!("m = {m} must be at least 2")));
            }
            if paired && m % 2 != 0 {
                return Err(Error::Parse(format!(
                    "m = {m} is odd but paired sampling needs even budgets"
                )));
            }
        }
        if !(maxval.is_finite() && maxval > 0.0) {
            return Err(Error::Parse(format!("maxval = {maxval} must be positive")));
        }
        if batch_size == 0 {
            return Err(Error::Parse("batch_size must be at least 1".into()));
        }
        if top_k == Some(0) {
            return Err(Error::Parse("top_k must be at least 1".into()));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Parse(format!("eps = {eps} must be positive")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parse(format!("delta = {delta} must lie in (0, 1)")));
        }

        Ok(ExperimentSpec {
            game_text,
            game,
            out: out.unwrap_or_else(|| PathBuf::from(".")),
            kinds,
            taus,
            strategies,
            lambdas,
            ms,
            seeds,
            paired,
            maxval,
            batch_size,
            metrics,
            top_k,
            eps,
            delta,
        })
    }

    /// Number of grid points (rows per seed).
    pub fn grid_len(&self) -> usize {
        self.kinds.len() * self.taus.len() * self.strategies.len() * self.lambdas.len() * self.ms.len()
    }

    pub fn wants(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }
}

fn set_once<T>(slot: &mut Option<T>, line: usize, key: &str, value: T) -> Result<()> {
    if slot.is_some() {
        return Err(Error::Parse(format!(
            "spec line {line}: duplicate key {key:?}"
        )));
    }
    *slot = Some(value);
    Ok(())
}

fn parse_at<T: FromStr>(line: usize, key: &str, text: &str) -> Result<T> {
    text.parse().map_err(|_| {
        Error::Parse(format!(
            "spec line {line}: bad value {text:?} for key {key:?}"
        ))
    })
}

fn parse_bool(line: usize, text: &str) -> Result<bool> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Parse(format!(
            "spec line {line}: expected true or false, got {other:?}"
        ))),
    }
}

fn parse_range(line: usize, text: &str) -> Result<(u64, u64)> {
    let (start, end) = text.split_once("..").ok_or_else(|| {
        Error::Parse(format!(
            "spec line {line}: seeds must be a half-open range START..END, got {text:?}"
        ))
    })?;
    let start: u64 = parse_at(line, "seeds", start.trim())?;
    let end: u64 = parse_at(line, "seeds", end.trim())?;
    if start >= end {
        return Err(Error::Parse(format!(
            "spec line {line}: empty seed range {start}..{end}"
        )));
    }
    Ok((start, end))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# convergence sweep
game random:d=12,seed=4
out runs/demo
kind regression
kind matvec
tau 0
tau 0.5
strategy without_replacement
lambda alpha
lambda zero
m 256
m 1024
seeds 0..3
seed 100
paired true
maxval 1e9
batch_size 512
metric mse
metric mse
metric theory_report
top_k 6
eps 0.2
delta 0.05
";

    #[test]
    fn parses_every_key_and_expands_ranges() {
        let spec = ExperimentSpec::parse(FULL).unwrap();
        assert_eq!(spec.game, GameSpec::Random { d: 12, seed: 4 });
        assert_eq!(spec.out, PathBuf::from("runs/demo"));
        assert_eq!(
            spec.kinds,
            vec![EstimatorKind::Regression, EstimatorKind::Matvec]
        );
        assert_eq!(spec.taus, vec![0.0, 0.5]);
        assert_eq!(spec.strategies, vec![Strategy::WithoutReplacement]);
        assert_eq!(spec.lambdas, vec![LambdaMode::Alpha, LambdaMode::Zero]);
        assert_eq!(spec.ms, vec![256, 1024]);
        assert_eq!(spec.seeds, vec![0, 1, 2, 100]);
        assert!(spec.paired);
        assert_eq!(spec.maxval, 1e9);
        assert_eq!(spec.batch_size, 512);
        assert_eq!(spec.metrics, vec![Metric::Mse, Metric::TheoryReport]);
        assert_eq!(spec.top_k, Some(6));
        assert_eq!(spec.eps, 0.2);
        assert_eq!(spec.delta, 0.05);
        assert_eq!(spec.grid_len(), 2 * 2 * 1 * 2 * 2);
    }

    #[test]
    fn minimal_spec_gets_defaults() {
        let spec = ExperimentSpec::parse("game random:d=8\n").unwrap();
        assert_eq!(spec.kinds, vec![EstimatorKind::Regression]);
        assert_eq!(spec.taus, vec![1.0]);
        assert_eq!(spec.strategies, vec![Strategy::WithReplacement]);
        assert_eq!(spec.lambdas, vec![LambdaMode::Alpha]);
        assert_eq!(spec.ms, vec![1024]);
        assert_eq!(spec.seeds, vec![0]);
        assert_eq!(spec.metrics, vec![Metric::Mse]);
        assert!(spec.paired);
        assert_eq!(spec.out, PathBuf::from("."));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(ExperimentSpec::parse("game random:d=8\nworkers 4\n").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\ngame random:d=9\n").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\npaired true\npaired false\n").is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(ExperimentSpec::parse("").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\ntau 1.5\n").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\nm 1\n").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\nm 17\n").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\nseeds 5..5\n").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\nseeds five\n").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\ndelta 1.0\n").is_err());
        assert!(ExperimentSpec::parse("game random:d=8\nmetric auc\n").is_err());
    }

    #[test]
    fn odd_budgets_are_fine_without_pairing() {
        let spec = ExperimentSpec::parse("game random:d=8\npaired false\nm 17\n").unwrap();
        assert_eq!(spec.ms, vec![17]);
    }

    #[test]
    fn metric_names_round_trip() {
        for name in ["mse", "insertion_auc", "deletion_auc", "rank_corr", "theory_report"] {
            let metric: Metric = name.parse().unwrap();
            assert_eq!(metric.to_string(), name);
        }
    }
}
