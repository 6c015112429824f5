//! Sketched Shapley estimators.
//!
//! Both estimators consume a weighted coalition sketch and an offset `λ`:
//!
//! * matrix-vector: `φ̂ = Σ_S w_S · (d/(d−1)) · k(|S|) · (v(S) − v(∅) − λ|S|)
//!   · (z_S − (|S|/d)·1) + α·1`, unbiased row by row;
//! * regression: solve the sketched normal equations
//!   `(UᵀSᵀSU) x = UᵀSᵀS b_λ` in the centered coordinates, then map back with
//!   `φ̂ = Qx + α·1`.
//!
//! Here `α = (v([d]) − v(∅))/d`, `Q` is the implicit centering basis, and
//! `u_S = √(d/(d−1)) · √k(|S|) · Qᵀz_S`. Row weights arrive in log space and
//! are only ever combined with the matching kernel factor, whose binomial
//! cancels the one inside the sampling probability, so per-row coefficients
//! stay finite at any dimension the samplers support.
//!
//! Every estimate is recentered before the `α·1` shift, so the attributions
//! sum to `v([d]) − v(∅)` up to roundoff regardless of sketch quality.

use std::f64::consts::LN_2;
use std::fmt;
use std::io;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{log_kernel_weight, ImplicitQ};
use crate::games::{Game, Subset};
use crate::sampling::{
    sample_with_replacement, sample_without_replacement, BucketDistribution, Sketch, Strategy,
    DEFAULT_MAXVAL,
};
use crate::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero when a
/// factorization falls back to the pseudo-inverse.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Sample budget a preset starts from; callers override `m` and `seed`.
pub const DEFAULT_PRESET_M: usize = 1024;

/// Smallest allowed `m_reference / m_base` ratio for [`error_estimate`].
pub const ERROR_ESTIMATE_MIN_RATIO: usize = 10;

/// Which estimator consumes the sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Regression,
    Matvec,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Regression => "regression",
            EstimatorKind::Matvec => "matvec",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "regression" => Ok(EstimatorKind::Regression),
            "matvec" => Ok(EstimatorKind::Matvec),
            other => Err(Error::Parse(format!(
                "unknown estimator kind {other:?}; expected regression or matvec"
            ))),
        }
    }
}

/// How the offset `λ` in `b_λ = v(S) − v(∅) − λ|S|` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `λ = α = (v([d]) − v(∅))/d`, recentering the targets.
    Alpha,
    /// `λ = 0`, raw marginal values.
    Zero,
    /// A caller-chosen constant.
    Custom(f64),
}

impl LambdaMode {
    /// Concrete `λ` for a game whose efficiency offset is `alpha`.
    pub fn resolve(self, alpha: f64) -> f64 {
        match self {
            LambdaMode::Alpha => alpha,
            LambdaMode::Zero => 0.0,
            LambdaMode::Custom(value) => value,
        }
    }

    /// Stable text form: `alpha`, `zero`, or the literal constant.
    pub fn label(self) -> String {
        match self {
            LambdaMode::Alpha => "alpha".into(),
            LambdaMode::Zero => "zero".into(),
            LambdaMode::Custom(value) => value.to_string(),
        }
    }
}

impl FromStr for LambdaMode {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "alpha" => Ok(LambdaMode::Alpha),
            "zero" => Ok(LambdaMode::Zero),
            other => match other.parse::<f64>() {
                Ok(value) if value.is_finite() => Ok(LambdaMode::Custom(value)),
                _ => Err(Error::Parse(format!(
                    "unknown lambda {other:?}; expected alpha, zero, or a finite number"
                ))),
            },
        }
    }
}

/// Fully resolved estimator run: sampling family, pairing, offset, and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub tau: f64,
    pub strategy: Strategy,
    pub paired: bool,
    pub lambda_mode: LambdaMode,
    pub m: usize,
    pub seed: u64,
    pub maxval: f64,
}

/// Named configurations matching published estimators. `m`, `seed`, and
/// `maxval` start at defaults ([`DEFAULT_PRESET_M`], 0, [`DEFAULT_MAXVAL`])
/// and are meant to be overridden per run.
pub fn preset(name: &str) -> Result<EstimatorConfig> {
    let build = |kind, tau, strategy, paired, lambda_mode| EstimatorConfig {
        kind,
        tau,
        strategy,
        paired,
        lambda_mode,
        m: DEFAULT_PRESET_M,
        seed: 0,
        maxval: DEFAULT_MAXVAL,
    };
    match name {
        "kernelshap" => Ok(build(
            EstimatorKind::Regression,
            1.0,
            Strategy::WithReplacement,
            true,
            LambdaMode::Alpha,
        )),
        "unbiased_kernelshap" => Ok(build(
            EstimatorKind::Matvec,
            1.0,
            Strategy::WithReplacement,
            false,
            LambdaMode::Zero,
        )),
        "leverageshap" => Ok(build(
            EstimatorKind::Regression,
            0.0,
            Strategy::WithoutReplacement,
            true,
            LambdaMode::Alpha,
        )),
        other => Err(Error::InvalidArgument(format!(
            "unknown preset {other:?}; expected kernelshap, unbiased_kernelshap, or leverageshap"
        ))),
    }
}

/// Per-row least-squares targets `(b_λ)_S = √(d/(d−1)) · √k(|S|) ·
/// (v(S) − v(∅) − λ|S|)`, with the efficiency offset `α` cached.
#[derive(Debug, Clone)]
pub struct SketchedRhs {
    values: Vec<f64>,
    residuals: Vec<f64>,
    alpha: f64,
    lambda: f64,
}

impl SketchedRhs {
    /// Explicit targets, aligned with the sketch rows. The `√k` scale
    /// underflows once `C(d,h)` leaves f64 range, so large-`d` callers should
    /// combine [`Self::residuals`] with log-space row scales instead.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Unscaled residuals `v(S) − v(∅) − λ|S|`, aligned with the sketch rows.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Evaluates the game on every sketch row in one batch (plus the memoized
/// `v(∅)` and `v([d])`) and assembles the targets for the offset `lambda`.
pub fn build_rhs(sketch: &Sketch, game: &dyn Game, lambda: f64) -> Result<SketchedRhs> {
    let d = game.d();
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    let subsets: Vec<Subset> = sketch
        .rows()
        .iter()
        .map(|row| row.subset.clone())
        .collect();
    for subset in &subsets {
        if subset.d() != d {
            return Err(Error::InvalidArgument(format!(
                "sketch is over {} players but the game has {d}",
                subset.d()
            )));
        }
        if subset.is_empty() || subset.size() == d {
            return Err(Error::InvalidArgument(
                "sketch rows must be proper nonempty coalitions".into(),
            ));
        }
    }
    let values = if subsets.is_empty() {
        Vec::new()
    } else {
        game.evaluate_batch(&subsets)?
    };
    let v_empty = game.v_empty();
    let alpha = (game.v_full() - v_empty) / d as f64;

    let ln_dd1 = (d as f64 / (d as f64 - 1.0)).ln();
    let mut targets = Vec::with_capacity(values.len());
    let mut residuals = Vec::with_capacity(values.len());
    for (subset, value) in subsets.iter().zip(&values) {
        let h = subset.size();
        let residual = value - v_empty - lambda * h as f64;
        let scale = (0.5 * (ln_dd1 + log_kernel_weight(d, h))).exp();
        residuals.push(residual);
        targets.push(scale * residual);
    }
    Ok(SketchedRhs {
        values: targets,
        residuals,
        alpha,
        lambda,
    })
}

/// How an estimate was produced; serialized as the JSON sidecar.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateMetadata {
    pub kind: String,
    pub d: usize,
    pub m: usize,
    pub rows: usize,
    pub evaluations: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub paired: bool,
    pub lambda: f64,
    pub alpha: f64,
    pub efficiency_gap: f64,
    pub solver: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_mode: Option<String>,
}

/// Attribution estimate with run provenance.
#[derive(Debug, Clone)]
pub struct ShapleyEstimate {
    pub phi: Vec<f64>,
    pub metadata: EstimateMetadata,
}

impl ShapleyEstimate {
    /// Writes `feature,phi` rows.
    pub fn write_csv(&self, mut out: impl io::Write) -> io::Result<()> {
        writeln!(out, "feature,phi")?;
        for (feature, phi) in self.phi.iter().enumerate() {
            writeln!(out, "{feature},{phi}")?;
        }
        Ok(())
    }

    /// Provenance sidecar as pretty-printed JSON.
    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serializes")
    }
}

/// Shifts `raw` (a vector in the centered subspace, up to roundoff) by `α·1`
/// and reports the resulting efficiency gap.
fn finish_estimate(mut raw: Vec<f64>, alpha: f64, target: f64) -> (Vec<f64>, f64) {
    let d = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / d;
    for entry in &mut raw {
        *entry = *entry - mean + alpha;
    }
    let gap = (raw.iter().sum::<f64>() - target).abs();
    (raw, gap)
}

fn base_metadata(
    kind: EstimatorKind,
    sketch: &Sketch,
    d: usize,
    lambda: f64,
    alpha: f64,
    efficiency_gap: f64,
    solver: &str,
) -> EstimateMetadata {
    EstimateMetadata {
        kind: kind.to_string(),
        d,
        m: sketch.m_nominal(),
        rows: sketch.len(),
        evaluations: sketch.len() + 2,
        seed: sketch.seed(),
        strategy: sketch.strategy(),
        paired: sketch.paired(),
        lambda,
        alpha,
        efficiency_gap,
        solver: solver.into(),
        tau: None,
        lambda_mode: None,
    }
}

/// Log-space coefficient `ln((d/(d−1)) · k(h))` per size, with the unusable
/// sizes left as NaN; add a row's log weight before exponentiating.
pub(crate) fn log_kernel_row(d: usize) -> Vec<f64> {
    let ln_dd1 = (d as f64 / (d as f64 - 1.0)).ln();
    (0..=d)
        .map(|h| {
            if h == 0 || h == d {
                f64::NAN
            } else {
                ln_dd1 + log_kernel_weight(d, h)
            }
        })
        .collect()
}

/// Unbiased matrix-vector estimate. An empty sketch yields the pure offset
/// `α·1`.
pub fn matvec_estimate(sketch: &Sketch, game: &dyn Game, lambda: f64) -> Result<ShapleyEstimate> {
    let d = game.d();
    let rhs = build_rhs(sketch, game, lambda)?;
    let lk = log_kernel_row(d);

    let mut sparse = vec![0.0f64; d];
    let mut ones = 0.0f64;
    let mut ones_comp = 0.0f64;
    for (row, &residual) in sketch.rows().iter().zip(rhs.residuals()) {
        let h = row.subset.size();
        let coeff = (row.log_weight + lk[h]).exp() * residual;
        // Accumulate the smaller side of z_S and fold the remainder into the
        // coefficient of the all-ones direction.
        let term = if 2 * h <= d {
            for j in row.subset.members() {
                sparse[j] += coeff;
            }
            -coeff * h as f64 / d as f64
        } else {
            for j in row.subset.complement().members() {
                sparse[j] -= coeff;
            }
            coeff * (d - h) as f64 / d as f64
        };
        let fresh = ones + term;
        ones_comp += if ones.abs() >= term.abs() {
            (ones - fresh) + term
        } else {
            (term - fresh) + ones
        };
        ones = fresh;
    }
    let ones_total = ones + ones_comp;
    let raw: Vec<f64> = sparse.iter().map(|s| s + ones_total).collect();

    let target = game.v_full() - game.v_empty();
    let (phi, gap) = finish_estimate(raw, rhs.alpha(), target);
    let metadata = base_metadata(
        EstimatorKind::Matvec,
        sketch,
        d,
        lambda,
        rhs.alpha(),
        gap,
        "direct",
    );
    Ok(ShapleyEstimate { phi, metadata })
}

/// Sketched least-squares estimate. Solves the normal equations with an SPD
/// factorization, falling back to a truncated eigendecomposition, and routes
/// sketches with fewer effective rows than unknowns through the row-space
/// Gram system instead; the metadata names the path taken.
pub fn regression_estimate(
    sketch: &Sketch,
    game: &dyn Game,
    lambda: f64,
) -> Result<ShapleyEstimate> {
    let d = game.d();
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "regression needs at least two players, got d = {d}"
        )));
    }
    if sketch.is_empty() {
        return Err(Error::InvalidArgument(
            "regression needs a nonempty sketch".into(),
        ));
    }
    if sketch.paired() && sketch.len() % 2 != 0 {
        return Err(Error::InvalidArgument(
            "paired sketch has an odd row count".into(),
        ));
    }
    let rhs = build_rhs(sketch, game, lambda)?;
    let q = ImplicitQ::new(d);
    let lk = log_kernel_row(d);

    let effective_rows = if sketch.paired() {
        sketch.len() / 2
    } else {
        sketch.len()
    };
    let (x, solver) = if effective_rows < d - 1 {
        solve_row_space(sketch, rhs.residuals(), d, &q, &lk)
    } else {
        solve_normal_equations(sketch, rhs.residuals(), d, &q, &lk)
    };

    let target = game.v_full() - game.v_empty();
    let (phi, gap) = finish_estimate(q.apply(&x), rhs.alpha(), target);
    let metadata = base_metadata(
        EstimatorKind::Regression,
        sketch,
        d,
        lambda,
        rhs.alpha(),
        gap,
        solver,
    );
    Ok(ShapleyEstimate { phi, metadata })
}

/// Rows are processed in fixed-size blocks so a future parallel accumulator
/// can merge per-block partials in a deterministic order.
const ACCUMULATION_BLOCK: usize = 1024;

/// Forms `G = Qᵀ(Σ c_S z z ᵀ)Q` and `r = Qᵀ(Σ ±c_S·residual·z)` over the
/// minority side of each row, then solves `Gx = r`.
fn solve_normal_equations(
    sketch: &Sketch,
    residuals: &[f64],
    d: usize,
    q: &ImplicitQ,
    lk: &[f64],
) -> (Vec<f64>, &'static str) {
    let mut gram = vec![0.0f64; d * d];
    let mut rhs_dense = vec![0.0f64; d];
    let mut members: Vec<usize> = Vec::with_capacity(d / 2 + 1);
    for (block, block_residuals) in sketch
        .rows()
        .chunks(ACCUMULATION_BLOCK)
        .zip(residuals.chunks(ACCUMULATION_BLOCK))
    {
        for (row, &residual) in block.iter().zip(block_residuals) {
            let h = row.subset.size();
            let coeff = (row.log_weight + lk[h]).exp();
            members.clear();
            // The all-ones component introduced by complementation vanishes
            // under the Qᵀ·Q sandwich, leaving the minority-side outer
            // product with a positive coefficient and a sign on the target.
            let sign = if 2 * h <= d {
                members.extend(row.subset.members());
                1.0
            } else {
                members.extend(row.subset.complement().members());
                -1.0
            };
            for &i in &members {
                let base = i * d;
                for &j in &members {
                    gram[base + j] += coeff;
                }
            }
            let weighted = sign * coeff * residual;
            for &i in &members {
                rhs_dense[i] += weighted;
            }
        }
    }

    // G = QᵀAQ is the leading (d−1)×(d−1) block of HAH for the full
    // reflection H, applied column-wise then row-wise.
    let mut column = vec![0.0f64; d];
    for j in 0..d {
        for i in 0..d {
            column[i] = gram[i * d + j];
        }
        q.reflect_in_place(&mut column);
        for i in 0..d {
            gram[i * d + j] = column[i];
        }
    }
    for i in 0..d {
        q.reflect_in_place(&mut gram[i * d..(i + 1) * d]);
    }

    let n = d - 1;
    let g = DMatrix::from_fn(n, n, |i, j| gram[i * d + j]);
    let r = DVector::from_vec(q.transpose_apply(&rhs_dense));
    if let Some(factor) = Cholesky::new(g.clone()) {
        let x = factor.solve(&r);
        return (x.as_slice().to_vec(), "cholesky");
    }
    (min_norm_solve(&g, &r), "eigen")
}

/// Min-norm solution through the row-space Gram matrix: with one merged row
/// `ũ_p = √(2w)·u_p` per complement pair (`√w·u` per row when unpaired),
/// `x = Ũᵀ(ŨŨᵀ)⁺β̃` solves the same normal equations without forming the
/// rank-deficient `G`.
fn solve_row_space(
    sketch: &Sketch,
    residuals: &[f64],
    d: usize,
    q: &ImplicitQ,
    lk: &[f64],
) -> (Vec<f64>, &'static str) {
    let n = d - 1;
    let rows = sketch.rows();
    let paired = sketch.paired();
    let count = if paired { rows.len() / 2 } else { rows.len() };
    let mut u = DMatrix::<f64>::zeros(count, n);
    let mut beta = DVector::<f64>::zeros(count);
    for p in 0..count {
        let (row, scale_shift, target) = if paired {
            let first = &rows[2 * p];
            let second = &rows[2 * p + 1];
            debug_assert_eq!(second.subset.size(), d - first.subset.size());
            (
                first,
                0.5 * LN_2,
                0.5 * (residuals[2 * p] - residuals[2 * p + 1]),
            )
        } else {
            (&rows[p], 0.0, residuals[p])
        };
        let h = row.subset.size();
        let half = 0.5 * (row.log_weight + lk[h]);
        let row_scale = (half + scale_shift).exp();
        beta[p] = row_scale * target;
        let projected = if 2 * h <= d {
            q.transpose_apply_indicator(row.subset.members())
        } else {
            let mut flipped = q.transpose_apply_indicator(row.subset.complement().members());
            for entry in &mut flipped {
                *entry = -*entry;
            }
            flipped
        };
        for (j, value) in projected.iter().enumerate() {
            u[(p, j)] = row_scale * value;
        }
    }

    let k = &u * u.transpose();
    let (y, solver) = match Cholesky::new(k.clone()) {
        Some(factor) => (factor.solve(&beta), "gram_cholesky"),
        None => (
            DVector::from_vec(min_norm_solve(&k, &beta)),
            "gram_eigen",
        ),
    };
    let x = u.transpose() * y;
    (x.as_slice().to_vec(), solver)
}

/// Pseudo-inverse solve of a symmetric PSD system, truncating eigenvalues
/// below [`RANK_TOLERANCE`] times the largest.
fn min_norm_solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Vec<f64> {
    let eigen = matrix.clone().symmetric_eigen();
    let largest = eigen
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let tolerance = RANK_TOLERANCE * largest;
    let projected = eigen.eigenvectors.transpose() * rhs;
    let mut coefficients = DVector::zeros(rhs.len());
    for i in 0..rhs.len() {
        let value = eigen.eigenvalues[i];
        if value.abs() > tolerance {
            coefficients[i] = projected[i] / value;
        }
    }
    (eigen.eigenvectors * coefficients).as_slice().to_vec()
}

/// Samples a sketch per `config` and runs the selected estimator.
pub fn estimate(game: &dyn Game, config: &EstimatorConfig) -> Result<ShapleyEstimate> {
    let d = game.d();
    let dist = BucketDistribution::new(d, config.tau)?;
    let sketch = match config.strategy {
        Strategy::WithReplacement => {
            sample_with_replacement(&dist, config.m, config.seed, config.paired)?
        }
        Strategy::WithoutReplacement => {
            sample_without_replacement(&dist, config.m, config.seed, config.paired, config.maxval)?
        }
    };
    let alpha = (game.v_full() - game.v_empty()) / d as f64;
    let lambda = config.lambda_mode.resolve(alpha);
    let mut result = match config.kind {
        EstimatorKind::Matvec => matvec_estimate(&sketch, game, lambda)?,
        EstimatorKind::Regression => regression_estimate(&sketch, game, lambda)?,
    };
    result.metadata.tau = Some(config.tau);
    result.metadata.lambda_mode = Some(config.lambda_mode.label());
    Ok(result)
}

/// Error proxy from a small-budget and a large-budget run: the distance
/// between the two estimates, with the budget ratio recorded.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorEstimate {
    pub proxy: f64,
    pub ratio: f64,
    pub m_base: usize,
    pub m_reference: usize,
}

/// `‖φ̂_ref − φ̂_base‖₂` as a stand-in for the unknown estimation error.
/// Requires `m_reference ≥ `[`ERROR_ESTIMATE_MIN_RATIO`]`·m_base`.
pub fn error_estimate(base: &ShapleyEstimate, reference: &ShapleyEstimate) -> Result<ErrorEstimate> {
    if base.phi.len() != reference.phi.len() {
        return Err(Error::InvalidArgument(format!(
            "estimates cover {} and {} players",
            base.phi.len(),
            reference.phi.len()
        )));
    }
    let m_base = base.metadata.m;
    let m_reference = reference.metadata.m;
    if m_base == 0 || m_reference < ERROR_ESTIMATE_MIN_RATIO * m_base {
        return Err(Error::InvalidArgument(format!(
            "reference budget {m_reference} must be at least {ERROR_ESTIMATE_MIN_RATIO}× the base budget {m_base}"
        )));
    }
    let proxy = base
        .phi
        .iter()
        .zip(&reference.phi)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(ErrorEstimate {
        proxy,
        ratio: m_reference as f64 / m_base as f64,
        m_base,
        m_reference,
    })
}
