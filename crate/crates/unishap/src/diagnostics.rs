//! Theory-side diagnostics and faithfulness metrics.
//!
//! The sampling distributions are scored by two quantities over the scaled
//! coalition rows `u_S` (with `‖u_{h,l}‖² = 1/C(d,h)`):
//!
//! * `η = max_S ‖u_S‖²/p_S`, the worst-case importance ratio;
//! * `γ(z) = Σ_S (‖u_S‖²/p_S)·z_S²`, the importance-weighted energy of `z`.
//!
//! Both have closed forms for the size-bucket family: with
//! `N_τ = Σ_j (1/(j(d−j)))^τ`, the per-subset ratio is `N_τ·(h(d−h))^τ`, so
//! `γ_τ(z) = N_τ·Σ_h (h(d−h))^τ·B_h` over bucket energies `B_h` and
//! `η_τ = N_τ·(⌊d/2⌋⌈d/2⌉)^τ`. Sample-size bounds combine `γ` and `η`;
//! they are order-of-magnitude diagnostics with every hidden constant set
//! to one.
//!
//! Faithfulness metrics (insertion/deletion areas and a Spearman rank
//! correlation) evaluate attributions against the game itself.

use serde::Serialize;

use crate::combinatorics::{binomial_exact, BucketIndex, ImplicitQ};
use crate::estimators::{estimate, log_kernel_row, EstimatorConfig, EstimatorKind, LambdaMode};
use crate::exact::exact_bruteforce;
use crate::games::{Game, Subset};
use crate::sampling::{BucketDistribution, Strategy};
use crate::{Error, Result};

/// Largest dimension for which full coalition-space vectors (length
/// `2^d − 2`) are materialized.
pub const FULL_VECTOR_MAX_D: usize = 20;

/// Coalitions evaluated per batch when filling a full vector.
const EVAL_CHUNK: usize = 1 << 16;

fn require_small_d(d: usize, what: &str) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "{what} needs at least two players, got d = {d}"
        )));
    }
    if d > FULL_VECTOR_MAX_D {
        return Err(Error::Capability(format!(
            "{what} enumerates all 2^d − 2 coalitions and supports d ≤ {FULL_VECTOR_MAX_D}, got {d}"
        )));
    }
    Ok(())
}

/// Per-bucket subset counts `C(d,h)` for `h = 1..d`, as f64.
fn bucket_counts(d: usize) -> Vec<f64> {
    (1..d)
        .map(|h| binomial_exact(d, h).expect("small d") as f64)
        .collect()
}

/// `√((d/(d−1))·k(h))` per size, NaN at the unusable sizes.
fn row_scales(d: usize) -> Vec<f64> {
    log_kernel_row(d)
        .into_iter()
        .map(|lk| (0.5 * lk).exp())
        .collect()
}

/// `b_λ` over every proper nonempty coalition in bucket-major flat order
/// (sizes ascending, combinadic rank within each size).
pub fn full_rhs(game: &dyn Game, lambda: f64) -> Result<Vec<f64>> {
    let d = game.d();
    require_small_d(d, "full_rhs")?;
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    let scales = row_scales(d);
    let v_empty = game.v_empty();
    let full = (1u64 << d) - 1;
    let mut out = vec![0.0f64; (full - 1) as usize];
    let mut mask = 1u64;
    while mask < full {
        let stop = (mask + EVAL_CHUNK as u64).min(full);
        let subsets: Vec<Subset> = (mask..stop).map(|m| Subset::from_mask64(d, m)).collect();
        let values = game.evaluate_batch(&subsets)?;
        for (subset, value) in subsets.iter().zip(&values) {
            let h = subset.size();
            let members: Vec<usize> = subset.members().collect();
            let index = BucketIndex {
                h,
                l: BucketIndex::rank_of_members(&members),
            };
            let flat = (index.to_flat(d) - 1) as usize;
            out[flat] = scales[h] * (value - v_empty - lambda * h as f64);
        }
        mask = stop;
    }
    Ok(out)
}

/// Residual component `(I − UUᵀ)b` of a flat coalition-space vector: the part
/// orthogonal to every scaled coalition row, which no attribution vector can
/// fit and which therefore governs the regression-side sample bound.
pub fn project_rhs(d: usize, b: &[f64]) -> Result<Vec<f64>> {
    require_small_d(d, "project_rhs")?;
    let expected = (1usize << d) - 2;
    if b.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "expected {expected} entries for d = {d}, got {}",
            b.len()
        )));
    }
    let q = ImplicitQ::new(d);
    let scales = row_scales(d);
    let mut compressed = vec![0.0f64; d - 1];
    let mut flat = 0usize;
    for h in 1..d {
        let count = binomial_exact(d, h).expect("small d");
        for l in 1..=count as u64 {
            let members = BucketIndex { h, l }.members(d);
            let row = q.transpose_apply_indicator(members.iter().copied());
            for (acc, value) in compressed.iter_mut().zip(&row) {
                *acc += scales[h] * b[flat] * value;
            }
            flat += 1;
        }
    }
    let mut out = vec![0.0f64; expected];
    flat = 0;
    for h in 1..d {
        let count = binomial_exact(d, h).expect("small d");
        for l in 1..=count as u64 {
            let members = BucketIndex { h, l }.members(d);
            let row = q.transpose_apply_indicator(members.iter().copied());
            let fitted = scales[h]
                * row
                    .iter()
                    .zip(&compressed)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            out[flat] = b[flat] - fitted;
            flat += 1;
        }
    }
    Ok(out)
}

/// `γ(z) = Σ_S (‖u_S‖²/p_S)·z_S²` by direct summation over all coalitions.
pub fn gamma_bruteforce(dist: &BucketDistribution, z: &[f64]) -> Result<f64> {
    let d = dist.d();
    require_small_d(d, "gamma_bruteforce")?;
    let expected = (1usize << d) - 2;
    if z.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "expected {expected} entries for d = {d}, got {}",
            z.len()
        )));
    }
    let counts = bucket_counts(d);
    let mut total = 0.0f64;
    let mut flat = 0usize;
    for h in 1..d {
        let norm_sq = 1.0 / counts[h - 1];
        let ratio = norm_sq / dist.subset_prob(h);
        for _ in 0..counts[h - 1] as usize {
            total += ratio * z[flat] * z[flat];
            flat += 1;
        }
    }
    Ok(total)
}

/// `η = max_S ‖u_S‖²/p_S` by scanning every bucket's per-subset ratio.
pub fn eta_bruteforce(dist: &BucketDistribution) -> Result<f64> {
    let d = dist.d();
    require_small_d(d, "eta_bruteforce")?;
    let counts = bucket_counts(d);
    let mut best = 0.0f64;
    for h in 1..d {
        let ratio = (1.0 / counts[h - 1]) / dist.subset_prob(h);
        best = best.max(ratio);
    }
    Ok(best)
}

/// `N_τ = Σ_{j=1}^{d−1} (j(d−j))^{−τ}`, summed term by term so the `τ = 0`
/// normalizer is exactly `d − 1`.
fn tau_normalizer(d: usize, tau: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two players, got d = {d}"
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!(
            "tau must lie in [0, 1], got {tau}"
        )));
    }
    Ok((1..d).map(|j| ((j * (d - j)) as f64).powf(-tau)).sum())
}

/// `γ_τ` from per-bucket energies `B_h = Σ_l z_{h,l}²` (`bucket_energy[h−1]`),
/// via the per-subset ratio `N_τ·(h(d−h))^τ`.
pub fn gamma_closed_form(tau: f64, d: usize, bucket_energy: &[f64]) -> Result<f64> {
    if bucket_energy.len() + 1 != d {
        return Err(Error::InvalidArgument(format!(
            "expected {} bucket energies for d = {d}, got {}",
            d.saturating_sub(1),
            bucket_energy.len()
        )));
    }
    let normalizer = tau_normalizer(d, tau)?;
    let mut total = 0.0f64;
    for (h, energy) in (1..d).zip(bucket_energy) {
        total += ((h * (d - h)) as f64).powf(tau) * energy;
    }
    Ok(normalizer * total)
}

/// `η_τ = N_τ·(⌊d/2⌋·⌈d/2⌉)^τ`, the ratio at the widest bucket; exactly
/// `d − 1` at `τ = 0`.
pub fn eta_closed_form(tau: f64, d: usize) -> Result<f64> {
    let normalizer = tau_normalizer(d, tau)?;
    let widest = ((d / 2) * d.div_ceil(2)) as f64;
    Ok(normalizer * widest.powf(tau))
}

/// Sample-size diagnostics for one `(game, τ, λ)` triple. `gamma_proj` is
/// `γ` of the residual component `(I − UUᵀ)b_λ` from [`project_rhs`].
///
/// `bound_matvec = γ(b_λ)/(δε²)` and
/// `bound_regression = gamma_proj/(δε²) + η·ln(d/δ)`, with all hidden
/// constants set to one; read them as orders of magnitude, not guarantees.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub d: usize,
    pub tau: f64,
    pub lambda: f64,
    pub gamma_b: f64,
    pub gamma_proj: f64,
    pub eta: f64,
    pub bound_matvec: f64,
    pub bound_regression: f64,
}

impl TheoryReport {
    pub const CSV_HEADER: &'static str =
        "d,tau,lambda,gamma_b,gamma_proj,eta,bound_matvec,bound_regression";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.d,
            self.tau,
            self.lambda,
            self.gamma_b,
            self.gamma_proj,
            self.eta,
            self.bound_matvec,
            self.bound_regression
        )
    }
}

/// Per-bucket energies `Σ_l z_{h,l}²` of a flat coalition-space vector.
pub fn bucket_energies(d: usize, z: &[f64]) -> Result<Vec<f64>> {
    require_small_d(d, "bucket_energies")?;
    let expected = (1usize << d) - 2;
    if z.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "expected {expected} entries for d = {d}, got {}",
            z.len()
        )));
    }
    let counts = bucket_counts(d);
    let mut energy = vec![0.0f64; d - 1];
    let mut flat = 0usize;
    for h in 1..d {
        for _ in 0..counts[h - 1] as usize {
            energy[h - 1] += z[flat] * z[flat];
            flat += 1;
        }
    }
    Ok(energy)
}

/// Evaluates both sample-size bounds for the game at accuracy `eps` and
/// failure probability `delta`.
pub fn theorem_bounds(
    game: &dyn Game,
    tau: f64,
    lambda: f64,
    eps: f64,
    delta: f64,
) -> Result<TheoryReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let d = game.d();
    let b = full_rhs(game, lambda)?;
    let projected = project_rhs(d, &b)?;
    let gamma_b = gamma_closed_form(tau, d, &bucket_energies(d, &b)?)?;
    let gamma_proj = gamma_closed_form(tau, d, &bucket_energies(d, &projected)?)?;
    let eta = eta_closed_form(tau, d)?;
    let scale = 1.0 / (delta * eps * eps);
    Ok(TheoryReport {
        d,
        tau,
        lambda,
        gamma_b,
        gamma_proj,
        eta,
        bound_matvec: gamma_b * scale,
        bound_regression: gamma_proj * scale + eta * (d as f64 / delta).ln(),
    })
}

/// Analytic `γ_τ(b_λ)` for the size-plateau game at `λ = α`: only the
/// quadratic plateau contributes, so
/// `γ = N_τ · (ξ²/d³) · Σ_{h ∈ [1,n]∪[d−n,d−1]} (h(d−h))^τ · h³/(d−h)`.
/// The linear coefficient `chi` cancels and is accepted only for interface
/// symmetry with the game constructor.
pub fn adversarial_gamma_analytic(
    d: usize,
    n: usize,
    xi: f64,
    chi: f64,
    tau: f64,
) -> Result<f64> {
    let _ = chi;
    if d < 3 {
        return Err(Error::InvalidArgument(format!(
            "plateau game needs d ≥ 3, got {d}"
        )));
    }
    if n == 0 || 2 * n >= d {
        return Err(Error::InvalidArgument(format!(
            "plateau width must satisfy 1 ≤ n < d/2, got n = {n} for d = {d}"
        )));
    }
    if !xi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "xi must be finite, got {xi}"
        )));
    }
    let normalizer = tau_normalizer(d, tau)?;
    let df = d as f64;
    let mut total = 0.0f64;
    for h in (1..=n).chain(d - n..d) {
        let hf = h as f64;
        total += (hf * (df - hf)).powf(tau) * hf.powi(3) / (df - hf);
    }
    Ok(normalizer * total * xi * xi / df.powi(3))
}

/// Predicted matvec MSE ratio of sampling under `dist1` versus `dist2`:
/// `(γ₁(b_λ) − ‖φ* − α1‖²) / (γ₂(b_λ) − ‖φ* − α1‖²)`.
pub fn mse_ratio_prediction(
    dist1: &BucketDistribution,
    dist2: &BucketDistribution,
    game: &dyn Game,
    lambda: f64,
) -> Result<f64> {
    let d = game.d();
    if dist1.d() != d || dist2.d() != d {
        return Err(Error::InvalidArgument(format!(
            "distributions are over {} and {} players but the game has {d}",
            dist1.d(),
            dist2.d()
        )));
    }
    if d > 16 {
        return Err(Error::Capability(format!(
            "mse_ratio_prediction needs the exact attributions and supports d ≤ 16, got {d}"
        )));
    }
    let exact = exact_bruteforce(game)?;
    let alpha = (game.v_full() - game.v_empty()) / d as f64;
    let centered_energy: f64 = exact
        .phi
        .iter()
        .map(|phi| (phi - alpha) * (phi - alpha))
        .sum();
    let b = full_rhs(game, lambda)?;
    let energy = bucket_energies(d, &b)?;
    let gamma1 = gamma_closed_form(dist1.tau(), d, &energy)?;
    let gamma2 = gamma_closed_form(dist2.tau(), d, &energy)?;
    let numerator = gamma1 - centered_energy;
    let denominator = gamma2 - centered_energy;
    let spread = (numerator - denominator).abs();
    if spread <= 1e-12 * numerator.abs().max(denominator.abs()) {
        return Ok(1.0);
    }
    if denominator <= 0.0 {
        return Err(Error::Singular(format!(
            "MSE prediction denominator {denominator} is not positive"
        )));
    }
    Ok(numerator / denominator)
}

/// Per-seed squared errors `‖φ̂ − reference‖²` for `replicates` runs of the
/// configuration, with seeds `config.seed + 0..replicates`.
pub fn replicate_squared_errors(
    game: &dyn Game,
    config: &EstimatorConfig,
    replicates: usize,
    reference: &[f64],
) -> Result<Vec<f64>> {
    if reference.len() != game.d() {
        return Err(Error::InvalidArgument(format!(
            "reference covers {} players but the game has {}",
            reference.len(),
            game.d()
        )));
    }
    let mut errors = Vec::with_capacity(replicates);
    let mut run = config.clone();
    for i in 0..replicates {
        run.seed = config.seed.wrapping_add(i as u64);
        let result = estimate(game, &run)?;
        let error: f64 = result
            .phi
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        errors.push(error);
    }
    Ok(errors)
}

/// Realized matvec MSE ratio under `dist1` versus `dist2`, each measured by
/// unpaired with-replacement replication against the exact attributions.
pub fn mse_ratio_empirical(
    dist1: &BucketDistribution,
    dist2: &BucketDistribution,
    game: &dyn Game,
    lambda_mode: LambdaMode,
    m: usize,
    replicates: usize,
    seed: u64,
) -> Result<f64> {
    let d = game.d();
    if dist1.d() != d || dist2.d() != d {
        return Err(Error::InvalidArgument(format!(
            "distributions are over {} and {} players but the game has {d}",
            dist1.d(),
            dist2.d()
        )));
    }
    let exact = exact_bruteforce(game)?;
    let mut mean = [0.0f64; 2];
    for (slot, dist) in [dist1, dist2].into_iter().enumerate() {
        let config = EstimatorConfig {
            kind: EstimatorKind::Matvec,
            tau: dist.tau(),
            strategy: Strategy::WithReplacement,
            paired: false,
            lambda_mode,
            m,
            seed,
            maxval: crate::sampling::DEFAULT_MAXVAL,
        };
        let errors = replicate_squared_errors(game, &config, replicates, &exact.phi)?;
        mean[slot] = errors.iter().sum::<f64>() / replicates.max(1) as f64;
    }
    if mean[1] == 0.0 {
        return Err(Error::Singular(
            "second distribution achieved zero empirical MSE".into(),
        ));
    }
    Ok(mean[0] / mean[1])
}

/// Feature order for the curve metrics: descending `|φ|`, ties broken by
/// index so the order is total and reproducible.
fn importance_order(phi: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..phi.len()).collect();
    order.sort_by(|&a, &b| {
        phi[b]
            .abs()
            .partial_cmp(&phi[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Trapezoidal area of the rescaled prediction curve, clamped to [0,1].
fn curve_area(values: &[f64], v_empty: f64, v_full: f64) -> f64 {
    if v_full == v_empty {
        return 1.0;
    }
    let scaled: Vec<f64> = values
        .iter()
        .map(|v| (v - v_empty) / (v_full - v_empty))
        .collect();
    let steps = scaled.len() - 1;
    let mut area = 0.0f64;
    for pair in scaled.windows(2) {
        area += 0.5 * (pair[0] + pair[1]);
    }
    (area / steps as f64).clamp(0.0, 1.0)
}

fn validate_curve_args(game: &dyn Game, phi: &[f64], top_k: usize) -> Result<()> {
    let d = game.d();
    if phi.len() != d {
        return Err(Error::InvalidArgument(format!(
            "attributions cover {} players but the game has {d}",
            phi.len()
        )));
    }
    if top_k == 0 || top_k > d {
        return Err(Error::InvalidArgument(format!(
            "top_k must lie in 1..={d}, got {top_k}"
        )));
    }
    Ok(())
}

/// Insertion curve: start from the empty coalition and add features by
/// descending `|φ|`, recording the prediction after each step. Predictions
/// are affinely rescaled by the `(v(∅), v([d]))` endpoints before the
/// trapezoidal integration so areas compare across games; a flat game
/// reports 1. Higher is better.
pub fn insertion_auc(game: &dyn Game, phi: &[f64], top_k: usize) -> Result<f64> {
    validate_curve_args(game, phi, top_k)?;
    let d = game.d();
    let order = importance_order(phi);
    let mut subsets = Vec::with_capacity(top_k);
    let mut current = Subset::empty(d);
    for &feature in &order[..top_k] {
        current.insert(feature);
        subsets.push(current.clone());
    }
    let values = game.evaluate_batch(&subsets)?;
    let mut curve = Vec::with_capacity(top_k + 1);
    curve.push(game.v_empty());
    curve.extend(values);
    Ok(curve_area(&curve, game.v_empty(), game.v_full()))
}

/// Deletion curve: start from the full coalition and remove features by
/// descending `|φ|`; same rescaling as [`insertion_auc`]. Lower is better.
pub fn deletion_auc(game: &dyn Game, phi: &[f64], top_k: usize) -> Result<f64> {
    validate_curve_args(game, phi, top_k)?;
    let d = game.d();
    let order = importance_order(phi);
    let mut subsets = Vec::with_capacity(top_k);
    let mut current = Subset::full(d);
    for &feature in &order[..top_k] {
        current = remove_member(&current, feature);
        subsets.push(current.clone());
    }
    let values = game.evaluate_batch(&subsets)?;
    let mut curve = Vec::with_capacity(top_k + 1);
    curve.push(game.v_full());
    curve.extend(values);
    Ok(curve_area(&curve, game.v_empty(), game.v_full()))
}

fn remove_member(subset: &Subset, feature: usize) -> Subset {
    let d = subset.d();
    Subset::from_members(d, subset.members().filter(|&j| j != feature))
}

/// Average ranks (1-based) of the values' absolute magnitudes, ties sharing
/// their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let magnitudes: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mut order: Vec<usize> = (0..magnitudes.len()).collect();
    order.sort_by(|&a, &b| {
        magnitudes[a]
            .partial_cmp(&magnitudes[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranks = vec![0.0f64; magnitudes.len()];
    let mut start = 0usize;
    while start < order.len() {
        let mut stop = start + 1;
        while stop < order.len() && magnitudes[order[stop]] == magnitudes[order[start]] {
            stop += 1;
        }
        let shared = (start + stop + 1) as f64 / 2.0;
        for &index in &order[start..stop] {
            ranks[index] = shared;
        }
        start = stop;
    }
    ranks
}

/// Spearman correlation of two attribution vectors' importance orders
/// (absolute values, average-rank ties). Two constant vectors correlate 1;
/// exactly one constant vector correlates 0.
pub fn rank_correlation(phi_a: &[f64], phi_b: &[f64]) -> Result<f64> {
    if phi_a.len() != phi_b.len() {
        return Err(Error::InvalidArgument(format!(
            "attribution vectors have lengths {} and {}",
            phi_a.len(),
            phi_b.len()
        )));
    }
    if phi_a.is_empty() {
        return Err(Error::InvalidArgument(
            "attribution vectors are empty".into(),
        ));
    }
    let ranks_a = average_ranks(phi_a);
    let ranks_b = average_ranks(phi_b);
    let n = ranks_a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0f64;
    let mut var_a = 0.0f64;
    let mut var_b = 0.0f64;
    for (a, b) in ranks_a.iter().zip(&ranks_b) {
        cov += (a - mean) * (b - mean);
        var_a += (a - mean) * (a - mean);
        var_b += (b - mean) * (b - mean);
    }
    if var_a == 0.0 && var_b == 0.0 {
        return Ok(1.0);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Least-squares slope of `ln(y)` against `ln(x)`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need two or more paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(
            "log-log fit needs strictly positive coordinates".into(),
        ));
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut cov = 0.0f64;
    let mut var = 0.0f64;
    for (x, y) in lx.iter().zip(&ly) {
        cov += (x - mx) * (y - my);
        var += (x - mx) * (x - mx);
    }
    if var == 0.0 {
        return Err(Error::InvalidArgument(
            "log-log fit needs at least two distinct x values".into(),
        ));
    }
    Ok(cov / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{AdversarialGame, TabularGame};
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;
    use rand::SeedableRng as _;
    use rand_chacha::ChaCha12Rng;

    fn random_flat_vector(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..(1usize << d) - 2)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }

    #[test]
    fn gamma_tau_zero_is_scaled_energy() {
        let d = 6;
        let dist = BucketDistribution::new(d, 0.0).unwrap();
        let z = random_flat_vector(d, 1);
        let energy: f64 = z.iter().map(|v| v * v).sum();
        let gamma = gamma_bruteforce(&dist, &z).unwrap();
        assert_abs_diff_eq!(gamma, (d as f64 - 1.0) * energy, epsilon = 1e-10 * gamma);
    }

    #[test]
    fn gamma_of_zero_vector_vanishes() {
        let dist = BucketDistribution::new(5, 0.7).unwrap();
        let z = vec![0.0; (1 << 5) - 2];
        assert_eq!(gamma_bruteforce(&dist, &z).unwrap(), 0.0);
    }

    #[test]
    fn gamma_single_size_one_indicator_matches_hand_value() {
        // d = 4, τ = 1: the ratio at h = 1 is N₁·(1·3) = (11/12)·3 = 11/4.
        let d = 4;
        let dist = BucketDistribution::new(d, 1.0).unwrap();
        let mut z = vec![0.0; (1 << d) - 2];
        z[0] = 1.0;
        let gamma = gamma_bruteforce(&dist, &z).unwrap();
        assert_abs_diff_eq!(gamma, 11.0 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_gamma_matches_bruteforce() {
        for d in [4usize, 7, 10, 13, 16] {
            let z = random_flat_vector(d, d as u64);
            let energy = bucket_energies(d, &z).unwrap();
            for tau in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let dist = BucketDistribution::new(d, tau).unwrap();
                let brute = gamma_bruteforce(&dist, &z).unwrap();
                let closed = gamma_closed_form(tau, d, &energy).unwrap();
                assert_abs_diff_eq!(closed, brute, epsilon = 1e-10 * brute.abs());
            }
        }
    }

    #[test]
    fn closed_form_eta_matches_bruteforce() {
        for d in [4usize, 5, 9, 12, 16] {
            for tau in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let dist = BucketDistribution::new(d, tau).unwrap();
                let brute = eta_bruteforce(&dist).unwrap();
                let closed = eta_closed_form(tau, d).unwrap();
                assert_abs_diff_eq!(closed, brute, epsilon = 1e-10 * brute);
            }
        }
    }

    #[test]
    fn eta_leverage_is_exactly_d_minus_one() {
        for d in 3..24 {
            assert_eq!(eta_closed_form(0.0, d).unwrap(), (d - 1) as f64);
        }
    }

    #[test]
    fn eta_kernel_d4_matches_hand_value() {
        assert_abs_diff_eq!(eta_closed_form(1.0, 4).unwrap(), 11.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eta_modified_family_obeys_the_stated_cap() {
        let d = 12;
        let cap: f64 = (d as f64 / 2.0)
            * (1..d)
                .map(|h| 1.0 / ((h * (d - h)) as f64).sqrt())
                .sum::<f64>();
        let dist = BucketDistribution::new(d, 0.5).unwrap();
        let eta = eta_bruteforce(&dist).unwrap();
        assert!(eta <= cap * (1.0 + 1e-12));
    }

    #[test]
    fn eta_is_nondecreasing_in_tau() {
        for d in [4usize, 9, 17, 32] {
            let mut previous = 0.0f64;
            for i in 0..=10 {
                let tau = i as f64 / 10.0;
                let eta = eta_closed_form(tau, d).unwrap();
                assert!(eta >= previous - 1e-12 * eta.abs());
                previous = eta;
            }
        }
    }

    #[test]
    fn eta_is_at_least_one() {
        for d in [4usize, 8, 15] {
            for tau in [0.0, 0.3, 0.6, 1.0] {
                assert!(eta_closed_form(tau, d).unwrap() >= 1.0);
            }
        }
    }

    #[test]
    fn gamma_ratio_windows_hold_for_random_vectors() {
        for d in [8usize, 16] {
            let z = random_flat_vector(d, 100 + d as u64);
            let energy = bucket_energies(d, &z).unwrap();
            let leverage = gamma_closed_form(0.0, d, &energy).unwrap();
            let kernel = gamma_closed_form(1.0, d, &energy).unwrap();
            let modified = gamma_closed_form(0.5, d, &energy).unwrap();
            let log_d = (d as f64).ln();
            let kernel_ratio = kernel / leverage;
            assert!(kernel_ratio >= 0.1 * log_d / d as f64);
            assert!(kernel_ratio <= 10.0 * log_d);
            let modified_ratio = modified / leverage;
            assert!(modified_ratio >= 0.1 / (d as f64).sqrt());
            assert!(modified_ratio <= 10.0);
        }
    }

    #[test]
    fn projection_is_idempotent_and_contractive() {
        let d = 8;
        let game = TabularGame::random(d, 3).unwrap();
        let b = full_rhs(&game, 0.0).unwrap();
        let once = project_rhs(d, &b).unwrap();
        let twice = project_rhs(d, &once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(norm(&once) <= norm(&b) * (1.0 + 1e-12));
    }

    #[test]
    fn additive_games_leave_no_residual_at_alpha() {
        // Additive targets are exactly fit, so the residual component is 0.
        let d = 7;
        let weights: Vec<f64> = (0..d).map(|j| 0.5 + 0.3 * j as f64).collect();
        let game = TabularGame::from_fn(d, move |mask| {
            (0..d)
                .filter(|j| mask >> j & 1 == 1)
                .map(|j| weights[j])
                .sum()
        })
        .unwrap();
        let alpha = (game.v_full() - game.v_empty()) / d as f64;
        let b = full_rhs(&game, alpha).unwrap();
        let residual = project_rhs(d, &b).unwrap();
        for value in &residual {
            assert_abs_diff_eq!(*value, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn theory_report_chain_inequalities_hold() {
        let game = TabularGame::random(8, 5).unwrap();
        for tau in [0.0, 0.5, 1.0] {
            let report = theorem_bounds(&game, tau, 0.1, 0.25, 0.05).unwrap();
            let b = full_rhs(&game, 0.1).unwrap();
            let projected = project_rhs(8, &b).unwrap();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
            let chain_mid = report.eta * norm(&projected);
            let chain_top = report.eta * norm(&b);
            assert!(report.gamma_proj <= chain_mid * (1.0 + 1e-12));
            assert!(chain_mid <= chain_top * (1.0 + 1e-12));
            assert!(report.eta >= 1.0);
        }
    }

    #[test]
    fn theorem_bounds_scale_as_documented() {
        let game = TabularGame::random(6, 9).unwrap();
        let tight = theorem_bounds(&game, 0.5, 0.0, 0.1, 0.1).unwrap();
        let loose = theorem_bounds(&game, 0.5, 0.0, 0.2, 0.1).unwrap();
        // Halving ε quadruples the γ terms.
        assert_abs_diff_eq!(
            tight.bound_matvec,
            4.0 * loose.bound_matvec,
            epsilon = 1e-9 * tight.bound_matvec
        );
        let eta_term = tight.eta * (6.0f64 / 0.1).ln();
        assert_abs_diff_eq!(
            tight.bound_regression - eta_term,
            4.0 * (loose.bound_regression - eta_term),
            epsilon = 1e-9 * tight.bound_regression
        );
        // As ε → ∞ the bounds approach η·ln(d/δ) and 0.
        let huge = theorem_bounds(&game, 0.5, 0.0, 1e9, 0.1).unwrap();
        assert_abs_diff_eq!(huge.bound_matvec, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(huge.bound_regression, eta_term, epsilon = 1e-6);
    }

    #[test]
    fn theory_report_serializes_to_csv() {
        let game = TabularGame::random(5, 1).unwrap();
        let report = theorem_bounds(&game, 1.0, 0.0, 0.5, 0.1).unwrap();
        let row = report.csv_row();
        assert_eq!(row.split(',').count(), TheoryReport::CSV_HEADER.split(',').count());
        assert!(row.starts_with("5,1,0,"));
    }

    #[test]
    fn analytic_plateau_gamma_vanishes_without_curvature() {
        for tau in [0.0, 0.5, 1.0] {
            let gamma = adversarial_gamma_analytic(32, 3, 0.0, 2.0, tau).unwrap();
            assert_eq!(gamma, 0.0);
        }
    }

    #[test]
    fn analytic_plateau_gamma_matches_bruteforce() {
        for d in [8usize, 12, 16] {
            let game = AdversarialGame::new(d, 2, 1.0, 0.4, 0.5).unwrap();
            let alpha = (game.v_full() - game.v_empty()) / d as f64;
            let b = full_rhs(&game, alpha).unwrap();
            for tau in [0.0, 0.5, 1.0] {
                let dist = BucketDistribution::new(d, tau).unwrap();
                let brute = gamma_bruteforce(&dist, &b).unwrap();
                let analytic = adversarial_gamma_analytic(d, 2, 1.0, 0.4, tau).unwrap();
                assert_abs_diff_eq!(analytic, brute, epsilon = 1e-9 * brute);
            }
        }
    }

    #[test]
    fn plateau_rhs_is_its_own_projection() {
        let d = 10;
        let game = AdversarialGame::new(d, 2, 1.0, 0.0, 0.5).unwrap();
        let alpha = (game.v_full() - game.v_empty()) / d as f64;
        let b = full_rhs(&game, alpha).unwrap();
        let projected = project_rhs(d, &b).unwrap();
        for (a, b) in b.iter().zip(&projected) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn leverage_to_kernel_gamma_ratio_grows_with_d() {
        let mut previous = 0.0f64;
        for d in [16usize, 32, 64, 128] {
            let leverage = adversarial_gamma_analytic(d, 2, 1.0, 0.0, 0.0).unwrap();
            let kernel = adversarial_gamma_analytic(d, 2, 1.0, 0.0, 1.0).unwrap();
            let ratio = leverage / kernel;
            assert!(ratio > previous);
            previous = ratio;
        }
    }

    #[test]
    fn leverage_to_modified_gamma_ratio_has_half_slope() {
        let ds: Vec<f64> = (6..=10).map(|p| (1usize << p) as f64).collect();
        let ratios: Vec<f64> = (6..=10)
            .map(|p| {
                let d = 1usize << p;
                let leverage = adversarial_gamma_analytic(d, 2, 1.0, 0.0, 0.0).unwrap();
                let modified = adversarial_gamma_analytic(d, 2, 1.0, 0.0, 0.5).unwrap();
                leverage / modified
            })
            .collect();
        let slope = log_log_slope(&ds, &ratios).unwrap();
        assert!((slope - 0.5).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn mse_prediction_is_one_for_identical_distributions() {
        let game = TabularGame::random(8, 2).unwrap();
        let dist = BucketDistribution::new(8, 0.3).unwrap();
        let ratio = mse_ratio_prediction(&dist, &dist, &game, 0.0).unwrap();
        assert_eq!(ratio, 1.0);
    }

    #[test]
    fn mse_prediction_is_one_at_d3_for_any_pair() {
        let game = TabularGame::random(3, 6).unwrap();
        let first = BucketDistribution::new(3, 0.0).unwrap();
        let second = BucketDistribution::new(3, 1.0).unwrap();
        let ratio = mse_ratio_prediction(&first, &second, &game, 0.2).unwrap();
        assert_abs_diff_eq!(ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empirical_mse_ratio_tracks_prediction_loosely() {
        // Smoke-scale version of the replication experiment.
        let d = 8;
        let game = AdversarialGame::new(d, 2, 1.0, 0.0, 0.5).unwrap();
        let leverage = BucketDistribution::new(d, 0.0).unwrap();
        let kernel = BucketDistribution::new(d, 1.0).unwrap();
        let predicted =
            mse_ratio_prediction(&leverage, &kernel, &game, alpha_of(&game)).unwrap();
        let realized = mse_ratio_empirical(
            &leverage,
            &kernel,
            &game,
            LambdaMode::Alpha,
            64,
            2000,
            11,
        )
        .unwrap();
        assert!(realized / predicted > 0.5 && realized / predicted < 2.0);
    }

    fn alpha_of(game: &dyn Game) -> f64 {
        (game.v_full() - game.v_empty()) / game.d() as f64
    }

    #[test]
    fn insertion_auc_prefers_the_true_order_for_additive_games() {
        let d = 8;
        let weights: Vec<f64> = (0..d).map(|j| 1.0 + j as f64).collect();
        let per_mask = weights.clone();
        let game = TabularGame::from_fn(d, move |mask| {
            (0..d)
                .filter(|j| mask >> j & 1 == 1)
                .map(|j| per_mask[j])
                .sum()
        })
        .unwrap();
        let exact = exact_bruteforce(&game).unwrap();
        let best = insertion_auc(&game, &exact.phi, d).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..100 {
            let mut shuffled = exact.phi.clone();
            for i in (1..shuffled.len()).rev() {
                let j = rng.random_range(0..=i);
                shuffled.swap(i, j);
            }
            let shuffled_auc = insertion_auc(&game, &shuffled, d).unwrap();
            assert!(best >= shuffled_auc - 1e-12);
        }
    }

    #[test]
    fn deletion_auc_drops_fastest_for_the_true_order() {
        let d = 6;
        let game = TabularGame::from_fn(d, |mask| mask.count_ones() as f64).unwrap();
        let phi = vec![1.0; d];
        let auc = deletion_auc(&game, &phi, d).unwrap();
        // Linear game: the curve descends linearly from 1 to 0.
        assert_abs_diff_eq!(auc, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn curve_metrics_handle_flat_games() {
        let d = 5;
        let game = TabularGame::from_fn(d, |_| 2.0).unwrap();
        let phi = vec![0.0; d];
        assert_eq!(insertion_auc(&game, &phi, d).unwrap(), 1.0);
        assert_eq!(deletion_auc(&game, &phi, d).unwrap(), 1.0);
    }

    #[test]
    fn curve_metrics_validate_arguments() {
        let game = TabularGame::random(4, 8).unwrap();
        let phi = vec![0.25; 4];
        assert!(insertion_auc(&game, &phi, 0).is_err());
        assert!(insertion_auc(&game, &phi, 5).is_err());
        assert!(insertion_auc(&game, &phi[..3], 2).is_err());
    }

    #[test]
    fn rank_correlation_of_identical_vectors_is_one() {
        let phi = vec![0.3, -1.2, 0.0, 4.0];
        assert_abs_diff_eq!(rank_correlation(&phi, &phi).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_correlation_of_reversed_ranks_is_minus_one() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![-4.0, -3.0, -2.0, -1.0];
        assert_abs_diff_eq!(rank_correlation(&a, &b).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_correlation_uses_absolute_magnitudes_and_ties() {
        let a = vec![1.0, -2.0, 3.0];
        let b = vec![-1.0, 2.0, -3.0];
        assert_abs_diff_eq!(rank_correlation(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(rank_correlation(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rank_correlation(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn log_log_slope_recovers_power_laws() {
        let xs: Vec<f64> = (1..=6).map(|i| (i * i) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.0)).collect();
        assert_abs_diff_eq!(log_log_slope(&xs, &ys).unwrap(), -1.0, epsilon = 1e-12);
        assert!(log_log_slope(&xs[..1], &ys[..1]).is_err());
        assert!(log_log_slope(&[1.0, -2.0], &[1.0, 2.0]).is_err());
    }
}
