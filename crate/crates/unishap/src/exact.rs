//! Ground-truth attribution oracles for small player counts.
//!
//! Three independent routes to the same vector: marginal-contribution brute
//! force, the orthogonal-reformulation least-squares solution, and an
//! equality-constrained quadratic program solved through a pseudo-inverse.
//! Agreement across all three is the backbone of the test suite.

use crate::combinatorics::kernel_weight;
use crate::error::{Error, Result};
use crate::games::{Game, Subset};
use nalgebra::{DMatrix, DVector};

/// Largest `d` accepted by [`exact_bruteforce`] (`2^d` evaluations).
pub const BRUTEFORCE_MAX_D: usize = 25;

/// Largest `d` accepted by [`exact_regression`] and [`kernel_gram_system`]
/// (`2^d − 2` weighted rows).
pub const REGRESSION_MAX_D: usize = 20;

/// Subsets per evaluation request when enumerating a game exhaustively.
const EVAL_CHUNK: usize = 1 << 16;

/// Attribution vector together with how well it satisfies the budget
/// constraint `Σφ = v(full) − v(empty)`.
#[derive(Debug, Clone)]
pub struct ShapleyVector {
    pub phi: Vec<f64>,
    /// `|Σφ − (v(full) − v(empty))|`; at most 1e−9 for the exact oracles.
    pub efficiency_gap: f64,
}

impl ShapleyVector {
    fn new(phi: Vec<f64>, target: f64) -> Self {
        let gap = (phi.iter().sum::<f64>() - target).abs();
        ShapleyVector {
            phi,
            efficiency_gap: gap,
        }
    }
}

fn enumerate_values(game: &dyn Game, masks: std::ops::Range<u64>) -> Result<Vec<f64>> {
    let d = game.d();
    let mut values = Vec::with_capacity((masks.end - masks.start) as usize);
    let mut cursor = masks.start;
    while cursor < masks.end {
        let end = (cursor + EVAL_CHUNK as u64).min(masks.end);
        let batch: Vec<Subset> = (cursor..end).map(|m| Subset::from_mask64(d, m)).collect();
        values.extend(game.evaluate_batch(&batch)?);
        cursor = end;
    }
    Ok(values)
}

/// Exact attributions by direct enumeration of every marginal contribution:
/// `φ_j = Σ_{S ⊆ [d]\{j}} |S|!(d−|S|−1)!/d! · (v(S∪{j}) − v(S))`.
///
/// Every one of the `2^d` coalition values is evaluated exactly once.
pub fn exact_bruteforce(game: &dyn Game) -> Result<ShapleyVector> {
    let d = game.d();
    if d == 0 || d > BRUTEFORCE_MAX_D {
        return Err(Error::Capability(format!(
            "brute-force oracle supports 1 ≤ d ≤ {BRUTEFORCE_MAX_D}, got {d}"
        )));
    }
    let n = 1u64 << d;
    let table = enumerate_values(game, 0..n)?;

    let mut factorial = vec![1.0f64; d + 1];
    for i in 1..=d {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..d)
        .map(|s| factorial[s] * factorial[d - 1 - s] / factorial[d])
        .collect();

    let mut phi = vec![0.0; d];
    for j in 0..d {
        let bit = 1u64 << j;
        let mut acc = 0.0;
        for mask in 0..n {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                acc += weight[s] * (table[(mask | bit) as usize] - table[mask as usize]);
            }
        }
        phi[j] = acc;
    }
    let target = table[(n - 1) as usize] - table[0];
    Ok(ShapleyVector::new(phi, target))
}

/// Exact attributions through the orthogonalized least-squares form.
///
/// Accumulates `y = Σ_S k(|S|)·(v(S) − v(∅) − λ|S|)·z_S` over every proper
/// nonempty coalition in O(d) memory, then returns
/// `φ = (d/(d−1))·(y − mean(y)·1) + α·1` with `α = (v(full) − v(empty))/d`.
/// The result is independent of `lambda`.
pub fn exact_regression(game: &dyn Game, lambda: f64) -> Result<ShapleyVector> {
    let d = game.d();
    if !(2..=REGRESSION_MAX_D).contains(&d) {
        return Err(Error::Capability(format!(
            "regression oracle supports 2 ≤ d ≤ {REGRESSION_MAX_D}, got {d}"
        )));
    }
    let v_empty = game.v_empty();
    let v_full = game.v_full();
    let kernel: Vec<f64> = (0..=d)
        .map(|h| {
            if (1..d).contains(&h) {
                kernel_weight(d, h)
            } else {
                0.0
            }
        })
        .collect();

    let n = 1u64 << d;
    let mut y = vec![0.0; d];
    let mut cursor = 1u64;
    while cursor < n - 1 {
        let end = (cursor + EVAL_CHUNK as u64).min(n - 1);
        let batch: Vec<Subset> = (cursor..end).map(|m| Subset::from_mask64(d, m)).collect();
        let values = game.evaluate_batch(&batch)?;
        for (mask, v) in (cursor..end).zip(values) {
            let h = mask.count_ones() as usize;
            let coef = kernel[h] * (v - v_empty - lambda * h as f64);
            let mut bits = mask;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                y[j] += coef;
                bits &= bits - 1;
            }
        }
        cursor = end;
    }

    let target = v_full - v_empty;
    let alpha = target / d as f64;
    let scale = d as f64 / (d as f64 - 1.0);
    let mean = y.iter().sum::<f64>() / d as f64;
    let phi: Vec<f64> = y.iter().map(|&yi| scale * (yi - mean) + alpha).collect();
    Ok(ShapleyVector::new(phi, target))
}

/// Dense normal-equation system for the weighted least-squares problem:
/// `M = Σ_S k(|S|)·z_S z_Sᵀ` (row-major `d×d`) and
/// `g = Σ_S k(|S|)·(v(S) − v(∅))·z_S`, summed over proper nonempty coalitions.
///
/// Feeding the pair to [`lagrangian_solve`] with target `v(full) − v(empty)`
/// reproduces [`exact_regression`].
pub fn kernel_gram_system(game: &dyn Game) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = game.d();
    if !(2..=REGRESSION_MAX_D).contains(&d) {
        return Err(Error::Capability(format!(
            "dense system supports 2 ≤ d ≤ {REGRESSION_MAX_D}, got {d}"
        )));
    }
    let v_empty = game.v_empty();
    let n = 1u64 << d;
    let mut m = vec![0.0; d * d];
    let mut g = vec![0.0; d];
    let mut members = Vec::with_capacity(d);
    let mut cursor = 1u64;
    while cursor < n - 1 {
        let end = (cursor + EVAL_CHUNK as u64).min(n - 1);
        let batch: Vec<Subset> = (cursor..end).map(|m| Subset::from_mask64(d, m)).collect();
        let values = game.evaluate_batch(&batch)?;
        for (mask, v) in (cursor..end).zip(values) {
            let h = mask.count_ones() as usize;
            let k = kernel_weight(d, h);
            members.clear();
            let mut bits = mask;
            while bits != 0 {
                members.push(bits.trailing_zeros() as usize);
                bits &= bits - 1;
            }
            for &i in &members {
                g[i] += k * (v - v_empty);
                for &j in &members {
                    m[i * d + j] += k;
                }
            }
        }
        cursor = end;
    }
    Ok((m, g))
}

/// Minimizer of `½φᵀMφ − gᵀφ` subject to `1ᵀφ = target`, through the
/// Moore–Penrose pseudo-inverse:
/// `φ = φᵘ − M⁺1·(1ᵀφᵘ − target)/(1ᵀM⁺1)` with `φᵘ = M⁺g`.
///
/// `m` is row-major `d×d` and must be symmetric. Eigenvalues with magnitude
/// below `1e−12·λ_max` are truncated; an error is returned when the
/// constraint direction is annihilated (`1ᵀM⁺1 ≈ 0`).
pub fn lagrangian_solve(m: &[f64], g: &[f64], target: f64) -> Result<Vec<f64>> {
    let d = g.len();
    if d == 0 || m.len() != d * d {
        return Err(Error::InvalidArgument(format!(
            "matrix has {} entries, expected {}×{}",
            m.len(),
            d,
            d
        )));
    }
    let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    for i in 0..d {
        for j in (i + 1)..d {
            if (m[i * d + j] - m[j * d + i]).abs() > 1e-8 * scale.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let mat = DMatrix::from_row_slice(d, d, m);
    let eigen = mat.symmetric_eigen();
    let lambda_max = eigen.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if lambda_max == 0.0 {
        return Err(Error::Singular("matrix is zero".into()));
    }
    let tol = 1e-12 * lambda_max;
    let pinv_apply = |v: &DVector<f64>| -> DVector<f64> {
        let mut coords = eigen.eigenvectors.transpose() * v;
        for (i, c) in coords.iter_mut().enumerate() {
            let ev = eigen.eigenvalues[i];
            *c = if ev.abs() > tol { *c / ev } else { 0.0 };
        }
        &eigen.eigenvectors * coords
    };
    let phi_u = pinv_apply(&DVector::from_column_slice(g));
    let w = pinv_apply(&DVector::from_element(d, 1.0));
    let s = w.sum();
    if s.abs() <= 1e-10 * (d as f64).sqrt() * w.norm() {
        return Err(Error::Singular(
            "constraint direction is annihilated by the pseudo-inverse (1ᵀM⁺1 ≈ 0)".into(),
        ));
    }
    let correction = (phi_u.sum() - target) / s;
    Ok((0..d).map(|i| phi_u[i] - w[i] * correction).collect())
}
