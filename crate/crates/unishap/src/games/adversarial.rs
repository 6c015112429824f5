//! An anonymous game whose value depends only on coalition size, with a
//! quadratic plateau at both ends of the size range.
//!
//! With query `1` and baseline `0` the induced value function is
//! `v(S) = g(|S|)` where `g(x) = ξ(x/d)² + χx` on `[1, n] ∪ [d−n, d−1]` and
//! `g(x) = χx` elsewhere, so `v(∅) = 0` and `v([d]) = χd`. Because the game is
//! anonymous its exact attributions are `χ` for every player, while the
//! residual the estimators must resolve concentrates on a handful of extreme
//! coalition sizes. That makes the game a worst case separating sampling
//! schemes, and its error diagnostics have closed forms.

use super::{Game, Subset};
use crate::error::{Error, Result};

/// Anonymous plateau game; see the module docs.
#[derive(Debug, Clone)]
pub struct AdversarialGame {
    d: usize,
    n: usize,
    xi: f64,
    chi: f64,
    eps0: f64,
}

impl AdversarialGame {
    /// Validates `1 ≤ n < d/2` and `eps0 ∈ (0, 1)`.
    ///
    /// `eps0` parameterizes the per-coordinate threshold of the underlying
    /// model; under the canonical query/baseline every value in `(0, 1)`
    /// induces the same game, so it only participates in validation.
    pub fn new(d: usize, n: usize, xi: f64, chi: f64, eps0: f64) -> Result<Self> {
        if n == 0 || 2 * n >= d {
            return Err(Error::InvalidArgument(format!(
                "plateau width n = {n} must satisfy 1 ≤ n < d/2 (d = {d})"
            )));
        }
        if !(0.0..1.0).contains(&eps0) || eps0 == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "eps0 = {eps0} must lie strictly inside (0, 1)"
            )));
        }
        if !xi.is_finite() || !chi.is_finite() {
            return Err(Error::InvalidArgument(
                "xi and chi must be finite".into(),
            ));
        }
        Ok(AdversarialGame { d, n, xi, chi, eps0 })
    }

    /// `g(h)`: the value of any coalition of size `h`.
    pub fn size_value(&self, h: usize) -> f64 {
        let d = self.d;
        let x = h as f64;
        let linear = self.chi * x;
        let on_plateau = (1..=self.n).contains(&h) || (d - self.n..d).contains(&h);
        if on_plateau {
            self.xi * (x / d as f64).powi(2) + linear
        } else {
            linear
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }
}

impl Game for AdversarialGame {
    fn d(&self) -> usize {
        self.d
    }

    fn evaluate_batch(&self, subsets: &[Subset]) -> Result<Vec<f64>> {
        Ok(subsets.iter().map(|s| self.size_value(s.size())).collect())
    }

    fn v_empty(&self) -> f64 {
        0.0
    }

    fn v_full(&self) -> f64 {
        self.chi * self.d as f64
    }

    fn exact_shapley(&self) -> Option<Vec<f64>> {
        // Anonymous games split v([d]) − v(∅) evenly.
        Some(vec![self.chi; self.d])
    }
}
