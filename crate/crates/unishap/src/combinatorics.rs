//! Exact and overflow-safe combinatorial primitives.
//!
//! Everything downstream (distributions, estimators, diagnostics) funnels its
//! binomial coefficients, kernel weights, and harmonic sums through this
//! module. Small arguments take exact integer paths; large arguments switch to
//! log-gamma arithmetic so quantities like `C(3072, 1536)` never exist as raw
//! floats.

use statrs::function::gamma::ln_gamma;

/// Largest `d` for which every `C(d, h)` fits in a `u128`.
const EXACT_BINOMIAL_MAX_D: usize = 128;

/// Exact binomial coefficient, or `None` when it cannot be represented.
pub fn binomial_exact(d: usize, h: usize) -> Option<u128> {
    if h > d {
        return Some(0);
    }
    if d > EXACT_BINOMIAL_MAX_D {
        return None;
    }
    let h = h.min(d - h) as u128;
    let d = d as u128;
    let mut c: u128 = 1;
    for i in 1..=h {
        // c * (d − h + i) stays integral after dividing by i at every step.
        c = c.checked_mul(d - h + i)? / i;
    }
    Some(c)
}

/// Natural logarithm of `C(d, h)`.
///
/// Takes the exact integer path for `d ≤ 128` and log-gamma otherwise.
///
/// # Panics
/// Panics when `h > d`.
pub fn log_binomial(d: usize, h: usize) -> f64 {
    assert!(h <= d, "log_binomial: h = {h} exceeds d = {d}");
    let h = h.min(d - h);
    if let Some(c) = binomial_exact(d, h) {
        return (c as f64).ln();
    }
    ln_gamma(d as f64 + 1.0) - ln_gamma(h as f64 + 1.0) - ln_gamma((d - h) as f64 + 1.0)
}

/// Natural logarithm of `n!`, exact for `n ≤ 33` and log-gamma beyond.
pub fn log_factorial(n: usize) -> f64 {
    if n <= 33 {
        let mut f: u128 = 1;
        for i in 2..=n as u128 {
            f *= i;
        }
        (f as f64).ln()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Largest product `C(d,h)·h·(d−h)` still exactly representable in an `f64`.
const EXACT_F64_LIMIT: u128 = 1 << 53;

/// The weighted-least-squares kernel weight `(d−1) / (C(d,h)·h·(d−h))`.
///
/// Symmetric in `h ↔ d−h`. Computed exactly while the denominator fits in 53
/// bits, in log space beyond that.
///
/// # Panics
/// Panics unless `d ≥ 2` and `1 ≤ h ≤ d−1`.
pub fn kernel_weight(d: usize, h: usize) -> f64 {
    assert!(d >= 2, "kernel_weight: d = {d} must be at least 2");
    assert!(
        (1..d).contains(&h),
        "kernel_weight: h = {h} outside 1..={}",
        d - 1
    );
    let hd = (h as u128) * ((d - h) as u128);
    if let Some(c) = binomial_exact(d, h) {
        if let Some(denom) = c.checked_mul(hd) {
            if denom <= EXACT_F64_LIMIT {
                return (d as f64 - 1.0) / (denom as f64);
            }
        }
    }
    ((d as f64 - 1.0).ln() - log_binomial(d, h) - (hd as f64).ln()).exp()
}

/// `ln` of [`kernel_weight`], usable far past the underflow point of the
/// linear form (the weight itself drops below `f64` range near d ≈ 1000).
///
/// # Panics
/// Panics unless `d ≥ 2` and `1 ≤ h ≤ d−1`.
pub fn log_kernel_weight(d: usize, h: usize) -> f64 {
    assert!(d >= 2, "log_kernel_weight: d = {d} must be at least 2");
    assert!(
        (1..d).contains(&h),
        "log_kernel_weight: h = {h} outside 1..={}",
        d - 1
    );
    (d as f64 - 1.0).ln() - log_binomial(d, h) - ((h * (d - h)) as f64).ln()
}

/// Exact `C(d, h)` for any `d`, or `None` as soon as the value exceeds `cap`.
///
/// Unlike [`binomial_exact`] this has no dimension limit; the multiplicative
/// recurrence walks through exact intermediate binomials, so the first value
/// above `cap` aborts the loop after a handful of steps.
pub fn binomial_capped(d: usize, h: usize, cap: u64) -> Option<u64> {
    if h > d {
        return Some(0);
    }
    let h = h.min(d - h) as u128;
    let d = d as u128;
    let mut c: u128 = 1;
    for i in 1..=h {
        c = c * (d - h + i) / i;
        if c > cap as u128 {
            return None;
        }
    }
    Some(c as u64)
}

/// Squared row norm `1/C(d,h)` of a size-`h` row of the orthonormal system.
///
/// # Panics
/// Panics unless `1 ≤ h ≤ d−1`.
pub fn leverage_norm_sq(d: usize, h: usize) -> f64 {
    assert!(
        d >= 2 && (1..d).contains(&h),
        "leverage_norm_sq: h = {h} outside 1..={} (d = {d})",
        d.saturating_sub(1)
    );
    match binomial_exact(d, h) {
        Some(c) if c <= EXACT_F64_LIMIT => 1.0 / (c as f64),
        _ => (-log_binomial(d, h)).exp(),
    }
}

/// Harmonic number `H_n = Σ_{k=1}^n 1/k`, with `H_0 = 0`.
///
/// Uses compensated summation so values stay accurate for `n` in the
/// thousands.
pub fn harmonic(n: usize) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for k in 1..=n {
        let term = 1.0 / k as f64;
        let y = term - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// The rank-one coefficient `c_d = ((d−1)·H_{d−2} − (d−2)) / d` appearing in
/// the Gram matrix of the weighted regression system.
///
/// # Panics
/// Panics when `d < 2`.
pub fn c_d(d: usize) -> f64 {
    assert!(d >= 2, "c_d: d = {d} must be at least 2");
    ((d as f64 - 1.0) * harmonic(d - 2) - (d as f64 - 2.0)) / d as f64
}

/// A subset size class `h` together with a 1-based rank `l` inside the class.
///
/// The flat index `i = Σ_{j<h} C(d,j) + l` enumerates all nonempty proper
/// subsets: sizes ascending, and within a size class the subsets in ascending
/// bitmask order (colexicographic on the sorted member lists). Only meaningful
/// for `d ≤ 25`, where the flat index fits comfortably in a `u64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketIndex {
    pub h: usize,
    pub l: u64,
}

impl BucketIndex {
    /// Flat 1-based index over the `2^d − 2` nonempty proper subsets.
    ///
    /// # Panics
    /// Panics when `d > 25` or the fields are out of range.
    pub fn to_flat(self, d: usize) -> u64 {
        assert!(d <= 25, "BucketIndex is only materialized for d ≤ 25");
        assert!((1..d).contains(&self.h), "size {} outside 1..{d}", self.h);
        let class = binomial_exact(d, self.h).unwrap() as u64;
        assert!(
            (1..=class).contains(&self.l),
            "rank {} outside 1..={class}",
            self.l
        );
        let below: u64 = (1..self.h)
            .map(|j| binomial_exact(d, j).unwrap() as u64)
            .sum();
        below + self.l
    }

    /// Inverse of [`BucketIndex::to_flat`].
    ///
    /// # Panics
    /// Panics when `i` is outside `[1, 2^d − 2]` or `d > 25`.
    pub fn from_flat(d: usize, i: u64) -> Self {
        assert!(d <= 25, "BucketIndex is only materialized for d ≤ 25");
        assert!(i >= 1 && i <= (1u64 << d) - 2, "flat index {i} out of range");
        let mut rest = i;
        for h in 1..d {
            let class = binomial_exact(d, h).unwrap() as u64;
            if rest <= class {
                return BucketIndex { h, l: rest };
            }
            rest -= class;
        }
        unreachable!("flat index exhausted the size classes");
    }

    /// Rank of a subset (given as sorted 0-based member indices) within its
    /// size class, matching ascending-bitmask enumeration.
    pub fn rank_of_members(members: &[usize]) -> u64 {
        let mut r = 0u64;
        for (k, &a) in members.iter().enumerate() {
            r += binomial_exact(a, k + 1).unwrap_or(0) as u64;
        }
        r + 1
    }

    /// Members (sorted, 0-based) of the subset with this bucket index.
    pub fn members(self, d: usize) -> Vec<usize> {
        assert!(d <= 25, "BucketIndex is only materialized for d ≤ 25");
        let mut rest = self.l - 1;
        let mut out = vec![0usize; self.h];
        for k in (1..=self.h).rev() {
            // Largest a with C(a, k) ≤ rest selects the k-th biggest member.
            let mut a = k - 1;
            while binomial_exact(a + 1, k).unwrap() as u64 <= rest {
                a += 1;
            }
            rest -= binomial_exact(a, k).unwrap() as u64;
            out[k - 1] = a;
        }
        out
    }
}

/// The orthonormal basis of the hyperplane orthogonal to the all-ones vector,
/// realized as a single Householder reflector applied in `O(d)`.
///
/// `Q` is the first `d−1` columns of the reflector `H` that maps the last
/// coordinate axis onto `−1/√d`; consequently `QᵀQ = I`, `Qᵀ1 = 0`, and
/// `QQᵀy = y − mean(y)·1`.
#[derive(Debug, Clone)]
pub struct ImplicitQ {
    d: usize,
    w: Vec<f64>,
    beta: f64,
}

impl ImplicitQ {
    /// # Panics
    /// Panics when `d < 2`.
    pub fn new(d: usize) -> Self {
        assert!(d >= 2, "ImplicitQ: d = {d} must be at least 2");
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();
        let mut w = vec![inv_sqrt_d; d];
        // Reflect 1/√d onto the last axis; adding (not subtracting) the axis
        // vector keeps the pivot entry away from cancellation.
        w[d - 1] += 1.0;
        let norm_sq: f64 = w.iter().map(|x| x * x).sum();
        ImplicitQ {
            d,
            w,
            beta: 2.0 / norm_sq,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `Q x` for `x ∈ ℝ^{d−1}`, in `O(d)`.
    ///
    /// # Panics
    /// Panics on dimension mismatch.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d - 1, "ImplicitQ::apply: expected d−1 entries");
        let s: f64 = x.iter().zip(&self.w).map(|(a, b)| a * b).sum();
        let scale = self.beta * s;
        let mut y = Vec::with_capacity(self.d);
        for i in 0..self.d {
            let xi = if i < self.d - 1 { x[i] } else { 0.0 };
            y.push(xi - scale * self.w[i]);
        }
        y
    }

    /// `Qᵀ y` for `y ∈ ℝ^d`, in `O(d)`.
    ///
    /// # Panics
    /// Panics on dimension mismatch.
    pub fn transpose_apply(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.d, "ImplicitQ::transpose_apply: expected d entries");
        let s: f64 = y.iter().zip(&self.w).map(|(a, b)| a * b).sum();
        let scale = self.beta * s;
        y.iter()
            .zip(&self.w)
            .take(self.d - 1)
            .map(|(yi, wi)| yi - scale * wi)
            .collect()
    }

    /// `Qᵀ z_S` for an indicator vector given by its support, in
    /// `O(|support| + d)` without materializing `z_S`.
    pub fn transpose_apply_indicator(&self, support: impl IntoIterator<Item = usize>) -> Vec<f64> {
        let mut s = 0.0f64;
        let mut dense = vec![0.0f64; self.d];
        for i in support {
            dense[i] = 1.0;
            s += self.w[i];
        }
        let scale = self.beta * s;
        dense
            .iter()
            .zip(&self.w)
            .take(self.d - 1)
            .map(|(zi, wi)| zi - scale * wi)
            .collect()
    }

    /// Applies the underlying reflector `H` to a vector of length `d` in
    /// place. `H` is symmetric and involutive; `Q` is its first `d−1` columns.
    pub fn reflect_in_place(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.d, "ImplicitQ::reflect_in_place: expected d entries");
        let s: f64 = y.iter().zip(&self.w).map(|(a, b)| a * b).sum();
        let scale = self.beta * s;
        for (yi, wi) in y.iter_mut().zip(&self.w) {
            *yi -= scale * wi;
        }
    }
}
