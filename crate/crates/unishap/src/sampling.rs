//! Coalition-size sampling distributions and randomized sketch construction.
//!
//! [`BucketDistribution`] interpolates between leverage-score sampling
//! (`τ = 0`) and kernel-weight sampling (`τ = 1`) over coalition sizes.
//! [`sample_with_replacement`] and [`sample_without_replacement`] turn a
//! distribution into a weighted row [`Sketch`], optionally emitting each
//! coalition together with its complement ("paired" mode).
//!
//! Weights are carried in log space: for large `d` the per-row weight
//! `1/(m·p_S)` or `1/q_S` exceeds `f64` range even though every quantity the
//! estimators derive from it stays moderate.

use crate::combinatorics::{binomial_capped, log_binomial};
use crate::error::{Error, Result};
use crate::games::Subset;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Poisson};
use std::collections::HashSet;
use std::f64::consts::LN_2;
use std::io::Write;

/// Default largest population for which per-bucket counts are drawn from the
/// exact Binomial; larger populations use the Poisson approximation.
pub const DEFAULT_MAXVAL: f64 = 1e10;

/// Population cap for exact unit counting; beyond it only log-counts exist.
const UNIT_CAP: u64 = u64::MAX >> 1;

/// Bucket enumeration limit for the enumerate-and-shuffle path of
/// [`sample_distinct_subsets`].
const ENUMERATE_LIMIT: u64 = 1 << 20;

/// How sketch rows are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    WithReplacement,
    WithoutReplacement,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::WithReplacement => "with_replacement",
            Strategy::WithoutReplacement => "without_replacement",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "with_replacement" => Ok(Strategy::WithReplacement),
            "without_replacement" => Ok(Strategy::WithoutReplacement),
            other => Err(Error::Parse(format!(
                "unknown strategy {other:?}; expected with_replacement or without_replacement"
            ))),
        }
    }
}

/// Probability family over proper nonempty coalitions, uniform within each
/// size bucket:
///
/// `p_{h,·} = (1/C(d,h)) · (1/(h(d−h)))^τ / N_τ` with
/// `N_τ = Σ_{j=1}^{d−1} (1/(j(d−j)))^τ`.
///
/// `τ = 0` gives leverage scores `1/((d−1)C(d,h))`, `τ = 1` kernel weights,
/// `τ = 1/2` their geometric mean. All probabilities live in log space.
#[derive(Debug, Clone)]
pub struct BucketDistribution {
    d: usize,
    tau: f64,
    log_bucket_prob: Vec<f64>,
    log_norm: f64,
}

impl BucketDistribution {
    pub fn new(d: usize, tau: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "bucket distribution needs d ≥ 2, got {d}"
            )));
        }
        if !tau.is_finite() || !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!(
                "interpolation parameter must lie in [0, 1], got {tau}"
            )));
        }
        let log_terms: Vec<f64> = (1..d)
            .map(|h| -tau * ((h * (d - h)) as f64).ln())
            .collect();
        let peak = log_terms.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let mut sum = 0.0;
        let mut carry = 0.0;
        for &t in &log_terms {
            let term = (t - peak).exp() - carry;
            let next = sum + term;
            carry = (next - sum) - term;
            sum = next;
        }
        let log_norm = peak + sum.ln();
        let log_bucket_prob = log_terms.iter().map(|t| t - log_norm).collect();
        Ok(BucketDistribution {
            d,
            tau,
            log_bucket_prob,
            log_norm,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `ln N_τ` where the bucket mass is `(1/(h(d−h)))^τ / N_τ`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    /// `ln P(h)`, the total mass of size-`h` coalitions, `1 ≤ h ≤ d−1`.
    pub fn log_bucket_prob(&self, h: usize) -> f64 {
        assert!(
            (1..self.d).contains(&h),
            "bucket size {h} outside 1..={}",
            self.d - 1
        );
        self.log_bucket_prob[h - 1]
    }

    pub fn bucket_prob(&self, h: usize) -> f64 {
        self.log_bucket_prob(h).exp()
    }

    /// `ln p_{h,·}`, the probability of one particular size-`h` coalition.
    pub fn log_subset_prob(&self, h: usize) -> f64 {
        self.log_bucket_prob(h) - log_binomial(self.d, h)
    }

    pub fn subset_prob(&self, h: usize) -> f64 {
        self.log_subset_prob(h).exp()
    }
}

/// One sampling bucket after the optional complement fold: the units are the
/// coalitions drawable in it (all of size `h`, restricted to player-0
/// "canonical" members for the self-complementary middle size).
#[derive(Debug, Clone)]
struct UnitBucket {
    h: usize,
    canonical: bool,
    exact_units: Option<u64>,
    ln_units: f64,
    /// Draw/inclusion probability of a single unit at scale 1.
    ln_unit_prob: f64,
    /// Total bucket mass `units · unit_prob`.
    mass: f64,
}

fn unit_buckets(dist: &BucketDistribution, paired: bool) -> Vec<UnitBucket> {
    let d = dist.d();
    if paired {
        // Sizes fold onto 1..=d/2; each unit stands for a complement pair, so
        // its probability is 2p_S regardless of whether the size is doubled
        // (h < d/2) or restricted to canonical members (h = d/2).
        (1..=d / 2)
            .map(|h| {
                let middle = 2 * h == d;
                let exact = binomial_capped(d, h, UNIT_CAP).map(|c| if middle { c / 2 } else { c });
                let ln_c = log_binomial(d, h);
                UnitBucket {
                    h,
                    canonical: middle,
                    exact_units: exact,
                    ln_units: if middle { ln_c - LN_2 } else { ln_c },
                    ln_unit_prob: LN_2 + dist.log_subset_prob(h),
                    mass: if middle {
                        dist.bucket_prob(h)
                    } else {
                        2.0 * dist.bucket_prob(h)
                    },
                }
            })
            .collect()
    } else {
        (1..d)
            .map(|h| UnitBucket {
                h,
                canonical: false,
                exact_units: binomial_capped(d, h, UNIT_CAP),
                ln_units: log_binomial(d, h),
                ln_unit_prob: dist.log_subset_prob(h),
                mass: dist.bucket_prob(h),
            })
            .collect()
    }
}

/// One weighted sketch row. The weight is stored as its natural logarithm;
/// [`SketchRow::weight`] can overflow to infinity for very large `d` while
/// `log_weight` stays finite.
#[derive(Debug, Clone)]
pub struct SketchRow {
    pub subset: Subset,
    pub log_weight: f64,
}

impl SketchRow {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Weighted coalition rows produced by one of the two sampling strategies.
#[derive(Debug, Clone)]
pub struct Sketch {
    rows: Vec<SketchRow>,
    strategy: Strategy,
    paired: bool,
    m_nominal: usize,
    seed: u64,
}

impl Sketch {
    #[cfg(test)]
    pub(crate) fn from_rows(
        rows: Vec<SketchRow>,
        strategy: Strategy,
        paired: bool,
        m_nominal: usize,
        seed: u64,
    ) -> Sketch {
        Sketch {
            rows,
            strategy,
            paired,
            m_nominal,
            seed,
        }
    }

    pub fn rows(&self) -> &[SketchRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn paired(&self) -> bool {
        self.paired
    }

    /// The requested row budget `m`; the realized count can differ for
    /// without-replacement draws.
    pub fn m_nominal(&self) -> usize {
        self.m_nominal
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Audit serialization, one `mask_base64,weight` line per row. Weights
    /// beyond `f64` range are rendered with an extended decimal exponent.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mask_base64,weight")?;
        for row in &self.rows {
            writeln!(out, "{},{}", row.subset.to_base64(), format_weight(row.log_weight))?;
        }
        Ok(())
    }
}

fn format_weight(log_weight: f64) -> String {
    let w = log_weight.exp();
    if w.is_finite() {
        format!("{w}")
    } else {
        let e10 = log_weight / std::f64::consts::LN_10;
        let floor = e10.floor();
        format!("{:.6}e{}", 10f64.powf(e10 - floor), floor as i64)
    }
}

fn bucket_rng(seed: u64, stream: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Uniformly random size-`h` subset of `[d]` via Floyd's algorithm.
fn random_subset(d: usize, h: usize, rng: &mut impl Rng) -> Subset {
    let mut subset = Subset::empty(d);
    for j in (d - h)..d {
        let t = rng.random_range(0..=j);
        if subset.contains(t) {
            subset.insert(j);
        } else {
            subset.insert(t);
        }
    }
    subset
}

fn lift_canonical(d: usize, inner: Subset) -> Subset {
    Subset::from_members(
        d,
        std::iter::once(0).chain(inner.members().map(|i| i + 1)),
    )
}

/// Uniformly random size-`h` subset containing player 0.
fn random_canonical(d: usize, h: usize, rng: &mut impl Rng) -> Subset {
    lift_canonical(d, random_subset(d - 1, h - 1, rng))
}

fn enumerate_size_h(d: usize, h: usize, total: usize) -> Vec<Subset> {
    let mut out = Vec::with_capacity(total);
    if h == 0 {
        out.push(Subset::empty(d));
        return out;
    }
    let mut idx: Vec<usize> = (0..h).collect();
    loop {
        out.push(Subset::from_members(d, idx.iter().copied()));
        let mut i = h;
        while i > 0 && idx[i - 1] == d - h + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..h {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `count` distinct uniformly random size-`h` subsets of `[d]`.
///
/// Dense requests over a small bucket (`count > C(d,h)/2` and
/// `C(d,h) ≤ 2^20`) enumerate the bucket and partially shuffle it; everything
/// else draws Floyd samples and rejects duplicates against a hash set of
/// packed bitmasks.
pub fn sample_distinct_subsets(
    d: usize,
    h: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Subset>> {
    if d == 0 || h > d {
        return Err(Error::InvalidArgument(format!(
            "subset size {h} outside 0..={d}"
        )));
    }
    let total = binomial_capped(d, h, UNIT_CAP);
    if let Some(t) = total {
        if count as u64 > t {
            return Err(Error::InvalidArgument(format!(
                "requested {count} distinct subsets from a bucket of {t}"
            )));
        }
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    match total {
        Some(t) if t <= ENUMERATE_LIMIT && 2 * count as u64 > t => {
            let mut all = enumerate_size_h(d, h, t as usize);
            for i in 0..count {
                let j = rng.random_range(i..all.len());
                all.swap(i, j);
            }
            all.truncate(count);
            Ok(all)
        }
        _ => {
            let mut seen: HashSet<Subset> = HashSet::with_capacity(count * 2);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let s = random_subset(d, h, rng);
                if seen.insert(s.clone()) {
                    out.push(s);
                }
            }
            Ok(out)
        }
    }
}

fn sample_distinct_canonical(
    d: usize,
    h: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Subset>> {
    let inner = sample_distinct_subsets(d - 1, h - 1, count, rng)?;
    Ok(inner.into_iter().map(|s| lift_canonical(d, s)).collect())
}

fn poisson_draw(rate: f64, rng: &mut impl Rng) -> Result<u64> {
    if rate == 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(rate)
        .map_err(|e| Error::InvalidArgument(format!("Poisson rate {rate}: {e}")))?;
    Ok(poisson.sample(rng) as u64)
}

/// Number of successes among `n` independent trials with probability `p`:
/// exact `Binomial(n, p)` while `n ≤ maxval`, `Poisson(n·p)` beyond.
pub fn count_draw(n: u64, p: f64, maxval: f64, rng: &mut impl Rng) -> Result<u64> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "inclusion probability must lie in [0, 1], got {p}"
        )));
    }
    if !maxval.is_finite() || maxval < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "Poisson switchover must be a finite value ≥ 1, got {maxval}"
        )));
    }
    if n as f64 <= maxval {
        let binomial = Binomial::new(n, p)
            .map_err(|e| Error::InvalidArgument(format!("Binomial({n}, {p}): {e}")))?;
        Ok(binomial.sample(rng))
    } else {
        poisson_draw(n as f64 * p, rng)
    }
}

fn solve_scale(buckets: &[UnitBucket], target: f64) -> Result<f64> {
    if target < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "sample target must be at least 1, got {target}"
        )));
    }
    let min_ln_unit_prob = buckets
        .iter()
        .map(|b| b.ln_unit_prob)
        .fold(f64::INFINITY, f64::min);

    // With every unit count exactly known, full saturation has a closed form:
    // nudge α just past the knee so min(1, α·p) is exactly 1 everywhere.
    let exact_total: Option<u128> = buckets
        .iter()
        .try_fold(0u128, |a, b| b.exact_units.map(|u| a + u as u128));
    if let Some(total) = exact_total {
        if target > total as f64 {
            return Err(Error::Capability(format!(
                "requested {target} units but only {total} exist"
            )));
        }
        if target == total as f64 {
            return Ok((-min_ln_unit_prob).exp() * (1.0 + 1e-9));
        }
    }

    let objective = |alpha: f64| -> f64 {
        let mut sum = 0.0;
        for b in buckets {
            let linear = alpha * b.mass;
            if linear.ln() >= b.ln_units {
                if b.ln_units > 690.0 {
                    return f64::INFINITY;
                }
                sum += b.ln_units.exp();
            } else {
                sum += linear;
            }
        }
        sum
    };

    let ln_hi = target.ln() - min_ln_unit_prob;
    let mut hi = if ln_hi > 690.0 { 1e300 } else { ln_hi.exp().max(target) };
    let mut guard = 0;
    while objective(hi) < target {
        hi *= 2.0;
        guard += 1;
        if guard > 64 || !hi.is_finite() {
            return Err(Error::InvalidArgument(
                "failed to bracket the inclusion scale".into(),
            ));
        }
    }
    let mut lo = 0.0;
    let mut mid = hi;
    for _ in 0..4000 {
        mid = 0.5 * (lo + hi);
        let f = objective(mid);
        if (f - target).abs() <= 1e-9 * target {
            return Ok(mid);
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(mid)
}

/// Caps a draw target at the population size, where it saturates every
/// bucket. Populations above `2^63` cannot be exceeded by any `usize`
/// budget and pass through unchanged.
fn saturation_target(d: usize, paired: bool, target: usize) -> usize {
    if d <= 63 {
        let total = if paired {
            (1u64 << (d - 1)) - 1
        } else {
            (1u64 << d) - 2
        };
        if target as u64 > total {
            return total as usize;
        }
    }
    target
}

/// The inclusion scale α solving
/// `Σ_i min(units_i, α·P_folded(i)) = m_pairs` over the folded buckets, to
/// relative 1e−9 on the objective. Targets at or beyond the pair
/// population clamp to full saturation.
pub fn solve_alpha(dist: &BucketDistribution, m_pairs: usize) -> Result<f64> {
    if m_pairs == 0 {
        return Err(Error::InvalidArgument("m_pairs must be at least 1".into()));
    }
    let target = saturation_target(dist.d(), true, m_pairs);
    solve_scale(&unit_buckets(dist, true), target as f64)
}

/// Draws `m` rows (paired: `m/2` complement pairs) i.i.d. from the
/// distribution and weights each row `1/(m·p_S)`.
///
/// Row order is canonical: bucket-major by ascending size, draw order within
/// each bucket, complement directly after its mate in paired mode.
pub fn sample_with_replacement(
    dist: &BucketDistribution,
    m: usize,
    seed: u64,
    paired: bool,
) -> Result<Sketch> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample size must be at least 2, got {m}"
        )));
    }
    if paired && m % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "paired sampling needs an even sample size, got {m}"
        )));
    }
    let d = dist.d();
    let buckets = unit_buckets(dist, paired);
    let draws = if paired { m / 2 } else { m };

    let mut assign_rng = bucket_rng(seed, 0);
    let weights: Vec<f64> = buckets.iter().map(|b| b.mass).collect();
    let assignment = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidArgument(format!("bucket masses: {e}")))?;
    let mut counts = vec![0usize; buckets.len()];
    for _ in 0..draws {
        counts[assignment.sample(&mut assign_rng)] += 1;
    }

    let ln_m = (m as f64).ln();
    let mut rows = Vec::with_capacity(m);
    for (bucket, &n) in buckets.iter().zip(&counts) {
        if n == 0 {
            continue;
        }
        let mut rng = bucket_rng(seed, bucket.h);
        let log_weight = -(ln_m + dist.log_subset_prob(bucket.h));
        for _ in 0..n {
            let subset = if bucket.canonical {
                random_canonical(d, bucket.h, &mut rng)
            } else {
                random_subset(d, bucket.h, &mut rng)
            };
            if paired {
                let complement = subset.complement();
                rows.push(SketchRow { subset, log_weight });
                rows.push(SketchRow {
                    subset: complement,
                    log_weight,
                });
            } else {
                rows.push(SketchRow { subset, log_weight });
            }
        }
    }
    Ok(Sketch {
        rows,
        strategy: Strategy::WithReplacement,
        paired,
        m_nominal: m,
        seed,
    })
}

/// Includes each coalition independently with probability
/// `q_S = min(1, α·p_folded,S)` and weights it `1/q_S`, with α solved so the
/// expected draw count matches the budget (`m/2` pairs when paired, `m` rows
/// otherwise). Budgets at or beyond the population saturate: every proper
/// coalition appears exactly once with unit weight.
///
/// Per-bucket counts come from the exact Binomial while the bucket population
/// is at most `maxval` ([`DEFAULT_MAXVAL`] by default), and from
/// `Poisson(α·P_folded)` beyond.
pub fn sample_without_replacement(
    dist: &BucketDistribution,
    m: usize,
    seed: u64,
    paired: bool,
    maxval: f64,
) -> Result<Sketch> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample size must be at least 2, got {m}"
        )));
    }
    if !maxval.is_finite() || maxval < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "Poisson switchover must be a finite value ≥ 1, got {maxval}"
        )));
    }
    let d = dist.d();
    let target = saturation_target(d, paired, if paired { m / 2 } else { m });
    let buckets = unit_buckets(dist, paired);
    let alpha = solve_scale(&buckets, target as f64)?;
    let ln_alpha = alpha.ln();

    let mut rows = Vec::with_capacity(m + m / 2);
    for bucket in &buckets {
        let mut rng = bucket_rng(seed, bucket.h);
        let ln_q = (ln_alpha + bucket.ln_unit_prob).min(0.0);
        let count = match bucket.exact_units {
            Some(n) => count_draw(n, ln_q.exp(), maxval, &mut rng)?.min(n),
            None => poisson_draw(alpha * bucket.mass, &mut rng)?,
        } as usize;
        if count == 0 {
            continue;
        }
        let subsets = if bucket.canonical {
            sample_distinct_canonical(d, bucket.h, count, &mut rng)?
        } else {
            sample_distinct_subsets(d, bucket.h, count, &mut rng)?
        };
        let log_weight = -ln_q;
        for subset in subsets {
            if paired {
                let complement = subset.complement();
                rows.push(SketchRow { subset, log_weight });
                rows.push(SketchRow {
                    subset: complement,
                    log_weight,
                });
            } else {
                rows.push(SketchRow { subset, log_weight });
            }
        }
    }
    Ok(Sketch {
        rows,
        strategy: Strategy::WithoutReplacement,
        paired,
        m_nominal: m,
        seed,
    })
}
