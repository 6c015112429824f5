//! Value functions `v : 2^[d] → ℝ` and their concrete implementations.
//!
//! Games are evaluated strictly in batches so expensive models (notably
//! subprocess-backed ones) can amortize round trips. Every game memoizes
//! `v(∅)` and `v([d])` at construction; both are needed on every estimation
//! path.

mod adversarial;
mod external;
mod masked;
mod tabular;
pub mod wire;

pub use adversarial::AdversarialGame;
pub use external::{ExternalGame, ExternalOptions};
pub use masked::MaskedGame;
pub use tabular::TabularGame;

use crate::error::{Error, Result};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;

/// Default number of subsets per evaluation request.
pub const DEFAULT_BATCH_SIZE: usize = 4096;

/// A coalition of players encoded as a fixed-width bit set over `d` positions.
///
/// Stored as `⌈d/64⌉` packed words with a cached population count, supporting
/// dimensions in the thousands without per-operation allocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subset {
    d: u32,
    size: u32,
    words: Vec<u64>,
}

impl Subset {
    /// The empty coalition.
    pub fn empty(d: usize) -> Self {
        Subset {
            d: d as u32,
            size: 0,
            words: vec![0u64; d.div_ceil(64)],
        }
    }

    /// The grand coalition `[d]`.
    pub fn full(d: usize) -> Self {
        let mut s = Subset::empty(d);
        for w in 0..s.words.len() {
            s.words[w] = !0u64;
        }
        s.truncate_tail();
        s.size = d as u32;
        s
    }

    /// Builds a coalition from 0-based member indices.
    ///
    /// # Panics
    /// Panics when an index is out of range.
    pub fn from_members(d: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Subset::empty(d);
        for i in members {
            s.insert(i);
        }
        s
    }

    /// Builds a coalition from a bitmask; requires `d ≤ 64`.
    ///
    /// # Panics
    /// Panics when `d > 64` or the mask has bits outside `[0, d)`.
    pub fn from_mask64(d: usize, mask: u64) -> Self {
        assert!(d <= 64, "from_mask64 requires d ≤ 64");
        assert!(
            d == 64 || mask < (1u64 << d),
            "mask {mask:#x} has bits outside d = {d}"
        );
        Subset {
            d: d as u32,
            size: mask.count_ones(),
            words: vec![mask],
        }
    }

    /// The bitmask for `d ≤ 64` games, or `None` beyond that width.
    pub fn to_mask64(&self) -> Option<u64> {
        if self.d <= 64 {
            Some(self.words[0])
        } else {
            None
        }
    }

    pub fn d(&self) -> usize {
        self.d as usize
    }

    /// Cached population count.
    pub fn size(&self) -> usize {
        self.size as usize
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.d as usize);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Adds a member; no-op when already present.
    ///
    /// # Panics
    /// Panics when `i ≥ d`.
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.d as usize, "player {i} out of range for d = {}", self.d);
        let w = &mut self.words[i / 64];
        let bit = 1u64 << (i % 64);
        if *w & bit == 0 {
            *w |= bit;
            self.size += 1;
        }
    }

    /// The complementary coalition `[d] \ S`.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let mut out = Subset {
            d: self.d,
            size: self.d - self.size,
            words: std::mem::take(&mut words),
        };
        out.truncate_tail();
        out
    }

    /// Iterates members in ascending order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    /// Raw packed words, least-significant player first.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Little-endian byte encoding of exactly `⌈d/8⌉` bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let nbytes = (self.d as usize).div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        'outer: for w in &self.words {
            for b in w.to_le_bytes() {
                if out.len() == nbytes {
                    break 'outer;
                }
                out.push(b);
            }
        }
        out
    }

    /// Decodes the little-endian byte encoding produced by
    /// [`Subset::to_le_bytes`]; rejects trailing bits beyond `d`.
    pub fn from_le_bytes(d: usize, bytes: &[u8]) -> Result<Self> {
        let nbytes = d.div_ceil(8);
        if bytes.len() != nbytes {
            return Err(Error::Parse(format!(
                "bitmask has {} bytes, expected {nbytes} for d = {d}",
                bytes.len()
            )));
        }
        let mut words = vec![0u64; d.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let mut s = Subset {
            d: d as u32,
            size: 0,
            words,
        };
        let with_tail: u32 = s.words.iter().map(|w| w.count_ones()).sum();
        s.truncate_tail();
        let size: u32 = s.words.iter().map(|w| w.count_ones()).sum();
        if size != with_tail {
            return Err(Error::Parse(format!(
                "bitmask has bits set beyond player {d}"
            )));
        }
        s.size = size;
        Ok(s)
    }

    /// Standard base64 of the little-endian byte encoding.
    pub fn to_base64(&self) -> String {
        BASE64.encode(self.to_le_bytes())
    }

    /// Decodes [`Subset::to_base64`] output.
    pub fn from_base64(d: usize, text: &str) -> Result<Self> {
        let bytes = BASE64
            .decode(text.trim())
            .map_err(|e| Error::Parse(format!("invalid base64 bitmask: {e}")))?;
        Subset::from_le_bytes(d, &bytes)
    }

    fn truncate_tail(&mut self) {
        let d = self.d as usize;
        let rem = d % 64;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
    }
}

/// The batched value-function contract.
///
/// Implementations must be deterministic: identical subset lists yield
/// identical value lists. `v(∅)` and `v([d])` are computed once at
/// construction and exposed without further evaluation.
pub trait Game: Send + Sync {
    /// Number of players.
    fn d(&self) -> usize;

    /// Evaluates `v` on each coalition, in order.
    fn evaluate_batch(&self, subsets: &[Subset]) -> Result<Vec<f64>>;

    /// Memoized `v(∅)`.
    fn v_empty(&self) -> f64;

    /// Memoized `v([d])`.
    fn v_full(&self) -> f64;

    /// Whether concurrent `evaluate_batch` calls are allowed. Single-threaded
    /// games (one subprocess pipe) return `false` and callers serialize.
    fn concurrent(&self) -> bool {
        true
    }

    /// Exact attributions when the game admits a closed form, as anonymous
    /// games do; `None` otherwise.
    fn exact_shapley(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Renders a subset for error messages.
pub(crate) fn subset_label(s: &Subset) -> String {
    format!("b64:{}", s.to_base64())
}

/// Checks one evaluated value, attaching the offending subset on failure.
pub(crate) fn require_finite(value: f64, subset: &Subset) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::GameEval {
            subset: subset_label(subset),
            message: format!("non-finite value {value}"),
        })
    }
}
