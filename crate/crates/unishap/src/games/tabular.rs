//! Games backed by an explicit table over all `2^d` coalitions.

use super::{require_finite, Game, Subset};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::io::BufRead;
use std::path::Path;

/// Maximum dimension for which a full table is allowed.
pub const TABULAR_MAX_D: usize = 25;

/// A game defined by `v(S) = table[mask(S)]`.
#[derive(Debug, Clone)]
pub struct TabularGame {
    d: usize,
    values: Vec<f64>,
}

impl TabularGame {
    /// Wraps a table of `2^d` finite values indexed by subset bitmask.
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 || d > TABULAR_MAX_D {
            return Err(Error::Capability(format!(
                "tabular games support 1 ≤ d ≤ {TABULAR_MAX_D}, got {d}"
            )));
        }
        if values.len() != 1usize << d {
            return Err(Error::InvalidArgument(format!(
                "table has {} entries, expected 2^{d} = {}",
                values.len(),
                1usize << d
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "table entry for mask {bad} is not finite"
            )));
        }
        Ok(TabularGame { d, values })
    }

    /// Builds the table by evaluating `f` on every bitmask.
    pub fn from_fn(d: usize, f: impl FnMut(u64) -> f64) -> Result<Self> {
        if d == 0 || d > TABULAR_MAX_D {
            return Err(Error::Capability(format!(
                "tabular games support 1 ≤ d ≤ {TABULAR_MAX_D}, got {d}"
            )));
        }
        let values = (0..1u64 << d).map(f).collect();
        TabularGame::new(d, values)
    }

    /// A reproducible random game with values i.i.d. uniform on `[−1, 1]`.
    pub fn random(d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        TabularGame::from_fn(d, |_| rng.random_range(-1.0..1.0))
    }

    /// Loads the `mask,value` CSV format; every mask in `[0, 2^d)` must
    /// appear exactly once, and `d` is inferred from the row count.
    pub fn from_csv_reader(reader: impl BufRead) -> Result<Self> {
        let mut rows: Vec<(u64, f64)> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                if line != "mask,value" {
                    return Err(Error::Parse(format!(
                        "expected header 'mask,value', found '{line}'"
                    )));
                }
                continue;
            }
            let (mask, value) = line.split_once(',').ok_or_else(|| {
                Error::Parse(format!("line {}: expected 'mask,value'", lineno + 1))
            })?;
            let mask: u64 = mask.trim().parse().map_err(|e| {
                Error::Parse(format!("line {}: bad mask: {e}", lineno + 1))
            })?;
            let value: f64 = value.trim().parse().map_err(|e| {
                Error::Parse(format!("line {}: bad value: {e}", lineno + 1))
            })?;
            rows.push((mask, value));
        }
        let len = rows.len();
        if len < 2 || len.count_ones() != 1 {
            return Err(Error::Parse(format!(
                "table has {len} rows; a complete game needs a power of two"
            )));
        }
        let d = len.trailing_zeros() as usize;
        let mut values = vec![f64::NAN; len];
        let mut seen = vec![false; len];
        for (mask, value) in rows {
            let idx = mask as usize;
            if idx >= len {
                return Err(Error::Parse(format!(
                    "mask {mask} outside [0, 2^{d}) for the inferred dimension"
                )));
            }
            if seen[idx] {
                return Err(Error::Parse(format!("mask {mask} appears twice")));
            }
            seen[idx] = true;
            values[idx] = value;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Parse(format!("mask {missing} is missing")));
        }
        TabularGame::new(d, values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        TabularGame::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Direct value lookup by bitmask.
    pub fn value(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }
}

impl Game for TabularGame {
    fn d(&self) -> usize {
        self.d
    }

    fn evaluate_batch(&self, subsets: &[Subset]) -> Result<Vec<f64>> {
        subsets
            .iter()
            .map(|s| {
                let mask = s.to_mask64().expect("tabular games keep d ≤ 25");
                require_finite(self.values[mask as usize], s)
            })
            .collect()
    }

    fn v_empty(&self) -> f64 {
        self.values[0]
    }

    fn v_full(&self) -> f64 {
        self.values[(1usize << self.d) - 1]
    }
}
