//! Model explanation games: mask a model's input between a query point and a
//! baseline.

use super::{require_finite, Game, Subset};
use crate::error::{Error, Result};

type Model = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `v(S) = model(x)` where `x_j = query_j` for `j ∈ S` and `baseline_j`
/// otherwise.
pub struct MaskedGame {
    d: usize,
    model: Model,
    query: Vec<f64>,
    baseline: Vec<f64>,
    v0: f64,
    v1: f64,
}

impl MaskedGame {
    /// Wraps a model; evaluates and checks `v(∅)` and `v([d])` up front.
    pub fn new(
        model: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        query: Vec<f64>,
        baseline: Vec<f64>,
    ) -> Result<Self> {
        if query.len() != baseline.len() || query.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "query has {} entries, baseline {}; need equal nonzero lengths",
                query.len(),
                baseline.len()
            )));
        }
        let d = query.len();
        let v0 = require_finite(model(&baseline), &Subset::empty(d))?;
        let v1 = require_finite(model(&query), &Subset::full(d))?;
        Ok(MaskedGame {
            d,
            model: Box::new(model),
            query,
            baseline,
            v0,
            v1,
        })
    }
}

impl std::fmt::Debug for MaskedGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaskedGame").field("d", &self.d).finish()
    }
}

impl Game for MaskedGame {
    fn d(&self) -> usize {
        self.d
    }

    fn evaluate_batch(&self, subsets: &[Subset]) -> Result<Vec<f64>> {
        let mut input = vec![0.0f64; self.d];
        subsets
            .iter()
            .map(|s| {
                input.copy_from_slice(&self.baseline);
                for j in s.members() {
                    input[j] = self.query[j];
                }
                require_finite((self.model)(&input), s)
            })
            .collect()
    }

    fn v_empty(&self) -> f64 {
        self.v0
    }

    fn v_full(&self) -> f64 {
        self.v1
    }
}
