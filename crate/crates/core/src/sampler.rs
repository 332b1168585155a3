//! Negative sampling from `p_n(y | x)` and self-adversarial weighting.
//!
//! The noise distribution is uniform over all entities. Self-adversarial
//! weights are a softmax of `alpha * score` over the drawn negatives; they
//! are computed from the current scores and treated as constants, so no
//! gradient flows through them.

use alloc::vec::Vec;

use rand::Rng;

use crate::data::{AnswerIndex, QueryPart};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Negatives per positive example.
    pub nu: usize,
    /// Softmax temperature for self-adversarial weights; `0` means uniform.
    pub sans_alpha: f64,
    /// Redraw candidates that are known train answers of the query.
    pub filter_false_negatives: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { nu: 1, sans_alpha: 0.0, filter_false_negatives: false }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 {
            return Err(Error::ZeroNegatives);
        }
        if !(self.sans_alpha.is_finite() && self.sans_alpha >= 0.0) {
            return Err(Error::InvalidParameter { what: "sans alpha", value: self.sans_alpha });
        }
        Ok(())
    }

    /// Inner-sum weights for the given negative scores.
    pub fn inner_weights(&self, scores: &[f64]) -> InnerWeights {
        if self.sans_alpha == 0.0 {
            InnerWeights::Uniform
        } else {
            InnerWeights::Weighted(sans_weights(scores, self.sans_alpha))
        }
    }
}

/// The entities drawn for one positive example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeBatch {
    pub candidates: Vec<u32>,
}

/// Weights of the inner sum over negatives.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerWeights {
    /// `1 / nu` each.
    Uniform,
    Weighted(Vec<f64>),
}

/// Draws `nu` i.i.d. uniform entity ids for `query`.
///
/// With filtering on, `known` must hold the train answers; any candidate it
/// contains is redrawn.
pub fn draw_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    config: &NoiseConfig,
    query: &QueryPart,
    num_entities: usize,
    known: Option<&AnswerIndex>,
) -> Result<NegativeBatch> {
    if num_entities < 2 {
        return Err(Error::TooFewEntities);
    }
    if config.nu == 0 {
        return Err(Error::ZeroNegatives);
    }
    let n = num_entities as u32;
    let exclude = match (config.filter_false_negatives, known) {
        (true, Some(index)) => index.answers(query),
        _ => &[],
    };
    if exclude.len() >= num_entities {
        return Err(Error::FilteringImpossible(*query));
    }
    let mut candidates = Vec::with_capacity(config.nu);
    while candidates.len() < config.nu {
        let c = rng.gen_range(0..n);
        if exclude.binary_search(&c).is_err() {
            candidates.push(c);
        }
    }
    Ok(NegativeBatch { candidates })
}

/// `softmax(alpha * scores)`, shifted by the maximum for stability.
pub fn sans_weights(scores: &[f64], alpha: f64) -> Vec<f64> {
    let top = scores.iter().map(|s| alpha * s).fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| libm::exp(alpha * s - top)).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}
