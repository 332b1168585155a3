//! The (subsampled) negative-sampling loss.
//!
//! Per directed example `(x, y)` with negatives `y_1..y_nu`:
//!
//! ```text
//! l = A(x, y) * softplus(-(s(x, y) + gamma))
//!   + B(x)    * sum_i w_i * softplus(s(x, y_i) + gamma)
//! ```
//!
//! which is the negated log-sigmoid form, `-log σ(z) = softplus(-z)`, so the
//! loss is non-negative and minimized. `w_i = 1/nu` without self-adversarial
//! sampling. `B` multiplies the whole weighted inner sum. With `A = B = 1`
//! and uniform `w_i` this is the plain negative-sampling loss.

use alloc::vec::Vec;

use rand::Rng;

use crate::data::{AnswerIndex, Dataset, Example};
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::models::{accumulate_gradient_rows, score, EmbeddingStore, ModelKind};
use crate::sampler::{draw_negatives, InnerWeights, NegativeBatch, NoiseConfig};
use crate::subsampling::{SubsamplingScheme, SubsamplingWeights};

/// Tolerance on the sum of explicit inner weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Margin added to every score inside the sigmoid.
    pub gamma: f64,
    pub scheme: SubsamplingScheme,
    pub noise: NoiseConfig,
}

/// `ln(1 + e^z)` without overflow or underflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `-log σ(score + gamma)`.
pub fn positive_term(score: f64, gamma: f64) -> f64 {
    softplus(-(score + gamma))
}

/// `sum_i w_i * -log σ(-score_i - gamma)`.
pub fn negative_term(scores: &[f64], gamma: f64, weights: &InnerWeights) -> Result<f64> {
    match weights {
        InnerWeights::Uniform => {
            let total: f64 = scores.iter().map(|&s| softplus(s + gamma)).sum();
            Ok(total / scores.len() as f64)
        }
        InnerWeights::Weighted(w) => {
            if w.len() != scores.len() {
                return Err(Error::LengthMismatch { expected: scores.len(), actual: w.len() });
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::WeightSum(sum));
            }
            Ok(w.iter().zip(scores).map(|(w, &s)| w * softplus(s + gamma)).sum())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleLoss {
    pub loss: f64,
    pub grads: GradientSet,
}

/// Loss of one example against its negatives, with gradients for every
/// embedding row it reads.
pub fn example_loss(
    store: &EmbeddingStore,
    kind: &ModelKind,
    example: &Example,
    positive_weight: f64,
    negative_weight: f64,
    config: &LossConfig,
    negatives: &NegativeBatch,
) -> Result<ExampleLoss> {
    if negatives.candidates.is_empty() {
        return Err(Error::ZeroNegatives);
    }
    let gamma = config.gamma;
    let query = example.query();
    let positive = example.triple;
    let pos_score = score(store, kind, &positive);
    let corrupted: Vec<_> = negatives.candidates.iter().map(|&c| query.complete(c)).collect();
    let neg_scores: Vec<f64> = corrupted.iter().map(|t| score(store, kind, t)).collect();
    let weights = config.noise.inner_weights(&neg_scores);

    let loss = positive_weight * positive_term(pos_score, gamma)
        + negative_weight * negative_term(&neg_scores, gamma, &weights)?;

    let mut grads = GradientSet::new(store.dim(), store.relation_dim());
    // d/ds softplus(-(s + g)) = -σ(-(s + g))
    let pos_scale = -positive_weight * sigmoid(-(pos_score + gamma));
    add_score_gradient(store, kind, &positive, pos_scale, &mut grads);
    let nu = neg_scores.len() as f64;
    for (i, (t, &s)) in corrupted.iter().zip(&neg_scores).enumerate() {
        let w = match &weights {
            InnerWeights::Uniform => 1.0 / nu,
            InnerWeights::Weighted(w) => w[i],
        };
        // d/ds softplus(s + g) = σ(s + g)
        add_score_gradient(store, kind, t, negative_weight * w * sigmoid(s + gamma), &mut grads);
    }
    Ok(ExampleLoss { loss, grads })
}

fn add_score_gradient(
    store: &EmbeddingStore,
    kind: &ModelKind,
    triple: &crate::data::Triple,
    scale: f64,
    grads: &mut GradientSet,
) {
    let h = store.entity(triple.head);
    let r = store.relation(triple.relation);
    let t = store.entity(triple.tail);
    let mut gh = alloc::vec![0.0; store.dim()];
    let mut gt = alloc::vec![0.0; store.dim()];
    accumulate_gradient_rows(kind, h, r, t, scale, &mut gh, grads.relation.row_mut(triple.relation), &mut gt);
    for (a, b) in grads.entity.row_mut(triple.head).iter_mut().zip(&gh) {
        *a += b;
    }
    for (a, b) in grads.entity.row_mut(triple.tail).iter_mut().zip(&gt) {
        *a += b;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub grads: GradientSet,
}

/// Draws negatives for each example id of `batch` in order from `rng`.
pub fn draw_batch_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    noise: &NoiseConfig,
    dataset: &Dataset,
    batch: &[usize],
    train_answers: Option<&AnswerIndex>,
) -> Result<Vec<NegativeBatch>> {
    batch
        .iter()
        .map(|&id| draw_negatives(rng, noise, &dataset.example(id).query(), dataset.num_entities(), train_answers))
        .collect()
}

/// Mean loss and mean gradient of per-example results, reduced in order.
pub fn reduce_batch(results: Vec<ExampleLoss>, dim: usize, relation_dim: usize) -> Result<BatchLoss> {
    if results.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = results.len() as f64;
    let mut total = 0.0;
    let mut grads = GradientSet::new(dim, relation_dim);
    for r in &results {
        total += r.loss;
        grads.add_assign(&r.grads);
    }
    grads.scale(1.0 / n);
    Ok(BatchLoss { loss: total / n, grads })
}

/// Per-example losses for a batch whose negatives are already drawn.
pub fn example_losses(
    store: &EmbeddingStore,
    kind: &ModelKind,
    dataset: &Dataset,
    batch: &[usize],
    weights: &SubsamplingWeights,
    config: &LossConfig,
    negatives: &[NegativeBatch],
) -> Result<Vec<ExampleLoss>> {
    if negatives.len() != batch.len() {
        return Err(Error::LengthMismatch { expected: batch.len(), actual: negatives.len() });
    }
    batch
        .iter()
        .zip(negatives)
        .map(|(&id, neg)| {
            let (a, b) = weights.get(id);
            example_loss(store, kind, &dataset.example(id), a, b, config, neg)
        })
        .collect()
}

/// Mean subsampled loss over a mini-batch of example ids.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<R: Rng + ?Sized>(
    store: &EmbeddingStore,
    kind: &ModelKind,
    dataset: &Dataset,
    batch: &[usize],
    weights: &SubsamplingWeights,
    config: &LossConfig,
    rng: &mut R,
    train_answers: Option<&AnswerIndex>,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let negatives = draw_batch_negatives(rng, &config.noise, dataset, batch, train_answers)?;
    let results = example_losses(store, kind, dataset, batch, weights, config, &negatives)?;
    reduce_batch(results, store.dim(), store.relation_dim())
}

/// The unweighted negative-sampling loss written out directly:
///
/// ```text
/// -1/|B| sum_(x,y) [ log σ(s(x,y) + γ) + 1/ν sum_i log σ(-s(x,y_i) - γ) ]
/// ```
///
/// Kept separate from [`example_loss`] so the `None` scheme can be checked
/// against it.
pub fn plain_ns_loss(
    store: &EmbeddingStore,
    kind: &ModelKind,
    dataset: &Dataset,
    batch: &[usize],
    gamma: f64,
    negatives: &[NegativeBatch],
) -> f64 {
    let mut total = 0.0;
    for (&id, neg) in batch.iter().zip(negatives) {
        let example = dataset.example(id);
        let query = example.query();
        let positive = -log_sigmoid(score(store, kind, &example.triple) + gamma);
        let mut inner = 0.0;
        for &c in &neg.candidates {
            inner += -log_sigmoid(-score(store, kind, &query.complete(c)) - gamma);
        }
        total += positive + inner / neg.candidates.len() as f64;
    }
    total / batch.len() as f64
}
