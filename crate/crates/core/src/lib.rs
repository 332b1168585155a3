#![no_std]

//! Subsampled negative-sampling loss for knowledge graph embeddings.
//!
//! This crate holds the numeric core: triples and vocabularies, frequency
//! statistics, the `None`/`Base`/`Freq`/`Uniq` subsampling weights, the four
//! scoring models with analytic gradients, negative sampling (uniform and
//! self-adversarial), the weighted loss, filtered ranking metrics, and a
//! small harness that checks the Monte-Carlo reasoning behind the weighted
//! loss on synthetic distributions.
//!
//! Everything here is `no_std` + `alloc`. File formats, the training loop
//! and the command line live in the `kgsub` crate.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod eval;
pub mod freq;
pub mod grad;
pub mod loss;
pub mod models;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod subsampling;
pub mod theory;

pub use data::{AnswerIndex, Dataset, DatasetBuilder, Direction, DuplicatePolicy, Example, QueryPart, Split, Triple, Vocab};
pub use error::{Error, Result};
pub use eval::{evaluate, filtered_rank, RankingReport};
pub use freq::{count_frequencies, FrequencyTable};
pub use grad::{GradientSet, RowGradients};
pub use loss::{batch_loss, example_loss, BatchLoss, ExampleLoss, LossConfig};
pub use models::{init_model, score, score_all_candidates, score_gradient, EmbeddingStore, ModelKind, Norm, ScoreGradient};
pub use sampler::{draw_negatives, sans_weights, InnerWeights, NegativeBatch, NoiseConfig};
pub use subsampling::{compute_weights, weight_summary, SchemeKind, SubsamplingScheme, SubsamplingWeights, WeightSummary};
