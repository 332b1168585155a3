//! Parallel filtered ranking. Ranks are computed per query on the worker
//! pool and reduced in query order, so the report does not depend on the
//! number of workers.

use kgsub_core::eval::rank_from_scores;
use kgsub_core::models::score_all_candidates_into;
use kgsub_core::{AnswerIndex, Direction, EmbeddingStore, Error as CoreError, ModelKind, RankingReport, Triple};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn ranks(
    store: &EmbeddingStore,
    kind: &ModelKind,
    triples: &[Triple],
    direction: Direction,
    known: &AnswerIndex,
) -> Vec<f64> {
    triples
        .par_iter()
        .map_init(
            || vec![0.0; store.num_entities()],
            |scores, t| {
                let query = t.query(direction);
                score_all_candidates_into(store, kind, &query, scores);
                rank_from_scores(scores, t.answer(direction), known.answers(&query))
            },
        )
        .collect()
}

/// Filtered MRR and Hits@k of `triples` in both directions, filtering with
/// `known` (normally every train, valid and test triple).
pub fn evaluate(
    pool: &rayon::ThreadPool,
    store: &EmbeddingStore,
    kind: &ModelKind,
    triples: &[Triple],
    known: &AnswerIndex,
) -> Result<RankingReport> {
    if triples.is_empty() {
        return Err(CoreError::NoQueries.into());
    }
    let (tail, head) = pool.install(|| {
        (ranks(store, kind, triples, Direction::Tail, known), ranks(store, kind, triples, Direction::Head, known))
    });
    Ok(RankingReport::from_ranks(&tail, &head)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgsub_core::init_model;

    #[test]
    fn matches_sequential_evaluation_for_any_worker_count() {
        let kind = ModelKind::ComplEx;
        let store = init_model(&kind, 30, 3, 8, 5, 0.4).unwrap();
        let triples: Vec<Triple> = (0..25).map(|i| Triple::new(i, i % 3, (i * 7 + 1) % 30)).collect();
        let known = AnswerIndex::from_triples(&triples);
        let expected = kgsub_core::evaluate(&store, &kind, &triples, &known).unwrap();
        for workers in [1, 3] {
            let pool = build_pool(workers).unwrap();
            assert_eq!(evaluate(&pool, &store, &kind, &triples, &known).unwrap(), expected);
        }
    }
}
