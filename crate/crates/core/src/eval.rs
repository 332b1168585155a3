//! Filtered link-prediction ranking: MRR and Hits@{1,3,10}.
//!
//! The rank of the true answer counts the candidates scoring strictly
//! higher, plus half of the other candidates scoring exactly the same
//! (mean rank among ties). Every other entity that is a known answer of the
//! query in any split is removed before ranking.

use alloc::vec::Vec;

use crate::data::{AnswerIndex, Direction, EntityId, QueryPart, Triple};
use crate::error::{Error, Result};
use crate::models::{score_all_candidates_into, EmbeddingStore, ModelKind};

pub const HITS_AT: [usize; 3] = [1, 3, 10];

/// Rank of `answer` given the scores of all candidates, ignoring the
/// entities in `filtered` (the answer itself is never filtered).
pub fn rank_from_scores(scores: &[f64], answer: EntityId, filtered: &[EntityId]) -> f64 {
    let target = scores[answer as usize];
    let mut higher = 0usize;
    let mut ties = 0usize;
    for (e, &s) in scores.iter().enumerate() {
        if e as EntityId == answer {
            continue;
        }
        if s > target {
            higher += 1;
        } else if s == target {
            ties += 1;
        }
    }
    for &e in filtered {
        if e == answer {
            continue;
        }
        let s = scores[e as usize];
        if s > target {
            higher -= 1;
        } else if s == target {
            ties -= 1;
        }
    }
    1.0 + higher as f64 + ties as f64 / 2.0
}

/// Filtered rank of `answer` for `query` under the model.
pub fn filtered_rank(
    store: &EmbeddingStore,
    kind: &ModelKind,
    query: &QueryPart,
    answer: EntityId,
    known: &AnswerIndex,
) -> f64 {
    let mut scores = alloc::vec![0.0; store.num_entities()];
    score_all_candidates_into(store, kind, query, &mut scores);
    rank_from_scores(&scores, answer, known.answers(query))
}

/// Metrics of one set of ranks.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
    pub queries: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[f64]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::NoQueries);
        }
        let n = ranks.len() as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / n;
        Ok(Self {
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits_at_1: hits(HITS_AT[0]),
            hits_at_3: hits(HITS_AT[1]),
            hits_at_10: hits(HITS_AT[2]),
            queries: ranks.len(),
        })
    }

    pub fn hits(&self, k: usize) -> Option<f64> {
        match k {
            1 => Some(self.hits_at_1),
            3 => Some(self.hits_at_3),
            10 => Some(self.hits_at_10),
            _ => None,
        }
    }
}

/// Micro-averaged metrics over both directions plus the per-direction split.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankingReport {
    pub overall: Metrics,
    pub tail: Metrics,
    pub head: Metrics,
}

impl RankingReport {
    pub fn from_ranks(tail_ranks: &[f64], head_ranks: &[f64]) -> Result<Self> {
        let all: Vec<f64> = tail_ranks.iter().chain(head_ranks).copied().collect();
        Ok(Self {
            overall: Metrics::from_ranks(&all)?,
            tail: Metrics::from_ranks(tail_ranks)?,
            head: Metrics::from_ranks(head_ranks)?,
        })
    }

    pub fn mrr(&self) -> f64 {
        self.overall.mrr
    }
}

/// Filtered ranks of `triples` in one direction.
pub fn direction_ranks(
    store: &EmbeddingStore,
    kind: &ModelKind,
    triples: &[Triple],
    direction: Direction,
    known: &AnswerIndex,
) -> Vec<f64> {
    let mut scores = alloc::vec![0.0; store.num_entities()];
    triples
        .iter()
        .map(|t| {
            let query = t.query(direction);
            score_all_candidates_into(store, kind, &query, &mut scores);
            rank_from_scores(&scores, t.answer(direction), known.answers(&query))
        })
        .collect()
}

/// Evaluates `triples` in both directions.
pub fn evaluate(
    store: &EmbeddingStore,
    kind: &ModelKind,
    triples: &[Triple],
    known: &AnswerIndex,
) -> Result<RankingReport> {
    if triples.is_empty() {
        return Err(Error::NoQueries);
    }
    let tail = direction_ranks(store, kind, triples, Direction::Tail, known);
    let head = direction_ranks(store, kind, triples, Direction::Head, known);
    RankingReport::from_ranks(&tail, &head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn best_score_ranks_first() {
        assert_eq!(rank_from_scores(&[0.1, 0.9, 0.3], 1, &[]), 1.0);
    }

    #[test]
    fn filtering_removes_a_better_candidate() {
        // answer 2 is third best; entity 4 beats it but is a known answer
        let scores = [0.1, 0.8, 0.7, 0.2, 0.9];
        assert_eq!(rank_from_scores(&scores, 2, &[]), 3.0);
        assert_eq!(rank_from_scores(&scores, 2, &[2, 4]), 2.0);
    }

    #[test]
    fn all_ties_take_the_mean_rank() {
        let scores = [0.5; 7];
        assert_eq!(rank_from_scores(&scores, 3, &[]), 4.0);
        assert_eq!(rank_from_scores(&[0.5; 6], 0, &[]), 3.5);
    }

    #[test]
    fn filtering_never_worsens_a_rank() {
        let scores = [0.3, 0.3, 0.8, 0.1, 0.3];
        let unfiltered = rank_from_scores(&scores, 0, &[]);
        let filtered = rank_from_scores(&scores, 0, &[1, 2]);
        assert!(filtered <= unfiltered);
        assert_eq!(filtered, 1.5);
    }

    #[test]
    fn ranks_one_two_four() {
        let m = Metrics::from_ranks(&[1.0, 2.0, 4.0]).unwrap();
        assert!((m.mrr - 0.583_333_333_333_333_3).abs() < 1e-12);
        assert_eq!(m.hits_at_1, 1.0 / 3.0);
        assert_eq!(m.hits_at_3, 2.0 / 3.0);
        assert_eq!(m.hits_at_10, 1.0);
    }

    #[test]
    fn single_perfect_query() {
        let m = Metrics::from_ranks(&[1.0]).unwrap();
        assert_eq!((m.mrr, m.hits_at_1, m.hits_at_3, m.hits_at_10), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_split_is_an_error() {
        let store = EmbeddingStore::zeros(2, 1, 2, 2);
        assert_eq!(
            evaluate(&store, &ModelKind::DistMult, &[], &AnswerIndex::default()),
            Err(Error::NoQueries)
        );
        assert!(RankingReport::from_ranks(&[1.0], &[]).is_err());
    }

    #[test]
    fn report_counts_both_directions() {
        let store = crate::models::init_model(&ModelKind::DistMult, 6, 2, 4, 3, 1.0).unwrap();
        let test = vec![Triple::new(0, 0, 1), Triple::new(2, 1, 3), Triple::new(4, 0, 5)];
        let r = evaluate(&store, &ModelKind::DistMult, &test, &AnswerIndex::from_triples(&test)).unwrap();
        assert_eq!(r.overall.queries, 6);
        assert_eq!(r.tail.queries, 3);
        assert!(r.overall.hits_at_1 <= r.overall.hits_at_3 && r.overall.hits_at_3 <= r.overall.hits_at_10);
        assert!(r.overall.hits_at_1 <= r.overall.mrr && r.overall.mrr <= 1.0);
        assert_eq!(evaluate(&store, &ModelKind::DistMult, &test, &AnswerIndex::from_triples(&test)).unwrap(), r);
    }
}
