//! Frequency statistics of the training split.
//!
//! A KG triple occurs at most once, so the frequency of a pair `(x, y)` is
//! approximated by `#(head, relation) + #(relation, tail)`. The frequency of
//! a query `x` is the count of its own key: `#(head, relation)` for a tail
//! query and `#(relation, tail)` for a head query.

use alloc::collections::BTreeMap;

use crate::data::{Dataset, Direction, QueryPart, Triple};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    head_rel: BTreeMap<(u32, u32), u32>,
    rel_tail: BTreeMap<(u32, u32), u32>,
    total: usize,
}

/// Counts `#(e, r)` and `#(r, e)` over the train split only.
pub fn count_frequencies(dataset: &Dataset) -> FrequencyTable {
    FrequencyTable::from_triples(&dataset.train)
}

impl FrequencyTable {
    pub fn from_triples(triples: &[Triple]) -> Self {
        let mut table = Self::default();
        for t in triples {
            *table.head_rel.entry((t.head, t.relation)).or_insert(0) += 1;
            *table.rel_tail.entry((t.relation, t.tail)).or_insert(0) += 1;
        }
        table.total = triples.len();
        table
    }

    /// `#(e, r)`: number of train triples with head `e` and relation `r`.
    pub fn head_rel(&self, entity: u32, relation: u32) -> Option<u32> {
        self.head_rel.get(&(entity, relation)).copied()
    }

    /// `#(r, e)`: number of train triples with relation `r` and tail `e`.
    pub fn rel_tail(&self, relation: u32, entity: u32) -> Option<u32> {
        self.rel_tail.get(&(relation, entity)).copied()
    }

    /// `#(x, y) ~ #(e_i, r_k) + #(r_k, e_j)`.
    pub fn triple_freq(&self, triple: &Triple) -> Result<u32> {
        let hr = self
            .head_rel(triple.head, triple.relation)
            .ok_or(Error::UnknownKey(triple.head, triple.relation))?;
        let rt = self
            .rel_tail(triple.relation, triple.tail)
            .ok_or(Error::UnknownKey(triple.relation, triple.tail))?;
        Ok(hr + rt)
    }

    /// `#x` for a query part.
    pub fn query_freq(&self, query: &QueryPart) -> Result<u32> {
        match query.direction {
            Direction::Tail => self
                .head_rel(query.anchor, query.relation)
                .ok_or(Error::UnknownKey(query.anchor, query.relation)),
            Direction::Head => self
                .rel_tail(query.relation, query.anchor)
                .ok_or(Error::UnknownKey(query.relation, query.anchor)),
        }
    }

    /// Number of train triples counted.
    pub fn total(&self) -> usize {
        self.total
    }

    /// `((entity, relation), count)` in key order.
    pub fn head_rel_counts(&self) -> impl Iterator<Item = ((u32, u32), u32)> + '_ {
        self.head_rel.iter().map(|(&k, &v)| (k, v))
    }

    /// `((relation, entity), count)` in key order.
    pub fn rel_tail_counts(&self) -> impl Iterator<Item = ((u32, u32), u32)> + '_ {
        self.rel_tail.iter().map(|(&k, &v)| (k, v))
    }
}
