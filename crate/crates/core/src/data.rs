//! Triples, vocabularies and the directed training examples derived from them.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// An integer-encoded `(head, relation, tail)` fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }

    /// `(head, relation, ?)`
    pub fn tail_query(&self) -> QueryPart {
        QueryPart { direction: Direction::Tail, anchor: self.head, relation: self.relation }
    }

    /// `(?, relation, tail)`
    pub fn head_query(&self) -> QueryPart {
        QueryPart { direction: Direction::Head, anchor: self.tail, relation: self.relation }
    }

    pub fn query(&self, direction: Direction) -> QueryPart {
        match direction {
            Direction::Tail => self.tail_query(),
            Direction::Head => self.head_query(),
        }
    }

    /// The entity a query in `direction` is asking for.
    pub fn answer(&self, direction: Direction) -> EntityId {
        match direction {
            Direction::Tail => self.tail,
            Direction::Head => self.head,
        }
    }
}

/// Which side of a triple is hidden.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Direction {
    /// `(e, r, ?)`: predict the tail.
    Tail,
    /// `(?, r, e)`: predict the head.
    Head,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Tail, Direction::Head];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Tail => "tail",
            Direction::Head => "head",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The `x` of a training pair: a triple with one entity removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryPart {
    pub direction: Direction,
    pub anchor: EntityId,
    pub relation: RelationId,
}

impl QueryPart {
    /// The full triple obtained by plugging `answer` into the hidden slot.
    pub fn complete(&self, answer: EntityId) -> Triple {
        match self.direction {
            Direction::Tail => Triple::new(self.anchor, self.relation, answer),
            Direction::Head => Triple::new(answer, self.relation, self.anchor),
        }
    }
}

/// One directed training example `(x, y)`. Train triple `i` yields example
/// `2i` (tail prediction) and `2i + 1` (head prediction).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Example {
    pub triple: Triple,
    pub direction: Direction,
}

impl Example {
    pub fn query(&self) -> QueryPart {
        self.triple.query(self.direction)
    }

    pub fn answer(&self) -> EntityId {
        self.triple.answer(self.direction)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bidirectional name <-> id mapping. Ids are dense and assigned in order of
/// first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    ids: BTreeMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, assigning the next free id if it is new.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Names in id order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// A vocabulary `prefix0, prefix1, ...` of size `len`.
    pub fn synthetic(prefix: &str, len: usize) -> Self {
        let mut vocab = Self::new();
        for i in 0..len {
            let mut name = String::from(prefix);
            let _ = fmt::Write::write_fmt(&mut name, format_args!("{i}"));
            vocab.intern(&name);
        }
        vocab
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DuplicatePolicy {
    #[default]
    Error,
    /// Keep the first occurrence, drop later ones.
    Dedupe,
}

/// The observed facts split into train/valid/test plus their vocabularies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub entities: Vocab,
    pub relations: Vocab,
}

impl Dataset {
    /// Builds a dataset from already-encoded triples, naming entities `e{i}`
    /// and relations `r{i}`.
    pub fn from_ids(
        num_entities: usize,
        num_relations: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSplit);
        }
        for t in train.iter().chain(&valid).chain(&test) {
            for e in [t.head, t.tail] {
                if e as usize >= num_entities {
                    return Err(Error::IdOutOfRange { id: e, len: num_entities });
                }
            }
            if t.relation as usize >= num_relations {
                return Err(Error::IdOutOfRange { id: t.relation, len: num_relations });
            }
        }
        Ok(Self {
            train,
            valid,
            test,
            entities: Vocab::synthetic("e", num_entities),
            relations: Vocab::synthetic("r", num_relations),
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Number of directed training examples, `2 |train|`.
    pub fn num_examples(&self) -> usize {
        2 * self.train.len()
    }

    pub fn example(&self, id: usize) -> Example {
        let direction = if id.is_multiple_of(2) { Direction::Tail } else { Direction::Head };
        Example { triple: self.train[id / 2], direction }
    }

    pub fn examples(&self) -> impl ExactSizeIterator<Item = Example> + '_ {
        (0..self.num_examples()).map(move |id| self.example(id))
    }

    /// Index over every known triple of all three splits, for filtered ranking.
    pub fn all_answers(&self) -> AnswerIndex {
        AnswerIndex::from_triples(self.train.iter().chain(&self.valid).chain(&self.test))
    }

    /// Index over the training triples only.
    pub fn train_answers(&self) -> AnswerIndex {
        AnswerIndex::from_triples(&self.train)
    }
}

/// Outcome of [`DatasetBuilder::push`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pushed {
    Added,
    /// A duplicate train triple dropped under [`DuplicatePolicy::Dedupe`].
    DroppedDuplicate,
}

/// Incremental, single-pass dataset construction from surface names.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    seen_train: BTreeMap<Triple, ()>,
    entities: Vocab,
    relations: Vocab,
    fixed_entities: bool,
    fixed_relations: bool,
    policy: DuplicatePolicy,
}

impl DatasetBuilder {
    pub fn new(policy: DuplicatePolicy) -> Self {
        Self { policy, ..Self::default() }
    }

    /// Uses a fixed entity vocabulary; names outside it are rejected.
    pub fn with_entities(mut self, entities: Vocab) -> Self {
        self.entities = entities;
        self.fixed_entities = true;
        self
    }

    /// Uses a fixed relation vocabulary; names outside it are rejected.
    pub fn with_relations(mut self, relations: Vocab) -> Self {
        self.relations = relations;
        self.fixed_relations = true;
        self
    }

    pub fn push(&mut self, split: Split, head: &str, relation: &str, tail: &str) -> Result<Pushed> {
        let lookup = |vocab: &mut Vocab, fixed: bool, name: &str, what: &'static str| {
            if fixed {
                vocab.id(name).ok_or_else(|| Error::UnknownName { what, name: name.to_string() })
            } else {
                Ok(vocab.intern(name))
            }
        };
        let triple = Triple::new(
            lookup(&mut self.entities, self.fixed_entities, head, "entity")?,
            lookup(&mut self.relations, self.fixed_relations, relation, "relation")?,
            lookup(&mut self.entities, self.fixed_entities, tail, "entity")?,
        );
        match split {
            Split::Train => {
                if self.seen_train.insert(triple, ()).is_some() {
                    return match self.policy {
                        DuplicatePolicy::Error => Err(Error::DuplicateTriple {
                            head: head.to_string(),
                            relation: relation.to_string(),
                            tail: tail.to_string(),
                        }),
                        DuplicatePolicy::Dedupe => Ok(Pushed::DroppedDuplicate),
                    };
                }
                self.train.push(triple);
            }
            Split::Valid => self.valid.push(triple),
            Split::Test => self.test.push(triple),
        }
        Ok(Pushed::Added)
    }

    pub fn finish(self) -> Result<Dataset> {
        if self.train.is_empty() {
            return Err(Error::EmptyTrainingSplit);
        }
        Ok(Dataset {
            train: self.train,
            valid: self.valid,
            test: self.test,
            entities: self.entities,
            relations: self.relations,
        })
    }
}

/// For every query, the sorted set of entities known to answer it.
#[derive(Clone, Debug, Default)]
pub struct AnswerIndex {
    answers: BTreeMap<QueryPart, Vec<EntityId>>,
}

impl AnswerIndex {
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut answers: BTreeMap<QueryPart, Vec<EntityId>> = BTreeMap::new();
        for t in triples {
            for direction in Direction::BOTH {
                answers.entry(t.query(direction)).or_default().push(t.answer(direction));
            }
        }
        for list in answers.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        Self { answers }
    }

    pub fn answers(&self, query: &QueryPart) -> &[EntityId] {
        self.answers.get(query).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, query: &QueryPart, entity: EntityId) -> bool {
        self.answers(query).binary_search(&entity).is_ok()
    }
}
