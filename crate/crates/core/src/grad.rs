//! Sparse row gradients: only the embedding rows an example touches.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[derive(Clone, Debug)]
pub struct RowGradients {
    width: usize,
    slots: BTreeMap<u32, usize>,
    data: Vec<f64>,
}

impl RowGradients {
    pub fn new(width: usize) -> Self {
        Self { width, slots: BTreeMap::new(), data: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// The accumulator for row `id`, zero-initialised on first access.
    pub fn row_mut(&mut self, id: u32) -> &mut [f64] {
        let width = self.width;
        let next = self.data.len() / width.max(1);
        let slot = *self.slots.entry(id).or_insert(next);
        if slot == next {
            self.data.resize(self.data.len() + width, 0.0);
        }
        &mut self.data[slot * width..(slot + 1) * width]
    }

    pub fn row(&self, id: u32) -> Option<&[f64]> {
        self.slots.get(&id).map(|&slot| &self.data[slot * self.width..(slot + 1) * self.width])
    }

    /// Rows in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        self.slots.iter().map(move |(&id, &slot)| (id, &self.data[slot * self.width..(slot + 1) * self.width]))
    }

    pub fn add_assign(&mut self, other: &RowGradients) {
        for (id, row) in other.iter() {
            for (a, b) in self.row_mut(id).iter_mut().zip(row) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Equal when the same rows hold the same values, whatever the order they
/// were first touched in.
impl PartialEq for RowGradients {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width && self.len() == other.len() && self.iter().eq(other.iter())
    }
}

/// Gradients of a loss with respect to the entity and relation tables.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub entity: RowGradients,
    pub relation: RowGradients,
}

impl GradientSet {
    pub fn new(dim: usize, relation_dim: usize) -> Self {
        Self { entity: RowGradients::new(dim), relation: RowGradients::new(relation_dim) }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        self.entity.add_assign(&other.entity);
        self.relation.add_assign(&other.relation);
    }

    pub fn scale(&mut self, factor: f64) {
        self.entity.scale(factor);
        self.relation.scale(factor);
    }

    pub fn is_finite(&self) -> bool {
        self.entity.is_finite() && self.relation.is_finite()
    }
}
