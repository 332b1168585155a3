//! Sparse SGD and lazy Adam over embedding rows.
//!
//! Only rows present in a gradient set are touched. For Adam each row keeps
//! the step at which it was last updated. When a row comes back after `k`
//! skipped steps its moments are first decayed as if those steps had seen a
//! zero gradient,
//!
//! ```text
//! m <- beta1^k m,   v <- beta2^k v
//! ```
//!
//! and then the usual update runs with the global step `t`:
//!
//! ```text
//! m <- beta1 m + (1 - beta1) g
//! v <- beta2 v + (1 - beta2) g^2
//! theta <- theta - lr * (m / (1 - beta1^t)) / (sqrt(v / (1 - beta2^t)) + eps)
//! ```
//!
//! The parameter moves a dense optimizer would have made on the skipped
//! steps are not replayed.

use alloc::vec;
use alloc::vec::Vec;

use crate::grad::{GradientSet, RowGradients};
use crate::models::EmbeddingStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments for one matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub width: usize,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    /// Step of the last update per row, 0 if never updated.
    pub last_step: Vec<u64>,
}

impl Moments {
    pub fn zeros(rows: usize, width: usize) -> Self {
        Self { width, first: vec![0.0; rows * width], second: vec![0.0; rows * width], last_step: vec![0; rows] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    /// Number of updates applied so far.
    pub step: u64,
    pub entity: Moments,
    pub relation: Moments,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, store: &EmbeddingStore) -> Self {
        let (entity, relation) = match kind {
            OptimizerKind::Sgd => (Moments::zeros(0, store.dim()), Moments::zeros(0, store.relation_dim())),
            OptimizerKind::Adam { .. } => (
                Moments::zeros(store.num_entities(), store.dim()),
                Moments::zeros(store.num_relations(), store.relation_dim()),
            ),
        };
        Self { kind, step: 0, entity, relation }
    }

    /// Applies one update with learning rate `lr`.
    pub fn apply(&mut self, store: &mut EmbeddingStore, grads: &GradientSet, lr: f64) {
        self.step += 1;
        let step = self.step;
        let kind = self.kind;
        let (entity, relation) = store.matrices_mut();
        update_rows(kind, step, lr, &grads.entity, &mut self.entity, entity);
        update_rows(kind, step, lr, &grads.relation, &mut self.relation, relation);
    }
}

fn update_rows(
    kind: OptimizerKind,
    step: u64,
    lr: f64,
    grads: &RowGradients,
    moments: &mut Moments,
    matrix: &mut [f64],
) {
    let width = grads.width();
    let row_of = |id: u32| {
        let start = id as usize * width;
        start..start + width
    };
    match kind {
        OptimizerKind::Sgd => {
            for (id, g) in grads.iter() {
                for (p, g) in matrix[row_of(id)].iter_mut().zip(g) {
                    *p -= lr * g;
                }
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            let bias1 = 1.0 - libm::pow(beta1, step as f64);
            let bias2 = 1.0 - libm::pow(beta2, step as f64);
            let w = moments.width;
            for (id, g) in grads.iter() {
                let row = id as usize;
                let skipped = step - moments.last_step[row] - 1;
                moments.last_step[row] = step;
                let (d1, d2) = if skipped > 0 {
                    (libm::pow(beta1, skipped as f64), libm::pow(beta2, skipped as f64))
                } else {
                    (1.0, 1.0)
                };
                let m = &mut moments.first[row * w..(row + 1) * w];
                let v = &mut moments.second[row * w..(row + 1) * w];
                let params = &mut matrix[row_of(id)];
                for j in 0..w {
                    m[j] = beta1 * (d1 * m[j]) + (1.0 - beta1) * g[j];
                    v[j] = beta2 * (d2 * v[j]) + (1.0 - beta2) * g[j] * g[j];
                    params[j] -= lr * (m[j] / bias1) / (libm::sqrt(v[j] / bias2) + eps);
                }
            }
        }
    }
}
