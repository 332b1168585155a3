//! Scoring functions `s(x, y)` over an embedding table, with analytic
//! gradients.
//!
//! Complex-valued models (ComplEx, RotatE) store an entity row of width `d`
//! as `d/2` real parts followed by `d/2` imaginary parts. RotatE relations
//! are `d/2` phases; the rotation applied is `exp(i * phase_scale * raw)`,
//! which has unit modulus whatever the raw value.
//!
//! | model    | score                                  |
//! |----------|----------------------------------------|
//! | TransE   | `-‖h + r - t‖` (L1 or L2)              |
//! | DistMult | `Σ h r t`                              |
//! | ComplEx  | `Re(Σ h r conj(t))`                    |
//! | RotatE   | `-Σ_k |h_k r_k - t_k|` (sum of moduli) |
//!
//! Adding a model means adding a variant plus one arm in [`score_rows`],
//! [`accumulate_gradient_rows`] and [`score_all_candidates`].

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Direction, QueryPart, Triple};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    TransE { norm: Norm },
    DistMult,
    ComplEx,
    /// `phase_scale` maps a raw relation parameter to radians.
    RotatE { phase_scale: f64 },
}

impl ModelKind {
    /// RotatE whose phases span `[-pi, pi]` over the init range.
    pub fn rotate_for_range(init_range: f64) -> Self {
        ModelKind::RotatE { phase_scale: PI / init_range }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::TransE { .. } => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::RotatE { .. } => "rotate",
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, ModelKind::ComplEx | ModelKind::RotatE { .. })
    }

    /// Width of a relation row for entity dimension `dim`.
    pub fn relation_dim(&self, dim: usize) -> usize {
        match self {
            ModelKind::RotatE { .. } => dim / 2,
            _ => dim,
        }
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if self.is_complex() && !dim.is_multiple_of(2) {
            return Err(Error::OddDimension { model: self.name(), dim });
        }
        Ok(())
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `(gamma + 2) / dim`, the uniform init half-width used by the reference
/// KGE implementations.
pub fn default_init_range(gamma: f64, dim: usize) -> f64 {
    (gamma + 2.0) / dim as f64
}

/// Entity and relation matrices, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    relation_dim: usize,
    entity: Vec<f64>,
    relation: Vec<f64>,
}

impl EmbeddingStore {
    pub fn zeros(num_entities: usize, num_relations: usize, dim: usize, relation_dim: usize) -> Self {
        Self {
            dim,
            relation_dim,
            entity: vec![0.0; num_entities * dim],
            relation: vec![0.0; num_relations * relation_dim],
        }
    }

    /// Wraps existing row-major matrices.
    pub fn from_parts(dim: usize, relation_dim: usize, entity: Vec<f64>, relation: Vec<f64>) -> Result<Self> {
        if dim == 0 || relation_dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if !entity.len().is_multiple_of(dim) {
            return Err(Error::LengthMismatch { expected: entity.len() / dim * dim, actual: entity.len() });
        }
        if !relation.len().is_multiple_of(relation_dim) {
            return Err(Error::LengthMismatch {
                expected: relation.len() / relation_dim * relation_dim,
                actual: relation.len(),
            });
        }
        Ok(Self { dim, relation_dim, entity, relation })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn relation_dim(&self) -> usize {
        self.relation_dim
    }

    pub fn num_entities(&self) -> usize {
        self.entity.len() / self.dim
    }

    pub fn num_relations(&self) -> usize {
        self.relation.len() / self.relation_dim
    }

    pub fn entity(&self, id: u32) -> &[f64] {
        let start = id as usize * self.dim;
        &self.entity[start..start + self.dim]
    }

    pub fn relation(&self, id: u32) -> &[f64] {
        let start = id as usize * self.relation_dim;
        &self.relation[start..start + self.relation_dim]
    }

    pub fn entity_mut(&mut self, id: u32) -> &mut [f64] {
        let start = id as usize * self.dim;
        &mut self.entity[start..start + self.dim]
    }

    pub fn relation_mut(&mut self, id: u32) -> &mut [f64] {
        let start = id as usize * self.relation_dim;
        &mut self.relation[start..start + self.relation_dim]
    }

    /// `(entity, relation)` matrices, mutably.
    pub fn matrices_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.entity, &mut self.relation)
    }

    pub fn entity_matrix(&self) -> &[f64] {
        &self.entity
    }

    pub fn relation_matrix(&self) -> &[f64] {
        &self.relation
    }

    pub fn is_finite(&self) -> bool {
        self.entity.iter().chain(&self.relation).all(|v| v.is_finite())
    }
}

/// Uniform init in `[-init_range, init_range]`, entity rows first, from a
/// ChaCha8 stream seeded with `seed`.
pub fn init_model(
    kind: &ModelKind,
    num_entities: usize,
    num_relations: usize,
    dim: usize,
    seed: u64,
    init_range: f64,
) -> Result<EmbeddingStore> {
    kind.check_dim(dim)?;
    if !(init_range.is_finite() && init_range >= 0.0) {
        return Err(Error::InvalidInitRange(init_range));
    }
    let mut store = EmbeddingStore::zeros(num_entities, num_relations, dim, kind.relation_dim(dim));
    if init_range > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in store.entity.iter_mut().chain(store.relation.iter_mut()) {
            *v = rng.gen_range(-init_range..=init_range);
        }
    }
    Ok(store)
}

/// `s(h, r, t)` from raw rows.
pub fn score_rows(kind: &ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match *kind {
        ModelKind::TransE { norm } => {
            let diff = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
            -norm_of(norm, diff)
        }
        ModelKind::DistMult => h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum(),
        ModelKind::ComplEx => {
            let k = h.len() / 2;
            let (hr, hi) = h.split_at(k);
            let (rr, ri) = r.split_at(k);
            let (tr, ti) = t.split_at(k);
            let mut s = 0.0;
            for j in 0..k {
                let re = hr[j] * rr[j] - hi[j] * ri[j];
                let im = hr[j] * ri[j] + hi[j] * rr[j];
                s += re * tr[j] + im * ti[j];
            }
            s
        }
        ModelKind::RotatE { phase_scale } => {
            let k = h.len() / 2;
            let (hr, hi) = h.split_at(k);
            let (tr, ti) = t.split_at(k);
            let mut s = 0.0;
            for j in 0..k {
                let (sin, cos) = libm::sincos(r[j] * phase_scale);
                let u = hr[j] * cos - hi[j] * sin - tr[j];
                let v = hr[j] * sin + hi[j] * cos - ti[j];
                s += libm::sqrt(u * u + v * v);
            }
            -s
        }
    }
}

fn norm_of(norm: Norm, values: impl Iterator<Item = f64>) -> f64 {
    match norm {
        Norm::L1 => values.map(f64::abs).sum(),
        Norm::L2 => libm::sqrt(values.map(|v| v * v).sum()),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adds `scale * ds/dh`, `scale * ds/dr`, `scale * ds/dt` into the buffers.
///
/// Non-differentiable points (TransE at `h + r = t`, a zero RotatE residual)
/// take the zero subgradient.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_gradient_rows(
    kind: &ModelKind,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    scale: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    match *kind {
        ModelKind::TransE { norm: Norm::L1 } => {
            for j in 0..h.len() {
                let g = -sign(h[j] + r[j] - t[j]) * scale;
                gh[j] += g;
                gr[j] += g;
                gt[j] -= g;
            }
        }
        ModelKind::TransE { norm: Norm::L2 } => {
            let len = libm::sqrt(h.iter().zip(r).zip(t).map(|((h, r), t)| (h + r - t) * (h + r - t)).sum());
            if len == 0.0 {
                return;
            }
            for j in 0..h.len() {
                let g = -(h[j] + r[j] - t[j]) / len * scale;
                gh[j] += g;
                gr[j] += g;
                gt[j] -= g;
            }
        }
        ModelKind::DistMult => {
            for j in 0..h.len() {
                gh[j] += scale * r[j] * t[j];
                gr[j] += scale * h[j] * t[j];
                gt[j] += scale * h[j] * r[j];
            }
        }
        ModelKind::ComplEx => {
            let k = h.len() / 2;
            for j in 0..k {
                let (hr, hi) = (h[j], h[j + k]);
                let (rr, ri) = (r[j], r[j + k]);
                let (tr, ti) = (t[j], t[j + k]);
                gh[j] += scale * (rr * tr + ri * ti);
                gh[j + k] += scale * (rr * ti - ri * tr);
                gr[j] += scale * (hr * tr + hi * ti);
                gr[j + k] += scale * (hr * ti - hi * tr);
                gt[j] += scale * (hr * rr - hi * ri);
                gt[j + k] += scale * (hr * ri + hi * rr);
            }
        }
        ModelKind::RotatE { phase_scale } => {
            let k = h.len() / 2;
            for j in 0..k {
                let (hr, hi) = (h[j], h[j + k]);
                let (sin, cos) = libm::sincos(r[j] * phase_scale);
                let u = hr * cos - hi * sin - t[j];
                let v = hr * sin + hi * cos - t[j + k];
                let m = libm::sqrt(u * u + v * v);
                if m == 0.0 {
                    continue;
                }
                // score = -m
                let (du, dv) = (-u / m * scale, -v / m * scale);
                gh[j] += du * cos + dv * sin;
                gh[j + k] += -du * sin + dv * cos;
                gt[j] -= du;
                gt[j + k] -= dv;
                let dphase = du * (-hr * sin - hi * cos) + dv * (hr * cos - hi * sin);
                gr[j] += dphase * phase_scale;
            }
        }
    }
}

pub fn score(store: &EmbeddingStore, kind: &ModelKind, triple: &Triple) -> f64 {
    score_rows(kind, store.entity(triple.head), store.relation(triple.relation), store.entity(triple.tail))
}

/// Partials of the score with respect to the three rows it reads.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGradient {
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    pub tail: Vec<f64>,
}

pub fn score_gradient(store: &EmbeddingStore, kind: &ModelKind, triple: &Triple) -> ScoreGradient {
    let mut g = ScoreGradient {
        head: vec![0.0; store.dim()],
        relation: vec![0.0; store.relation_dim()],
        tail: vec![0.0; store.dim()],
    };
    accumulate_gradient_rows(
        kind,
        store.entity(triple.head),
        store.relation(triple.relation),
        store.entity(triple.tail),
        1.0,
        &mut g.head,
        &mut g.relation,
        &mut g.tail,
    );
    g
}

/// Scores of `query` completed with every entity, in entity-id order.
///
/// The query side is folded into a single vector first, so each candidate
/// costs one pass over its row.
pub fn score_all_candidates(store: &EmbeddingStore, kind: &ModelKind, query: &QueryPart) -> Vec<f64> {
    let mut out = vec![0.0; store.num_entities()];
    score_all_candidates_into(store, kind, query, &mut out);
    out
}

pub fn score_all_candidates_into(store: &EmbeddingStore, kind: &ModelKind, query: &QueryPart, out: &mut [f64]) {
    let d = store.dim();
    let anchor = store.entity(query.anchor);
    let rel = store.relation(query.relation);
    let candidates = store.entity_matrix().chunks_exact(d);
    match *kind {
        ModelKind::TransE { norm } => {
            // tail: -‖(h + r) - t‖, head: -‖h - (t - r)‖
            let q: Vec<f64> = match query.direction {
                Direction::Tail => anchor.iter().zip(rel).map(|(a, r)| a + r).collect(),
                Direction::Head => anchor.iter().zip(rel).map(|(a, r)| a - r).collect(),
            };
            for (o, row) in out.iter_mut().zip(candidates) {
                *o = match query.direction {
                    Direction::Tail => -norm_of(norm, q.iter().zip(row).map(|(q, e)| q - e)),
                    Direction::Head => -norm_of(norm, row.iter().zip(&q).map(|(e, q)| e - q)),
                };
            }
        }
        ModelKind::DistMult => {
            let q: Vec<f64> = anchor.iter().zip(rel).map(|(a, r)| a * r).collect();
            for (o, row) in out.iter_mut().zip(candidates) {
                *o = q.iter().zip(row).map(|(q, e)| q * e).sum();
            }
        }
        ModelKind::ComplEx => {
            let k = d / 2;
            let mut q = vec![0.0; d];
            for j in 0..k {
                let (ar, ai) = (anchor[j], anchor[j + k]);
                let (rr, ri) = (rel[j], rel[j + k]);
                match query.direction {
                    // h * r, scored as Re(q conj(t))
                    Direction::Tail => {
                        q[j] = ar * rr - ai * ri;
                        q[j + k] = ar * ri + ai * rr;
                    }
                    // conj(r) * t, scored as Re(h conj(q))
                    Direction::Head => {
                        q[j] = rr * ar + ri * ai;
                        q[j + k] = rr * ai - ri * ar;
                    }
                }
            }
            for (o, row) in out.iter_mut().zip(candidates) {
                *o = q.iter().zip(row).map(|(q, e)| q * e).sum();
            }
        }
        ModelKind::RotatE { phase_scale } => {
            // |h r - t| = |h - t conj(r)| since |r| = 1
            let k = d / 2;
            let mut q = vec![0.0; d];
            for j in 0..k {
                let (ar, ai) = (anchor[j], anchor[j + k]);
                let (sin, cos) = libm::sincos(rel[j] * phase_scale);
                match query.direction {
                    Direction::Tail => {
                        q[j] = ar * cos - ai * sin;
                        q[j + k] = ar * sin + ai * cos;
                    }
                    Direction::Head => {
                        q[j] = ar * cos + ai * sin;
                        q[j + k] = ai * cos - ar * sin;
                    }
                }
            }
            for (o, row) in out.iter_mut().zip(candidates) {
                let mut s = 0.0;
                for j in 0..k {
                    let u = q[j] - row[j];
                    let v = q[j + k] - row[j + k];
                    s += libm::sqrt(u * u + v * v);
                }
                *o = -s;
            }
        }
    }
}
