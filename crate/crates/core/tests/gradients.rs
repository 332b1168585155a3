//! Analytic gradients against central finite differences.

use kgsub_core::data::{Direction, Example};
use kgsub_core::loss::example_loss;
use kgsub_core::models::init_model;
use kgsub_core::{
    score, score_gradient, EmbeddingStore, GradientSet, LossConfig, ModelKind, NegativeBatch, NoiseConfig, Norm,
    SchemeKind, SubsamplingScheme, Triple,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const EPS: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn kinds() -> [ModelKind; 5] {
    [
        ModelKind::TransE { norm: Norm::L1 },
        ModelKind::TransE { norm: Norm::L2 },
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::rotate_for_range(0.5),
    ]
}

/// Entity entries first, then relation entries.
fn dense(store: &EmbeddingStore, grads: &GradientSet) -> Vec<f64> {
    let mut out = vec![0.0; store.entity_matrix().len() + store.relation_matrix().len()];
    let offset = store.entity_matrix().len();
    for (id, row) in grads.entity.iter() {
        let start = id as usize * store.dim();
        out[start..start + row.len()].copy_from_slice(row);
    }
    for (id, row) in grads.relation.iter() {
        let start = offset + id as usize * store.relation_dim();
        out[start..start + row.len()].copy_from_slice(row);
    }
    out
}

fn perturbed(store: &EmbeddingStore, index: usize, delta: f64) -> EmbeddingStore {
    let mut s = store.clone();
    let (entity, relation) = s.matrices_mut();
    if index < entity.len() {
        entity[index] += delta;
    } else {
        relation[index - entity.len()] += delta;
    }
    s
}

fn finite_difference(store: &EmbeddingStore, f: impl Fn(&EmbeddingStore) -> f64) -> Vec<f64> {
    let n = store.entity_matrix().len() + store.relation_matrix().len();
    (0..n).map(|i| (f(&perturbed(store, i, EPS)) - f(&perturbed(store, i, -EPS))) / (2.0 * EPS)).collect()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both vanish.
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-8 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn score_grad_dense(store: &EmbeddingStore, kind: &ModelKind, t: &Triple) -> Vec<f64> {
    let g = score_gradient(store, kind, t);
    let mut set = GradientSet::new(store.dim(), store.relation_dim());
    for (a, b) in set.entity.row_mut(t.head).iter_mut().zip(&g.head) {
        *a += b;
    }
    for (a, b) in set.entity.row_mut(t.tail).iter_mut().zip(&g.tail) {
        *a += b;
    }
    set.relation.row_mut(t.relation).copy_from_slice(&g.relation);
    dense(store, &set)
}

#[test]
fn score_gradients_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(11);
    for kind in kinds() {
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let store = init_model(&kind, 4, 2, 6, 1000 + i, 1.0).unwrap();
            // includes head == tail some of the time
            let t = Triple::new(rng.gen_range(0..4), rng.gen_range(0..2), rng.gen_range(0..4));
            let analytic = score_grad_dense(&store, &kind, &t);
            let numeric = finite_difference(&store, |s| score(s, &kind, &t));
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        assert!(worst <= TOLERANCE, "{kind}: worst relative error {worst:e}");
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(12);
    for kind in kinds() {
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let store = init_model(&kind, 6, 2, 4, 2000 + i, 1.0).unwrap();
            let triple = Triple::new(rng.gen_range(0..6), rng.gen_range(0..2), rng.gen_range(0..6));
            let direction = if i % 2 == 0 { Direction::Tail } else { Direction::Head };
            let example = Example { triple, direction };
            let negatives = NegativeBatch { candidates: (0..3).map(|_| rng.gen_range(0..6)).collect() };
            let config = LossConfig {
                gamma: rng.gen_range(-2.0..2.0),
                scheme: SubsamplingScheme::new(SchemeKind::Freq),
                noise: NoiseConfig { nu: 3, sans_alpha: 0.0, filter_false_negatives: false },
            };
            let (a, b) = (rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
            let loss = |s: &EmbeddingStore| example_loss(s, &kind, &example, a, b, &config, &negatives).unwrap().loss;
            let analytic = dense(&store, &example_loss(&store, &kind, &example, a, b, &config, &negatives).unwrap().grads);
            let numeric = finite_difference(&store, loss);
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        assert!(worst <= TOLERANCE, "{kind}: worst relative error {worst:e}");
    }
}

/// With self-adversarial weights the weights are constants: the gradient is
/// the weighted sum of the per-negative gradients, with weights evaluated at
/// the current scores.
#[test]
fn self_adversarial_gradient_treats_weights_as_constants() {
    let kind = ModelKind::DistMult;
    let store = init_model(&kind, 5, 1, 4, 3, 1.0).unwrap();
    let example = Example { triple: Triple::new(0, 0, 1), direction: Direction::Tail };
    let negatives = NegativeBatch { candidates: vec![2, 3, 4] };
    let alpha = 1.5;
    let config = LossConfig {
        gamma: 0.5,
        scheme: SubsamplingScheme::default(),
        noise: NoiseConfig { nu: 3, sans_alpha: alpha, filter_false_negatives: false },
    };
    let got = example_loss(&store, &kind, &example, 1.0, 1.0, &config, &negatives).unwrap();
    let neg_scores: Vec<f64> = [2, 3, 4].iter().map(|&e| score(&store, &kind, &Triple::new(0, 0, e))).collect();
    let weights = kgsub_core::sans_weights(&neg_scores, alpha);
    let frozen = |s: &EmbeddingStore| {
        let sp = |z: f64| (1.0 + z.exp()).ln();
        let pos = sp(-(score(s, &kind, &example.triple) + 0.5));
        pos + [2u32, 3, 4]
            .iter()
            .zip(&weights)
            .map(|(&e, w)| w * sp(score(s, &kind, &Triple::new(0, 0, e)) + 0.5))
            .sum::<f64>()
    };
    let numeric = finite_difference(&store, frozen);
    assert!(relative_error(&dense(&store, &got.grads), &numeric) <= TOLERANCE);
}
