//! Monte-Carlo convergence and the reweighting identity on synthetic tables.

use kgsub_core::rng;
use kgsub_core::theory::{
    convergence_report, exact_expected_loss, inner_convergence_report, recover_weights, sampled_loss,
    weight_recovery_check, CellWeights, ScoreTable, SyntheticDistribution, SLOPE_BAND,
};
use kgsub_core::{compute_weights, count_frequencies, Dataset, Error, QueryPart, SchemeKind, SubsamplingScheme, Triple};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

const SCHEDULE: [usize; 4] = [100, 1_000, 10_000, 100_000];

fn softplus(z: f64) -> f64 {
    (1.0 + z.exp()).ln()
}

/// Brute-force expectation written without the crate's marginal helpers.
fn brute_force(dist: &SyntheticDistribution, scores: &ScoreTable, gamma: f64, w: &CellWeights) -> f64 {
    let (nx, ny) = (dist.nx(), dist.ny());
    let mut total = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let p = dist.observed(x, y);
            let inner: f64 = (0..ny).map(|yi| dist.noise(x, yi) * softplus(scores.get(x, yi) + gamma)).sum();
            total += p * (w.positive[x * ny + y] * softplus(-(scores.get(x, y) + gamma)) + w.negative[x] * inner);
        }
    }
    total
}

#[test]
fn exact_loss_matches_brute_force() {
    let mut r = StdRng::seed_from_u64(5);
    for _ in 0..50 {
        let (nx, ny) = (r.gen_range(1..6), r.gen_range(1..6));
        let d = SyntheticDistribution::random(nx, ny, &mut r);
        let s = ScoreTable::random(nx, ny, 4.0, &mut r);
        let w = CellWeights {
            positive: (0..nx * ny).map(|_| r.gen_range(0.1..3.0)).collect(),
            negative: (0..nx).map(|_| r.gen_range(0.1..3.0)).collect(),
        };
        let gamma = r.gen_range(-1.0..1.0);
        let (got, want) = (exact_expected_loss(&d, &s, gamma, &w), brute_force(&d, &s, gamma, &w));
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn sampled_loss_converges_at_root_n() {
    let mut setup = rng::stream(3, 0, 0);
    let d = SyntheticDistribution::random(8, 8, &mut setup);
    let s = ScoreTable::random(8, 8, 2.0, &mut setup);
    let report = convergence_report(&d, &s, 0.0, &CellWeights::ones(8, 8), &SCHEDULE, 20, 4, 3).unwrap();
    let slope = report.slope.unwrap();
    assert!(report.slope_in_band(), "slope {slope} outside {SLOPE_BAND:?}");
}

#[test]
fn inner_average_converges_at_root_nu() {
    let mut setup = rng::stream(4, 0, 0);
    let d = SyntheticDistribution::random(4, 10, &mut setup);
    let s = ScoreTable::random(4, 10, 2.0, &mut setup);
    for x in 0..4 {
        let report = inner_convergence_report(&d, &s, 0.5, x, &SCHEDULE, 20, 4).unwrap();
        assert!(report.slope_in_band(), "x = {x}: slope {:?}", report.slope);
    }
}

#[test]
fn constant_integrand_has_no_error() {
    let mut setup = rng::stream(6, 0, 0);
    let d = SyntheticDistribution::random(3, 4, &mut setup);
    let s = ScoreTable::constant(3, 4, 0.7);
    let report = convergence_report(&d, &s, 0.2, &CellWeights::ones(3, 4), &[10, 100, 1000], 5, 3, 6).unwrap();
    assert!(report.rows.iter().all(|r| r.mean_abs_error < 1e-12), "{:?}", report.rows);
}

#[test]
fn point_mass_sampling_is_exact() {
    let mut observed = vec![0.0; 6];
    observed[4] = 1.0;
    let mut noise = vec![0.0; 6];
    for x in 0..2 {
        noise[x * 3 + 2] = 1.0;
    }
    let d = SyntheticDistribution::new(2, 3, observed, vec![1.0 / 6.0; 6], noise).unwrap();
    let s = ScoreTable::new(2, 3, vec![0.1, -0.4, 2.2, 1.3, -3.0, 0.9]).unwrap();
    let w = CellWeights::ones(2, 3);
    let exact = exact_expected_loss(&d, &s, 0.0, &w);
    // x = 1, y = 1 with negative y = 2
    assert!((exact - (softplus(3.0) + softplus(0.9))).abs() < 1e-14);
    let mut r = StdRng::seed_from_u64(0);
    for n in [1, 7, 500] {
        assert!((sampled_loss(&d, &s, 0.0, &w, n, 5, &mut r) - exact).abs() < 1e-12);
    }
}

#[test]
fn reweighting_recovers_the_true_loss() {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let mut r = rng::stream(9, 1, i);
        let (nx, ny) = (r.gen_range(2..9), r.gen_range(2..9));
        let d = SyntheticDistribution::random(nx, ny, &mut r);
        let s = ScoreTable::random(nx, ny, 3.0, &mut r);
        let gamma = r.gen_range(-1.0..1.0);
        let report = weight_recovery_check(&d, &s, gamma).unwrap();
        // independent evaluation of the unweighted loss under the true distribution
        let truth = brute_force(&d.with_truth_observed(), &s, gamma, &CellWeights::ones(nx, ny));
        assert!((report.truth - truth).abs() < 1e-12);
        assert!(report.passed, "instance {i}: {report:?}");
        worst = worst.max(report.difference);
    }
    assert!(worst <= 1e-12);
}

#[test]
fn unobserved_cell_with_true_mass_has_no_weight() {
    let d = SyntheticDistribution::new(1, 2, vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
    assert_eq!(recover_weights(&d), Err(Error::WeightsUndefined { x: 0, y: 1 }));
}

/// With every (query, answer) pair seen once and the true answer distribution
/// uniform over the observed answers of a query, the true joint differs from
/// the observed one only through the query marginal. If that marginal is
/// proportional to the square root of the query count, the recovered weights
/// are exactly the `Uniq` weights at exponent one half, with `A = B`.
#[test]
fn uniq_weights_are_recovered_on_kg_style_data() {
    let mut r = StdRng::seed_from_u64(21);
    for _ in 0..20 {
        let mut set = std::collections::BTreeSet::new();
        while set.len() < 40 {
            // a skewed head distribution gives varied query counts
            let h = (r.gen_range(0.0f64..1.0).powi(3) * 10.0) as u32;
            set.insert((h, r.gen_range(0..2u32), r.gen_range(0..10u32)));
        }
        let train: Vec<Triple> = set.into_iter().map(|(h, rel, t)| Triple::new(h, rel, t)).collect();
        let ds = Dataset::from_ids(10, 2, train, vec![], vec![]).unwrap();

        let mut queries: BTreeMap<QueryPart, usize> = BTreeMap::new();
        for ex in ds.examples() {
            let next = queries.len();
            queries.entry(ex.query()).or_insert(next);
        }
        let (nx, ny) = (queries.len(), 10);
        let mut counts = vec![0u32; nx * ny];
        for ex in ds.examples() {
            counts[queries[&ex.query()] * ny + ex.answer() as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c <= 1));
        let answers: Vec<f64> = (0..nx).map(|x| counts[x * ny..(x + 1) * ny].iter().sum::<u32>() as f64).collect();
        let norm: f64 = answers.iter().map(|n| n.sqrt()).sum();
        let truth: Vec<f64> =
            (0..nx * ny).map(|c| f64::from(counts[c]) * answers[c / ny].sqrt() / norm / answers[c / ny]).collect();
        let noise = vec![1.0 / ny as f64; nx * ny];
        let d = SyntheticDistribution::from_counts(nx, ny, &counts, truth, noise).unwrap();
        let recovered = recover_weights(&d).unwrap();

        let scheme = SubsamplingScheme::new(SchemeKind::Uniq);
        let w = compute_weights(&scheme, &ds, &count_frequencies(&ds)).unwrap();
        for (i, ex) in ds.examples().enumerate() {
            let x = queries[&ex.query()];
            let a = recovered.positive[x * ny + ex.answer() as usize];
            assert!((a - recovered.negative[x]).abs() < 1e-12);
            assert!((w.positive[i] - a).abs() < 1e-12, "{} vs {a}", w.positive[i]);
            assert!((w.negative[i] - recovered.negative[x]).abs() < 1e-12);
        }
    }
}
