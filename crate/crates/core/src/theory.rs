//! Numerical checks of the reasoning behind the weighted loss, on small
//! synthetic distributions where every expectation is an exact finite sum.
//!
//! Three facts are checked:
//!
//! * The sampled loss (pairs drawn from `p_d`, `nu` negatives from
//!   `p_n(y|x)`) is a Monte-Carlo estimate of
//!
//!   ```text
//!   L = sum_{x,y} [ A(x,y) p_d(x,y) softplus(-s-γ) + B(x) p_d(x) p_n(y|x) softplus(s+γ) ]
//!   ```
//!
//!   so its error shrinks like `1/sqrt(n)`, and the inner average over
//!   negatives shrinks like `1/sqrt(nu)`.
//! * With `A = p'_d(x,y)/p_d(x,y)` and `B = p'_d(x)/p_d(x)`, `L` under `p_d`
//!   equals the unweighted `L` under `p'_d`.
//! * When each pair is observed once and `p'_d(y|x)` does not depend on `y`,
//!   those recovered weights satisfy `A(x,y) = B(x)` (see the tests).

use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::loss::softplus;
use crate::rng;

/// Tolerance for "sums to one".
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;
/// Tolerance of the substitution identity.
pub const RECOVERY_TOLERANCE: f64 = 1e-12;
/// Accepted band for the fitted log-log error slope.
pub const SLOPE_BAND: (f64, f64) = (-0.65, -0.35);

/// Joint tables over a finite `X x Y`, row-major by `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDistribution {
    nx: usize,
    ny: usize,
    /// `p_d(x, y)`, the distribution the observations follow.
    observed: Vec<f64>,
    /// `p'_d(x, y)`, the distribution behind the observations.
    truth: Vec<f64>,
    /// `p_n(y | x)`, one normalized row per `x`.
    noise: Vec<f64>,
}

fn check_table(values: &[f64], expected_len: usize) -> Result<()> {
    if values.len() != expected_len {
        return Err(Error::LengthMismatch { expected: expected_len, actual: values.len() });
    }
    if let Some(&p) = values.iter().find(|&&p| !p.is_finite() || p < 0.0) {
        return Err(Error::NegativeProbability(p));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized(total));
    }
    Ok(())
}

fn normalized(mut values: Vec<f64>) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    for v in &mut values {
        *v /= total;
    }
    values
}

impl SyntheticDistribution {
    pub fn new(nx: usize, ny: usize, observed: Vec<f64>, truth: Vec<f64>, noise: Vec<f64>) -> Result<Self> {
        check_table(&observed, nx * ny)?;
        check_table(&truth, nx * ny)?;
        if noise.len() != nx * ny {
            return Err(Error::LengthMismatch { expected: nx * ny, actual: noise.len() });
        }
        for row in noise.chunks_exact(ny) {
            check_table(row, ny)?;
        }
        Ok(Self { nx, ny, observed, truth, noise })
    }

    /// Observed distribution from per-cell frequencies (`p_d = count / total`).
    pub fn from_counts(nx: usize, ny: usize, counts: &[u32], truth: Vec<f64>, noise: Vec<f64>) -> Result<Self> {
        let observed = normalized(counts.iter().map(|&c| f64::from(c)).collect());
        Self::new(nx, ny, observed, truth, noise)
    }

    /// Strictly positive random `p_d`, `p'_d` and `p_n`.
    pub fn random<R: Rng + ?Sized>(nx: usize, ny: usize, rng: &mut R) -> Self {
        let mut table = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(0.05..1.0)).collect() };
        let observed = normalized(table(nx * ny));
        let truth = normalized(table(nx * ny));
        let noise_raw = table(nx * ny);
        let noise = noise_raw.chunks_exact(ny).flat_map(|row| normalized(row.to_vec())).collect();
        Self { nx, ny, observed, truth, noise }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn observed(&self, x: usize, y: usize) -> f64 {
        self.observed[x * self.ny + y]
    }

    pub fn truth(&self, x: usize, y: usize) -> f64 {
        self.truth[x * self.ny + y]
    }

    pub fn noise(&self, x: usize, y: usize) -> f64 {
        self.noise[x * self.ny + y]
    }

    pub fn observed_marginal(&self, x: usize) -> f64 {
        self.observed[x * self.ny..(x + 1) * self.ny].iter().sum()
    }

    pub fn truth_marginal(&self, x: usize) -> f64 {
        self.truth[x * self.ny..(x + 1) * self.ny].iter().sum()
    }

    /// The same tables with `p'_d` in place of `p_d`.
    pub fn with_truth_observed(&self) -> Self {
        Self { observed: self.truth.clone(), ..self.clone() }
    }
}

/// `s(x, y)` over `X x Y`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    ny: usize,
    values: Vec<f64>,
}

impl ScoreTable {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::LengthMismatch { expected: nx * ny, actual: values.len() });
        }
        Ok(Self { ny, values })
    }

    pub fn constant(nx: usize, ny: usize, value: f64) -> Self {
        Self { ny, values: vec![value; nx * ny] }
    }

    pub fn random<R: Rng + ?Sized>(nx: usize, ny: usize, spread: f64, rng: &mut R) -> Self {
        Self { ny, values: (0..nx * ny).map(|_| rng.gen_range(-spread..spread)).collect() }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.ny + y]
    }
}

/// `A(x, y)` per cell and `B(x)` per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CellWeights {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl CellWeights {
    pub fn ones(nx: usize, ny: usize) -> Self {
        Self { positive: vec![1.0; nx * ny], negative: vec![1.0; nx] }
    }
}

/// The exact expected weighted loss under `p_d`.
pub fn exact_expected_loss(
    dist: &SyntheticDistribution,
    scores: &ScoreTable,
    gamma: f64,
    weights: &CellWeights,
) -> f64 {
    let mut total = 0.0;
    for x in 0..dist.nx {
        let px = dist.observed_marginal(x);
        for y in 0..dist.ny {
            let s = scores.get(x, y) + gamma;
            total += softplus(-s) * weights.positive[x * dist.ny + y] * dist.observed(x, y)
                + dist.noise(x, y) * softplus(s) * weights.negative[x] * px;
        }
    }
    total
}

/// Samplers for `(x, y) ~ p_d` and `y ~ p_n(. | x)`, built once.
pub struct LossSampler<'a> {
    dist: &'a SyntheticDistribution,
    pairs: WeightedIndex<f64>,
    noise: Vec<WeightedIndex<f64>>,
}

impl<'a> LossSampler<'a> {
    pub fn new(dist: &'a SyntheticDistribution) -> Self {
        let pairs = WeightedIndex::new(&dist.observed).expect("observed table is normalized");
        let noise = dist
            .noise
            .chunks_exact(dist.ny)
            .map(|row| WeightedIndex::new(row).expect("noise rows are normalized"))
            .collect();
        Self { dist, pairs, noise }
    }

    /// The empirical weighted loss over `n` pairs with `nu` negatives each.
    pub fn sampled_loss<R: Rng + ?Sized>(
        &self,
        scores: &ScoreTable,
        gamma: f64,
        weights: &CellWeights,
        n: usize,
        nu: usize,
        rng: &mut R,
    ) -> f64 {
        let ny = self.dist.ny;
        let mut total = 0.0;
        for _ in 0..n {
            let cell = self.pairs.sample(rng);
            let (x, y) = (cell / ny, cell % ny);
            let positive = weights.positive[cell] * softplus(-(scores.get(x, y) + gamma));
            let mut inner = 0.0;
            for _ in 0..nu {
                let yi = self.noise[x].sample(rng);
                inner += softplus(scores.get(x, yi) + gamma);
            }
            total += positive + weights.negative[x] * inner / nu as f64;
        }
        total / n as f64
    }

    /// `1/nu sum_i softplus(s(x, y_i) + γ)` with `y_i ~ p_n(. | x)`.
    pub fn sampled_inner<R: Rng + ?Sized>(&self, scores: &ScoreTable, gamma: f64, x: usize, nu: usize, rng: &mut R) -> f64 {
        let mut inner = 0.0;
        for _ in 0..nu {
            inner += softplus(scores.get(x, self.noise[x].sample(rng)) + gamma);
        }
        inner / nu as f64
    }
}

/// One-shot form of [`LossSampler::sampled_loss`].
pub fn sampled_loss<R: Rng + ?Sized>(
    dist: &SyntheticDistribution,
    scores: &ScoreTable,
    gamma: f64,
    weights: &CellWeights,
    n: usize,
    nu: usize,
    rng: &mut R,
) -> f64 {
    LossSampler::new(dist).sampled_loss(scores, gamma, weights, n, nu, rng)
}

/// `sum_y p_n(y | x) softplus(s(x, y) + γ)`.
pub fn exact_inner(dist: &SyntheticDistribution, scores: &ScoreTable, gamma: f64, x: usize) -> f64 {
    (0..dist.ny).map(|y| dist.noise(x, y) * softplus(scores.get(x, y) + gamma)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConvergenceRow {
    pub samples: usize,
    pub mean_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln(error)` against `ln(samples)`; `None` when
    /// some error is zero.
    pub slope: Option<f64>,
}

impl ConvergenceReport {
    fn from_rows(rows: Vec<ConvergenceRow>) -> Self {
        let points: Vec<(f64, f64)> =
            rows.iter().map(|r| (r.samples as f64, r.mean_abs_error)).collect();
        Self { slope: log_log_slope(&points), rows }
    }

    pub fn slope_in_band(&self) -> bool {
        self.slope.is_some_and(|s| s >= SLOPE_BAND.0 && s <= SLOPE_BAND.1)
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (libm::log(x), libm::log(y))).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Mean absolute error of the sampled loss against the exact loss for each
/// sample count in `schedule`, averaged over `trials` runs. Trial `k` at
/// schedule point `i` draws from its own stream derived from `root_seed`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_report(
    dist: &SyntheticDistribution,
    scores: &ScoreTable,
    gamma: f64,
    weights: &CellWeights,
    schedule: &[usize],
    trials: usize,
    nu: usize,
    root_seed: u64,
) -> Result<ConvergenceReport> {
    if schedule.len() < 3 {
        return Err(Error::ScheduleTooShort(schedule.len()));
    }
    let exact = exact_expected_loss(dist, scores, gamma, weights);
    let sampler = LossSampler::new(dist);
    let rows = schedule
        .iter()
        .map(|&n| {
            let err: f64 = (0..trials)
                .map(|k| {
                    let mut rng = rng::stream(root_seed, n as u64, k as u64);
                    (sampler.sampled_loss(scores, gamma, weights, n, nu, &mut rng) - exact).abs()
                })
                .sum();
            ConvergenceRow { samples: n, mean_abs_error: err / trials as f64 }
        })
        .collect();
    Ok(ConvergenceReport::from_rows(rows))
}

/// As [`convergence_report`] but for the inner average over `nu` negatives
/// of a fixed query `x`, with `nu` taken from `schedule`.
pub fn inner_convergence_report(
    dist: &SyntheticDistribution,
    scores: &ScoreTable,
    gamma: f64,
    x: usize,
    schedule: &[usize],
    trials: usize,
    root_seed: u64,
) -> Result<ConvergenceReport> {
    if schedule.len() < 3 {
        return Err(Error::ScheduleTooShort(schedule.len()));
    }
    let exact = exact_inner(dist, scores, gamma, x);
    let sampler = LossSampler::new(dist);
    let rows = schedule
        .iter()
        .map(|&nu| {
            let err: f64 = (0..trials)
                .map(|k| {
                    let mut rng = rng::stream(root_seed ^ 0x5eed, nu as u64, k as u64);
                    (sampler.sampled_inner(scores, gamma, x, nu, &mut rng) - exact).abs()
                })
                .sum();
            ConvergenceRow { samples: nu, mean_abs_error: err / trials as f64 }
        })
        .collect();
    Ok(ConvergenceReport::from_rows(rows))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryReport {
    pub weights: CellWeights,
    /// Weighted loss under `p_d`.
    pub weighted: f64,
    /// Unweighted loss under `p'_d`.
    pub truth: f64,
    pub difference: f64,
    pub passed: bool,
}

/// `A = p'_d(x,y) / p_d(x,y)`, `B = p'_d(x) / p_d(x)`. Cells with
/// `p'_d = p_d = 0` get weight 0.
pub fn recover_weights(dist: &SyntheticDistribution) -> Result<CellWeights> {
    let ratio = |truth: f64, observed: f64| {
        if observed > 0.0 {
            Some(truth / observed)
        } else if truth == 0.0 {
            Some(0.0)
        } else {
            None
        }
    };
    let mut positive = vec![0.0; dist.nx * dist.ny];
    let mut negative = vec![0.0; dist.nx];
    for x in 0..dist.nx {
        for y in 0..dist.ny {
            positive[x * dist.ny + y] =
                ratio(dist.truth(x, y), dist.observed(x, y)).ok_or(Error::WeightsUndefined { x, y })?;
        }
        negative[x] = ratio(dist.truth_marginal(x), dist.observed_marginal(x))
            .ok_or(Error::WeightsUndefined { x, y: 0 })?;
    }
    Ok(CellWeights { positive, negative })
}

/// Checks that reweighting `p_d` by the recovered `A`, `B` reproduces the
/// unweighted loss under `p'_d` to [`RECOVERY_TOLERANCE`].
pub fn weight_recovery_check(dist: &SyntheticDistribution, scores: &ScoreTable, gamma: f64) -> Result<RecoveryReport> {
    let weights = recover_weights(dist)?;
    let weighted = exact_expected_loss(dist, scores, gamma, &weights);
    let truth = exact_expected_loss(&dist.with_truth_observed(), scores, gamma, &CellWeights::ones(dist.nx, dist.ny));
    let difference = (weighted - truth).abs();
    Ok(RecoveryReport { weights, weighted, truth, difference, passed: difference <= RECOVERY_TOLERANCE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform(nx: usize, ny: usize) -> SyntheticDistribution {
        let cells = vec![1.0 / (nx * ny) as f64; nx * ny];
        let noise = vec![1.0 / ny as f64; nx * ny];
        SyntheticDistribution::new(nx, ny, cells.clone(), cells, noise).unwrap()
    }

    #[test]
    fn uniform_zero_scores() {
        let d = uniform(4, 4);
        let l = exact_expected_loss(&d, &ScoreTable::constant(4, 4, 0.0), 0.0, &CellWeights::ones(4, 4));
        assert!((l - 2.0 * LN_2).abs() < 1e-14);
    }

    #[test]
    fn doubling_a_doubles_the_positive_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = SyntheticDistribution::random(3, 5, &mut rng);
        let s = ScoreTable::random(3, 5, 2.0, &mut rng);
        let only_pos = CellWeights { positive: vec![1.0; 15], negative: vec![0.0; 3] };
        let doubled = CellWeights { positive: vec![2.0; 15], negative: vec![0.0; 3] };
        assert_eq!(exact_expected_loss(&d, &s, 0.3, &doubled), 2.0 * exact_expected_loss(&d, &s, 0.3, &only_pos));
    }

    #[test]
    fn validation() {
        assert!(matches!(
            SyntheticDistribution::new(1, 2, vec![0.5, 0.6], vec![0.5, 0.5], vec![0.5, 0.5]),
            Err(Error::NotNormalized(_))
        ));
        assert!(matches!(
            SyntheticDistribution::new(1, 2, vec![1.5, -0.5], vec![0.5, 0.5], vec![0.5, 0.5]),
            Err(Error::NegativeProbability(_))
        ));
    }

    #[test]
    fn point_mass_has_no_sampling_error() {
        let d = SyntheticDistribution::new(2, 2, vec![0.0, 1.0, 0.0, 0.0], vec![0.25; 4], vec![1.0, 0.0, 1.0, 0.0])
            .unwrap();
        let s = ScoreTable::new(2, 2, vec![0.3, -1.2, 0.7, 2.0]).unwrap();
        let w = CellWeights::ones(2, 2);
        let exact = exact_expected_loss(&d, &s, 0.5, &w);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in [1, 10, 1000] {
            assert!((sampled_loss(&d, &s, 0.5, &w, n, 3, &mut rng) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_sampling_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = SyntheticDistribution::random(3, 3, &mut rng);
        let s = ScoreTable::random(3, 3, 1.0, &mut rng);
        let w = CellWeights::ones(3, 3);
        let a = sampled_loss(&d, &s, 0.0, &w, 500, 2, &mut ChaCha8Rng::seed_from_u64(7));
        let b = sampled_loss(&d, &s, 0.0, &w, 500, 2, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn short_schedule_is_rejected() {
        let d = uniform(2, 2);
        let s = ScoreTable::constant(2, 2, 0.0);
        assert_eq!(
            convergence_report(&d, &s, 0.0, &CellWeights::ones(2, 2), &[10, 100], 2, 1, 0),
            Err(Error::ScheduleTooShort(2))
        );
    }

    #[test]
    fn masked_cell_leaves_weights_undefined() {
        let d = SyntheticDistribution::new(1, 2, vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        assert_eq!(recover_weights(&d), Err(Error::WeightsUndefined { x: 0, y: 1 }));
    }

    #[test]
    fn identical_tables_give_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = SyntheticDistribution::random(4, 3, &mut rng).with_truth_observed();
        let w = recover_weights(&d).unwrap();
        assert!(w.positive.iter().chain(&w.negative).all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&n: &f64| (n, 3.0 / libm::sqrt(n))).collect();
        assert!((log_log_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&[(1.0, 0.0), (2.0, 1.0)]), None);
    }
}
