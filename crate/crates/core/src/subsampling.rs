//! Subsampling weights `A(x, y)` (positive term) and `B(x)` (negative term).
//!
//! Every scheme has the same shape: an inverse power of a frequency,
//! rescaled so that the weights average to one over all training examples:
//!
//! ```text
//! w_i = c_i^(-p) |D| / sum_j c_j^(-p)
//! ```
//!
//! | scheme | `A` uses      | `B` uses      |
//! |--------|---------------|---------------|
//! | None   | 1             | 1             |
//! | Base   | `#(x, y)`     | `#(x, y)`     |
//! | Freq   | `#(x, y)`     | `#x`          |
//! | Uniq   | `#x`          | `#x`          |
//!
//! `Base` ties the negative weight to the whole triple and so does not match
//! the weighted loss structure, where `B` may only depend on `x`; it is kept
//! as the word2vec-style baseline. The normalizer of the `#x` weights sums
//! one term per example (the multiset of queries in `D`), which is what keeps
//! their mean at exactly one.

use alloc::vec::Vec;
use core::fmt;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::freq::FrequencyTable;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SchemeKind {
    #[default]
    None,
    Base,
    Freq,
    Uniq,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [SchemeKind::None, SchemeKind::Base, SchemeKind::Freq, SchemeKind::Uniq];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::None => "none",
            SchemeKind::Base => "base",
            SchemeKind::Freq => "freq",
            SchemeKind::Uniq => "uniq",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::None => "None",
            SchemeKind::Base => "Base",
            SchemeKind::Freq => "Freq",
            SchemeKind::Uniq => "Uniq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsamplingScheme {
    pub kind: SchemeKind,
    /// Power applied to the frequency, `0.5` for the square root.
    pub exponent: f64,
}

impl Default for SubsamplingScheme {
    fn default() -> Self {
        Self { kind: SchemeKind::None, exponent: 0.5 }
    }
}

impl SubsamplingScheme {
    pub fn new(kind: SchemeKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn with_exponent(mut self, exponent: f64) -> Self {
        self.exponent = exponent;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent <= 1.0) {
            return Err(Error::InvalidExponent(self.exponent));
        }
        Ok(())
    }
}

/// Per-example weights, indexed by example id (see [`Dataset::example`]).
#[derive(Clone, Debug, PartialEq)]
pub struct SubsamplingWeights {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl SubsamplingWeights {
    pub fn ones(num_examples: usize) -> Self {
        Self { positive: alloc::vec![1.0; num_examples], negative: alloc::vec![1.0; num_examples] }
    }

    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }

    /// `(A, B)` for one example.
    pub fn get(&self, example: usize) -> (f64, f64) {
        (self.positive[example], self.negative[example])
    }
}

/// `c_i^(-p) n / sum_j c_j^(-p)` for every count. Counts must be positive.
pub fn normalized_inverse_power(counts: &[f64], exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = counts.iter().map(|&c| inverse_power(c, exponent)).collect();
    let total: f64 = raw.iter().sum();
    let n = raw.len() as f64;
    raw.into_iter().map(|r| r * n / total).collect()
}

fn inverse_power(count: f64, exponent: f64) -> f64 {
    if exponent == 0.5 {
        1.0 / libm::sqrt(count)
    } else {
        libm::pow(count, -exponent)
    }
}

/// Computes `A` and `B` for every directed training example of `dataset`.
pub fn compute_weights(
    scheme: &SubsamplingScheme,
    dataset: &Dataset,
    table: &FrequencyTable,
) -> Result<SubsamplingWeights> {
    scheme.validate()?;
    let n = dataset.num_examples();
    if n == 0 {
        return Err(Error::EmptyTrainingSplit);
    }
    if scheme.kind == SchemeKind::None {
        return Ok(SubsamplingWeights::ones(n));
    }

    let pair_counts = || -> Result<Vec<f64>> {
        dataset.examples().map(|ex| table.triple_freq(&ex.triple).map(f64::from)).collect()
    };
    let query_counts = || -> Result<Vec<f64>> {
        dataset.examples().map(|ex| table.query_freq(&ex.query()).map(f64::from)).collect()
    };

    let (positive, negative) = match scheme.kind {
        SchemeKind::None => unreachable!(),
        SchemeKind::Base => {
            let a = normalized_inverse_power(&pair_counts()?, scheme.exponent);
            (a.clone(), a)
        }
        SchemeKind::Freq => (
            normalized_inverse_power(&pair_counts()?, scheme.exponent),
            normalized_inverse_power(&query_counts()?, scheme.exponent),
        ),
        SchemeKind::Uniq => {
            let b = normalized_inverse_power(&query_counts()?, scheme.exponent);
            (b.clone(), b)
        }
    };
    Ok(SubsamplingWeights { positive, negative })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { min: f64::NAN, max: f64::NAN, mean: f64::NAN, stddev: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            stddev: libm::sqrt(var),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct WeightSummary {
    pub positive: Stats,
    pub negative: Stats,
}

pub fn weight_summary(weights: &SubsamplingWeights) -> WeightSummary {
    WeightSummary { positive: Stats::of(&weights.positive), negative: Stats::of(&weights.negative) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Triple;
    use crate::freq::count_frequencies;
    use alloc::vec;
    use proptest::prelude::*;

    fn weights(kind: SchemeKind, ds: &Dataset) -> SubsamplingWeights {
        compute_weights(&SubsamplingScheme::new(kind), ds, &count_frequencies(ds)).unwrap()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn hand_evaluated_normalization() {
        let w = normalized_inverse_power(&[1.0, 4.0], 0.5);
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
        let s = Stats::of(&w);
        assert!((s.mean - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_pattern_gives_unit_weights() {
        // a perfect matching: every (h, r) and (r, t) key occurs once
        let train = (0..6).map(|i| Triple::new(i, 0, i + 6)).collect();
        let ds = Dataset::from_ids(12, 1, train, vec![], vec![]).unwrap();
        for kind in SchemeKind::ALL {
            let w = weights(kind, &ds);
            assert!(w.positive.iter().chain(&w.negative).all(|&x| (x - 1.0).abs() < 1e-12), "{kind}");
        }
    }

    #[test]
    fn none_is_exactly_one() {
        let ds = Dataset::from_ids(3, 1, vec![Triple::new(0, 0, 1), Triple::new(0, 0, 2)], vec![], vec![]).unwrap();
        let w = weights(SchemeKind::None, &ds);
        assert!(w.positive.iter().chain(&w.negative).all(|&x| x == 1.0));
        let s = weight_summary(&w);
        assert_eq!((s.positive.min, s.positive.max, s.negative.stddev), (1.0, 1.0, 0.0));
    }

    #[test]
    fn freq_uses_query_counts_for_b() {
        // (0,r,1), (0,r,2): #(0,r)=2, #(r,1)=#(r,2)=1, pair freq 3 for both
        let ds = Dataset::from_ids(3, 1, vec![Triple::new(0, 0, 1), Triple::new(0, 0, 2)], vec![], vec![]).unwrap();
        let w = weights(SchemeKind::Freq, &ds);
        assert!(w.positive.iter().all(|&a| (a - 1.0).abs() < 1e-12));
        // query counts per example: [2, 1, 2, 1]
        let expect = normalized_inverse_power(&[2.0, 1.0, 2.0, 1.0], 0.5);
        assert_eq!(w.negative, expect);
        assert!(w.negative[0] < w.negative[1]);
    }

    #[test]
    fn bad_exponent() {
        let ds = Dataset::from_ids(2, 1, vec![Triple::new(0, 0, 1)], vec![], vec![]).unwrap();
        let table = count_frequencies(&ds);
        for e in [0.0, -0.5, 1.5, f64::NAN] {
            let scheme = SubsamplingScheme::new(SchemeKind::Freq).with_exponent(e);
            assert!(matches!(compute_weights(&scheme, &ds, &table), Err(Error::InvalidExponent(_))));
        }
    }

    #[test]
    fn singleton_queries_make_uniq_trivial() {
        let train = (0..5).map(|i| Triple::new(i, i % 2, 9 - i)).collect();
        let ds = Dataset::from_ids(10, 2, train, vec![], vec![]).unwrap();
        let w = weights(SchemeKind::Uniq, &ds);
        assert!(w.positive.iter().all(|&a| (a - 1.0).abs() < 1e-12));
    }

    fn dataset() -> impl Strategy<Value = Dataset> {
        proptest::collection::btree_set((0u32..10, 0u32..3, 0u32..10), 1..80).prop_map(|set| {
            let train = set.into_iter().map(|(h, r, t)| Triple::new(h, r, t)).collect();
            Dataset::from_ids(10, 3, train, vec![], vec![]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn every_scheme_has_unit_mean(ds in dataset(), exponent in 0.05f64..=1.0) {
            for kind in SchemeKind::ALL {
                let scheme = SubsamplingScheme::new(kind).with_exponent(exponent);
                let w = compute_weights(&scheme, &ds, &count_frequencies(&ds)).unwrap();
                prop_assert_eq!(w.len(), ds.num_examples());
                prop_assert!((mean(&w.positive) - 1.0).abs() < 1e-9);
                prop_assert!((mean(&w.negative) - 1.0).abs() < 1e-9);
                prop_assert!(w.positive.iter().chain(&w.negative).all(|x| x.is_finite() && *x > 0.0));
                if matches!(kind, SchemeKind::Base | SchemeKind::Uniq) {
                    prop_assert_eq!(&w.positive, &w.negative);
                }
            }
        }

        #[test]
        fn rarer_pairs_weigh_more(ds in dataset()) {
            let table = count_frequencies(&ds);
            for kind in [SchemeKind::Base, SchemeKind::Freq] {
                let w = compute_weights(&SubsamplingScheme::new(kind), &ds, &table).unwrap();
                let ex: Vec<_> = ds.examples().collect();
                for i in 0..ex.len() {
                    for j in 0..ex.len() {
                        let (fi, fj) = (table.triple_freq(&ex[i].triple).unwrap(), table.triple_freq(&ex[j].triple).unwrap());
                        if fi < fj {
                            prop_assert!(w.positive[i] > w.positive[j]);
                        }
                    }
                }
            }
        }
    }
}
