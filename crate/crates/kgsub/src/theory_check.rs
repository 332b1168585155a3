//! The `theory-check` battery: Monte-Carlo convergence of the sampled loss
//! (over training pairs and over negatives) and the reweighting identity on
//! random synthetic distributions.

use kgsub_core::rng;
use kgsub_core::theory::{
    convergence_report, inner_convergence_report, weight_recovery_check, CellWeights, ConvergenceReport, ScoreTable,
    SyntheticDistribution, RECOVERY_TOLERANCE, SLOPE_BAND,
};
use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryOptions {
    pub nx: usize,
    pub ny: usize,
    pub gamma: f64,
    pub schedule: Vec<usize>,
    pub trials: usize,
    /// Negatives per sampled pair in the outer convergence run.
    pub nu: usize,
    pub recovery_instances: usize,
    pub seed: u64,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self {
            nx: 8,
            ny: 8,
            gamma: 0.0,
            schedule: vec![100, 1_000, 10_000, 100_000],
            trials: 20,
            nu: 4,
            recovery_instances: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub name: &'static str,
    pub rows: Vec<(usize, f64)>,
    pub slope: Option<f64>,
    pub passed: bool,
}

impl ConvergenceSummary {
    fn new(name: &'static str, report: ConvergenceReport) -> Self {
        Self {
            name,
            rows: report.rows.iter().map(|r| (r.samples, r.mean_abs_error)).collect(),
            slope: report.slope,
            passed: report.slope_in_band(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryOutcome {
    pub convergence: Vec<ConvergenceSummary>,
    pub recovery_instances: usize,
    pub recovery_max_difference: f64,
    pub recovery_passed: bool,
}

impl TheoryOutcome {
    pub fn passed(&self) -> bool {
        self.recovery_passed && self.convergence.iter().all(|c| c.passed)
    }

    /// `check<TAB>samples<TAB>mean_abs_error` rows, one per schedule point.
    pub fn tsv(&self) -> String {
        let mut s = String::from("check\tsamples\tmean_abs_error\n");
        for c in &self.convergence {
            for (n, e) in &c.rows {
                s.push_str(&format!("{}\t{n}\t{e:e}\n", c.name));
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut s = String::new();
        for c in &self.convergence {
            let slope = c.slope.map_or("undefined".to_string(), |v| format!("{v:.3}"));
            s.push_str(&format!(
                "{} {}: log-log slope {slope}, band [{}, {}]\n",
                verdict(c.passed),
                c.name,
                SLOPE_BAND.0,
                SLOPE_BAND.1
            ));
        }
        s.push_str(&format!(
            "{} reweighting identity: {} instances, max |difference| {:.3e} (tolerance {RECOVERY_TOLERANCE:e})\n",
            verdict(self.recovery_passed),
            self.recovery_instances,
            self.recovery_max_difference
        ));
        s
    }
}

pub fn run(options: &TheoryOptions) -> Result<TheoryOutcome> {
    let mut setup = rng::stream(options.seed, 0, 0);
    let dist = SyntheticDistribution::random(options.nx, options.ny, &mut setup);
    let scores = ScoreTable::random(options.nx, options.ny, 2.0, &mut setup);
    let weights = CellWeights::ones(options.nx, options.ny);

    let outer = convergence_report(
        &dist,
        &scores,
        options.gamma,
        &weights,
        &options.schedule,
        options.trials,
        options.nu,
        options.seed,
    )?;
    let inner = inner_convergence_report(&dist, &scores, options.gamma, 0, &options.schedule, options.trials, options.seed)?;

    let mut max_difference = 0.0f64;
    let mut passed = true;
    for i in 0..options.recovery_instances {
        let mut rng = rng::stream(options.seed, 1, i as u64);
        let d = SyntheticDistribution::random(options.nx, options.ny, &mut rng);
        let s = ScoreTable::random(options.nx, options.ny, 3.0, &mut rng);
        let report = weight_recovery_check(&d, &s, options.gamma)?;
        max_difference = max_difference.max(report.difference);
        passed &= report.passed;
    }

    Ok(TheoryOutcome {
        convergence: vec![
            ConvergenceSummary::new("pairs", outer),
            ConvergenceSummary::new("negatives", inner),
        ],
        recovery_instances: options.recovery_instances,
        recovery_max_difference: max_difference,
        recovery_passed: passed,
    })
}
