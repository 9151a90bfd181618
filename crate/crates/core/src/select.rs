//! Forward selection of the number of factors: test 0, 1, 2, ... factors and
//! stop at the first model that is not rejected.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lrt::{
    k_factor_statistic_from_cov, no_factor_statistic, Calibration, Correction, TestOptions,
    TestResult,
};
use crate::mle::{factor_df, MleOptions};
use crate::stats::{sample_covariance, DataMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    NonRejection,
    /// Every order up to `k_max` was rejected.
    DfExhausted,
    /// The fit at the last trail entry did not converge.
    MleFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrailEntry {
    pub k: usize,
    pub result: TestResult,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub k_hat: usize,
    pub trail: Vec<TrailEntry>,
    pub stopped_reason: StopReason,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    pub alpha: f64,
    pub correction: Correction,
    /// Defaults to [`max_testable_k`].
    pub k_max: Option<usize>,
    pub mle: MleOptions,
}

impl SelectOptions {
    pub fn new(alpha: f64, correction: Correction) -> Self {
        Self { alpha, correction, k_max: None, mle: MleOptions::default() }
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = Some(k_max);
        self
    }
}

/// Largest `k` whose k-factor test has at least one degree of freedom.
pub fn max_testable_k(p: usize) -> usize {
    (0..p).take_while(|&k| factor_df(p, k) >= 1).last().unwrap_or(0)
}

pub fn select_num_factors(data: &DataMatrix, opts: &SelectOptions) -> Result<SelectionResult> {
    let mut out = select_num_factors_many(data, opts.alpha, &[opts.correction], opts.k_max, &opts.mle)?;
    Ok(out.remove(0))
}

/// Runs the procedure once per correction, fitting each factor order at most once.
pub fn select_num_factors_many(
    data: &DataMatrix,
    alpha: f64,
    corrections: &[Correction],
    k_max: Option<usize>,
    mle: &MleOptions,
) -> Result<Vec<SelectionResult>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let p = data.dim();
    let k_max = k_max.map_or(max_testable_k(p), |k| k.min(max_testable_k(p)));

    let mut stats = vec![no_factor_statistic(data)?];
    let mut cov = None;
    let mut results = Vec::with_capacity(corrections.len());
    for &correction in corrections {
        let test_opts = TestOptions::new(correction, Calibration::ChiSquare, alpha);
        let mut trail: Vec<TrailEntry> = Vec::new();
        let mut stop = None;
        for k in 0..=k_max {
            if stats.len() <= k {
                if cov.is_none() {
                    cov = Some(sample_covariance(data)?);
                }
                stats.push(k_factor_statistic_from_cov(cov.as_ref().unwrap(), k, mle)?);
            }
            let result = stats[k].evaluate(&test_opts)?;
            let converged = result.mle.as_ref().map_or(true, |m| m.converged);
            let rejected = result.rejected;
            trail.push(TrailEntry { k, result, rejected });
            if !converged {
                stop = Some((k, StopReason::MleFailure));
                break;
            }
            if !rejected {
                stop = Some((k, StopReason::NonRejection));
                break;
            }
        }
        let (k_hat, reason) = stop.unwrap_or((k_max, StopReason::DfExhausted));
        results.push(SelectionResult { k_hat, trail, stopped_reason: reason, alpha });
    }
    Ok(results)
}
