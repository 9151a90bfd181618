//! Monte Carlo engine for the type I error, selection and histogram experiments.
//!
//! A grid is the product of sample sizes and dimensions (either exponents
//! `epsilon`, with `p = floor(N^epsilon)`, or fixed values of `p`). Each cell
//! draws `replications` datasets, replication `r` of cell `g` from stream
//! [`stream_id`]`(g, r)`, and every configured correction and calibration is
//! applied to the same datasets. Replications that fail (a singular
//! correlation matrix, a non-converged fit) are counted in `failed` and left
//! out of the denominators.

mod config;
mod grid;
mod output;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{Experiment, GeneratorTemplate, SimConfig};
pub use grid::{stream_id, Epsilon};
pub use output::{SimGridResult, SimRow, CSV_HEADER};

use crate::distributions::std_normal_cdf;
use crate::error::{Error, Result};
use crate::lrt::{
    df_no_factor, given_sigma_statistic, k_factor_statistic, no_factor_statistic, Calibration,
    Correction, SigmaReference, TestOptions,
};
use crate::mle::{factor_df, MleOptions};
use crate::sampler::{build_example_model, sample, GeneratorKind, GeneratorSpec};
use crate::select::{select_num_factors_many, StopReason};

/// One `(N, p)` point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub index: usize,
    pub n: usize,
    pub epsilon: Option<Epsilon>,
    pub p: usize,
}

/// Reported once a grid cell finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProgress {
    pub point: GridPoint,
    pub total: usize,
    pub skipped: Option<String>,
    pub elapsed: Duration,
}

impl SimConfig {
    /// Grid points in output order: sample sizes outermost.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            for eps in &self.epsilon_list {
                out.push((n, Some(*eps), eps.dim_for(n)));
            }
            for &p in &self.p_list {
                out.push((n, None, p));
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(index, (n, epsilon, p))| GridPoint { index, n, epsilon, p })
            .collect()
    }
}

pub fn run_type1_grid(cfg: &SimConfig) -> Result<SimGridResult> {
    expect(cfg, &[Experiment::TypeIH00, Experiment::TypeIHk, Experiment::TypeITprime])?;
    run(cfg, &mut |_| {})
}

pub fn run_selection_grid(cfg: &SimConfig) -> Result<SimGridResult> {
    expect(cfg, &[Experiment::Selection])?;
    run(cfg, &mut |_| {})
}

pub fn run_histogram_summary(cfg: &SimConfig) -> Result<SimGridResult> {
    expect(cfg, &[Experiment::Histogram])?;
    run(cfg, &mut |_| {})
}

fn expect(cfg: &SimConfig, allowed: &[Experiment]) -> Result<()> {
    if allowed.contains(&cfg.experiment) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("experiment {} is not handled here", cfg.experiment)))
    }
}

/// Runs any experiment, calling `progress` after each cell.
pub fn run(cfg: &SimConfig, progress: &mut dyn FnMut(&CellProgress)) -> Result<SimGridResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;

    let grid = cfg.grid();
    let mut rows = Vec::new();
    if cfg.replications > 0 {
        for point in &grid {
            let start = Instant::now();
            let skipped = match prepare(cfg, point) {
                Ok(cell) => {
                    let outcomes: Vec<Vec<Option<f64>>> = pool.install(|| {
                        (0..cfg.replications)
                            .into_par_iter()
                            .map(|r| replicate(cfg, &cell, r))
                            .collect()
                    });
                    rows.extend(tabulate(cfg, &cell, &outcomes));
                    None
                }
                Err(Skip(reason)) => {
                    rows.push(SimRow::skipped(point, cfg.experiment, cfg.replications));
                    Some(reason)
                }
            };
            progress(&CellProgress { point: *point, total: grid.len(), skipped, elapsed: start.elapsed() });
        }
    }
    Ok(SimGridResult {
        experiment: cfg.experiment,
        generator: cfg.generator.to_string(),
        seed: cfg.seed,
        alpha: cfg.alpha,
        replications: cfg.replications,
        rows,
    })
}

struct Skip(String);

struct Cell {
    point: GridPoint,
    kind: GeneratorKind,
    sigma0: Option<SigmaReference>,
    /// Factors under test (type I) or the true number of factors (selection).
    k: usize,
    channels: Vec<Channel>,
}

#[derive(Debug, Clone, Copy)]
enum Channel {
    Test(Correction, Calibration),
    Select(Correction),
    Raw(Correction),
}

impl Channel {
    fn labels(&self) -> (String, String) {
        match self {
            Self::Test(c, cal) => (cal.to_string(), c.to_string()),
            Self::Select(c) => ("select".into(), c.to_string()),
            Self::Raw(c) => ("histogram".into(), c.to_string()),
        }
    }
}

fn prepare(cfg: &SimConfig, point: &GridPoint) -> std::result::Result<Cell, Skip> {
    let (n, p) = (point.n, point.p);
    let margin = if cfg.experiment == Experiment::TypeITprime { 2 } else { 5 };
    if n < p + margin {
        return Err(Skip(format!("N = {n} is below p + {margin} = {}", p + margin)));
    }
    let k = match cfg.experiment {
        Experiment::TypeIHk => cfg.tested_k().unwrap_or(0),
        Experiment::Selection => cfg.generator.true_factors(),
        _ => 0,
    };
    if cfg.experiment == Experiment::TypeIHk && factor_df(p, k) <= 0 {
        return Err(Skip(format!("the {k}-factor model is saturated at p = {p}")));
    }
    let kind = cfg.generator.materialize(p).map_err(|e| Skip(e.to_string()))?;
    let sigma0 = if cfg.experiment == Experiment::TypeITprime {
        let sigma = population_covariance(&kind, p).map_err(|e| Skip(e.to_string()))?;
        Some(SigmaReference::new(sigma).map_err(|e| Skip(e.to_string()))?)
    } else {
        None
    };
    let channels = match cfg.experiment {
        Experiment::Selection => cfg.corrections.iter().map(|&c| Channel::Select(c)).collect(),
        Experiment::Histogram => cfg.corrections.iter().map(|&c| Channel::Raw(c)).collect(),
        _ => cfg
            .corrections
            .iter()
            .flat_map(|&c| cfg.calibrations.iter().map(move |&cal| Channel::Test(c, cal)))
            .collect(),
    };
    Ok(Cell { point: *point, kind, sigma0, k, channels })
}

/// The covariance the generator actually produces, for the given-sigma test.
pub fn population_covariance(kind: &GeneratorKind, p: usize) -> Result<DMatrix<f64>> {
    use crate::sampler::DiscreteSetting;
    let scaled = |v: f64| DMatrix::from_diagonal_element(p, p, v);
    match kind {
        GeneratorKind::IidNormal => Ok(scaled(1.0)),
        GeneratorKind::FactorNormal(f) => Ok(f.model().implied_sigma()),
        GeneratorKind::IidT { dof } if *dof > 2.0 => Ok(scaled(dof / (dof - 2.0))),
        GeneratorKind::IidT { dof } => Err(Error::Unsupported(format!(
            "t data with {dof} degrees of freedom has no finite covariance"
        ))),
        GeneratorKind::Discretized(s) => {
            // symmetric scores, so the variance is E[x^2]
            let phi = std_normal_cdf;
            let v = match s {
                DiscreteSetting::I => 1.0,
                DiscreteSetting::II => 4.0 * 2.0 * phi(-1.0) + 1.0 - 2.0 * phi(-1.0),
                DiscreteSetting::III => {
                    9.0 * 2.0 * phi(-1.0)
                        + 4.0 * 2.0 * (phi(-0.4) - phi(-1.0))
                        + 2.0 * (0.5 - phi(-0.4))
                }
            };
            Ok(scaled(v))
        }
    }
}

fn replicate(cfg: &SimConfig, cell: &Cell, rep: usize) -> Vec<Option<f64>> {
    let spec = GeneratorSpec::new(cell.kind.clone(), cfg.seed).with_stream(stream_id(cell.point.index, rep));
    let failed = vec![None; cell.channels.len()];
    let Ok(data) = sample(&spec, cell.point.n, cell.point.p) else {
        return failed;
    };
    let mle = MleOptions::default();

    if cfg.experiment == Experiment::Selection {
        let corrections: Vec<Correction> = cfg.corrections.clone();
        return match select_num_factors_many(&data, cfg.alpha, &corrections, cfg.k_max, &mle) {
            Ok(results) => results
                .iter()
                .map(|r| (r.stopped_reason != StopReason::MleFailure).then_some(r.k_hat as f64))
                .collect(),
            Err(_) => failed,
        };
    }

    let stat = match cfg.experiment {
        Experiment::TypeIH00 | Experiment::Histogram => no_factor_statistic(&data),
        Experiment::TypeIHk => k_factor_statistic(&data, cell.k, &mle),
        Experiment::TypeITprime => given_sigma_statistic(&data, cell.sigma0.as_ref().expect("prepared")),
        Experiment::Selection => unreachable!(),
    };
    let Ok(stat) = stat else {
        return failed;
    };
    if stat.mle.as_ref().is_some_and(|m| !m.converged) {
        return failed;
    }
    cell.channels
        .iter()
        .map(|ch| match *ch {
            Channel::Test(correction, calibration) => {
                let opts = TestOptions::new(correction, calibration, cfg.alpha);
                stat.evaluate(&opts).ok().map(|r| if r.rejected { 1.0 } else { 0.0 })
            }
            Channel::Raw(Correction::None) => Some(stat.value),
            Channel::Raw(Correction::Bartlett) => Some(stat.rho() * stat.value),
            Channel::Select(_) => unreachable!(),
        })
        .collect()
}

fn tabulate(cfg: &SimConfig, cell: &Cell, outcomes: &[Vec<Option<f64>>]) -> Vec<SimRow> {
    let mut rows = Vec::new();
    let reps = cfg.replications;
    for (c, ch) in cell.channels.iter().enumerate() {
        let values: Vec<f64> = outcomes.iter().filter_map(|o| o[c]).collect();
        let failed = reps - values.len();
        let (mode, correction) = ch.labels();
        let row = |metric: &str, value: Option<f64>, mc_se: Option<f64>| SimRow {
            n: cell.point.n,
            epsilon: cell.point.epsilon,
            p: cell.point.p,
            mode: mode.clone(),
            correction: correction.clone(),
            metric: metric.to_string(),
            value,
            mc_se,
            replications: reps,
            failed,
        };
        let m = values.len();
        let proportion = |hits: usize| -> (Option<f64>, Option<f64>) {
            if m == 0 {
                return (None, None);
            }
            let r = hits as f64 / m as f64;
            (Some(r), Some((r * (1.0 - r) / m as f64).sqrt()))
        };
        match ch {
            Channel::Test(..) => {
                let (v, se) = proportion(values.iter().filter(|&&x| x > 0.5).count());
                rows.push(row("rejection_rate", v, se));
            }
            Channel::Select(_) => {
                let k0 = cell.k as f64;
                for (metric, hits) in [
                    ("p_correct", values.iter().filter(|&&k| k == k0).count()),
                    ("p_over", values.iter().filter(|&&k| k > k0).count()),
                    ("p_under", values.iter().filter(|&&k| k < k0).count()),
                ] {
                    let (v, se) = proportion(hits);
                    rows.push(row(metric, v, se));
                }
            }
            Channel::Raw(_) => {
                let (mean, var) = mean_variance(&values);
                rows.push(row("mean", mean, var.map(|v| (v / m as f64).sqrt())));
                rows.push(row("variance", var, None));
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                for &q in &cfg.quantiles {
                    rows.push(row(&format!("q{}", quantile_label(q)), quantile(&sorted, q), None));
                }
            }
        }
    }
    if cfg.experiment == Experiment::Histogram {
        let f0 = df_no_factor(cell.point.p);
        for (metric, value) in [("ref_mean", f0), ("ref_variance", 2.0 * f0)] {
            rows.push(SimRow {
                n: cell.point.n,
                epsilon: cell.point.epsilon,
                p: cell.point.p,
                mode: "histogram".into(),
                correction: "reference".into(),
                metric: metric.into(),
                value: Some(value),
                mc_se: None,
                replications: reps,
                failed: 0,
            });
        }
    }
    rows
}

/// Sample mean and unbiased variance.
pub fn mean_variance(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let m = values.len();
    if m == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (Some(mean), None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (Some(mean), Some(ss / (m - 1) as f64))
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// `0.05 -> "05"`, `0.5 -> "50"`, `0.975 -> "975"`.
fn quantile_label(q: f64) -> String {
    let s = format!("{q}");
    let digits = s.trim_start_matches("0.");
    if digits.len() == 1 {
        format!("{digits}0")
    } else {
        digits.to_string()
    }
}

impl GeneratorTemplate {
    /// The generator at dimension `p`.
    pub fn materialize(&self, p: usize) -> Result<GeneratorKind> {
        match *self {
            Self::Normal => Ok(GeneratorKind::IidNormal),
            Self::T { dof } => Ok(GeneratorKind::IidT { dof }),
            Self::Discretized(s) => Ok(GeneratorKind::Discretized(s)),
            Self::Factor { k0 } => GeneratorKind::factor_normal(build_example_model(k0, p)?),
        }
    }

    pub fn true_factors(&self) -> usize {
        match *self {
            Self::Factor { k0 } => k0,
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), Some(3.0));
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(5.0));
        assert_eq!(quantile(&v, 0.125), Some(1.5));
        assert_eq!(quantile(&[], 0.5), None);
        assert_eq!(quantile_label(0.05), "05");
        assert_eq!(quantile_label(0.5), "50");
        assert_eq!(quantile_label(0.975), "975");
    }

    #[test]
    fn moments() {
        let (m, v) = mean_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert_eq!(v, Some(5.0 / 3.0));
        assert_eq!(mean_variance(&[]), (None, None));
    }

    #[test]
    fn discretized_population_variance() {
        use crate::sampler::DiscreteSetting;
        // E[x^2] for setting II: P(|z| >= 1) * 4 + P(|z| < 1) * 1
        let v = population_covariance(&GeneratorKind::Discretized(DiscreteSetting::II), 2).unwrap();
        assert!((v[(0, 0)] - (4.0 * 0.31731050786291415 + 0.6826894921370859)).abs() < 1e-12);
        assert_eq!(v[(0, 1)], 0.0);
        let t = population_covariance(&GeneratorKind::IidT { dof: 5.0 }, 3).unwrap();
        assert_eq!(t[(2, 2)], 5.0 / 3.0);
        assert!(population_covariance(&GeneratorKind::IidT { dof: 2.0 }, 3).is_err());
    }
}
