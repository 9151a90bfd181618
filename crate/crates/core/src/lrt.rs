//! Likelihood ratio statistics for exploratory factor analysis and their
//! calibrations.
//!
//! Three statistics share one pipeline:
//!
//! * `T0 = -(N-1) log|R|` for "no common factor" (diagonal covariance),
//! * `Tk = (N-1) F(Sigma_k)` for "at most k factors", with `Sigma_k` the ML fit,
//! * `T' = (N-1) F(Sigma_0)` against a fully specified covariance `Sigma_0`,
//!
//! where `F(Sigma) = log|Sigma| - log|S| + tr(S Sigma^{-1}) - p`. Each can be
//! referred to its classical chi-square limit, optionally after Bartlett
//! scaling, and `T0` and `T'` also to the normal limit that holds when `p`
//! grows proportionally to `N`. Every test rejects for large values.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::distributions::{chisq_sf, std_normal_sf};
use crate::error::{Error, Result};
use crate::mle::{factor_df, fit_factor_model, MleOptions};
use crate::sampler::FactorModel;
use crate::stats::{
    cholesky_lower, invert_lower, logdet_from_cholesky, sample_correlation, sample_covariance,
    trace_with_inverse_factor, CovMatrix, DataMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    None,
    Bartlett,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibration {
    #[serde(rename = "chisq")]
    ChiSquare,
    HdNormal,
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Bartlett => "bartlett",
        })
    }
}

impl FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "uncorrected" => Ok(Self::None),
            "bartlett" => Ok(Self::Bartlett),
            other => Err(Error::InvalidInput(format!(
                "unknown correction `{other}` (expected none or bartlett)"
            ))),
        }
    }
}

impl fmt::Display for Calibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ChiSquare => "chisq",
            Self::HdNormal => "hd-normal",
        })
    }
}

impl FromStr for Calibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chisq" | "chi-square" | "chi2" => Ok(Self::ChiSquare),
            "hd-normal" | "normal" => Ok(Self::HdNormal),
            other => Err(Error::InvalidInput(format!(
                "unknown calibration `{other}` (expected chisq or hd-normal)"
            ))),
        }
    }
}

/// Which null hypothesis a statistic tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StatKind {
    NoFactor,
    KFactor { k: usize },
    GivenSigma,
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoFactor => f.write_str("T0"),
            Self::KFactor { k } => write!(f, "T{k}"),
            Self::GivenSigma => f.write_str("T'"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Safe,
    Borderline,
    Failing,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Safe => "safe",
            Self::Borderline => "borderline",
            Self::Failing => "failing",
        })
    }
}

/// Cutoffs applied to `p^2/N` (uncorrected) and `p^3/N^2` (Bartlett).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeThresholds {
    /// Ratios strictly below this are safe.
    pub safe_below: f64,
    /// Ratios at or above this are failing.
    pub failing_at: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self { safe_below: 0.1, failing_at: 1.0 }
    }
}

impl RegimeThresholds {
    pub fn classify(&self, ratio: f64) -> Verdict {
        if ratio < self.safe_below {
            Verdict::Safe
        } else if ratio < self.failing_at {
            Verdict::Borderline
        } else {
            Verdict::Failing
        }
    }
}

/// Where `(N, p)` sits relative to the `p ~ N^{1/2}` and `p ~ N^{2/3}` boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub n_obs: usize,
    pub p: usize,
    /// `ln p / ln N`.
    pub epsilon: f64,
    /// `p^2 / N`.
    pub ratio_sq: f64,
    /// `p^3 / N^2`.
    pub ratio_cube: f64,
    pub chisq_valid: Verdict,
    pub bartlett_valid: Verdict,
    pub thresholds: RegimeThresholds,
}

impl RegimeReport {
    pub fn verdict_for(&self, correction: Correction) -> Verdict {
        match correction {
            Correction::None => self.chisq_valid,
            Correction::Bartlett => self.bartlett_valid,
        }
    }
}

pub fn regime_diagnostic(n_obs: usize, p: usize, thresholds: RegimeThresholds) -> RegimeReport {
    let (nf, pf) = (n_obs as f64, p as f64);
    let ratio_sq = pf * pf / nf;
    let ratio_cube = pf * pf * pf / (nf * nf);
    RegimeReport {
        n_obs,
        p,
        epsilon: pf.ln() / nf.ln(),
        ratio_sq,
        ratio_cube,
        chisq_valid: thresholds.classify(ratio_sq),
        bartlett_valid: thresholds.classify(ratio_cube),
        thresholds,
    }
}

/// Smallest `N` at which `p^2/N` reaches `threshold`, i.e. `ceil(p^2 / threshold)`.
pub fn min_n_chisq(p: usize, threshold: f64) -> u64 {
    ceil_tolerant((p as f64).powi(2) / threshold)
}

/// Smallest `N` at which `p^3/N^2` reaches `threshold`, i.e. `ceil(sqrt(p^3 / threshold))`.
pub fn min_n_bartlett(p: usize, threshold: f64) -> u64 {
    ceil_tolerant(((p as f64).powi(3) / threshold).sqrt())
}

fn ceil_tolerant(x: f64) -> u64 {
    (x * (1.0 - 1e-12)).ceil() as u64
}

/// Centering and scale of the normal limit `(T + n mu) / (n sigma) -> N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HdCalibration {
    pub mu: f64,
    pub sigma: f64,
    /// `n = N - 1`.
    pub n: usize,
}

impl HdCalibration {
    pub fn standardize(&self, statistic: f64) -> f64 {
        let n = self.n as f64;
        (statistic + n * self.mu) / (n * self.sigma)
    }
}

/// `ln(1 - r) + r`, accurate for small `r`.
fn log1m_plus(r: f64) -> f64 {
    if r < 0.1 {
        // -(r^2/2 + r^3/3 + ...); r < 0.1 so 40 terms reach 1e-40 relative
        let mut term = r * r;
        let mut sum = 0.0_f64;
        for k in 2..42 {
            sum += term / k as f64;
            term *= r;
        }
        -sum
    } else {
        (-r).ln_1p() + r
    }
}

fn hd_parts(n_obs: usize, p: usize) -> Result<(f64, f64, f64, f64)> {
    if n_obs < 2 {
        return Err(Error::OutOfRange(format!("need N >= 2, got {n_obs}")));
    }
    let n = n_obs - 1;
    if p < 1 || p >= n {
        return Err(Error::OutOfRange(format!(
            "normal calibration needs 1 <= p <= n - 1 with n = N - 1 = {n}, got p = {p}"
        )));
    }
    let (nf, pf) = (n as f64, p as f64);
    let r = pf / nf;
    let l = (-r).ln_1p();
    let lr = log1m_plus(r);
    // (p - n + 1/2) l - p  ==  -n (l + r) + (p + 1/2) l
    let base = -nf * lr + (pf + 0.5) * l;
    let sigma = (-2.0 * lr).sqrt();
    Ok((base, sigma, nf, pf))
}

/// `mu_{n,0} = (p - n + 1/2) log(1 - p/n) - (n - 1) p / n` and
/// `sigma_{n,0}^2 = -2 (p/n + log(1 - p/n))`, for `T0`.
pub fn hd_calibration_t0(n_obs: usize, p: usize) -> Result<HdCalibration> {
    let (base, sigma, nf, pf) = hd_parts(n_obs, p)?;
    // -(n-1)p/n = -p + p/n
    Ok(HdCalibration { mu: base + pf / nf, sigma, n: n_obs - 1 })
}

/// `mu_n = -p + (p - n + 1/2) log(1 - p/n)` and the same `sigma`, for `T'`.
pub fn hd_calibration_tprime(n_obs: usize, p: usize) -> Result<HdCalibration> {
    let (base, sigma, _, _) = hd_parts(n_obs, p)?;
    Ok(HdCalibration { mu: base, sigma, n: n_obs - 1 })
}

/// `1 - (2p + 5) / (6(N - 1))`.
pub fn bartlett_no_factor(n_obs: usize, p: usize) -> f64 {
    1.0 - (2.0 * p as f64 + 5.0) / (6.0 * (n_obs as f64 - 1.0))
}

/// `1 - (2p + 5 + 4k) / (6(N - 1))`.
pub fn bartlett_k_factor(n_obs: usize, p: usize, k: usize) -> f64 {
    1.0 - (2.0 * p as f64 + 5.0 + 4.0 * k as f64) / (6.0 * (n_obs as f64 - 1.0))
}

/// `1 - (2p^2 + 3p - 1) / (6(N - 1)(p + 1))`.
pub fn bartlett_given_sigma(n_obs: usize, p: usize) -> f64 {
    let pf = p as f64;
    1.0 - (2.0 * pf * pf + 3.0 * pf - 1.0) / (6.0 * (n_obs as f64 - 1.0) * (pf + 1.0))
}

/// `p(p - 1)/2`.
pub fn df_no_factor(p: usize) -> f64 {
    (p * p.saturating_sub(1)) as f64 / 2.0
}

/// `p(p + 1)/2`.
pub fn df_given_sigma(p: usize) -> f64 {
    (p * (p + 1)) as f64 / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "warning", rename_all = "kebab-case")]
pub enum Warning {
    /// The sample is smaller than the size the limit theory assumes.
    SmallSample { n_obs: usize, required: usize },
    /// The requested chi-square calibration is outside its validity regime.
    RegimeFailing { correction: Correction, ratio: f64 },
    MleNotConverged { iterations: usize, gradient_norm: f64 },
    HeywoodCase { variables: Vec<usize> },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SmallSample { n_obs, required } => write!(
                f,
                "sample size N = {n_obs} is below the N >= {required} the limit theory assumes"
            ),
            Self::RegimeFailing { correction: Correction::None, ratio } => write!(
                f,
                "chi-square calibration is unreliable here: p^2/N = {ratio:.4} (dimension too large for the uncorrected statistic)"
            ),
            Self::RegimeFailing { correction: Correction::Bartlett, ratio } => write!(
                f,
                "Bartlett-corrected chi-square calibration is unreliable here: p^3/N^2 = {ratio:.4}"
            ),
            Self::MleNotConverged { iterations, gradient_norm } => write!(
                f,
                "factor model fit did not converge ({iterations} iterations, gradient {gradient_norm:.3e})"
            ),
            Self::HeywoodCase { variables } => {
                write!(f, "uniquenesses at the floor for variables {variables:?}")
            }
        }
    }
}

/// Convergence facts of the ML fit behind a `Tk` statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleSummary {
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub heywood: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOptions {
    pub correction: Correction,
    pub calibration: Calibration,
    pub alpha: f64,
    pub thresholds: RegimeThresholds,
}

impl TestOptions {
    pub fn new(correction: Correction, calibration: Calibration, alpha: f64) -> Self {
        Self { correction, calibration, alpha, thresholds: RegimeThresholds::default() }
    }
}

impl Default for TestOptions {
    fn default() -> Self {
        Self::new(Correction::None, Calibration::ChiSquare, 0.05)
    }
}

/// An uncalibrated statistic; one value can be referred to several calibrations.
#[derive(Debug, Clone, PartialEq)]
pub struct LrtStatistic {
    pub kind: StatKind,
    pub value: f64,
    pub n_obs: usize,
    pub p: usize,
    pub warnings: Vec<Warning>,
    pub mle: Option<MleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub kind: StatKind,
    /// Uncorrected statistic.
    pub statistic: f64,
    /// `rho * statistic`.
    pub corrected_statistic: f64,
    pub correction: Correction,
    pub calibration: Calibration,
    pub df: f64,
    pub rho: f64,
    /// Standardized statistic under the normal calibration.
    pub z_score: Option<f64>,
    pub hd: Option<HdCalibration>,
    pub p_value: f64,
    pub alpha: f64,
    pub rejected: bool,
    pub regime: RegimeReport,
    pub warnings: Vec<Warning>,
    pub mle: Option<MleSummary>,
}

impl LrtStatistic {
    pub fn df(&self) -> f64 {
        match self.kind {
            StatKind::NoFactor => df_no_factor(self.p),
            StatKind::KFactor { k } => factor_df(self.p, k) as f64,
            StatKind::GivenSigma => df_given_sigma(self.p),
        }
    }

    pub fn rho(&self) -> f64 {
        match self.kind {
            StatKind::NoFactor => bartlett_no_factor(self.n_obs, self.p),
            StatKind::KFactor { k } => bartlett_k_factor(self.n_obs, self.p, k),
            StatKind::GivenSigma => bartlett_given_sigma(self.n_obs, self.p),
        }
    }

    pub fn hd_calibration(&self) -> Result<HdCalibration> {
        match self.kind {
            StatKind::NoFactor => hd_calibration_t0(self.n_obs, self.p),
            StatKind::GivenSigma => hd_calibration_tprime(self.n_obs, self.p),
            StatKind::KFactor { .. } => Err(Error::Unsupported(
                "normal calibration is available for T0 and T' only; the k-factor statistic with estimated loadings has no established normal limit".into(),
            )),
        }
    }

    /// Refers the statistic to the requested reference distribution.
    pub fn evaluate(&self, opts: &TestOptions) -> Result<TestResult> {
        if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
            return Err(Error::OutOfRange(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
        }
        let df = self.df();
        let rho = self.rho();
        let corrected = rho * self.value;
        let regime = regime_diagnostic(self.n_obs, self.p, opts.thresholds);
        let mut warnings = self.warnings.clone();

        let (p_value, z_score, hd) = match opts.calibration {
            Calibration::ChiSquare => {
                let used = match opts.correction {
                    Correction::None => self.value,
                    Correction::Bartlett => corrected,
                };
                if regime.verdict_for(opts.correction) == Verdict::Failing {
                    let ratio = match opts.correction {
                        Correction::None => regime.ratio_sq,
                        Correction::Bartlett => regime.ratio_cube,
                    };
                    warnings.push(Warning::RegimeFailing { correction: opts.correction, ratio });
                }
                (chisq_sf(df, used.max(0.0))?, None, None)
            }
            Calibration::HdNormal => {
                // scaling T and its centering by rho leaves z unchanged
                let hd = self.hd_calibration()?;
                let z = hd.standardize(self.value);
                (std_normal_sf(z), Some(z), Some(hd))
            }
        };

        Ok(TestResult {
            kind: self.kind,
            statistic: self.value,
            corrected_statistic: corrected,
            correction: opts.correction,
            calibration: opts.calibration,
            df,
            rho,
            z_score,
            hd,
            p_value,
            alpha: opts.alpha,
            rejected: p_value < opts.alpha,
            regime,
            warnings,
            mle: self.mle.clone(),
        })
    }
}

fn small_sample(n_obs: usize, p: usize, margin: usize) -> Vec<Warning> {
    if n_obs < p + margin {
        vec![Warning::SmallSample { n_obs, required: p + margin }]
    } else {
        Vec::new()
    }
}

/// `T0 = -(N - 1) log|R|`.
pub fn no_factor_statistic(data: &DataMatrix) -> Result<LrtStatistic> {
    let (n_obs, p) = (data.n_obs(), data.dim());
    let r = sample_correlation(data)?;
    let l = cholesky_lower(&r.values).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::SingularCorrelation { n_obs, p },
        other => other,
    })?;
    Ok(LrtStatistic {
        kind: StatKind::NoFactor,
        value: -((n_obs - 1) as f64) * logdet_from_cholesky(&l),
        n_obs,
        p,
        warnings: small_sample(n_obs, p, 5),
        mle: None,
    })
}

/// `Tk = (N - 1) F(Sigma_k)` with `Sigma_k` the ML fit from `cov`.
pub fn k_factor_statistic_from_cov(
    cov: &CovMatrix,
    k: usize,
    mle_opts: &MleOptions,
) -> Result<LrtStatistic> {
    let p = cov.dim();
    let n_obs = cov.dof + 1;
    let df = factor_df(p, k);
    if df <= 0 {
        return Err(Error::ModelSaturated { k, p, df });
    }
    let fit = fit_factor_model(cov, k, mle_opts)?;
    let sigma_k = fit.implied_sigma();

    let ls = cholesky_lower(&cov.values)?;
    let lk = cholesky_lower(&sigma_k)?;
    let tr = trace_with_inverse_factor(&cov.values, &invert_lower(&lk));
    let discrepancy = logdet_from_cholesky(&lk) - logdet_from_cholesky(&ls) + tr - p as f64;

    let mut warnings = small_sample(n_obs, p, 5);
    if !fit.converged {
        warnings.push(Warning::MleNotConverged {
            iterations: fit.iterations,
            gradient_norm: fit.final_gradient_norm,
        });
    }
    if fit.hit_floor() {
        warnings.push(Warning::HeywoodCase { variables: fit.heywood.clone() });
    }
    Ok(LrtStatistic {
        kind: StatKind::KFactor { k },
        value: cov.dof as f64 * discrepancy,
        n_obs,
        p,
        warnings,
        mle: Some(MleSummary {
            converged: fit.converged,
            iterations: fit.iterations,
            gradient_norm: fit.final_gradient_norm,
            heywood: fit.heywood,
        }),
    })
}

pub fn k_factor_statistic(data: &DataMatrix, k: usize, mle_opts: &MleOptions) -> Result<LrtStatistic> {
    k_factor_statistic_from_cov(&sample_covariance(data)?, k, mle_opts)
}

/// A fully specified null covariance with its factorization cached, so that
/// many datasets can be tested against it cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaReference {
    sigma: DMatrix<f64>,
    inverse: DMatrix<f64>,
    logdet: f64,
}

impl SigmaReference {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let l = cholesky_lower(&sigma)?;
        let linv = invert_lower(&l);
        let inverse = linv.transpose() * &linv;
        Ok(Self { logdet: logdet_from_cholesky(&l), sigma, inverse })
    }

    pub fn from_model(model: &FactorModel) -> Result<Self> {
        Self::new(model.implied_sigma())
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

/// `T' = (N - 1) F(Sigma_0)`.
pub fn given_sigma_statistic(data: &DataMatrix, sigma0: &SigmaReference) -> Result<LrtStatistic> {
    let (n_obs, p) = (data.n_obs(), data.dim());
    if sigma0.dim() != p {
        return Err(Error::ShapeMismatch {
            expected: format!("{p}x{p} covariance"),
            got: format!("{}x{}", sigma0.dim(), sigma0.dim()),
        });
    }
    let s = sample_covariance(data)?;
    let logdet_s = logdet_from_cholesky(&cholesky_lower(&s.values)?);
    let tr: f64 = s.values.iter().zip(sigma0.inverse.iter()).map(|(a, b)| a * b).sum();
    let discrepancy = sigma0.logdet - logdet_s + tr - p as f64;
    Ok(LrtStatistic {
        kind: StatKind::GivenSigma,
        value: s.dof as f64 * discrepancy,
        n_obs,
        p,
        warnings: small_sample(n_obs, p, 2),
        mle: None,
    })
}

/// Tests `H0: no common factor` (the correlation matrix is the identity).
pub fn test_no_factor(data: &DataMatrix, opts: &TestOptions) -> Result<TestResult> {
    no_factor_statistic(data)?.evaluate(opts)
}

/// Tests `H0: at most k factors` against an unrestricted covariance.
pub fn test_k_factor(data: &DataMatrix, k: usize, opts: &TestOptions) -> Result<TestResult> {
    if opts.calibration == Calibration::HdNormal {
        return Err(Error::Unsupported(
            "normal calibration is available for T0 and T' only".into(),
        ));
    }
    k_factor_statistic(data, k, &MleOptions::default())?.evaluate(opts)
}

/// Tests `H0: Sigma = sigma0` for a fully specified covariance.
pub fn test_given_sigma(data: &DataMatrix, sigma0: &DMatrix<f64>, opts: &TestOptions) -> Result<TestResult> {
    given_sigma_statistic(data, &SigmaReference::new(sigma0.clone())?)?.evaluate(opts)
}
