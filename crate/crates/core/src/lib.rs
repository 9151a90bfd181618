//! Likelihood ratio tests for exploratory factor analysis, with diagnostics
//! for the regimes where the classical chi-square approximations break down
//! as the dimension grows with the sample size.
//!
//! ```
//! use efa_lrt::{sample, test_no_factor, GeneratorKind, GeneratorSpec, TestOptions};
//!
//! let data = sample(&GeneratorSpec::new(GeneratorKind::IidNormal, 7), 500, 10).unwrap();
//! let res = test_no_factor(&data, &TestOptions::default()).unwrap();
//! assert_eq!(res.df, 45.0);
//! assert!(res.p_value > 0.0 && res.p_value <= 1.0);
//! ```

pub mod distributions;
mod eigen;
pub mod error;
pub mod lrt;
pub mod mle;
pub mod sampler;
pub mod select;
pub mod sim;
pub mod stats;

pub use distributions::{chisq_cdf, chisq_sf, chisq_upper_quantile, std_normal_sf, ChiSquareRef};
pub use error::{Error, Result};
pub use lrt::{
    given_sigma_statistic, hd_calibration_t0, hd_calibration_tprime, k_factor_statistic,
    no_factor_statistic, regime_diagnostic, test_given_sigma, test_k_factor, test_no_factor,
    Calibration, Correction, HdCalibration, LrtStatistic, RegimeReport, RegimeThresholds,
    SigmaReference, StatKind, TestOptions, TestResult, Verdict, Warning,
};
pub use mle::{factor_df, fit_factor_model, MleFit, MleOptions};
pub use sampler::{
    build_example_model, sample, DiscreteSetting, FactorModel, FactorNormal, GeneratorKind,
    GeneratorSpec,
};
pub use select::{select_num_factors, SelectOptions, SelectionResult, StopReason};
pub use stats::{
    logdet_spd, sample_correlation, sample_covariance, CorrMatrix, CovMatrix, DataMatrix,
};
