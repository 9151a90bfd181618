//! Reproducible synthetic data for the simulation experiments.
//!
//! Every dataset is drawn from a ChaCha8 stream keyed by `(seed, stream)`:
//! the seed is expanded to a ChaCha key and `stream` selects the ChaCha
//! stream id, so replication `r` never depends on which worker ran it or in
//! what order. Normal variates use the Ziggurat sampler from `rand_distr`
//! and are consumed row by row (observation-major).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::stats::{cholesky_lower, DataMatrix};

/// The k-factor model `Sigma = Lambda Lambda^T + Psi` with mean `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    loadings: DMatrix<f64>,
    uniquenesses: DVector<f64>,
    mean: DVector<f64>,
}

impl FactorModel {
    /// Zero-mean model. `loadings` is p x k with `k < p`.
    pub fn new(loadings: DMatrix<f64>, uniquenesses: DVector<f64>) -> Result<Self> {
        let p = loadings.nrows();
        Self::with_mean(loadings, uniquenesses, DVector::zeros(p))
    }

    pub fn with_mean(
        loadings: DMatrix<f64>,
        uniquenesses: DVector<f64>,
        mean: DVector<f64>,
    ) -> Result<Self> {
        let p = loadings.nrows();
        if uniquenesses.len() != p || mean.len() != p {
            return Err(Error::ShapeMismatch {
                expected: format!("{p} uniquenesses and means"),
                got: format!("{} uniquenesses, {} means", uniquenesses.len(), mean.len()),
            });
        }
        if loadings.ncols() >= p {
            return Err(Error::InvalidInput(format!(
                "number of factors {} must be below the dimension {p}",
                loadings.ncols()
            )));
        }
        if let Some(j) = uniquenesses.iter().position(|&u| !(u > 0.0) || !u.is_finite()) {
            return Err(Error::InvalidInput(format!("uniqueness {j} must be positive")));
        }
        if loadings.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite loading or mean".into()));
        }
        Ok(Self { loadings, uniquenesses, mean })
    }

    pub fn dim(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn num_factors(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn uniquenesses(&self) -> &DVector<f64> {
        &self.uniquenesses
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn implied_sigma(&self) -> DMatrix<f64> {
        let mut sigma = &self.loadings * self.loadings.transpose();
        for (j, u) in self.uniquenesses.iter().enumerate() {
            sigma[(j, j)] += u;
        }
        sigma
    }
}

/// The loading structures of the type I error experiments.
///
/// `k0 = 1`: every variable loads 0.3 on a single factor.
/// `k0 = 3`: three disjoint blocks of heights `p1, p1, p - 2 p1`, `p1 = floor(p/3)`,
/// each loading 0.6 on its own factor. Uniquenesses are `1 - rho^2` so the
/// implied covariance has unit diagonal.
pub fn build_example_model(k0: usize, p: usize) -> Result<FactorModel> {
    match k0 {
        1 => {
            if p < 2 {
                return Err(Error::InvalidInput(format!("one-factor model needs p >= 2, got {p}")));
            }
            let rho = 0.3;
            FactorModel::new(
                DMatrix::from_element(p, 1, rho),
                DVector::from_element(p, 1.0 - rho * rho),
            )
        }
        3 => {
            if p < 4 {
                return Err(Error::InvalidInput(format!("three-factor model needs p >= 4, got {p}")));
            }
            let rho = 0.6;
            let p1 = p / 3;
            let mut lambda = DMatrix::zeros(p, 3);
            for j in 0..p {
                let block = if j < p1 {
                    0
                } else if j < 2 * p1 {
                    1
                } else {
                    2
                };
                lambda[(j, block)] = rho;
            }
            FactorModel::new(lambda, DVector::from_element(p, 1.0 - rho * rho))
        }
        _ => Err(Error::Unsupported(format!("example model with k0 = {k0} (expected 1 or 3)"))),
    }
}

/// Thresholds mapping a standard normal draw to a discrete score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum DiscreteSetting {
    /// `z < 0 -> -1`, `z >= 0 -> 1`.
    I,
    /// Cut points -1, 0, 1 with scores -2, -1, 1, 2.
    II,
    /// Cut points -1, -0.4, 0, 0.4, 1 with scores -3, -2, -1, 1, 2, 3.
    III,
}

impl DiscreteSetting {
    pub fn map(self, z: f64) -> f64 {
        match self {
            Self::I => {
                if z < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            Self::II => match z {
                z if z < -1.0 => -2.0,
                z if z < 0.0 => -1.0,
                z if z < 1.0 => 1.0,
                _ => 2.0,
            },
            Self::III => match z {
                z if z < -1.0 => -3.0,
                z if z < -0.4 => -2.0,
                z if z < 0.0 => -1.0,
                z if z < 0.4 => 1.0,
                z if z < 1.0 => 2.0,
                _ => 3.0,
            },
        }
    }
}

impl FromStr for DiscreteSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" | "1" => Ok(Self::I),
            "II" | "ii" | "2" => Ok(Self::II),
            "III" | "iii" | "3" => Ok(Self::III),
            other => Err(Error::UnknownSetting(other.to_string())),
        }
    }
}

impl fmt::Display for DiscreteSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
        };
        f.write_str(s)
    }
}

/// Factor model plus the Cholesky factor of its implied covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorNormal {
    model: FactorModel,
    chol: DMatrix<f64>,
}

impl FactorNormal {
    pub fn new(model: FactorModel) -> Result<Self> {
        let chol = cholesky_lower(&model.implied_sigma())?;
        Ok(Self { model, chol })
    }

    pub fn model(&self) -> &FactorModel {
        &self.model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    FactorNormal(Arc<FactorNormal>),
    IidNormal,
    /// Raw Student t entries, `Z / sqrt(V / dof)`; not rescaled to unit variance.
    IidT { dof: f64 },
    Discretized(DiscreteSetting),
}

impl GeneratorKind {
    pub fn factor_normal(model: FactorModel) -> Result<Self> {
        Ok(Self::FactorNormal(Arc::new(FactorNormal::new(model)?)))
    }

    pub fn label(&self) -> String {
        match self {
            Self::FactorNormal(f) => format!("factor-normal(k={})", f.model.num_factors()),
            Self::IidNormal => "iid-normal".into(),
            Self::IidT { dof } => format!("iid-t({dof})"),
            Self::Discretized(s) => format!("discretized({s})"),
        }
    }
}

/// A data generator pinned to one `(seed, stream)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub seed: u64,
    pub stream: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        Self { kind, seed, stream: 0 }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self { stream, ..self.clone() }
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Draws `n` i.i.d. observations of dimension `p`.
pub fn sample(spec: &GeneratorSpec, n: usize, p: usize) -> Result<DataMatrix> {
    if n < 2 || p < 1 {
        return Err(Error::InvalidInput(format!("need N >= 2 and p >= 1, got N = {n}, p = {p}")));
    }
    let mut rng = spec.rng();
    let values = match &spec.kind {
        GeneratorKind::IidNormal => normal_matrix(&mut rng, n, p),
        GeneratorKind::FactorNormal(f) => {
            if f.model.dim() != p {
                return Err(Error::ShapeMismatch {
                    expected: format!("p = {}", f.model.dim()),
                    got: format!("p = {p}"),
                });
            }
            // each row is mu + L z
            let z = normal_matrix(&mut rng, n, p);
            let mut x = z * f.chol.transpose();
            for (j, mut col) in x.column_iter_mut().enumerate() {
                col.add_scalar_mut(f.model.mean[j]);
            }
            x
        }
        GeneratorKind::IidT { dof } => {
            let chi = ChiSquared::new(*dof)
                .map_err(|_| Error::InvalidInput(format!("t degrees of freedom must be > 0, got {dof}")))?;
            let d = *dof;
            row_major(n, p, || {
                let z: f64 = rng.sample(StandardNormal);
                let v = chi.sample(&mut rng);
                z / (v / d).sqrt()
            })
        }
        GeneratorKind::Discretized(setting) => {
            let s = *setting;
            row_major(n, p, || s.map(rng.sample(StandardNormal)))
        }
    };
    DataMatrix::new(values)
}

fn normal_matrix<R: Rng>(rng: &mut R, n: usize, p: usize) -> DMatrix<f64> {
    row_major(n, p, || rng.sample(StandardNormal))
}

fn row_major(n: usize, p: usize, mut draw: impl FnMut() -> f64) -> DMatrix<f64> {
    DMatrix::from_row_iterator(n, p, std::iter::repeat_with(&mut draw).take(n * p))
}
