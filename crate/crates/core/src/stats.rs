//! Matrix statistics on observation data.
//!
//! Everything that needs a determinant or an inverse goes through a Cholesky
//! factor; at p in the hundreds the raw determinant over- or underflows.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative pivot tolerance: a pivot at or below `PIVOT_RTOL * max(diag)` fails.
pub const PIVOT_RTOL: f64 = 1e-12;

/// An N x p observation matrix (rows are observations).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observations, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::InvalidInput("need at least 1 variable".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {row}, column {col}"
            )));
        }
        Ok(Self { values })
    }

    /// Builds a data matrix from row vectors, which must all have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::ShapeMismatch {
                expected: format!("{p} columns"),
                got: format!("{} columns in row {i}", r.len()),
            });
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Unbiased sample covariance (divisor `dof = N - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub values: DMatrix<f64>,
    pub dof: usize,
}

impl CovMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// A correlation matrix: unit diagonal, off-diagonal entries in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub values: DMatrix<f64>,
}

impl CorrMatrix {
    /// Normalizes any covariance-like matrix to unit diagonal.
    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        let p = cov.nrows();
        if cov.ncols() != p {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", p, cov.ncols()),
            });
        }
        let mut scale = Vec::with_capacity(p);
        for j in 0..p {
            let v = cov[(j, j)];
            if !(v > 0.0) {
                return Err(Error::DegenerateColumn { column: j });
            }
            scale.push(v.sqrt().recip());
        }
        let values = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else {
                (cov[(i, j)] * scale[i] * scale[j]).clamp(-1.0, 1.0)
            }
        });
        Ok(Self { values })
    }
}

/// Column means of `data`.
pub fn column_means(data: &DMatrix<f64>) -> Vec<f64> {
    let n = data.nrows() as f64;
    data.column_iter().map(|c| c.sum() / n).collect()
}

fn centered(data: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(data);
    let mut xc = data.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    xc
}

/// `1/(N-1) * sum_i (x_i - mean)(x_i - mean)^T`, exactly symmetric.
pub fn sample_covariance(data: &DataMatrix) -> Result<CovMatrix> {
    let x = data.values();
    if x.nrows() < 2 {
        return Err(Error::InvalidInput("need at least 2 observations".into()));
    }
    let dof = x.nrows() - 1;
    let xc = centered(x);
    // explicit transpose keeps the product on the blocked GEMM kernel
    let mut s = xc.transpose() * &xc;
    s /= dof as f64;
    symmetrize(&mut s);
    Ok(CovMatrix { values: s, dof })
}

/// Sample correlation `D^{-1/2} S D^{-1/2}`.
///
/// A column whose sample variance is zero, or indistinguishable from zero
/// at the scale of its entries, is reported as degenerate.
pub fn sample_correlation(data: &DataMatrix) -> Result<CorrMatrix> {
    let cov = sample_covariance(data)?;
    for (j, col) in data.values().column_iter().enumerate() {
        let scale = col.amax();
        let floor = (64.0 * f64::EPSILON * scale).powi(2);
        if cov.values[(j, j)] <= floor {
            return Err(Error::DegenerateColumn { column: j });
        }
    }
    CorrMatrix::from_covariance(&cov.values)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Reads only the lower triangle. A pivot `<= PIVOT_RTOL * max(diag)` is a
/// failure and reports its index.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    if m.ncols() != p {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", p, m.ncols()),
        });
    }
    let max_diag = (0..p).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
    let tol = PIVOT_RTOL * max_diag;
    let mut l = m.lower_triangle();
    let data = l.as_mut_slice();
    for k in 0..p {
        let d = data[k * p + k];
        if !(d > tol) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: k });
        }
        let r = d.sqrt();
        data[k * p + k] = r;
        let inv = r.recip();
        for v in &mut data[k * p + k + 1..(k + 1) * p] {
            *v *= inv;
        }
        // right-looking update of the trailing lower triangle, one column at a time
        let (head, tail) = data.split_at_mut((k + 1) * p);
        let lk = &head[k * p..(k + 1) * p];
        for j in (k + 1)..p {
            let ljk = lk[j];
            if ljk == 0.0 {
                continue;
            }
            let col = &mut tail[(j - k - 1) * p + j..(j - k) * p];
            for (c, &l) in col.iter_mut().zip(&lk[j..]) {
                *c -= ljk * l;
            }
        }
    }
    Ok(l)
}

/// `log |m|` of a symmetric positive definite matrix, via Cholesky pivots.
pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky_lower(m)?;
    Ok(logdet_from_cholesky(&l))
}

pub(crate) fn logdet_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of a lower triangular matrix (forward substitution against I).
pub(crate) fn invert_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    let p = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        inv[(j, j)] = l[(j, j)].recip();
        for i in (j + 1)..p {
            let mut s = 0.0;
            for m in j..i {
                s += l[(i, m)] * inv[(m, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

/// `tr(a b^{-1})` for symmetric `a` and SPD `b`, without forming `b^{-1}`
/// through a general inverse.
pub fn trace_prod_inv(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", b.nrows(), b.ncols()),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let l = cholesky_lower(b)?;
    Ok(trace_with_inverse_factor(a, &invert_lower(&l)))
}

/// `tr(M a M^T)` where `M = L^{-1}`, which equals `tr(a b^{-1})` for `b = L L^T`.
pub(crate) fn trace_with_inverse_factor(a: &DMatrix<f64>, linv: &DMatrix<f64>) -> f64 {
    let ma = linv * a;
    ma.iter().zip(linv.iter()).map(|(x, y)| x * y).sum()
}
