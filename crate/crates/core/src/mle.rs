//! Maximum-likelihood fitting of the k-factor model.
//!
//! For fixed uniquenesses `Psi`, the optimal loadings come from the top-k
//! eigenpairs `(theta_m, v_m)` of `Psi^{-1/2} S Psi^{-1/2}`:
//! `Lambda = Psi^{1/2} V diag(sqrt(max(theta - 1, 0)))`. What remains is a
//! smooth problem in `u = log Psi`, solved here on the correlation scale
//! (so the fit is exactly scale-equivariant) with bound-constrained Newton
//! steps. The curvature model is the expected Hessian
//! `H_ij = (delta_ij - sum_m v_im v_jm)^2`, which needs only the top-k
//! eigenvectors; an Armijo backtracking search keeps the objective
//! non-increasing.

use nalgebra::{DMatrix, DVector};

use crate::eigen::top_eigenpairs;
use crate::error::{Error, Result};
use crate::sampler::FactorModel;
use crate::stats::{cholesky_lower, logdet_from_cholesky, CovMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iter: usize,
    /// Converged once the projected gradient sup-norm is `<= grad_tol * p`.
    pub grad_tol: f64,
    /// ... or once the relative objective change is `<= rel_obj_tol`.
    pub rel_obj_tol: f64,
    /// Heywood guard: `Psi_jj >= floor_ratio * S_jj`.
    pub floor_ratio: f64,
    /// Starting point: `Psi_jj = init_ratio * S_jj`.
    pub init_ratio: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-8,
            rel_obj_tol: 1e-12,
            floor_ratio: 0.005,
            init_ratio: 0.5,
        }
    }
}

/// The fitted k-factor model.
#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub model: FactorModel,
    pub k: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Discrepancy `F = log|Sigma_k| - log|S| + tr(S Sigma_k^{-1}) - p` at the fit.
    pub objective: f64,
    /// Objective after each accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
    /// Variables whose uniqueness sits on the floor.
    pub heywood: Vec<usize>,
}

impl MleFit {
    pub fn implied_sigma(&self) -> DMatrix<f64> {
        self.model.implied_sigma()
    }

    pub fn hit_floor(&self) -> bool {
        !self.heywood.is_empty()
    }
}

/// Degrees of freedom `((p - k)^2 - p - k) / 2` of the k-factor test.
pub fn factor_df(p: usize, k: usize) -> i64 {
    let (p, k) = (p as i64, k as i64);
    ((p - k) * (p - k) - p - k) / 2
}

/// `log|sigma| - log|s| + tr(s sigma^{-1}) - p`, the Gaussian ML discrepancy.
pub fn discrepancy(s: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let p = s.nrows() as f64;
    let ls = logdet_from_cholesky(&cholesky_lower(s)?);
    let lsig = cholesky_lower(sigma)?;
    let linv = crate::stats::invert_lower(&lsig);
    Ok(logdet_from_cholesky(&lsig) - ls + crate::stats::trace_with_inverse_factor(s, &linv) - p)
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    /// Top eigenvectors with `theta > 1`, one per column.
    vecs: DMatrix<f64>,
    thetas: Vec<f64>,
}

struct Problem<'a> {
    r: &'a DMatrix<f64>,
    logdet_r: f64,
    k: usize,
}

impl Problem<'_> {
    fn p(&self) -> usize {
        self.r.nrows()
    }

    fn eval(&self, u: &DVector<f64>) -> Eval {
        let p = self.p();
        let scale: Vec<f64> = u.iter().map(|&x| (-0.5 * x).exp()).collect();
        let (values, vectors) = top_eigenpairs(self.r, &scale, self.k);
        let active: Vec<usize> = (0..values.len()).filter(|&m| values[m] > 1.0).collect();
        let thetas: Vec<f64> = active.iter().map(|&m| values[m]).collect();
        let vecs = DMatrix::from_fn(p, active.len(), |i, c| vectors[(i, active[c])]);

        // all-eigenvalue discrepancy, less the terms absorbed by the loadings
        let tr: f64 = u.iter().map(|&x| (-x).exp()).sum();
        let logdet_rstar = self.logdet_r - u.sum();
        let mut f = tr - logdet_rstar - p as f64;
        for &t in &thetas {
            f -= t - t.ln() - 1.0;
        }

        let grad = DVector::from_fn(p, |j, _| {
            let lam2: f64 = thetas.iter().enumerate().map(|(c, t)| vecs[(j, c)].powi(2) * (t - 1.0)).sum();
            1.0 + lam2 - (-u[j]).exp()
        });
        Eval { f, grad, vecs, thetas }
    }
}

/// Curvature model `(I - V V^T) o (I - V V^T)` restricted to the free variables.
fn scoring_hessian(vecs: &DMatrix<f64>, free: &[usize]) -> DMatrix<f64> {
    let vf = DMatrix::from_fn(free.len(), vecs.ncols(), |i, c| vecs[(free[i], c)]);
    let proj = &vf * vf.transpose();
    DMatrix::from_fn(free.len(), free.len(), |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        (d - proj[(i, j)]).powi(2)
    })
}

/// Fits the k-factor model to a positive definite covariance matrix.
///
/// `k = 0` returns `Psi = diag(S)` with no loadings. Non-convergence is not an
/// error: the best iterate comes back with `converged = false`.
pub fn fit_factor_model(s: &CovMatrix, k: usize, opts: &MleOptions) -> Result<MleFit> {
    let p = s.dim();
    let df = factor_df(p, k);
    if df < 0 {
        return Err(Error::ModelSaturated { k, p, df });
    }
    let chol = cholesky_lower(&s.values)?;
    let logdet_s = logdet_from_cholesky(&chol);
    let diag: Vec<f64> = (0..p).map(|j| s.values[(j, j)]).collect();
    let r = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            s.values[(i, j)] / (diag[i] * diag[j]).sqrt()
        }
    });
    let logdet_r = logdet_s - diag.iter().map(|d| d.ln()).sum::<f64>();

    if k == 0 {
        let model = FactorModel::new(DMatrix::zeros(p, 0), DVector::from_vec(diag))?;
        let f = -logdet_r;
        return Ok(MleFit {
            model,
            k,
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
            objective: f,
            objective_trace: vec![f],
            heywood: Vec::new(),
        });
    }

    let problem = Problem { r: &r, logdet_r, k };
    let lower = opts.floor_ratio.ln();
    let at_bound = |x: f64| x <= lower + 1e-12;
    let mut u = DVector::from_element(p, opts.init_ratio.ln().max(lower));
    let mut cur = problem.eval(&u);
    let mut trace = vec![cur.f];
    let mut converged = false;
    let mut iterations = 0;
    let grad_tol = opts.grad_tol * p as f64;

    let projected_norm = |u: &DVector<f64>, g: &DVector<f64>| {
        u.iter()
            .zip(g.iter())
            .filter(|(&x, &gj)| !(at_bound(x) && gj > 0.0))
            .map(|(_, gj)| gj.abs())
            .fold(0.0, f64::max)
    };
    let mut pg = projected_norm(&u, &cur.grad);

    while iterations < opts.max_iter {
        if pg <= grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let free: Vec<usize> = (0..p).filter(|&j| !(at_bound(u[j]) && cur.grad[j] > 0.0)).collect();
        let g_free = DVector::from_fn(free.len(), |i, _| cur.grad[free[i]]);
        let h = scoring_hessian(&cur.vecs, &free);
        let mut d_free = match h.cholesky() {
            Some(c) => -c.solve(&g_free),
            None => -g_free.clone(),
        };
        if d_free.dot(&g_free) >= 0.0 {
            d_free = -g_free.clone();
        }
        let big = d_free.amax();
        if big > 5.0 {
            d_free *= 5.0 / big;
        }
        let mut dir = DVector::zeros(p);
        for (i, &j) in free.iter().enumerate() {
            dir[j] = d_free[i];
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = (&u + &dir * step).map(|x| x.max(lower));
            let moved = &trial - &u;
            let next = problem.eval(&trial);
            if next.f <= cur.f + 1e-4 * cur.grad.dot(&moved) {
                accepted = Some((trial, next));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, next)) = accepted else {
            break;
        };
        let change = (cur.f - next.f).abs();
        u = trial;
        cur = next;
        trace.push(cur.f);
        pg = projected_norm(&u, &cur.grad);
        if change <= opts.rel_obj_tol * cur.f.abs() {
            converged = true;
            break;
        }
    }
    if !converged && pg <= grad_tol {
        converged = true;
    }

    // back to the covariance scale, in canonical orientation
    let sd: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
    let psi: Vec<f64> = u.iter().map(|x| x.exp()).collect();
    let mut lambda = DMatrix::zeros(p, k);
    for (c, &t) in cur.thetas.iter().enumerate() {
        let w = (t - 1.0).sqrt();
        let mut col: Vec<f64> = (0..p).map(|j| psi[j].sqrt() * cur.vecs[(j, c)] * w * sd[j]).collect();
        let lead = col.iter().find(|v| v.abs() > 1e-14).copied().unwrap_or(0.0);
        if lead < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        for j in 0..p {
            lambda[(j, c)] = col[j];
        }
    }
    let uniq = DVector::from_fn(p, |j, _| psi[j] * diag[j]);
    let heywood = (0..p).filter(|&j| at_bound(u[j])).collect();
    let model = FactorModel::new(lambda, uniq)?;

    Ok(MleFit {
        model,
        k,
        converged,
        iterations,
        final_gradient_norm: pg,
        objective: cur.f,
        objective_trace: trace,
        heywood,
    })
}
