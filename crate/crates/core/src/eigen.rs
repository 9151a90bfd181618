//! Leading eigenpairs of `D R D` for symmetric `R` and diagonal `D`.
//!
//! Small problems go to the dense solver. Larger ones use Lanczos with full
//! reorthogonalization on the implicit product, stopping once every wanted
//! Ritz pair has a residual below `RESIDUAL_TOL` times the top Ritz value;
//! running out to `p` steps makes the result exact.

use nalgebra::{DMatrix, DVector};

const DENSE_BELOW: usize = 64;
const RESIDUAL_TOL: f64 = 1e-11;

/// The `k` largest eigenvalues (descending) of `diag(d) r diag(d)` and their
/// unit eigenvectors as columns.
pub(crate) fn top_eigenpairs(r: &DMatrix<f64>, d: &[f64], k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let p = r.nrows();
    let k = k.min(p);
    if p < DENSE_BELOW {
        dense(r, d, k)
    } else {
        lanczos(r, d, k)
    }
}

fn dense(r: &DMatrix<f64>, d: &[f64], k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let p = r.nrows();
    let m = DMatrix::from_fn(p, p, |i, j| r[(i, j)] * d[i] * d[j]);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(p, k, |i, c| eig.eigenvectors[(i, order[c])]);
    (vals, vecs)
}

fn lanczos(r: &DMatrix<f64>, d: &[f64], k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let p = r.nrows();
    let dv = DVector::from_column_slice(d);
    let apply = |q: &DVector<f64>| -> DVector<f64> {
        let x = q.component_mul(&dv);
        (r * x).component_mul(&dv)
    };

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    // fixed start with weight on every coordinate
    let mut q = DVector::from_fn(p, |j, _| 1.0 + 0.5 * ((j as f64) * 0.7).sin());
    q /= q.norm();

    let check_every = 8;
    loop {
        let mut w = apply(&q);
        let a = q.dot(&w);
        basis.push(q.clone());
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let mut bnorm = w.norm();
        let j = basis.len();
        let exhausted = j == p;
        if !exhausted && bnorm <= 1e-14 * alpha.iter().fold(0.0_f64, |m, x| m.max(x.abs())) {
            // invariant subspace found: continue from a fresh orthogonal direction
            bnorm = 0.0;
            w = fresh_direction(&basis, p);
        }

        if exhausted || (j >= k + 2 && j % check_every == 0) {
            let t = DMatrix::from_fn(j, j, |a_, b_| {
                if a_ == b_ {
                    alpha[a_]
                } else if a_ + 1 == b_ {
                    beta[a_]
                } else if b_ + 1 == a_ {
                    beta[b_]
                } else {
                    0.0
                }
            });
            let eig = t.symmetric_eigen();
            let mut order: Vec<usize> = (0..j).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = eig.eigenvalues[order[0]].abs().max(f64::MIN_POSITIVE);
            let kk = k.min(j);
            let done = exhausted
                || order[..kk]
                    .iter()
                    .all(|&i| (bnorm * eig.eigenvectors[(j - 1, i)]).abs() <= RESIDUAL_TOL * top);
            if done {
                let vals: Vec<f64> = order[..kk].iter().map(|&i| eig.eigenvalues[i]).collect();
                let mut vecs = DMatrix::zeros(p, kk);
                for (c, &i) in order[..kk].iter().enumerate() {
                    let mut v = DVector::zeros(p);
                    for (row, b) in basis.iter().enumerate() {
                        v.axpy(eig.eigenvectors[(row, i)], b, 1.0);
                    }
                    v /= v.norm();
                    vecs.set_column(c, &v);
                }
                return (vals, vecs);
            }
        }
        beta.push(bnorm);
        q = if bnorm > 0.0 { w / bnorm } else { w };
    }
}

fn fresh_direction(basis: &[DVector<f64>], p: usize) -> DVector<f64> {
    for start in 0..p {
        let mut w = DVector::from_fn(p, |j, _| if j == (start * 7 + basis.len()) % p { 1.0 } else { 0.0 });
        for _ in 0..2 {
            for b in basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let n = w.norm();
        if n > 1e-3 {
            return w / n;
        }
    }
    unreachable!("fewer than p basis vectors always leave a direction")
}
