//! Deterministic checks shared by the oracle tests and the acceptance runner.
//! Each returns a one-line summary on success and a description of the first
//! violation otherwise.

#![allow(dead_code)]

use efa_lrt::lrt::{bartlett_no_factor, given_sigma_statistic, k_factor_statistic, no_factor_statistic};
use efa_lrt::mle::{factor_df, fit_factor_model};
use efa_lrt::select::{select_num_factors, SelectOptions, StopReason};
use efa_lrt::{
    build_example_model, chisq_cdf, chisq_sf, chisq_upper_quantile, hd_calibration_t0,
    hd_calibration_tprime, logdet_spd, sample, sample_covariance, Correction, DataMatrix,
    GeneratorKind, GeneratorSpec, MleOptions, SigmaReference,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<String, String>;

/// Laplace expansion along the first row.
pub fn cofactor_det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)];
    }
    (0..n)
        .map(|j| {
            let minor = m.clone().remove_row(0).remove_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[(0, j)] * cofactor_det(&minor)
        })
        .sum()
}

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let scale = rng.random_range(0.2..5.0);
    (&b * b.transpose() + DMatrix::identity(p, p) * 0.05) * scale
}

pub fn logdet_vs_cofactor() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let p = 1 + i % 6;
        let a = random_spd(&mut rng, p);
        let det = cofactor_det(&a);
        let ld = logdet_spd(&a).map_err(|e| format!("matrix {i}: {e}"))?;
        let rel = (ld.exp() - det).abs() / det.abs();
        worst = worst.max(rel);
        if rel > 1e-10 {
            return Err(format!("matrix {i} (p = {p}): exp(logdet) = {} vs det = {det}", ld.exp()));
        }
    }
    Ok(format!("100 SPD matrices, worst relative error {worst:.1e}"))
}

/// `(N, p, mu0, mu, sigma)` at 60 significant digits, from tests/oracles/hd_constants.py.
pub const HD_ORACLE: [(usize, usize, f64, f64, f64); 20] = [
    (10, 1, -0.005516121466012979847933068, -0.1166272325771240909590442, 0.1155155794278186826745558),
    (10, 8, -6.012498822443001419715866, -6.901387711331890308604755, 1.617612863726874851227879),
    (50, 3, -0.06413548642439337825727694, -0.1253599762203117456042157, 0.06252058581960413204557013),
    (100, 10, -0.4752018833730661545852517, -0.5762119843831671646862618, 0.1046267594102873706471262),
    (100, 50, -15.38492122178727409237111, -15.88997172683777914287616, 0.6296809461520306573245451),
    (100, 97, -90.1672430158400532758674, -91.1470409956380330738472, 2.41750892026344540619966),
    (500, 7, -0.04236503798578964189631728, -0.05639309409801409079411287, 0.01409419362617828454407229),
    (500, 100, -10.67719467202719289015126, -10.87759547363039930297691, 0.2156101911248575279172204),
    (500, 250, -76.75342797321943793996401, -77.25442997722745397202814, 0.6231391422127084103595325),
    (1000, 10, -0.04523810494576186490766777, -0.05524811495577187491767778, 0.01004360650676780190493575),
    (1000, 31, -0.470765066581703111514163, -0.501796097612734142545194, 0.03135794447808947655917928),
    (1000, 177, -16.61850670168790842972918, -16.79568387886508560690636, 0.1888767133089541308422727),
    (1000, 300, -50.26253026400153129303135, -50.56283056430183159333165, 0.3370570756250132825745912),
    (1000, 998, -993.5476236116767242417241, -994.5466226106757232407231, 3.437369860707327060610427),
    (2000, 12, -0.03309784263869254072563786, -0.03910084413944291591323165, 0.006015055749174741830553687),
    (2000, 500, -68.4083935953618985429378, -68.65851865789316417575421, 0.2746771700252379065905365),
    (2000, 935, -263.8767608322317045739733, -264.34449469916517130734, 0.5707500287610043332833807),
    (2000, 1457, -749.5398112153856799844868, -750.2686756476017880385138, 1.073565927965903545338892),
    (100000, 5, -0.0001000037084704221106493439, -0.0001500042084754221606498439, 0.00005000133337930742971394056),
    (1000000, 1000, -0.4996675000514091596631139, -0.5006675010514101596641139, 0.001000334528581317289410443),
];

pub fn hd_constants_vs_oracle() -> Check {
    let mut worst = 0.0_f64;
    for &(n, p, mu0, mu, sigma) in &HD_ORACLE {
        let a = hd_calibration_t0(n, p).map_err(|e| e.to_string())?;
        let b = hd_calibration_tprime(n, p).map_err(|e| e.to_string())?;
        for (name, got, want) in [("mu0", a.mu, mu0), ("mu", b.mu, mu), ("sigma0", a.sigma, sigma), ("sigma", b.sigma, sigma)] {
            let rel = (got - want).abs() / want.abs();
            worst = worst.max(rel);
            if rel > 1e-12 {
                return Err(format!("{name} at N = {n}, p = {p}: {got} vs {want} (relative {rel:.1e})"));
            }
        }
    }
    Ok(format!("20 (N, p) pairs, worst relative error {worst:.1e}"))
}

pub fn chisq_round_trips() -> Check {
    let mut worst = 0.0_f64;
    for df in [1.0, 2.0, 5.0, 17.5, 45.0, 190.0, 1225.0, 4950.0, 44850.0] {
        for alpha in [1e-6, 0.001, 0.01, 0.05, 0.1, 0.5, 0.9, 0.99] {
            let q = chisq_upper_quantile(df, alpha).map_err(|e| e.to_string())?;
            let sf = chisq_sf(df, q).map_err(|e| e.to_string())?;
            let cdf = chisq_cdf(df, q).map_err(|e| e.to_string())?;
            let err = (sf - alpha).abs().max((cdf + sf - 1.0).abs());
            worst = worst.max(err);
            if err > 1e-8 {
                return Err(format!("df = {df}, alpha = {alpha}: sf(q) = {sf}, cdf + sf = {}", cdf + sf));
            }
        }
    }
    Ok(format!("72 quantile/CDF round trips, worst error {worst:.1e}"))
}

fn factor_data(k0: usize, p: usize, n: usize, seed: u64) -> (DataMatrix, DMatrix<f64>) {
    let model = build_example_model(k0, p).unwrap();
    let sigma = model.implied_sigma();
    let spec = GeneratorSpec::new(GeneratorKind::factor_normal(model).unwrap(), seed);
    (sample(&spec, n, p).unwrap(), sigma)
}

/// Monotone objective traces, nesting `T_{k+1} <= T_k`, `T_k <= T'(Sigma_true)`
/// for `k >= k0`, and invariance of `T_k` under column rescaling.
pub fn mle_invariants() -> Check {
    let opts = MleOptions::default();
    let mut fits = 0;
    for inst in 0..50u64 {
        let k0 = if inst % 2 == 0 { 1 } else { 3 };
        let p = 7 + (inst % 6) as usize;
        let n = 60 + 20 * (inst % 7) as usize;
        let (data, sigma) = factor_data(k0, p, n, 1000 + inst);
        let cov = sample_covariance(&data).unwrap();
        let t_true = given_sigma_statistic(&data, &SigmaReference::new(sigma).unwrap())
            .unwrap()
            .value;

        let scales: Vec<f64> = (0..p).map(|j| 0.5 + 0.75 * j as f64).collect();
        let scaled = DataMatrix::new(DMatrix::from_fn(n, p, |i, j| data.values()[(i, j)] * scales[j] + 3.0))
            .unwrap();

        let mut prev = no_factor_statistic(&data).unwrap().value;
        let mut k = 1;
        while factor_df(p, k) > 0 && k <= 4 {
            let fit = fit_factor_model(&cov, k, &opts).unwrap();
            fits += 1;
            if !fit.converged {
                return Err(format!("instance {inst}: k = {k} fit did not converge"));
            }
            if let Some(w) = fit.objective_trace.windows(2).find(|w| w[1] > w[0]) {
                return Err(format!("instance {inst}: objective rose from {} to {} at k = {k}", w[0], w[1]));
            }
            let t = k_factor_statistic(&data, k, &opts).unwrap().value;
            let tol = 1e-7 * prev.abs().max(1.0);
            if t > prev + tol {
                return Err(format!("instance {inst}: T_{k} = {t} exceeds T_{} = {prev}", k - 1));
            }
            if k >= k0 && t > t_true + 1e-7 * t_true.max(1.0) {
                return Err(format!("instance {inst}: T_{k} = {t} exceeds T'(Sigma_true) = {t_true}"));
            }
            let ts = k_factor_statistic(&scaled, k, &opts).unwrap().value;
            if (ts - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(format!("instance {inst}: T_{k} changed under rescaling: {t} vs {ts}"));
            }
            prev = t;
            k += 1;
        }
    }
    Ok(format!("50 instances, {fits} fits: monotone, nested, bounded by T', scale-equivariant"))
}

pub fn t0_scale_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for inst in 0..50u64 {
        let p = 2 + (inst % 9) as usize;
        let n = p + 10 + (inst as usize) * 3;
        let data = sample(&GeneratorSpec::new(GeneratorKind::IidNormal, inst), n, p).unwrap();
        let scales: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..100.0)).collect();
        let shifts: Vec<f64> = (0..p).map(|_| rng.random_range(-50.0..50.0)).collect();
        let moved = DataMatrix::new(DMatrix::from_fn(n, p, |i, j| data.values()[(i, j)] * scales[j] + shifts[j]))
            .unwrap();
        let a = no_factor_statistic(&data).unwrap().value;
        let b = no_factor_statistic(&moved).unwrap().value;
        if (a - b).abs() > 1e-10 * a.abs().max(1.0) {
            return Err(format!("instance {inst}: T0 = {a} vs {b} after rescaling"));
        }
        let rho = bartlett_no_factor(n, p);
        if !(rho > 0.0 && rho < 1.0) {
            return Err(format!("instance {inst}: rho0 = {rho}"));
        }
    }
    Ok("50 datasets, T0 unchanged by column rescaling and shifts".into())
}

/// Trail structure, and `k_hat = k0` whenever every order below `k0` is
/// rejected and `k0` is not.
pub fn selection_trail_consistency() -> Check {
    let mut correct = 0;
    for inst in 0..50u64 {
        let k0 = if inst % 2 == 0 { 1 } else { 3 };
        let p = 8 + (inst % 5) as usize;
        let n = 80 + 40 * (inst % 4) as usize;
        let (data, _) = factor_data(k0, p, n, 500 + inst);
        let correction = if inst % 3 == 0 { Correction::None } else { Correction::Bartlett };
        let res = select_num_factors(&data, &SelectOptions::new(0.05, correction)).map_err(|e| e.to_string())?;
        let trail = &res.trail;
        for (i, e) in trail.iter().enumerate() {
            if e.k != i {
                return Err(format!("instance {inst}: trail entry {i} has k = {}", e.k));
            }
            if i + 1 < trail.len() && !e.rejected {
                return Err(format!("instance {inst}: non-final entry {i} was not rejected"));
            }
            if e.rejected != (e.result.p_value < 0.05) {
                return Err(format!("instance {inst}: decision at k = {i} disagrees with its p-value"));
            }
        }
        let last = trail.last().unwrap();
        if res.stopped_reason == StopReason::NonRejection && (last.rejected || res.k_hat != last.k) {
            return Err(format!("instance {inst}: k_hat = {} but last entry k = {}", res.k_hat, last.k));
        }
        let below_rejected = trail.iter().take(k0).all(|e| e.rejected) && trail.len() > k0;
        if below_rejected && !trail[k0].rejected {
            if res.k_hat != k0 {
                return Err(format!("instance {inst}: orders below {k0} rejected, {k0} kept, yet k_hat = {}", res.k_hat));
            }
            correct += 1;
        }
    }
    Ok(format!("50 selections consistent ({correct} with k_hat = k0 by the coupling rule)"))
}
