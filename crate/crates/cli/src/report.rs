//! Plain-text reports. Nothing here depends on the clock, so output is a
//! function of the inputs alone.

use std::fmt::Write;

use efa_lrt::{Calibration, Correction, RegimeReport, SelectionResult, StatKind, StopReason, TestResult};

fn hypothesis(kind: StatKind) -> String {
    match kind {
        StatKind::NoFactor => "no common factors".into(),
        StatKind::KFactor { k } => format!("{k}-factor model"),
        StatKind::GivenSigma => "covariance equals the given matrix".into(),
    }
}

fn fmt_p(p: f64) -> String {
    if p == 0.0 || p >= 1e-4 {
        format!("{p:.4}")
    } else {
        format!("{p:.3e}")
    }
}

fn regime_lines(out: &mut String, r: &RegimeReport) {
    let _ = writeln!(out, "regime:");
    let _ = writeln!(out, "  epsilon = ln p / ln N  {:.4}", r.epsilon);
    let _ = writeln!(out, "  p^2/N                  {:.4}  chi-square: {}", r.ratio_sq, r.chisq_valid);
    let _ = writeln!(out, "  p^3/N^2                {:.4}  Bartlett:   {}", r.ratio_cube, r.bartlett_valid);
}

pub fn test_report(res: &TestResult) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "test: {} (H0: {})", res.kind, hypothesis(res.kind));
    let _ = writeln!(w, "N = {}, p = {}", res.regime.n_obs, res.regime.p);
    let _ = writeln!(w, "statistic:   {:.6}", res.statistic);
    let _ = writeln!(w, "df:          {}", res.df);
    let _ = writeln!(w, "rho:         {:.6}", res.rho);
    if res.correction == Correction::Bartlett {
        let _ = writeln!(w, "corrected:   {:.6}", res.corrected_statistic);
    }
    match res.calibration {
        Calibration::ChiSquare => {
            let _ = writeln!(w, "calibration: chi-square ({}), df = {}", res.correction, res.df);
        }
        Calibration::HdNormal => {
            let _ = writeln!(w, "calibration: high-dimensional normal");
            if let (Some(z), Some(hd)) = (res.z_score, res.hd) {
                let _ = writeln!(w, "  mu = {:.6}, sigma = {:.6}, z = {z:.4}", hd.mu, hd.sigma);
            }
        }
    }
    let _ = writeln!(w, "p-value:     {}", fmt_p(res.p_value));
    let _ = writeln!(
        w,
        "decision:    {} H0 at alpha = {}",
        if res.rejected { "reject" } else { "do not reject" },
        res.alpha
    );
    regime_lines(w, &res.regime);
    if let Some(m) = &res.mle {
        let _ = writeln!(
            w,
            "fit: {} after {} iterations (gradient {:.2e})",
            if m.converged { "converged" } else { "not converged" },
            m.iterations,
            m.gradient_norm
        );
    }
    for warning in &res.warnings {
        let _ = writeln!(w, "warning: {warning}");
    }
    out
}

pub fn select_report(res: &SelectionResult) -> String {
    let mut out = String::new();
    let w = &mut out;
    let stop = match res.stopped_reason {
        StopReason::NonRejection => "first non-rejection",
        StopReason::DfExhausted => "every testable order rejected",
        StopReason::MleFailure => "factor model fit failed to converge",
    };
    let _ = writeln!(w, "estimated number of factors: {} ({stop})", res.k_hat);
    let _ = writeln!(w, "alpha = {}", res.alpha);
    let _ = writeln!(w, "{:>3}  {:>14}  {:>8}  {:>10}  decision", "k", "statistic", "df", "p-value");
    for e in &res.trail {
        let _ = writeln!(
            w,
            "{:>3}  {:>14.4}  {:>8}  {:>10}  {}",
            e.k,
            e.result.statistic,
            e.result.df,
            fmt_p(e.result.p_value),
            if e.rejected { "reject" } else { "do not reject" }
        );
    }
    if let Some(first) = res.trail.first() {
        regime_lines(w, &first.result.regime);
    }
    for e in &res.trail {
        for warning in &e.result.warnings {
            let _ = writeln!(w, "warning (k = {}): {warning}", e.k);
        }
    }
    out
}

pub fn diagnose_report(r: &RegimeReport, min_chisq: u64, min_bartlett: u64) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "N = {}, p = {}", r.n_obs, r.p);
    regime_lines(w, r);
    let _ = writeln!(
        w,
        "thresholds: safe below {}, failing at {} or above",
        r.thresholds.safe_below, r.thresholds.failing_at
    );
    let _ = writeln!(w, "minimum N for a safe chi-square calibration at p = {}: {min_chisq}", r.p);
    let _ = writeln!(w, "minimum N for a safe Bartlett calibration at p = {}: {min_bartlett}", r.p);
    out
}
