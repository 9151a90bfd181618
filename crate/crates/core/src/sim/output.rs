use std::fmt::Write as _;

use serde::Serialize;

use super::{Epsilon, Experiment, GridPoint};

pub const CSV_HEADER: &str = "N,epsilon,p,mode,correction,metric,value,mc_se,replications,failed";

/// One tabulated quantity for one grid point.
///
/// `mode` is the calibration (`chisq`, `hd-normal`) for type I rows,
/// `select` for selection proportions, `histogram` for summaries, and the
/// experiment name for skipped points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon: Option<Epsilon>,
    pub p: usize,
    pub mode: String,
    pub correction: String,
    pub metric: String,
    pub value: Option<f64>,
    pub mc_se: Option<f64>,
    pub replications: usize,
    pub failed: usize,
}

impl SimRow {
    pub(crate) fn skipped(point: &GridPoint, experiment: Experiment, replications: usize) -> Self {
        Self {
            n: point.n,
            epsilon: point.epsilon,
            p: point.p,
            mode: experiment.to_string(),
            correction: String::new(),
            metric: "skipped".into(),
            value: None,
            mc_se: None,
            replications,
            failed: 0,
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.metric == "skipped"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimGridResult {
    pub experiment: Experiment,
    pub generator: String,
    pub seed: u64,
    pub alpha: f64,
    pub replications: usize,
    pub rows: Vec<SimRow>,
}

impl SimGridResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let eps = r.epsilon.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.n,
                eps,
                r.p,
                r.mode,
                r.correction,
                r.metric,
                opt(r.value),
                opt(r.mc_se),
                r.replications,
                r.failed
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// First row matching the given fields, for lookups in tests and reports.
    pub fn find(&self, n: usize, p: usize, mode: &str, correction: &str, metric: &str) -> Option<&SimRow> {
        self.rows.iter().find(|r| {
            r.n == n && r.p == p && r.mode == mode && r.correction == correction && r.metric == metric
        })
    }

    pub fn value(&self, n: usize, p: usize, mode: &str, correction: &str, metric: &str) -> Option<f64> {
        self.find(n, p, mode, correction, metric).and_then(|r| r.value)
    }
}
