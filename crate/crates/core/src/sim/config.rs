use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use toml::{Table, Value};

use super::Epsilon;
use crate::error::{Error, Result};
use crate::lrt::{Calibration, Correction};
use crate::sampler::DiscreteSetting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    TypeIH00,
    TypeIHk,
    TypeITprime,
    Selection,
    Histogram,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TypeIH00 => "typeI-h00",
            Self::TypeIHk => "typeI-hk",
            Self::TypeITprime => "typeI-tprime",
            Self::Selection => "selection",
            Self::Histogram => "histogram",
        })
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "typeI-h00" => Ok(Self::TypeIH00),
            "typeI-hk" => Ok(Self::TypeIHk),
            "typeI-tprime" => Ok(Self::TypeITprime),
            "selection" => Ok(Self::Selection),
            "histogram" => Ok(Self::Histogram),
            other => Err(Error::InvalidInput(format!(
                "unknown experiment `{other}` (expected typeI-h00, typeI-hk, typeI-tprime, selection or histogram)"
            ))),
        }
    }
}

impl Serialize for Experiment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A data generator before the dimension is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorTemplate {
    Normal,
    T { dof: f64 },
    Discretized(DiscreteSetting),
    /// The example loading structures with `k0` factors.
    Factor { k0: usize },
}

impl fmt::Display for GeneratorTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal => f.write_str("normal"),
            Self::T { dof } => write!(f, "t({dof})"),
            Self::Discretized(s) => write!(f, "discrete({s})"),
            Self::Factor { k0 } => write!(f, "factor(k0={k0})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub experiment: Experiment,
    pub n_list: Vec<usize>,
    pub epsilon_list: Vec<Epsilon>,
    /// Fixed dimensions, crossed with every sample size like the exponents.
    pub p_list: Vec<usize>,
    pub generator: GeneratorTemplate,
    pub replications: usize,
    pub alpha: f64,
    pub corrections: Vec<Correction>,
    pub calibrations: Vec<Calibration>,
    pub seed: u64,
    /// Worker count; `None` uses every available core.
    pub threads: Option<usize>,
    /// Factors under test for `typeI-hk`; defaults to the generator's `k0`.
    pub k: Option<usize>,
    /// Largest order tried by the selection procedure.
    pub k_max: Option<usize>,
    pub quantiles: Vec<f64>,
}

const KEYS: &[&str] = &[
    "experiment",
    "n",
    "epsilon",
    "epsilon_range",
    "p",
    "generator",
    "dof",
    "setting",
    "k0",
    "k",
    "k_max",
    "replications",
    "alpha",
    "corrections",
    "calibrations",
    "seed",
    "threads",
    "quantiles",
];

impl SimConfig {
    /// Defaults: 1000 replications (5000 for histograms), alpha 0.05, both
    /// corrections, chi-square calibration, seed 1, empty grid.
    pub fn new(experiment: Experiment, generator: GeneratorTemplate) -> Self {
        Self {
            experiment,
            n_list: Vec::new(),
            epsilon_list: Vec::new(),
            p_list: Vec::new(),
            generator,
            replications: if experiment == Experiment::Histogram { 5000 } else { 1000 },
            alpha: 0.05,
            corrections: vec![Correction::None, Correction::Bartlett],
            calibrations: vec![Calibration::ChiSquare],
            seed: 1,
            threads: None,
            k: None,
            k_max: None,
            quantiles: vec![0.05, 0.25, 0.5, 0.75, 0.95],
        }
    }

    pub fn tested_k(&self) -> Option<usize> {
        self.k.or(match self.generator {
            GeneratorTemplate::Factor { k0 } => Some(k0),
            _ => None,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        text.parse()
    }

    /// Every inconsistency, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            errs.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 2) {
            errs.push(format!("sample sizes must be at least 2, got {n}"));
        }
        if self.p_list.contains(&0) {
            errs.push("dimensions must be at least 1".into());
        }
        if self.corrections.is_empty() {
            errs.push("corrections must not be empty".into());
        }
        if let Some(q) = self.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            errs.push(format!("quantiles must lie in (0, 1), got {q}"));
        }
        if self.threads == Some(0) {
            errs.push("threads must be positive".into());
        }
        match self.generator {
            GeneratorTemplate::T { dof } if !(dof > 0.0) || !dof.is_finite() => {
                errs.push(format!("dof must be positive, got {dof}"));
            }
            GeneratorTemplate::Factor { k0 } if k0 != 1 && k0 != 3 => {
                errs.push(format!("k0 must be 1 or 3, got {k0}"));
            }
            _ => {}
        }
        match self.experiment {
            Experiment::TypeIH00 | Experiment::TypeITprime => {
                if self.calibrations.is_empty() {
                    errs.push("calibrations must not be empty".into());
                }
            }
            Experiment::TypeIHk => {
                if self.calibrations.iter().any(|c| *c != Calibration::ChiSquare) {
                    errs.push("typeI-hk supports only the chisq calibration".into());
                }
                if self.tested_k().is_none() {
                    errs.push("typeI-hk needs k or a factor generator".into());
                }
            }
            Experiment::Selection => {
                if !matches!(self.generator, GeneratorTemplate::Factor { .. } | GeneratorTemplate::Normal) {
                    errs.push("selection needs a factor or normal generator with a known number of factors".into());
                }
            }
            Experiment::Histogram => {}
        }
        if self.experiment == Experiment::TypeITprime {
            if let GeneratorTemplate::T { dof } = self.generator {
                if dof <= 2.0 {
                    errs.push(format!("typeI-tprime needs finite variances, but t({dof}) has none"));
                }
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.problems();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// A note when the grid leaves the desk-scale range (N <= 2000, epsilon <= 23/24).
    pub fn scale_note(&self) -> Option<String> {
        let big_n = self.n_list.iter().any(|&n| n > 2000);
        let big_eps = self.epsilon_list.iter().any(|e| e.value() > 23.0 / 24.0);
        if !big_n && !big_eps && self.p_list.iter().all(|&p| p <= 2000) {
            return None;
        }
        // about 1 ns per multiply-add on one core; fits add a few eigensolves
        let per_fit = if matches!(self.experiment, Experiment::TypeIHk | Experiment::Selection) { 30.0 } else { 1.0 };
        let secs: f64 = self
            .grid()
            .iter()
            .map(|g| {
                let (n, p) = (g.n as f64, g.p as f64);
                self.replications as f64 * (n * p * p + per_fit * p * p * p) * 1e-9
            })
            .sum();
        Some(format!(
            "grid exceeds desk scale (N <= 2000, epsilon <= 23/24); rough single-core estimate {secs:.0} s"
        ))
    }
}

impl FromStr for SimConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        let mut errs = Vec::new();
        for (key, value) in &table {
            if !KEYS.contains(&key.as_str()) {
                errs.push(format!("unknown key `{key}`"));
            } else if value.is_table() {
                errs.push(format!("key `{key}`: nested tables are not allowed"));
            }
        }
        let mut r = Reader { table: &table, errs: &mut errs };

        let experiment = r.string("experiment").and_then(|s| r.parsed::<Experiment>("experiment", &s));
        let generator = match r.string("generator").as_deref() {
            None | Some("normal") => Some(GeneratorTemplate::Normal),
            Some("t") => r
                .float("dof")
                .or_else(|| {
                    r.missing("dof", "generator t");
                    None
                })
                .map(|dof| GeneratorTemplate::T { dof }),
            Some("discrete") => r
                .string("setting")
                .or_else(|| {
                    r.missing("setting", "generator discrete");
                    None
                })
                .and_then(|s| r.parsed::<DiscreteSetting>("setting", &s))
                .map(GeneratorTemplate::Discretized),
            Some("factor") => r
                .uint("k0")
                .or_else(|| {
                    r.missing("k0", "generator factor");
                    None
                })
                .map(|k0| GeneratorTemplate::Factor { k0 }),
            Some(other) => {
                r.errs.push(format!("key `generator`: unknown generator `{other}` (expected normal, t, discrete or factor)"));
                None
            }
        };
        for (key, needs) in [("dof", "t"), ("setting", "discrete"), ("k0", "factor")] {
            let gen = table.get("generator").and_then(Value::as_str).unwrap_or("normal");
            if table.contains_key(key) && gen != needs {
                r.errs.push(format!("key `{key}` only applies to generator {needs}"));
            }
        }

        let Some(experiment) = experiment else {
            if !table.contains_key("experiment") {
                r.errs.push("missing key `experiment`".into());
            }
            return Err(Error::Config(errs));
        };
        let mut cfg = SimConfig::new(experiment, generator.unwrap_or(GeneratorTemplate::Normal));

        cfg.n_list = r.uint_list("n").unwrap_or_default();
        cfg.p_list = r.uint_list("p").unwrap_or_default();
        let mut eps = Vec::new();
        if let Some(range) = r.string("epsilon_range") {
            match Epsilon::parse_range(&range) {
                Ok(v) => eps.extend(v),
                Err(e) => r.errs.push(format!("key `epsilon_range`: {e}")),
            }
        }
        if let Some(list) = r.string_list("epsilon") {
            for s in list {
                if let Some(e) = r.parsed::<Epsilon>("epsilon", &s) {
                    eps.push(e);
                }
            }
        }
        cfg.epsilon_list = eps;

        if let Some(v) = r.uint("replications") {
            cfg.replications = v;
        }
        if let Some(v) = r.float("alpha") {
            cfg.alpha = v;
        }
        if let Some(v) = r.uint("seed") {
            cfg.seed = v as u64;
        }
        cfg.threads = r.uint("threads");
        cfg.k = r.uint("k");
        cfg.k_max = r.uint("k_max");
        if let Some(list) = r.string_list("corrections") {
            cfg.corrections = list.iter().filter_map(|s| r.parsed("corrections", s)).collect();
        }
        if let Some(list) = r.string_list("calibrations") {
            cfg.calibrations = list.iter().filter_map(|s| r.parsed("calibrations", s)).collect();
        }
        if let Some(q) = r.float_list("quantiles") {
            cfg.quantiles = q;
        }
        for (key, applies) in [
            ("k", experiment == Experiment::TypeIHk),
            ("k_max", experiment == Experiment::Selection),
            ("quantiles", experiment == Experiment::Histogram),
            ("calibrations", !matches!(experiment, Experiment::Selection | Experiment::Histogram)),
        ] {
            if table.contains_key(key) && !applies {
                r.errs.push(format!("key `{key}` does not apply to experiment {experiment}"));
            }
        }

        errs.extend(cfg.problems());
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errs))
        }
    }
}

struct Reader<'a> {
    table: &'a Table,
    errs: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn missing(&mut self, key: &str, by: &str) {
        self.errs.push(format!("missing key `{key}` required by {by}"));
    }

    fn typed<T>(&mut self, key: &str, what: &str, f: impl Fn(&Value) -> Option<T>) -> Option<T> {
        let v = self.table.get(key)?;
        let out = f(v);
        if out.is_none() {
            self.errs.push(format!("key `{key}`: expected {what}, got `{v}`"));
        }
        out
    }

    fn string(&mut self, key: &str) -> Option<String> {
        self.typed(key, "a string", |v| v.as_str().map(str::to_string))
    }

    fn uint(&mut self, key: &str) -> Option<usize> {
        self.typed(key, "a non-negative integer", |v| v.as_integer().and_then(|i| usize::try_from(i).ok()))
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        self.typed(key, "a number", |v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
    }

    fn list<T>(&mut self, key: &str, what: &str, f: impl Fn(&Value) -> Option<T>) -> Option<Vec<T>> {
        self.typed(key, &format!("an array of {what}"), |v| {
            v.as_array().and_then(|a| a.iter().map(&f).collect::<Option<Vec<T>>>())
        })
    }

    fn uint_list(&mut self, key: &str) -> Option<Vec<usize>> {
        self.list(key, "non-negative integers", |v| v.as_integer().and_then(|i| usize::try_from(i).ok()))
    }

    fn float_list(&mut self, key: &str) -> Option<Vec<f64>> {
        self.list(key, "numbers", |v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
    }

    fn string_list(&mut self, key: &str) -> Option<Vec<String>> {
        self.list(key, "strings", |v| v.as_str().map(str::to_string))
    }

    fn parsed<T: FromStr<Err = Error>>(&mut self, key: &str, s: &str) -> Option<T> {
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.errs.push(format!("key `{key}`: {e}"));
                None
            }
        }
    }
}
