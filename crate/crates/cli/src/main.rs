mod input;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use efa_lrt::lrt::{min_n_chisq, min_n_bartlett};
use efa_lrt::sim::{self, SimConfig};
use efa_lrt::{
    regime_diagnostic, select_num_factors, test_given_sigma, test_k_factor, test_no_factor,
    Calibration, Correction, RegimeThresholds, SelectOptions, TestOptions,
};

/// Likelihood ratio tests for exploratory factor analysis.
///
/// Exit status: 0 on success, 1 on error, 2 when --strict is given and a
/// statistical-validity warning was raised.
#[derive(Debug, Parser)]
#[command(name = "efa-lrt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one likelihood ratio test on a data file.
    Test(TestArgs),
    /// Estimate the number of factors by sequential testing.
    Select(SelectArgs),
    /// Report the validity regime of the chi-square approximations at (N, p).
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo experiment described by a config file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// H0: no common factors (correlation matrix is the identity).
    NoFactor,
    /// H0: a k-factor model holds.
    KFactor,
    /// H0: the covariance equals a given matrix.
    GivenSigma,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Multiplicative correction: none or bartlett.
    #[arg(long, default_value = "none")]
    correction: Correction,
    /// Exit with status 2 if any validity warning is raised.
    #[arg(long)]
    strict: bool,
    /// Print the full result as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, clap::Args)]
struct TestArgs {
    /// Delimited numeric table, one observation per row.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "no-factor")]
    kind: Kind,
    /// Number of factors under H0 (k-factor only).
    #[arg(long, required_if_eq("kind", "k-factor"))]
    k: Option<usize>,
    /// File holding the hypothesized covariance (given-sigma only).
    #[arg(long, required_if_eq("kind", "given-sigma"))]
    sigma: Option<PathBuf>,
    /// Reference distribution: chisq or hd-normal.
    #[arg(long, default_value = "chisq")]
    calibration: Calibration,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, clap::Args)]
struct SelectArgs {
    /// Delimited numeric table, one observation per row.
    input: PathBuf,
    /// Largest number of factors to test.
    #[arg(long)]
    k_max: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, clap::Args)]
struct DiagnoseArgs {
    /// Sample size.
    #[arg(long = "n", value_parser = clap::value_parser!(u64).range(2..))]
    n_obs: u64,
    /// Number of variables.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// Flat key = value config file.
    config: PathBuf,
    /// Output path prefix; writes PREFIX.csv and PREFIX.json. Defaults to the
    /// config path without its extension.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads (overrides the config).
    #[arg(long)]
    threads: Option<usize>,
    /// Base seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per cell (overrides the config).
    #[arg(long)]
    replications: Option<usize>,
}

enum Status {
    Ok,
    FatalWarning,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::FatalWarning) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<Status> {
    match cmd {
        Command::Test(a) => cmd_test(a),
        Command::Select(a) => cmd_select(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn strict_status(strict: bool, warned: bool) -> Status {
    if strict && warned {
        Status::FatalWarning
    } else {
        Status::Ok
    }
}

fn cmd_test(a: TestArgs) -> Result<Status> {
    let data = input::read_data(&a.input)?;
    let opts = TestOptions::new(a.common.correction, a.calibration, a.common.alpha);
    let res = match a.kind {
        Kind::NoFactor => test_no_factor(&data, &opts)?,
        Kind::KFactor => test_k_factor(&data, a.k.unwrap_or_default(), &opts)?,
        Kind::GivenSigma => {
            let path = a.sigma.as_deref().unwrap_or(Path::new(""));
            let sigma = input::read_square(path)?;
            test_given_sigma(&data, &sigma, &opts)?
        }
    };
    if a.common.json {
        println!("{}", serde_json::to_string_pretty(&res)?);
    } else {
        print!("{}", report::test_report(&res));
    }
    Ok(strict_status(a.common.strict, !res.warnings.is_empty()))
}

fn cmd_select(a: SelectArgs) -> Result<Status> {
    let data = input::read_data(&a.input)?;
    let mut opts = SelectOptions::new(a.common.alpha, a.common.correction);
    if let Some(k) = a.k_max {
        opts = opts.with_k_max(k);
    }
    let res = select_num_factors(&data, &opts)?;
    if a.common.json {
        println!("{}", serde_json::to_string_pretty(&res)?);
    } else {
        print!("{}", report::select_report(&res));
    }
    let warned = res.trail.iter().any(|e| !e.result.warnings.is_empty());
    Ok(strict_status(a.common.strict, warned))
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<Status> {
    let (n, p) = (a.n_obs as usize, a.p as usize);
    let thresholds = RegimeThresholds::default();
    let rep = regime_diagnostic(n, p, thresholds);
    let min_chisq = min_n_chisq(p, thresholds.safe_below);
    let min_bartlett = min_n_bartlett(p, thresholds.safe_below);
    if a.json {
        let v = serde_json::json!({
            "report": rep,
            "min_n_chisq": min_chisq,
            "min_n_bartlett": min_bartlett,
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        print!("{}", report::diagnose_report(&rep, min_chisq, min_bartlett));
    }
    Ok(Status::Ok)
}

fn cmd_simulate(a: SimulateArgs) -> Result<Status> {
    let mut cfg = SimConfig::from_file(&a.config)?;
    if let Some(t) = a.threads {
        cfg.threads = Some(t);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    if let Some(note) = cfg.scale_note() {
        eprintln!("note: {note}");
    }

    let prefix = a.out.unwrap_or_else(|| a.config.with_extension(""));
    let csv_path = prefix.with_extension("csv");
    let json_path = prefix.with_extension("json");

    let res = sim::run(&cfg, &mut |c| {
        let what = match &c.skipped {
            Some(reason) => format!("skipped ({reason})"),
            None => format!("{:.1}s", c.elapsed.as_secs_f64()),
        };
        let eps = c.point.epsilon.map(|e| format!(" eps={e}")).unwrap_or_default();
        eprintln!("[{}/{}] N={}{eps} p={}: {what}", c.point.index + 1, c.total, c.point.n, c.point.p);
    })?;

    std::fs::write(&csv_path, res.to_csv()).with_context(|| format!("cannot write {}", csv_path.display()))?;
    std::fs::write(&json_path, res.to_json()).with_context(|| format!("cannot write {}", json_path.display()))?;
    println!("wrote {} and {} ({} rows)", csv_path.display(), json_path.display(), res.rows.len());
    Ok(Status::Ok)
}
