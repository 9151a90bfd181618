use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use efa_lrt::sim::SimConfig;
use efa_lrt::{build_example_model, sample, sample_covariance, GeneratorKind, GeneratorSpec};
use nalgebra::DMatrix;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_efa-lrt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_matrix(dir: &Path, name: &str, m: &DMatrix<f64>, header: bool) -> PathBuf {
    let mut s = String::new();
    if header {
        let names: Vec<String> = (1..=m.ncols()).map(|j| format!("x{j}")).collect();
        writeln!(s, "{}", names.join(",")).unwrap();
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    let path = dir.join(name);
    std::fs::write(&path, s).unwrap();
    path
}

fn normal_data(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    sample(&GeneratorSpec::new(GeneratorKind::IidNormal, seed), n, p).unwrap().into_inner()
}

fn one_factor_data(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let kind = GeneratorKind::factor_normal(build_example_model(1, p).unwrap()).unwrap();
    sample(&GeneratorSpec::new(kind, seed), n, p).unwrap().into_inner()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("valid json")
}

#[test]
fn no_factor_high_dimension_warns() {
    let dir = TempDir::new().unwrap();
    let data = write_matrix(dir.path(), "data.csv", &normal_data(1000, 500, 1), true);
    let d = data.to_str().unwrap();

    let o = run(&["test", "--kind", "no-factor", "--alpha", "0.05", d]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("warning: chi-square calibration is unreliable"), "{out}");
    assert!(out.contains("chi-square: failing"));
    for field in ["statistic:", "df:", "rho:", "p-value:", "calibration:"] {
        assert!(out.contains(field), "missing {field}");
    }

    let strict = run(&["test", "--strict", d]);
    assert_eq!(strict.status.code(), Some(2));
    assert_eq!(stdout(&strict), out, "strict changes only the exit status");

    // the normal calibration has no such regime restriction
    let hd = run(&["test", "--calibration", "hd-normal", d]);
    assert_eq!(hd.status.code(), Some(0));
    assert!(!stdout(&hd).contains("warning:"));
    assert!(stdout(&hd).contains("z = "));
}

#[test]
fn saturated_model_is_an_error() {
    let dir = TempDir::new().unwrap();
    let data = write_matrix(dir.path(), "p3.csv", &normal_data(200, 3, 2), false);
    let o = run(&["test", "--kind", "k-factor", "--k", "2", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("saturated") && err.contains("-2"), "{err}");
}

#[test]
fn given_sigma_equal_to_sample_covariance() {
    let dir = TempDir::new().unwrap();
    let x = normal_data(300, 6, 3);
    let s = sample_covariance(&efa_lrt::DataMatrix::new(x.clone()).unwrap()).unwrap().values;
    let data = write_matrix(dir.path(), "x.csv", &x, true);
    let sigma = write_matrix(dir.path(), "sigma0.csv", &s, false);
    let o = run(&[
        "test",
        "--kind",
        "given-sigma",
        "--sigma",
        sigma.to_str().unwrap(),
        "--json",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert!(v["statistic"].as_f64().unwrap().abs() < 1e-8);
    assert_eq!(v["df"].as_f64(), Some(21.0));
    assert_eq!(v["rejected"].as_bool(), Some(false));
}

#[test]
fn k_factor_text_report() {
    let dir = TempDir::new().unwrap();
    let data = write_matrix(dir.path(), "f.csv", &one_factor_data(500, 8, 4), false);
    let o = run(&["test", "--kind", "k-factor", "--k", "1", "--correction", "bartlett", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("test: T1 (H0: 1-factor model)"), "{out}");
    assert!(out.contains("df:          20"));
    assert!(out.contains("corrected:"));
    assert!(out.contains("fit: converged"));
}

#[test]
fn hd_normal_rejected_for_k_factor() {
    let dir = TempDir::new().unwrap();
    let data = write_matrix(dir.path(), "f.csv", &one_factor_data(200, 6, 5), false);
    let o = run(&["test", "--kind", "k-factor", "--k", "1", "--calibration", "hd-normal", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unsupported"));
}

#[test]
fn reports_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = write_matrix(dir.path(), "f.csv", &one_factor_data(400, 10, 6), false);
    let d = data.to_str().unwrap();
    let a = run(&["select", d]);
    let b = run(&["select", d]);
    assert_eq!(stdout(&a), stdout(&b));
    let a = run(&["diagnose", "--n", "500", "--p", "40"]);
    let b = run(&["diagnose", "--n", "500", "--p", "40"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn diagnose_minimum_sample_sizes() {
    let o = run(&["diagnose", "--n", "1000", "--p", "30"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("chi-square calibration at p = 30: 9000"), "{out}");
    assert!(out.contains("Bartlett calibration at p = 30: 520"), "{out}");

    let v = json(&run(&["diagnose", "--n", "100", "--p", "10", "--json"]));
    assert_eq!(v["report"]["epsilon"].as_f64(), Some(0.5));
    assert_eq!(v["report"]["ratio_sq"].as_f64(), Some(1.0));
    assert_eq!(v["report"]["chisq_valid"], "failing");

    let v = json(&run(&["diagnose", "--n", "2000", "--p", "12", "--json"]));
    assert_eq!(v["report"]["chisq_valid"], "safe");
    assert_eq!(v["report"]["bartlett_valid"], "safe");
}

#[test]
fn select_on_null_data() {
    let dir = TempDir::new().unwrap();
    let data = write_matrix(dir.path(), "null.csv", &normal_data(2000, 5, 7), false);
    let v = json(&run(&["select", "--json", data.to_str().unwrap()]));
    assert_eq!(v["k_hat"].as_u64(), Some(0));
    assert_eq!(v["trail"].as_array().unwrap().len(), 1);
}

#[test]
fn select_on_one_factor_data() {
    let dir = TempDir::new().unwrap();
    let data = write_matrix(dir.path(), "one.csv", &one_factor_data(1000, 8, 8), true);
    let o = run(&["select", "--correction", "bartlett", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("estimated number of factors: 1 (first non-rejection)"), "{out}");
    let rows: Vec<&str> = out.lines().skip(3).take(2).collect();
    assert!(rows[0].trim_start().starts_with('0') && rows[0].ends_with("  reject"), "{out}");
    assert!(rows[1].trim_start().starts_with('1') && rows[1].ends_with("do not reject"), "{out}");
}

#[test]
fn unreadable_and_malformed_inputs() {
    let o = run(&["select", "/nonexistent/data.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot read /nonexistent/data.csv"));

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3,x\n").unwrap();
    let o = run(&["test", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("non-numeric cell `x`"));
}

#[test]
fn unknown_flags_are_errors() {
    let o = run(&["diagnose", "--n", "100", "--p", "10", "--verbose"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["test", "--kind", "k-factor", "x.csv"]);
    assert_eq!(o.status.code(), Some(1), "k-factor needs --k");
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_empty_grid_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/empty.cfg");
    let prefix = dir.path().join("empty");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", prefix.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(prefix.with_extension("csv")).unwrap();
    assert_eq!(csv, format!("{}\n", efa_lrt::sim::CSV_HEADER));
    assert!(prefix.with_extension("json").exists());
}

#[test]
fn simulate_small_grid_with_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "experiment = \"typeI-h00\"\nn = [20, 100]\nepsilon = [\"8/24\", \"23/24\"]\nreplications = 500\n",
    )
    .unwrap();
    let a = run(&["simulate", cfg.to_str().unwrap(), "--threads", "2", "--replications", "30"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let err = stderr(&a);
    assert!(err.contains("[1/4] N=20 eps=8/24 p=2"), "{err}");
    assert!(err.contains("skipped"), "{err}");
    let csv_a = std::fs::read_to_string(dir.path().join("small.csv")).unwrap();
    assert!(csv_a.lines().skip(1).all(|l| l.ends_with(",30,0")), "{csv_a}");

    let b = run(&["simulate", cfg.to_str().unwrap(), "--threads", "1", "--replications", "30"]);
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(dir.path().join("small.csv")).unwrap(), csv_a);
}

#[test]
fn simulate_reports_every_config_problem() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "experiment = \"typeI-h00\"\nn = [100]\nalpha = 2.0\nreplicatons = 5\n").unwrap();
    let o = run(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("alpha") && err.contains("replicatons"), "{err}");
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let cfg = SimConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 10);

    let fig2 = SimConfig::from_file(dir.join("figure2.cfg")).unwrap();
    assert_eq!(fig2.n_list, vec![100, 500, 1000, 2000]);
    assert_eq!(fig2.epsilon_list.len(), 21);
    assert_eq!(fig2.epsilon_list[0].to_string(), "3/24");
}
