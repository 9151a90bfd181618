use efa_lrt::sim::{
    run, run_histogram_summary, run_selection_grid, run_type1_grid, Epsilon, Experiment,
    GeneratorTemplate, SimConfig, CSV_HEADER,
};
use efa_lrt::{Calibration, Correction};

fn small_h00(threads: usize) -> SimConfig {
    let mut cfg = SimConfig::new(Experiment::TypeIH00, GeneratorTemplate::Normal);
    cfg.n_list = vec![20, 200];
    cfg.epsilon_list = vec![Epsilon::new(8, 24).unwrap(), Epsilon::new(23, 24).unwrap()];
    cfg.replications = 60;
    cfg.calibrations = vec![Calibration::ChiSquare, Calibration::HdNormal];
    cfg.threads = Some(threads);
    cfg.seed = 42;
    cfg
}

#[test]
fn identical_output_at_any_worker_count() {
    let one = run_type1_grid(&small_h00(1)).unwrap();
    let four = run_type1_grid(&small_h00(4)).unwrap();
    assert_eq!(one.to_csv(), four.to_csv());
    assert_eq!(one.to_json(), four.to_json());
}

#[test]
fn csv_layout() {
    let res = run_type1_grid(&small_h00(2)).unwrap();
    let csv = res.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // N = 20 at 23/24 gives p = 17 > N - 5, which is skipped
    let skipped: Vec<&str> = csv.lines().filter(|l| l.contains(",skipped,")).collect();
    assert_eq!(skipped, vec!["20,23/24,17,typeI-h00,,skipped,,,60,0"]);
    // 3 computed cells x 2 corrections x 2 calibrations
    assert_eq!(res.rows.iter().filter(|r| r.metric == "rejection_rate").count(), 12);
    for r in res.rows.iter().filter(|r| !r.is_skipped()) {
        let v = r.value.unwrap();
        assert!((0.0..=1.0).contains(&v));
        let m = (r.replications - r.failed) as f64;
        assert!((r.mc_se.unwrap() - (v * (1.0 - v) / m).sqrt()).abs() < 1e-15);
    }
}

#[test]
fn hd_normal_ignores_bartlett() {
    let res = run_type1_grid(&small_h00(2)).unwrap();
    for r in res.rows.iter().filter(|r| r.mode == "hd-normal" && r.correction == "none") {
        let b = res.value(r.n, r.p, "hd-normal", "bartlett", "rejection_rate");
        assert_eq!(b, r.value);
    }
}

#[test]
fn zero_replications_and_empty_grid() {
    let mut cfg = small_h00(1);
    cfg.replications = 0;
    let res = run_type1_grid(&cfg).unwrap();
    assert!(res.rows.is_empty());
    assert_eq!(res.to_csv(), format!("{CSV_HEADER}\n"));

    let mut cfg = small_h00(1);
    cfg.n_list.clear();
    assert_eq!(run_type1_grid(&cfg).unwrap().to_csv(), format!("{CSV_HEADER}\n"));
}

#[test]
fn selection_proportions_sum_to_one() {
    let mut cfg = SimConfig::new(Experiment::Selection, GeneratorTemplate::Factor { k0: 1 });
    cfg.n_list = vec![300];
    cfg.p_list = vec![8];
    cfg.replications = 40;
    cfg.k_max = Some(2);
    let res = run_selection_grid(&cfg).unwrap();
    for c in ["none", "bartlett"] {
        let total: f64 = ["p_correct", "p_over", "p_under"]
            .iter()
            .map(|m| res.value(300, 8, "select", c, m).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    assert!(res.value(300, 8, "select", "bartlett", "p_correct").unwrap() > 0.7);
}

#[test]
fn histogram_rows() {
    let mut cfg = SimConfig::new(Experiment::Histogram, GeneratorTemplate::Normal);
    cfg.n_list = vec![100];
    cfg.p_list = vec![5];
    cfg.replications = 200;
    let res = run_histogram_summary(&cfg).unwrap();
    assert_eq!(res.value(100, 5, "histogram", "reference", "ref_mean"), Some(10.0));
    assert_eq!(res.value(100, 5, "histogram", "reference", "ref_variance"), Some(20.0));
    let t = res.value(100, 5, "histogram", "none", "mean").unwrap();
    let rt = res.value(100, 5, "histogram", "bartlett", "mean").unwrap();
    assert!(rt < t);
    assert!((rt - 10.0).abs() < 2.0);
    let q = |m: &str| res.value(100, 5, "histogram", "none", m).unwrap();
    assert!(q("q05") <= q("q25") && q("q25") <= q("q50") && q("q50") <= q("q75") && q("q75") <= q("q95"));
}

#[test]
fn wrong_runner_rejected() {
    let cfg = small_h00(1);
    assert!(run_selection_grid(&cfg).is_err());
    assert!(run_histogram_summary(&cfg).is_err());
}

#[test]
fn progress_reports_every_cell() {
    let cfg = small_h00(1);
    let mut seen = Vec::new();
    run(&cfg, &mut |c| seen.push((c.point.index, c.skipped.is_some()))).unwrap();
    assert_eq!(seen, vec![(0, false), (1, true), (2, false), (3, false)]);
}

#[test]
fn tprime_and_hk_grids_run() {
    let mut cfg = SimConfig::new(Experiment::TypeITprime, GeneratorTemplate::Factor { k0: 3 });
    cfg.n_list = vec![120];
    cfg.p_list = vec![6];
    cfg.replications = 30;
    cfg.calibrations = vec![Calibration::ChiSquare, Calibration::HdNormal];
    let res = run_type1_grid(&cfg).unwrap();
    assert_eq!(res.rows.len(), 4);

    let mut cfg = SimConfig::new(Experiment::TypeIHk, GeneratorTemplate::Factor { k0: 1 });
    cfg.n_list = vec![120];
    cfg.p_list = vec![3, 6];
    cfg.replications = 30;
    cfg.corrections = vec![Correction::Bartlett];
    let res = run_type1_grid(&cfg).unwrap();
    // the one-factor model is saturated at p = 3
    assert!(res.find(120, 3, "typeI-hk", "", "skipped").is_some());
    assert!(res.value(120, 6, "chisq", "bartlett", "rejection_rate").is_some());
}
