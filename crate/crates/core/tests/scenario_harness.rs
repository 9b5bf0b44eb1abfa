use decaylab::decay::DecayModel;
use decaylab::functionals::FunctionalSeries;
use decaylab::scenario::{
    fit_path, load_config, preset, preset_names, report_path, run_scenario, run_suite,
    series_path, ConfigError, ScenarioError, ScenarioReport, REPORT_SCHEMA,
};

const SMALL_T3: &str = r#"
name = "small-t3"
theorem = "T3"
r = 1.5
delta0 = 0.01
gamma_fraction = 0.9
epsilon0 = 0.5

[grid]
alpha = 1.0
x_max = 60.0
h = 0.1

[data]
kind = "compact"
center = [1.5]
radius = 0.5
R = 2.0

[time]
T_max = 40.0
cfl = 1.0
sample_stride = 10
T_window = 5.0
T1_threshold = 5.0
"#;

const SMALL_IDENTITY: &str = r#"
name = "small-identity"
theorem = "identity_only"
r = 1.5
epsilon0 = 1.0
damping_kind = "constant"

[grid]
alpha = 0.0
x_max = 30.0
h = 0.025

[data]
kind = "compact"
center = [3.0]
radius = 1.0
mode = "bump_v"

[time]
T_max = 10.0
cfl = 0.5
sample_stride = 2
"#;

#[test]
fn every_preset_parses_and_validates() {
    let names = preset_names();
    assert_eq!(names.len(), 7);
    for name in names {
        let cfg = preset(name).unwrap().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg.name, name);
    }
    assert!(preset("missing").is_none());
}

#[test]
fn run_writes_series_report_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(SMALL_T3).unwrap();
    let out = run_scenario(&cfg, Some(dir.path())).unwrap();
    let report = &out.report;
    assert_eq!(report.schema, REPORT_SCHEMA);
    assert_eq!(report.verdicts.len(), 1);
    assert!(report.constants.is_some());

    let csv = std::fs::read_to_string(series_path(dir.path(), "small-t3")).unwrap();
    let back = FunctionalSeries::from_csv(&csv).unwrap();
    let series = out.series.as_ref().unwrap();
    assert_eq!(back.samples, series.samples);
    assert_eq!(back.bundle_names, series.bundle_names);
    // 400 steps sampled every 10, plus t = 0
    assert_eq!(series.samples.len(), 41);
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,E,E_phi,X,D_cum,D_weighted_cum,thm3."));
    assert!(header.ends_with(",high_energy,edge_energy"));

    let json = std::fs::read_to_string(report_path(dir.path(), "small-t3")).unwrap();
    let parsed: ScenarioReport = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.name, "small-t3");
    assert_eq!(parsed.series_file.as_deref(), Some("small-t3.series.csv"));
    assert_eq!(parsed.checks, report.checks);

    let dat = std::fs::read_to_string(fit_path(dir.path(), "small-t3", DecayModel::CompactDecay)).unwrap();
    assert!(dat.starts_with("# CompactDecay"));
    assert_eq!(dat.lines().count(), report.fits[0].samples + 1);
    // no temporary files left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
}

#[test]
fn runs_are_deterministic() {
    let cfg = load_config(SMALL_IDENTITY).unwrap();
    let a = run_scenario(&cfg, None).unwrap().series.unwrap().to_csv();
    let b = run_scenario(&cfg, None).unwrap().series.unwrap().to_csv();
    assert_eq!(a, b);
}

#[test]
fn sampling_stride_does_not_change_the_trajectory() {
    let fine = load_config(SMALL_IDENTITY).unwrap();
    let coarse = load_config(&SMALL_IDENTITY.replace("sample_stride = 2", "sample_stride = 4")).unwrap();
    let f = run_scenario(&fine, None).unwrap().series.unwrap();
    let c = run_scenario(&coarse, None).unwrap().series.unwrap();
    assert_eq!(f.samples.len(), 2 * c.samples.len() - 1);
    for (i, s) in c.samples.iter().enumerate() {
        let g = &f.samples[2 * i];
        assert_eq!(s.t, g.t);
        assert_eq!(s.e, g.e);
        assert_eq!(s.d_cum, g.d_cum);
    }
}

#[test]
fn identity_run_reports_defect_and_monotonicity() {
    let cfg = load_config(SMALL_IDENTITY).unwrap();
    let r = run_scenario(&cfg, None).unwrap().report;
    assert!(r.fits.is_empty() && r.constants.is_none());
    let id = r.identity.unwrap();
    assert!(id.final_defect <= 1e-3, "{id:?}");
    assert!(id.max_relative_increase <= 1e-12);
    assert!(r.check("identity_defect").unwrap().pass);
}

#[test]
fn failed_run_leaves_failed_markers() {
    // cfl < 1 lets dispersive precursors run ahead of the cone, which a
    // strict check turns into an error
    let text = SMALL_T3
        .replace("cfl = 1.0", "cfl = 0.5")
        .replace("T1_threshold = 5.0", "T1_threshold = 5.0\n[analysis]\ncone_check = \"strict\"");
    let cfg = load_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_scenario(&cfg, Some(dir.path())).unwrap_err();
    assert!(matches!(err, ScenarioError::Solver(_)), "{err}");
    let base = dir.path().join("small-t3.report.json.failed");
    let text = std::fs::read_to_string(base).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["error"].as_str().unwrap().contains("support"));
    assert!(dir.path().join("small-t3.series.csv.failed").exists());
    assert!(!report_path(dir.path(), "small-t3").exists());
}

#[test]
fn suite_rejects_duplicate_names_and_keeps_order() {
    let a = load_config(SMALL_IDENTITY).unwrap();
    let dup = run_suite(&[a.clone(), a.clone()], 2, None).unwrap_err();
    assert!(matches!(dup, ScenarioError::DuplicateName(n) if n == "small-identity"));

    let ws = preset("weight-suite").unwrap().unwrap();
    let results = run_suite(&[ws, a], 2, None).unwrap();
    let names: Vec<String> = results.iter().map(|r| r.as_ref().unwrap().report.name.clone()).collect();
    assert_eq!(names, ["weight-suite", "small-identity"]);
    let suite = results[0].as_ref().unwrap();
    assert!(suite.series.is_none() && suite.report.weight_suite.is_some());
    assert!(suite.report.passed);
}

#[test]
fn config_errors_are_specific() {
    let unknown = SMALL_T3.replace("epsilon0 = 0.5", "epsilon0 = 0.5\nepsilon = 1.0");
    assert!(matches!(load_config(&unknown), Err(ConfigError::Parse(_))));

    let missing = SMALL_T3.replace("r = 1.5\n", "");
    assert!(matches!(load_config(&missing), Err(ConfigError::Missing("r"))));

    let inadmissible = SMALL_T3.replace("gamma_fraction = 0.9", "gamma = 0.5");
    match load_config(&inadmissible) {
        Err(ConfigError::Inadmissible { violated, .. }) => assert!(violated.contains("(1-delta0)/k")),
        other => panic!("{other:?}"),
    }

    let unsafe_cone = SMALL_T3.replace("T_max = 40.0", "T_max = 58.0");
    assert!(matches!(
        load_config(&unsafe_cone),
        Err(ConfigError::Invalid { key: "grid.x_max", .. })
    ));

    let small_r = SMALL_T3.replace("R = 2.0", "R = 1.8");
    assert!(matches!(load_config(&small_r), Err(ConfigError::Invalid { key: "data.R", .. })));

    let weighted_t3 = SMALL_T3.replace("kind = \"compact\"", "kind = \"weighted\"\nsigma = 10.0");
    assert!(load_config(&weighted_t3).is_err());

    let bad_name = SMALL_T3.replace("small-t3", "small t3");
    assert!(matches!(load_config(&bad_name), Err(ConfigError::Invalid { key: "name", .. })));
}

#[test]
fn honest_and_practical_bundles_are_both_reported() {
    let text = preset("t1-log-desk").unwrap().unwrap();
    let mut cfg = text;
    cfg.grid.x_max = Some(40.0);
    cfg.time.t_max = Some(10.0);
    cfg.time.t_window = Some(1.0);
    cfg.time.t1_threshold = Some(1.0);
    cfg.validate().unwrap();
    let r = run_scenario(&cfg, None).unwrap().report;
    let names: Vec<&str> = r.bundle.iter().map(|b| b.name.as_str()).collect();
    assert!(names.iter().any(|n| n.starts_with("thm1.")));
    assert!(names.iter().any(|n| n.starts_with("thm1_pb.")));
    assert!(names.contains(&"thm1.au2_inst_integrated"));
    assert!(names.contains(&"thm1.au2_cum_pointwise"));
    // honest weights carry a b-scale factor that practical ones do not
    let honest = r.bundle.iter().find(|b| b.name == "thm1.au2_inst").unwrap();
    let practical = r.bundle.iter().find(|b| b.name == "thm1_pb.au2_inst").unwrap();
    assert!(honest.ln_scale != 0.0);
    assert_eq!(practical.ln_scale, 0.0);
    assert!(r.bundle.iter().all(|b| b.finite));
    assert_eq!(r.fits[0].model, DecayModel::LogDecay);
    assert_eq!(r.fits[0].param, 10.0);

    cfg.weights.use_practical_b = false;
    let honest_only = run_scenario(&cfg, None).unwrap().report;
    assert!(honest_only.fits.is_empty());
    assert!(honest_only.fit_note.is_some());
}
