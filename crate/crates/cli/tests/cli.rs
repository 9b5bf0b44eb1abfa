use std::path::Path;
use std::process::{Command, Output};

fn decaylab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decaylab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("DECAYLAB_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
name = "small"
theorem = "identity_only"
r = 2.0
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
T_max = 5.0
cfl = 0.5
sample_stride = 4
"#;

#[test]
fn presets_are_listed_and_exported() {
    let dir = tempfile::tempdir().unwrap();
    let o = decaylab(dir.path(), &["presets"]);
    assert!(o.status.success());
    let list = stdout(&o);
    assert!(list.lines().any(|l| l == "t3-compact-1d"));
    assert!(list.lines().any(|l| l == "weight-suite"));

    let export = dir.path().join("presets");
    std::fs::create_dir(&export).unwrap();
    let o = decaylab(dir.path(), &["presets", "--export", export.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_dir(&export).unwrap().count(), list.lines().count());
}

#[test]
fn verify_weights_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = decaylab(dir.path(), &["verify-weights", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("min margin"));
}

#[test]
fn run_then_fit_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = decaylab(&out, &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASSED"));
    let csv = out.join("small.series.csv");
    assert!(csv.exists() && out.join("small.report.json").exists());

    let o = decaylab(&out, &["fit", csv.to_str().unwrap(), "--model", "poly", "--window", "1,5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("gamma_hat"));

    let o = decaylab(&out, &["fit", csv.to_str().unwrap(), "--model", "poly", "--window", "1,2,3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = decaylab(&out, &["fit", csv.to_str().unwrap(), "--model", "exp"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn suite_runs_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), SMALL.replace("\"small\"", "\"a\"")).unwrap();
    std::fs::write(dir.path().join("b.toml"), SMALL.replace("\"small\"", "\"b\"").replace("r = 2.0", "r = 1.5")).unwrap();
    let out = dir.path().join("out");
    let o = decaylab(&out, &["--parallel", "2", "suite", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.find("a (").unwrap() < text.find("b (").unwrap());
    assert!(out.join("a.report.json").exists() && out.join("b.report.json").exists());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SMALL.replace("epsilon0 = 1.0", "epsilon0 = -1.0")).unwrap();
    let o = decaylab(dir.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon0"));

    let o = decaylab(dir.path(), &["run", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t3-compact-1d"));
}

#[test]
fn failed_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("coarse.toml");
    // at h = 0.2 the energy balance misses the 1e-3 threshold
    std::fs::write(&cfg, SMALL.replace("h = 0.025", "h = 0.2").replace("sample_stride = 4", "sample_stride = 1")).unwrap();
    let o = decaylab(dir.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAILED"));
}
