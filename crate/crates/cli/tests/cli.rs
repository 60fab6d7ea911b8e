use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn elhom(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elhom"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("ELHOM_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(out: &Path, cmd: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{cmd}.json"))).unwrap()).unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = elhom(dir.path(), &["validate", "--density", "layered", "--alpha", "0.5", "--samples", "40"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(report(dir.path(), "validate")["status"], "ok");
    let bad = elhom(dir.path(), &["validate", "--density", "prestressed", "--samples", "40"]);
    assert_eq!(code(&bad), 2);
    assert_eq!(report(dir.path(), "validate")["status"], "validation_failed");
    assert!(dir.path().join("validate.csv").exists());
}

#[test]
fn usage_and_parameter_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&elhom(dir.path(), &["validate", "--bogus", "1"])), 64);
    assert_eq!(code(&elhom(dir.path(), &["nonsense"])), 64);
    assert_eq!(code(&elhom(dir.path(), &["validate", "--alpha", "-1", "--density", "layered"])), 65);
    assert_eq!(code(&elhom(dir.path(), &["homogenize", "--res", "5"])), 65);
    assert_eq!(code(&elhom(dir.path(), &["homogenize", "--F", "1,2,3"])), 65);
    assert_eq!(code(&elhom(dir.path(), &["validate", "--tol", "0"])), 65);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["homogenize", "--density", "layered", "--alpha", "0.2", "--F", "0.9,0,0,1", "--k", "1,2", "--res", "6", "--seed", "5"];
    let files = ["homogenize.json", "homogenize.csv", "homogenize_corrector.csv"];
    assert_eq!(code(&elhom(dir.path(), &args)), 0);
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
    assert_eq!(code(&elhom(dir.path(), &args)), 0);
    for (file, bytes) in files.iter().zip(&first) {
        assert!(fs::read(dir.path().join(file)).unwrap() == *bytes, "{file} differs");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# quick check\nseed = 3\n\n[expand]\ndensity = layered\nalpha = 0.5\nres = 4\nh = 0.1, 0.05, 0.025\n").unwrap();
    let o = elhom(dir.path(), &["expand", "--config", cfg.to_str().unwrap(), "--res", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "expand");
    assert_eq!(r["config"]["res"], "6");
    assert_eq!(r["config"]["seed"], "3");
    assert_eq!(r["config"]["microstructure"], "layered");
    assert_eq!(r["report"]["residuals"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(dir.path().join("expand.csv")).unwrap();
    assert!(csv.starts_with("h,k,energy,residual"));
}

#[test]
fn config_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_key = dir.path().join("a.cfg");
    fs::write(&unknown_key, "[validate]\nwhatever = 1\n").unwrap();
    assert_eq!(code(&elhom(dir.path(), &["validate", "--config", unknown_key.to_str().unwrap()])), 65);
    let unknown_section = dir.path().join("b.cfg");
    fs::write(&unknown_section, "[nothing]\nseed = 1\n").unwrap();
    assert_eq!(code(&elhom(dir.path(), &["validate", "--config", unknown_section.to_str().unwrap()])), 65);
    let missing = dir.path().join("missing.cfg");
    assert_eq!(code(&elhom(dir.path(), &["validate", "--config", missing.to_str().unwrap()])), 65);
}

#[test]
fn threads_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_elhom"))
        .args(["validate", "--samples", "10", "--output-dir"])
        .arg(dir.path())
        .env("ELHOM_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(report(dir.path(), "validate")["config"]["threads"], "2");
}
