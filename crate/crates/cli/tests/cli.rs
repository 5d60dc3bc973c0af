use std::path::Path;
use std::process::{Command, Output};

fn tlinf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlinf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn tlinf")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn validate_rejects_bad_configs_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"bogus": 1}"#).unwrap();
    let o = tlinf(&["validate", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert_eq!(code(&tlinf(&["validate", "--set", "grid.n=48"], dir.path())), 2);
    assert_eq!(code(&tlinf(&["validate", "--set", "norm.nope.deeper=1"], dir.path())), 2);
}

#[test]
fn validate_echoes_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlinf(&["validate", "--set", "norm.alpha=-0.5", "--set", "label=echo"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["norm"]["alpha"], -0.5);
    assert_eq!(v["label"], "echo");
}

#[test]
fn run_writes_summary_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlinf(
        &["run", "--set", "kind=weights", "--set", "label=w", "--set", "qs=[2]", "--set", "weights.samples=200"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("w");
    for f in ["summary.json", "weights.csv", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(run.join("weights.csv")).unwrap();
    assert!(csv.starts_with("q,alpha,beta,upper_branch,samples,ratio_min,ratio_max,symmetry_defect"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "weights");
}

#[test]
fn norm_reads_a_written_suite_field() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tlinf(&["suite", "--set", "label=s", "--set", "suite.count=2"], dir.path())), 0);
    let field = dir.path().join("s/suite/field_1.json");
    for q in ["2", "inf"] {
        let o = tlinf(&["norm", "--set", "label=n", "--field", field.to_str().unwrap(), "--q", q], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(v["tl"]["value"].as_f64().unwrap() > 0.0);
        assert!(v["peetreDominates"].as_bool().unwrap());
    }
    let o = tlinf(&["norm", "--set", "grid.n=128", "--field", field.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tlinf(&["frobnicate"], dir.path())), 2);
}

#[test]
fn failed_criterion_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = tlinf(
        &["run", "--set", "kind=weights", "--set", "label=w", "--set", "qs=[2]", "--set", "weights.samples=200", "--set", "weights.symmetryTolerance=0"],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(dir.path().join("w/summary.json").is_file());
}
