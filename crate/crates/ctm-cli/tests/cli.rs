use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn ctm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_prints_a_summary_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("out.jsonl");
    let out = ctm(&[
        "run",
        scenario("quartet.json").to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("ran 30 ticks"));
    assert!(text.contains("winners: p0 x28"));

    let lines = std::fs::read_to_string(&trace).unwrap();
    assert!(lines.lines().count() > 30);
    assert!(lines.lines().all(|l| l.starts_with("{\"tick\":")));

    let out = ctm(&["stats", trace.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("winners: p0 x28"));
}

#[test]
fn verify_blesses_the_shares_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("report.csv");
    let oracle = dir.path().join("oracle.csv");
    let out = ctm(&[
        "verify",
        scenario("shares.json").to_str().unwrap(),
        "--trials",
        "20000",
        "--csv",
        csv.to_str().unwrap(),
        "--oracle",
        oracle.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("agrees with the closed-form shares"));
    let csv = std::fs::read_to_string(csv).unwrap();
    assert!(csv.starts_with("leaf,f_value,share,empirical,deviation"));
    let oracle = std::fs::read_to_string(oracle).unwrap();
    assert!(oracle.contains("p3,4,2,5"));
}

#[test]
fn verify_rejects_deterministic_scenarios_as_usage_error() {
    let out = ctm(&["verify", scenario("quartet.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("deterministic"));
}

#[test]
fn permute_reports_identical_probabilities() {
    let out = ctm(&["permute", scenario("shares.json").to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("win probabilities identical"));
}

#[test]
fn demo_quartet_shows_both_winners() {
    let out = ctm(&["demo", "quartet"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("order a,b,c,d: winner a"));
    assert!(text.contains("order a,c,b,d: winner d"));
}

#[test]
fn demo_spelling_converges() {
    let out = ctm(&["demo", "spelling"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.matches("(wrong)").count(), 6);
    assert_eq!(text.matches("(right)").count(), 2);
    assert!(text.contains("memory power grew to 11.390625"));
}

#[test]
fn missing_files_and_bad_usage_exit_with_two() {
    let out = ctm(&["run", "/nonexistent/machine.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ctm(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}
