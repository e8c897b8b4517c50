//! End-to-end tests of the `opcurve` binary: golden files for the emitters,
//! exit codes for the failure paths, and the flag/file/env precedence chain.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_opcurve")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Self-cleaning scratch directory, one per test.
struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("opcurve-cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn path(&self) -> &Path {
        &self.0
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.0.join(name)).unwrap()
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

/// Runs the binary with the ambient output-directory variable cleared, so
/// tests only see what they pass explicitly.
fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("OPCURVE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        stdout(out),
        stderr(out)
    );
}

const STANDARD: &[&str] = &[
    "--standard-gamma",
    "0.2",
    "--standard-eta",
    "2",
    "--standard-beta=-0.05",
];

#[test]
fn fit_matches_golden() {
    let dir = Scratch::new("fit");
    let cases = fixture("trainee.csv");
    let out = run(&[
        "fit",
        cases.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert!(stdout(&out).contains("wrote"));
    assert_eq!(dir.read("fit.json"), golden("fit.json"));
}

#[test]
fn fit_rejects_lambda_out_of_range() {
    let dir = Scratch::new("fit-lambda");
    let cases = fixture("trainee.csv");
    let out = run(&[
        "fit",
        cases.to_str().unwrap(),
        "--lambda",
        "1.5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("(0, 1]"), "stderr: {}", stderr(&out));
}

#[test]
fn fit_requires_lambda() {
    let dir = Scratch::new("fit-nolambda");
    let cases = fixture("trainee.csv");
    let out = run(&[
        "fit",
        cases.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("lambda is required"));
}

#[test]
fn rejects_nonpositive_y() {
    let dir = Scratch::new("bad-y");
    let cases = fixture("bad_y.csv");
    let out = run(&[
        "fit",
        cases.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(
        stderr(&out).contains("row 2: y must be positive"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn track_matches_golden_and_reports_expertise() {
    let dir = Scratch::new("track");
    let cases = fixture("trainee.csv");
    let mut args = vec![
        "track",
        cases.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--epsilon",
        "0.2",
        "--x-eval",
        "27",
        "--svg",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ];
    args.extend_from_slice(STANDARD);
    let out = run(&args);
    assert_exit(&out, 0);
    assert_eq!(dir.read("track.csv"), golden("track.csv"));
    assert!(stdout(&out).contains("expertise time: case 71"));

    // the plot carries the decision cutoff as a horizontal dashed line
    let svg = dir.read("track.svg");
    assert!(svg.contains(r#"class="cutoff" data-value="0.95""#));
    assert!(svg.contains("cutoff 0.95"));
    let line = svg.lines().find(|l| l.contains(r#"class="cutoff""#)).unwrap();
    let grab = |key: &str| {
        let at = line.find(key).unwrap() + key.len();
        line[at..].split('"').next().unwrap().to_string()
    };
    assert_eq!(grab(r#"y1=""#), grab(r#"y2=""#));
}

#[test]
fn track_requires_standard() {
    let dir = Scratch::new("track-nostd");
    let cases = fixture("trainee.csv");
    let out = run(&[
        "track",
        cases.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--epsilon",
        "0.2",
        "--x-eval",
        "27",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("standard model required"));
}

#[test]
fn track_accepts_fitted_standard_cohort() {
    let dir = Scratch::new("track-cohort");
    let cases = fixture("trainee.csv");
    let standard = fixture("standard.csv");
    let out = run(&[
        "track",
        cases.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--epsilon",
        "0.2",
        "--x-eval",
        "27",
        "--standard-csv",
        standard.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let csv = dir.read("track.csv");
    assert!(csv.starts_with("i,mu,mu_lo,mu_hi,r,r_lo,r_hi,cpm,cpm_lo,cpm_hi,fit_ok"));
    assert_eq!(csv.lines().count(), 101);
    assert!(csv.lines().last().unwrap().ends_with("true"));
}

#[test]
fn cusum_matches_golden() {
    let dir = Scratch::new("cusum");
    let cases = fixture("trainee.csv");
    let mut args = vec![
        "cusum",
        cases.to_str().unwrap(),
        "--epsilon",
        "0.2",
        "--h",
        "4.0",
        "--x-eval",
        "27",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ];
    args.extend_from_slice(STANDARD);
    let out = run(&args);
    assert_exit(&out, 0);
    assert_eq!(dir.read("cusum.csv"), golden("cusum.csv"));
    assert!(stdout(&out).contains("no signal"));
}

#[test]
fn simulate_smoke_matches_golden() {
    let dir = Scratch::new("simulate");
    let out = run(&[
        "simulate",
        "--detector",
        "lccusum",
        "--h",
        "4.0",
        "--reps",
        "200",
        "--seed",
        "11",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert_eq!(dir.read("simulate.json"), golden("simulate.json"));
    assert!(stdout(&out).contains("pfa:"));
}

#[test]
fn simulate_rejects_zero_reps() {
    let dir = Scratch::new("simulate-zero");
    let out = run(&[
        "simulate",
        "--detector",
        "lccusum",
        "--h",
        "4.0",
        "--reps",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("reps must be at least 1"));
}

#[test]
fn dumped_stream_feeds_back_through_the_pipeline() {
    let dir = Scratch::new("dump");
    let stream = dir.path().join("stream.csv");
    let out = run(&[
        "simulate",
        "--detector",
        "lccusum",
        "--h",
        "4.0",
        "--reps",
        "1",
        "--seed",
        "5",
        "--dump-stream",
        stream.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let first = dir.read("stream.csv");
    assert!(first.starts_with("case,y,x1\n"));
    assert_eq!(first.lines().count(), 101);

    // same seed, same bytes
    let out = run(&[
        "simulate",
        "--detector",
        "lccusum",
        "--h",
        "4.0",
        "--reps",
        "1",
        "--seed",
        "5",
        "--dump-stream",
        stream.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert_eq!(dir.read("stream.csv"), first);

    // and the dump is valid input to the fitter
    let out = run(&[
        "fit",
        stream.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let report: serde_json::Value = serde_json::from_str(&dir.read("fit.json")).unwrap();
    assert_eq!(report["converged"], true);
}

#[test]
fn calibrate_smoke_lands_in_target() {
    let dir = Scratch::new("calibrate");
    let out = run(&[
        "calibrate",
        "--detector",
        "lccusum",
        "--reps",
        "200",
        "--seed",
        "11",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let report: serde_json::Value = serde_json::from_str(&dir.read("calibrate.json")).unwrap();
    let h = report["h"].as_f64().unwrap();
    let pfa = report["pfa"]["p"].as_f64().unwrap();
    assert!(h > 0.1 && h < 30.0, "h = {h}");
    assert!((0.03..=0.07).contains(&pfa), "pfa = {pfa}");
    assert!(!report["trace"].as_array().unwrap().is_empty());
    assert!(stdout(&out).contains("h:"));
}

#[test]
fn config_file_supplies_settings_and_flags_override() {
    let dir = Scratch::new("config");
    let cases = fixture("trainee.csv");
    let cfg = dir.path().join("run.toml");

    // file alone supplies lambda
    std::fs::write(&cfg, "lambda = 0.05\n").unwrap();
    let out = run(&[
        "fit",
        cases.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert_eq!(dir.read("fit.json"), golden("fit.json"));

    // flag wins over a file value that would otherwise be rejected
    std::fs::write(&cfg, "lambda = 1.5\n").unwrap();
    let out = run(&[
        "fit",
        cases.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    // unknown keys fail loudly
    std::fs::write(&cfg, "lamda = 0.05\n").unwrap();
    let out = run(&[
        "fit",
        cases.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("lamda"));
}

#[test]
fn env_var_sets_default_out_dir() {
    let dir = Scratch::new("env");
    let cases = fixture("trainee.csv");
    let out = Command::new(bin())
        .args(["fit", cases.to_str().unwrap(), "--lambda", "0.05"])
        .env("OPCURVE_OUT_DIR", dir.path())
        .output()
        .expect("binary runs");
    assert_exit(&out, 0);
    assert_eq!(dir.read("fit.json"), golden("fit.json"));
}
