//! End-to-end tests of the `gpmisspec` binary: flag grammar, output
//! schemas, exit codes and the manifest convention.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpmisspec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn gen_design(dir: &Path, name: &str, kind: &str, d: usize, n: usize) -> std::path::PathBuf {
    let path = dir.join(name);
    let out = run(&[
        "design",
        "gen",
        "--kind",
        kind,
        "--d",
        &d.to_string(),
        "--n",
        &n.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    path
}

#[test]
fn design_gen_and_stats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_design(dir.path(), "grid.txt", "grid", 1, 4);

    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# d=1 n=4\n"));
    let points: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(points, vec!["0.125", "0.625", "0.375", "0.875"]);

    // manifest sits beside the output
    let manifest = std::fs::read_to_string(dir.path().join("grid.txt.manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["tool"], "gpmisspec");

    let out = run(&["design", "stats", "--in", path.to_str().unwrap()]);
    assert!(out.status.success());
    let body = stdout(&out);
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("n,fill,separation,ratio"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "4");
    assert_eq!(row[1].parse::<f64>().unwrap(), 0.125);
    assert_eq!(row[2].parse::<f64>().unwrap(), 0.125);
    assert_eq!(row[3].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn gp_predict_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.txt");
    std::fs::write(&design, "# d=1 n=1\n0\n").unwrap();
    let data = dir.path().join("data.txt");
    std::fs::write(&data, "1.0\n").unwrap();
    let query = dir.path().join("query.txt");
    std::fs::write(&query, "# d=1 n=2\n1\n0\n").unwrap();

    let out = run(&[
        "gp",
        "predict",
        "--model",
        "matern:nu=0.5,theta=1,sigma=1",
        "--design",
        design.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--query",
        query.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = stdout(&out);
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("x0,mean,variance"));
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[1] - 0.36787944117144233).abs() < 1e-12); // e^{-1}
    assert!((row[2] - 1.0836965135574561).abs() < 1e-12); // sqrt(pi/2)(1 - e^{-2})
    let at_design: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((at_design[1] - 1.0).abs() < 1e-10);
    assert!(at_design[2].abs() < 1e-10);
}

#[test]
fn mle_expected_prints_unbiased_value() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen_design(dir.path(), "g.txt", "grid", 1, 16);
    let out = run(&[
        "mle",
        "expected",
        "--true",
        "matern:nu=0.5,theta=1,sigma=2",
        "--model",
        "matern:nu=0.5,theta=1,sigma=1",
        "--design",
        design.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let value: f64 = stdout(&out).trim().parse().unwrap();
    assert!((value - 4.0).abs() <= 1e-8 * 4.0, "value = {value}");
}

#[test]
fn mle_expected_json_and_gram_dump() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen_design(dir.path(), "g.txt", "grid", 1, 4);
    let dump = dir.path().join("gram.txt");
    let out = run(&[
        "mle",
        "expected",
        "--true",
        "matern:nu=0.5,theta=1,sigma=1",
        "--model",
        "matern:nu=0.5,theta=1,sigma=1",
        "--design",
        design.to_str().unwrap(),
        "--json",
        "--dump-gram",
        dump.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = stdout(&out);
    let parsed: serde_json::Value = serde_json::from_str(body.trim()).unwrap();
    assert!((parsed["value"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(parsed["jitter_model"].as_f64().unwrap(), 0.0);

    let gram = std::fs::read_to_string(&dump).unwrap();
    let rows: Vec<Vec<f64>> = gram
        .lines()
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert!((rows[0][0] - 1.2533141373155003).abs() < 1e-12);
    assert_eq!(rows[1][2], rows[2][1]);
    assert!(dir.path().join("gram.txt.manifest.json").exists());
}

#[test]
fn mle_estimate_scalar_case() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("one.txt");
    std::fs::write(&design, "# d=1 n=1\n0.42\n").unwrap();
    let data = dir.path().join("data.txt");
    std::fs::write(&data, "2.0\n").unwrap();
    let out = run(&[
        "mle",
        "estimate",
        "--model",
        "matern:nu=0.5,theta=1,sigma=1",
        "--design",
        design.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let value: f64 = stdout(&out).trim().parse().unwrap();
    assert!((value - 3.1915382432114614).abs() < 1e-12);
}

#[test]
fn mle_decompose_csv_schema_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen_design(dir.path(), "h.txt", "halton", 1, 32);
    let out = run(&[
        "mle",
        "decompose",
        "--true",
        "matern:nu=0.5,theta=1,sigma=1",
        "--model",
        "matern:nu=1.5,theta=1,sigma=1",
        "--design",
        design.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = stdout(&out);
    let mut lines = body.lines();
    assert_eq!(
        lines.next(),
        Some("n,numerator,denominator,ratio_sq,running_mean")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 32);
    let last_mean: f64 = rows.last().unwrap()[4].parse().unwrap();

    let expected = run(&[
        "mle",
        "expected",
        "--true",
        "matern:nu=0.5,theta=1,sigma=1",
        "--model",
        "matern:nu=1.5,theta=1,sigma=1",
        "--design",
        design.to_str().unwrap(),
    ]);
    let value: f64 = stdout(&expected).trim().parse().unwrap();
    assert!(((last_mean - value) / value).abs() <= 1e-8);
}

#[test]
fn driscoll_json_verdict() {
    let out = run(&[
        "driscoll",
        "--true",
        "matern:nu=1.5,theta=1,sigma=1",
        "--model",
        "matern:nu=1.5,theta=1,sigma=1",
        "--sizes",
        "32,64,128",
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let parsed: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert!((parsed["slope"].as_f64().unwrap() - 1.0).abs() < 0.02);
    assert_eq!(parsed["classification"], "apparently-divergent");
    assert_eq!(parsed["note"], "finite-N heuristic");
    let traces = parsed["traces"].as_array().unwrap();
    assert_eq!(traces.len(), 3);
    assert!((traces[0].as_f64().unwrap() - 32.0).abs() < 1e-6);
}

#[test]
fn rate_sweep_outputs_and_lossless_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let svg_path = dir.path().join("sweep.svg");
    let out = run(&[
        "rate-sweep",
        "--true",
        "matern:nu=0.5,theta=1,sigma=1",
        "--model",
        "matern:nu=1.5,theta=1,sigma=1",
        "--d",
        "1",
        "--design",
        "grid",
        "--sizes",
        "16,32,64,128",
        "--json",
        "--out-csv",
        csv_path.to_str().unwrap(),
        "--out-svg",
        svg_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    // single JSON object on stdout and nothing else
    let body = stdout(&out);
    assert_eq!(body.lines().count(), 1);
    let parsed: serde_json::Value = serde_json::from_str(body.trim()).unwrap();
    for key in [
        "scenario",
        "sizes",
        "values",
        "slope",
        "intercept",
        "r2",
        "theoretical_slope",
        "pass",
    ] {
        assert!(parsed.get(key).is_some(), "missing key {key}");
    }
    assert_eq!(parsed["scenario"]["design"], "grid");

    // CSV schema + 17-significant-digit round trip
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("n,expected_mle,mc_mean,mc_stderr,jitter_true,jitter_model,fill,separation")
    );
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8);
        for field in &fields[1..] {
            if field.is_empty() {
                continue; // Monte-Carlo columns absent in analytic-only runs
            }
            let value: f64 = field.parse().unwrap();
            assert_eq!(format!("{value:.16e}"), **field, "lossy field {field}");
        }
    }

    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.contains("theory slope 2.00"));
    assert!(svg.contains("fit slope"));

    assert!(dir.path().join("sweep.csv.manifest.json").exists());
    assert!(dir.path().join("sweep.svg.manifest.json").exists());
}

#[test]
fn variance_sweep_json() {
    let out = run(&[
        "variance-sweep",
        "--model",
        "matern:nu=0.5,theta=1,sigma=1",
        "--sizes",
        "16,32,64",
        "--test-grid",
        "512",
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let parsed: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(parsed["theoretical_slope"].as_f64().unwrap(), -1.0);
    assert_eq!(parsed["test_grid_points"].as_i64().unwrap(), 512);
}

#[test]
fn usage_errors_exit_2() {
    // missing required --model
    let out = run(&[
        "mle",
        "expected",
        "--true",
        "matern:nu=0.5,theta=1,sigma=1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).to_lowercase().contains("usage"));

    // unknown flag
    let out = run(&["selftest", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_and_io_failures_exit_1_with_error_line() {
    let dir = tempfile::tempdir().unwrap();
    // duplicate points violate the design invariant
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "# d=1 n=2\n0.5\n0.5\n").unwrap();
    let out = run(&[
        "mle",
        "expected",
        "--true",
        "matern:nu=0.5,theta=1,sigma=1",
        "--model",
        "matern:nu=0.5,theta=1,sigma=1",
        "--design",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ERROR INVALID_DESIGN:"), "{}", stderr(&out));

    // missing file names the path
    let out = run(&[
        "design",
        "stats",
        "--in",
        dir.path().join("missing.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("ERROR IO:"), "{err}");
    assert!(err.contains("missing.txt"));

    // model kernel with sigma != 1 is a configuration error
    let design = gen_design(dir.path(), "ok.txt", "grid", 1, 4);
    let out = run(&[
        "mle",
        "expected",
        "--true",
        "matern:nu=0.5,theta=1,sigma=1",
        "--model",
        "matern:nu=0.5,theta=1,sigma=2",
        "--design",
        design.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ERROR INVALID_CONFIG:"));
}

#[test]
fn selftest_passes_and_prints_table() {
    let out = run(&["selftest"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = stdout(&out);
    assert!(body.contains("PASS  log_gamma anchors"));
    assert!(body.contains("0 failed"));
    assert!(!body.contains("FAIL "));
}

#[test]
fn version_includes_build_digest() {
    let out = run(&["--version"]);
    assert!(out.status.success());
    let body = stdout(&out);
    assert!(body.contains('+'), "no build digest in {body:?}");
}

#[test]
fn thread_env_fallback_accepted() {
    let out = bin()
        .env("GPMISSPEC_THREADS", "1")
        .args(["selftest"])
        .output()
        .unwrap();
    assert!(out.status.success());
}
