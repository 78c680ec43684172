use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_navleray"));
    c.env_remove("NAVLERAY_OUT");
    c
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("navleray-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn with_stdin(mut c: Command, input: &str) -> Output {
    let mut child = c.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn validate_single_suite() {
    let out = bin().args(["validate", "--filter", "control"]).output().unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert!(s.lines().count() >= 2);
    assert!(s.lines().all(|l| l.starts_with("PASS\tcontrol\t")), "{s}");
}

#[test]
fn validate_json_output() {
    let out = bin().args(["validate", "--filter", "scheme", "--json"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|c| c["suite"] == "scheme" && c["passed"] == true));
}

#[test]
fn validate_unknown_suite_is_an_error() {
    let out = bin().args(["validate", "--filter", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).starts_with("navleray: error: validation_error: "), "{}", text(&out.stderr));
}

#[test]
fn kernel_reads_points_from_stdin() {
    let mut c = bin();
    c.args(["kernel", "poisson-grad", "--dim", "2"]);
    let out = with_stdin(c, "# comment\n1,0\n0 2\n\n");
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "x0,x1,g0,g1");
    assert_eq!(lines.len(), 3);
    let row: Vec<f64> = lines[1].split(',').map(|t| t.parse().unwrap()).collect();
    assert!((row[2] - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15 && row[3] == 0.0);
}

#[test]
fn kernel_rejects_bad_points_with_line_number() {
    let mut c = bin();
    c.args(["kernel", "heat", "--dim", "1"]);
    let out = with_stdin(c, "0.5\n1,2\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("parse_error: parse error at line 2"), "{}", text(&out.stderr));
}

#[test]
fn kernel_singular_point() {
    let mut c = bin();
    c.args(["kernel", "poisson"]);
    let out = with_stdin(c, "0,0\n");
    assert!(text(&out.stderr).contains("singular_point"));
}

#[test]
fn run_writes_artifacts_under_env_override() {
    let dir = scratch("run");
    let cfg = dir.join("tg.toml");
    std::fs::write(&cfg, "mode = \"navier_stokes_controls_off\"\npreset = \"taylor_green\"\npoints = 16\nhorizon = 0.01\ndump_times = [0.0, 0.01]\noutput = \"ignored\"\n").unwrap();
    let out_dir = dir.join("out");
    let out = bin().arg("run").arg(&cfg).env("NAVLERAY_OUT", &out_dir).output().unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    for f in ["steps.csv", "ledger.csv", "summary.json", "speed.svg", "divergence.svg", "field_000.csv", "field_001.csv"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "ok");
    let steps = std::fs::read_to_string(out_dir.join("steps.csv")).unwrap();
    assert!(steps.starts_with("l,rho,t,iterations,"));
    assert!(!dir.join("ignored").exists());
}

#[test]
fn run_reports_config_errors() {
    let dir = scratch("badcfg");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "preset = \"taylor_green\"\npoints = \"many\"\n").unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("parse_error: parse error at line 2"), "{}", text(&out.stderr));

    std::fs::write(&cfg, "points = 3\nnu = -1.0\n").unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    let err = text(&out.stderr);
    assert!(err.contains("validation_error") && err.contains("nu"), "{err}");
}

#[test]
fn boundary_bench_small() {
    let dir = scratch("bench");
    let out = bin().args(["boundary-bench", "--nx", "16", "--nt", "20", "--depth", "24", "--out"]).arg(&dir).output().unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("boundary.csv")).unwrap();
    assert!(text(&out.stdout).starts_with(csv.lines().next().unwrap()));
    // the requested size coincides with a built-in coarse size and is not repeated
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(csv.lines().last().unwrap().starts_with("16,20,24,"));
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).starts_with("navleray: error: usage: "));
    assert!(bin().arg("--help").output().unwrap().status.success());
}
