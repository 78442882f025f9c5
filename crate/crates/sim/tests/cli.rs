use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
[grid]
dim = 2
extents = 1, 1
cells = 8, 8

[physics]
epsilon = 0.5
nu = 1
coupling_k = 1

[species1]
valence = 1
diffusivity = 1
gamma = linear(2, -1, 0)

[species2]
valence = -1
diffusivity = 1
gamma = linear(1, 1, 0)

[potential]
w = linear(-1, 2, 0)

[run]
t_final = 0.02
checkpoint_every = 4

[oracle]
resolution = 201
";

fn npns(args: &[&str], out: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_npns"));
    c.args(args).env_remove("NPNS_OUTPUT_DIR");
    if let Some(o) = out {
        c.env("NPNS_OUTPUT_DIR", o);
    }
    c.output().unwrap()
}

fn error_line(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn simulate_then_audit_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.ini");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = tmp.path().join("res");
    let o = npns(&["simulate", cfg.to_str().unwrap()], Some(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.ini", "timeseries.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let before = std::fs::read(out.join("timeseries.csv")).unwrap();

    let o = npns(&["audit", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("min m1"));
    assert!(out.join("audit.txt").exists() && out.join("audit_steps.csv").exists());

    let o = npns(&["simulate", "--resume", "--output", out.to_str().unwrap(), cfg.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(out.join("timeseries.csv")).unwrap(), before);
}

#[test]
fn oracle_writes_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.ini");
    std::fs::write(&cfg, CONFIG).unwrap();
    let csv = tmp.path().join("o.csv");
    let o = npns(&["oracle-1d", cfg.to_str().unwrap(), "--output", csv.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,c1,c2,phi");
    assert_eq!(text.lines().count(), 202);
}

#[test]
fn failures_print_a_json_error_line() {
    let o = npns(&["verify-mms", "heat"], None);
    assert_eq!(error_line(&o)["error"], "unknown_case");

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.ini");
    std::fs::write(&cfg, CONFIG.replace("epsilon", "epsilonn")).unwrap();
    let v = error_line(&npns(&["simulate", cfg.to_str().unwrap()], None));
    assert_eq!(v["error"], "config");
    assert!(v["message"].as_str().unwrap().contains("epsilonn"));

    let v = error_line(&npns(&["audit", tmp.path().join("missing").to_str().unwrap()], None));
    assert_eq!(v["error"], "io");
}

#[test]
fn verify_mms_prints_table() {
    let o = npns(&["verify-mms", "poisson", "--resolutions", "8,16,32"], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("case poisson"));
}
