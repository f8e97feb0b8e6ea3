use std::fs;
use std::process::Command;

use optomech::cli::{run_sweep, write_csv, Config, SweepSpec};

const SWEEP: &str = r#"
[params]
delta_b = 1e4
omega_m = 100.0
g0 = 1.0
zeta = 0.1
probe_strength = 0.02

[sweep]
pipeline = "effective_hamiltonian"
truncation = 3
outputs = ["g2", "n_d", "rates", "stability"]

[sweep.rules]
alpha_e_per_sqrt_zeta = 2.0

[[sweep.axes]]
name = "zeta"
min = 0.05
max = 0.4
points = 3
spacing = "log"

[[sweep.axes]]
name = "delta_b"
values = [1e4, 1e5]
"#;

const TRACE: &str = r#"
[params]
delta_b = 1e4
omega_m = 100.0
g0 = 1.0
zeta = 0.1
alpha_e = 0.1
probe_strength = 0.02

[trace]
t_final = 2.0
points = 4
cooling = "both"
truncation = 3
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optomech"))
}

fn csv_bytes(workers: usize) -> Vec<u8> {
    let spec = SweepSpec::from_config(&Config::from_toml(SWEEP).unwrap()).unwrap();
    let records = run_sweep(&spec, Some(workers)).unwrap();
    let mut out = Vec::new();
    write_csv(&records, &spec.outputs, false, &mut out).unwrap();
    out
}

#[test]
fn sweep_csv_is_identical_across_worker_counts() {
    let one = csv_bytes(1);
    assert_eq!(one, csv_bytes(3));
    let text = String::from_utf8(one).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..2], &["index_zeta", "index_delta_b"]);
    for col in ["g2", "n_d", "gamma_down", "stable", "truncation_rel_change", "status"] {
        assert!(header.contains(&col), "missing {col}");
    }
    assert!(!header.contains(&"wall_time_s"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    // first axis varies slowest
    assert!(rows[0].starts_with("0,0,") && rows[1].starts_with("0,1,") && rows[2].starts_with("1,0,"));
    assert!(rows.iter().all(|r| r.ends_with(",ok")));
}

#[test]
fn binary_sweep_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    let out = dir.path().join("out.csv");
    fs::write(&cfg, SWEEP).unwrap();
    let status = bin()
        .args(["sweep", cfg.to_str().unwrap(), "--workers", "1", "--timings", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",status,wall_time_s"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn binary_truncation_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, SWEEP).unwrap();
    let out = bin().args(["sweep", cfg.to_str().unwrap(), "--truncation", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "truncation").unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(col) == Some("2")));
}

#[test]
fn binary_trace_reports_both_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("trace.toml");
    fs::write(&cfg, TRACE).unwrap();
    let out = bin().args(["trace", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "cooling,t,g2,n_bbar,n_d,trace_drift,min_eigenvalue,status");
    assert_eq!(text.lines().filter(|l| l.starts_with("off,")).count(), 4);
    assert_eq!(text.lines().filter(|l| l.starts_with("on,")).count(), 4);
}

#[test]
fn binary_feasibility_and_diag() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/case_study.toml");
    let out = bin().args(["feasibility", path]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("P = g0^2 omega_m / kappa^3 = 5.000000"));
    assert!(text.contains("g_nl/kappa") && text.contains("not satisfied"));

    let out = bin().args(["diag", path]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("xi_plus") && text.contains("FirstOrder: coefficients"));
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            c.params.to_params().unwrap();
            if c.sweep.is_some() {
                SweepSpec::from_config(&c).unwrap();
            }
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn bad_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[params]\ndelta_b = 1e4\nomega_m = 100.0\ng0 = 1.0\nzeta = 0.1\nr = 0.5\n").unwrap();
    let out = bin().args(["diag", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = bin().args(["sweep", dir.path().join("missing.toml").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, "[params]\ndelta_b = 1e4\nomega_m = 100.0\ng0 = 1.0\nzeta = 0.1\n").unwrap();
    let out = bin().args(["trace", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[trace]"));
}
