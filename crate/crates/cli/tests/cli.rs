use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn swipt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt"))
        .args(args)
        .env_remove("SWIPT_DIST_AP_DEV")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn explicit_gains_prefer_local() {
    let o = swipt(&["allocate", "--gain-down", "1e-6", "--gain-offload", "1e-8"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("decision: local (I_O=0)"), "{}", stdout(&o));
}

#[test]
fn infeasible_channel_reports_harvest() {
    let o = swipt(&["allocate", "--gain-down", "0", "--gain-offload", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("decision: harvest (I_s=1)"));
}

#[test]
fn seeded_allocate_is_repeatable() {
    let a = swipt(&["allocate", "--seed", "7"]);
    let b = swipt(&["allocate", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, swipt(&["allocate", "--seed", "8"]).stdout);
}

#[test]
fn offload_dominates_at_k_1e4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    fs::write(&cfg, "dist_ap_dev = 6.0\ndist_dev_server = 10.0\nops_per_bit = 1e4\n").unwrap();
    let o = swipt(&["allocate", "--config", path(&cfg), "--repeat", "1000", "--seed", "3", "--out-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let pct = |label: &str| -> f64 {
        let rest = &out[out.find(label).unwrap() + label.len()..];
        rest[..rest.find('%').unwrap()].trim().parse().unwrap()
    };
    assert!(pct("offload ") > 50.0, "{out}");
    let csv = fs::read_to_string(dir.path().join("allocations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(swipt(&["sweep", "--axis", "K"]).status.code(), Some(1));
    assert_eq!(swipt(&["sweep", "--axis", "K", "--values", ""]).status.code(), Some(1));
    assert_eq!(swipt(&["sweep", "--axis", "nope", "--values", "1"]).status.code(), Some(1));
    assert_eq!(swipt(&["allocate", "--gain-down", "1e-6"]).status.code(), Some(1));
    assert_eq!(swipt(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(swipt(&["--config", "/nonexistent/p.toml", "allocate"]).status.code(), Some(1));
    assert_eq!(swipt(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    fs::write(&cfg, "eh_efficiency = 1.5\n").unwrap();
    assert_eq!(swipt(&["allocate", "--config", path(&cfg)]).status.code(), Some(2));
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(swipt(&["allocate", "--config", path(&cfg)]).status.code(), Some(2));
}

#[test]
fn env_overrides_config() {
    let o = Command::new(env!("CARGO_BIN_EXE_swipt"))
        .args(["allocate", "--seed", "7"])
        .env("SWIPT_DIST_AP_DEV", "0.5")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_csv_is_byte_identical_across_runs_and_jobs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = |dir: &Path, jobs: &'static str| {
        swipt(&[
            "sweep", "--axis", "K", "--values", "1e2,1e3,1e4", "--trials", "100", "--frames", "20", "--seed", "5",
            "--jobs", jobs, "--out-dir", path(dir),
        ])
    };
    assert_eq!(args(a.path(), "1").status.code(), Some(0));
    assert_eq!(args(b.path(), "3").status.code(), Some(0));
    let read = |d: &Path| fs::read(d.join("sweep.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let csv = String::from_utf8(read(a.path())).unwrap();
    assert!(csv.starts_with("ops_per_bit,"));
    assert_eq!(csv.lines().count(), 4);
    assert!(a.path().join("summary.txt").exists());
    assert!(a.path().join("params.toml").exists());
}

#[test]
fn simulate_writes_trace_and_statistics() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = swipt(&["simulate", "--frames", "30", "--trials", "20", "--seed", "9", "--out-dir", path(d.path())]);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["trace.csv", "monte_carlo.csv", "summary.txt"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let trace = fs::read_to_string(a.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 31);
    // storage starts empty, so frame 0 is processed only if it nets a surplus
    let first: Vec<&str> = trace.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&first[..2], ["0", "0"]);
    let cost: f64 = first[4].parse().unwrap();
    assert_eq!(first[2] == "1", cost > 0.0);
}

#[test]
fn verify_passes_and_detects_injected_bug() {
    let dir = tempfile::tempdir().unwrap();
    let o = swipt(&["verify", "--instances", "20", "--out-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(dir.path().join("verify.csv").exists());
    let bad = swipt(&["verify", "--instances", "20", "--inject-bug", "--out-dir", path(dir.path())]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FAIL Offload"));
}
