//! End-to-end runs of the `gridwave` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn screen(contingencies: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridwave"))
        .arg("screen")
        .arg("--case")
        .arg(data("wscc9_gfm.m"))
        .arg("--overlay")
        .arg(data("gfm_overlay.json"))
        .arg("--contingencies")
        .arg(contingencies)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn nine_bus_screen_writes_every_artifact() {
    let out = scratch("cli_nine_bus");
    let o = screen(&data("wscc9_contingencies.json"), &out, &["--horizon", "5", "--kl", "1.035", "--svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let dir = out.join("c0000_bus6");
    for f in ["frequency.csv", "voltage.csv", "metrics.json", "frequency.svg", "voltage.svg"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let freq = std::fs::read_to_string(dir.join("frequency.csv")).unwrap();
    let mut lines = freq.lines();
    assert_eq!(lines.next(), Some("t_sec,1,2,3"));
    assert_eq!(freq.lines().count(), 1 + 5001);
    // Every unit settles at the droop balance: 60 (1 - 0.326025/120) Hz.
    let last: Vec<f64> = freq.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 5.0);
    for f in &last[1..] {
        assert!((f - 60.0 * (1.0 - 0.326025 / 120.0)).abs() < 1e-9);
    }

    let m = read_json(&dir.join("metrics.json"));
    assert_eq!(m["disturbance"]["bus"], 6);
    for bus in ["1", "2", "3"] {
        assert!(m["frequency"][bus]["nadir_hz"].as_f64().unwrap() < 59.84);
        assert!(m["voltage"][bus]["delta_v_pu"].as_f64().unwrap() < 0.0);
    }

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["gfm_buses"], 3);
    let list = summary["contingencies"].as_array().unwrap();
    assert_eq!(list.len(), 4);
    assert!(list.iter().all(|c| c["status"] == "ok"));
    assert_eq!(list[0]["distributions"]["nadir_hz"]["count"], 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = scratch("cli_repeat_a");
    let b = scratch("cli_repeat_b");
    assert_eq!(screen(&data("wscc9_contingencies.json"), &a, &[]).status.code(), Some(0));
    assert_eq!(screen(&data("wscc9_contingencies.json"), &b, &[]).status.code(), Some(0));
    for sub in ["summary.json", "c0002_bus5/frequency.csv", "c0002_bus5/voltage.csv", "c0003_bus8/metrics.json"] {
        assert_eq!(std::fs::read(a.join(sub)).unwrap(), std::fs::read(b.join(sub)).unwrap(), "{sub} differs");
    }
}

#[test]
fn empty_list_writes_only_the_summary() {
    let out = scratch("cli_empty");
    let list = out.join("list.json");
    std::fs::write(&list, "[]").unwrap();
    let o = screen(&list, &out.join("res"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let entries: Vec<_> = std::fs::read_dir(out.join("res")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec![std::ffi::OsString::from("summary.json")]);
    assert_eq!(read_json(&out.join("res/summary.json"))["contingencies"], Value::Array(vec![]));
}

#[test]
fn config_errors_are_reported_together() {
    let out = scratch("cli_config");
    let list = out.join("list.json");
    std::fs::write(&list, r#"[{"bus": 6, "dp_mw": 10, "dq_mvar": 0}, {"bus": 42, "dp_mw": 10, "dq_mvar": 0}]"#).unwrap();
    let o = screen(&list, &out.join("res"), &["--ts", "-1", "--kl", "0.9"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("ts must be positive"), "{err}");
    assert!(err.contains("kl must be at least 1"), "{err}");
    assert!(err.contains("bus 42 is not in the case"), "{err}");
    assert!(!out.join("res").exists());
}

#[test]
fn unreadable_inputs_are_config_errors() {
    let out = scratch("cli_missing");
    let o = screen(&out.join("nope.json"), &out.join("res"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn one_failing_contingency_does_not_stop_the_rest() {
    let out = scratch("cli_partial");
    let list = out.join("list.json");
    // The second step is far beyond what the network can carry.
    std::fs::write(&list, r#"[{"bus": 6, "dp_mw": 10, "dq_mvar": 3}, {"bus": 6, "dp_mw": 90000, "dq_mvar": 0}]"#).unwrap();
    let o = screen(&list, &out.join("res"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let summary = read_json(&out.join("res/summary.json"));
    assert_eq!(summary["contingencies"][0]["status"], "ok");
    assert_eq!(summary["contingencies"][1]["status"], "failed");
    assert!(out.join("res/c0000_bus6/metrics.json").is_file());
    assert!(!out.join("res/c0001_bus6").exists());
}

#[test]
fn all_failing_is_a_solver_failure() {
    let out = scratch("cli_all_fail");
    let list = out.join("list.json");
    std::fs::write(&list, r#"[{"bus": 6, "dp_mw": 90000, "dq_mvar": 0}]"#).unwrap();
    let o = screen(&list, &out.join("res"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn kv_outside_the_recommended_band_warns() {
    let out = scratch("cli_kv");
    let o = screen(&data("wscc9_contingencies.json"), &out, &["--kv", "8"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("outside the recommended band"));
    // K_v scales the settled voltage deviation linearly.
    let base = scratch("cli_kv_base");
    screen(&data("wscc9_contingencies.json"), &base, &["--kv", "4"]);
    let dv = |dir: &Path| read_json(&dir.join("c0000_bus6/metrics.json"))["voltage"]["2"]["delta_v_pu"].as_f64().unwrap();
    assert!((dv(&out) / dv(&base) - 2.0).abs() < 1e-9);
}

#[test]
fn network_dump_has_bus_headers() {
    let out = scratch("cli_dump");
    let o = screen(&data("wscc9_contingencies.json"), &out, &["--dump-network"]);
    assert_eq!(o.status.code(), Some(0));
    let b_red = std::fs::read_to_string(out.join("b_red.csv")).unwrap();
    assert!(b_red.starts_with("bus,1,2,3\n"));
    let b_l = std::fs::read_to_string(out.join("b_l.csv")).unwrap();
    assert!(b_l.starts_with("bus,4,5,6,7,8,9\n"));
}
