//! Result files. Every writer is deterministic: map keys are ordered bus ids
//! and floats use Rust's shortest round-trip formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use gridwave_core::sim::{Trajectory, TrajectoryKind};
use gridwave_core::ReducedNetwork;
use serde::Serialize;
use serde_json::{json, Value};

use crate::screen::ContingencyResult;

/// `t_sec` followed by one column per bus.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(traj.len() * (traj.series.len() + 1) * 20);
    s.push_str("t_sec");
    for bus in traj.series.keys() {
        let _ = write!(s, ",{bus}");
    }
    s.push('\n');
    let columns: Vec<&Vec<f64>> = traj.series.values().collect();
    for (k, t) in traj.t.iter().enumerate() {
        let _ = write!(s, "{t}");
        for c in &columns {
            let _ = write!(s, ",{}", c[k]);
        }
        s.push('\n');
    }
    s
}

fn opt(v: Option<f64>) -> Value {
    v.map(Value::from).unwrap_or(Value::Null)
}

/// Per-bus metrics of one contingency, keyed by bus id.
pub fn metrics_json(r: &ContingencyResult, s_base: f64) -> Value {
    let mut freq = BTreeMap::new();
    for (bus, m) in &r.freq_metrics {
        freq.insert(
            bus.0,
            json!({
                "nadir_hz": m.nadir,
                "max_abs_rocof_hz_per_s": m.max_abs_rocof,
                "hs_hz_s": m.hs,
                "settling_time_s": opt(m.settling_time),
                "settling_freq_hz": m.settling_freq,
            }),
        );
    }
    let mut volt = BTreeMap::new();
    for (k, (bus, st)) in r.voltage_settling.iter().enumerate() {
        let v = &r.voltage.series[bus];
        volt.insert(
            bus.0,
            json!({
                "v0_pu": v[0],
                "final_pu": st.value,
                "delta_v_pu": st.value - v[0],
                "delta_q_mvar": r.dq_g[k] * s_base,
                "delta_p_mw": r.dp_d[k] * s_base,
                "settling_time_s": opt(st.time),
            }),
        );
    }
    json!({
        "disturbance": {
            "bus": r.disturbance.bus.0,
            "dp_mw": r.disturbance.dp,
            "dq_mvar": r.disturbance.dq,
            "k_l": r.disturbance.k_l,
        },
        "frequency": freq,
        "voltage": volt,
        "low_voltage_buses": r.low_voltage.iter().map(|b| b.0).collect::<Vec<_>>(),
    })
}

/// Five-number summary plus mean, for box plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distribution {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Distribution> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let x = p * (v.len() - 1) as f64;
            let lo = x.floor() as usize;
            let hi = x.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (x - lo as f64)
        };
        Some(Distribution {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            count: v.len(),
        })
    }
}

/// Distribution of the per-bus figures of one contingency.
pub fn distributions(r: &ContingencyResult, s_base: f64) -> Value {
    let nadir: Vec<f64> = r.freq_metrics.values().map(|m| m.nadir).collect();
    let rocof: Vec<f64> = r.freq_metrics.values().map(|m| m.max_abs_rocof).collect();
    let dv: Vec<f64> = r.voltage.series.values().map(|s| s[s.len() - 1] - s[0]).collect();
    let dq: Vec<f64> = r.dq_g.iter().map(|q| q * s_base).collect();
    json!({
        "nadir_hz": Distribution::of(&nadir),
        "max_abs_rocof_hz_per_s": Distribution::of(&rocof),
        "delta_v_pu": Distribution::of(&dv),
        "delta_q_mvar": Distribution::of(&dq),
    })
}

/// Line plot of every series, thinned to at most `max_points` per trace.
pub fn trajectory_svg(traj: &Trajectory, title: &str, max_points: usize) -> String {
    let (w, h, pad) = (900.0, 500.0, 60.0);
    let t_end = traj.t.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in traj.series.values() {
        for &v in s {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let x = |t: f64| pad + (w - 2.0 * pad) * t / t_end;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);
    let unit = match traj.kind {
        TrajectoryKind::Frequency => "Hz",
        TrajectoryKind::Voltage => "pu",
    };
    let stride = traj.len().div_ceil(max_points.max(2)).max(1);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad
    );
    for (label, v) in [(hi, hi), (lo, lo)] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{label:.5} {unit}</text>"#, pad - 4.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{t_end} s</text>"#, w - pad, h - pad + 16.0);
    let n = traj.series.len().max(1);
    for (i, series) in traj.series.values().enumerate() {
        let hue = 360.0 * i as f64 / n as f64;
        let mut d = String::new();
        let mut k = 0;
        while k < series.len() {
            let _ = write!(d, "{}{:.2} {:.2}", if k == 0 { "M" } else { " L" }, x(traj.t[k]), y(series[k]));
            k = if k + stride >= series.len() && k != series.len() - 1 { series.len() - 1 } else { k + stride };
        }
        let _ = writeln!(s, r#"<path d="{d}" stroke="hsl({hue:.0},70%,40%)" stroke-width="1" fill="none"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `B_red` and, when small enough, `B_L` as CSV with bus-id headers.
pub fn dump_network(red: &ReducedNetwork, dir: &Path, max_entries: usize) -> io::Result<()> {
    let mut s = String::from("bus");
    for g in red.gen_ids() {
        let _ = write!(s, ",{g}");
    }
    s.push('\n');
    for (i, g) in red.gen_ids().iter().enumerate() {
        let _ = write!(s, "{g}");
        for j in 0..red.n_gen() {
            let _ = write!(s, ",{}", red.b_red()[(i, j)]);
        }
        s.push('\n');
    }
    std::fs::write(dir.join("b_red.csv"), s)?;

    if red.n_gen() * red.n_load() > max_entries {
        return Ok(());
    }
    let b_l = red.b_l();
    let mut s = String::from("bus");
    for l in red.load_ids() {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for (i, g) in red.gen_ids().iter().enumerate() {
        let _ = write!(s, "{g}");
        for j in 0..red.n_load() {
            let _ = write!(s, ",{}", b_l[(i, j)]);
        }
        s.push('\n');
    }
    std::fs::write(dir.join("b_l.csv"), s)
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}
