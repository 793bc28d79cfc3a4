//! Frequency and voltage figures of merit computed from sampled trajectories.
//!
//! Every function has a per-series form working on a slice sampled every
//! `t_s`, and a per-bus form over a [`Trajectory`].

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::case::BusId;
use crate::math;
use crate::sim::Trajectory;

/// Default settling band for frequency, Hz.
pub const FREQ_BAND: f64 = 0.005;
/// Default settling band for voltage, pu.
pub const VOLTAGE_BAND: f64 = 0.0005;
/// Default RoCoF window, seconds.
pub const ROCOF_WINDOW: f64 = 0.1;
/// Minimum time a trace must stay in band at the end of the horizon to be
/// reported as settled, seconds.
pub const SETTLING_DWELL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settling {
    /// Earliest time after which the trace stays in band; `None` if the trace
    /// has not settled within the horizon.
    pub time: Option<f64>,
    /// Final sample.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqMetrics {
    /// Hz.
    pub nadir: f64,
    /// Hz/s.
    pub max_abs_rocof: f64,
    /// Hz·s, integrated from the disturbance to the settling time (or the
    /// horizon for unsettled traces).
    pub hs: f64,
    pub settling_time: Option<f64>,
    /// Hz.
    pub settling_freq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub settling_band: f64,
    pub rocof_window: f64,
    pub dwell: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { settling_band: FREQ_BAND, rocof_window: ROCOF_WINDOW, dwell: SETTLING_DWELL }
    }
}

/// Minimum of a series.
pub fn series_nadir(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest absolute centred difference quotient over a window of `window`
/// seconds. Near the ends the window is clipped to the available samples.
pub fn series_rocof(f: &[f64], t_s: f64, window: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let h = (math::round(window / 2.0 / t_s) as usize).max(1);
    let mut best = 0.0f64;
    for k in 0..n {
        let lo = k.saturating_sub(h);
        let hi = (k + h).min(n - 1);
        let slope = (f[hi] - f[lo]) / ((hi - lo) as f64 * t_s);
        best = best.max(math::abs(slope));
    }
    best
}

/// `∫_{t0}^{t1} |f0 − f(t)| dt` with the trapezoid rule. Endpoints off the
/// grid are handled by linear interpolation of the integrand, so the result
/// is additive over any partition of `[t0, t1]`.
pub fn series_hs(f: &[f64], t_s: f64, f0: f64, t0: f64, t1: f64) -> f64 {
    let n = f.len();
    if n < 2 || t1 <= t0 {
        return 0.0;
    }
    let g = |k: usize| math::abs(f0 - f[k]);
    let t_end = (n - 1) as f64 * t_s;
    let (a, b) = (t0.max(0.0), t1.min(t_end));
    if b <= a {
        return 0.0;
    }
    let first = ((a / t_s) as usize).min(n - 2);
    let mut total = 0.0;
    let mut k = first;
    while k < n - 1 {
        let (ta, tb) = (k as f64 * t_s, (k + 1) as f64 * t_s);
        if ta >= b {
            break;
        }
        let lo = a.max(ta);
        let hi = b.min(tb);
        if hi > lo {
            let at = |t: f64| g(k) + (g(k + 1) - g(k)) * (t - ta) / t_s;
            total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
        }
        k += 1;
    }
    total
}

/// Earliest time after which the series stays within `band` of its final
/// sample. Traces whose in-band tail is shorter than `dwell` are unsettled.
pub fn series_settling(f: &[f64], t_s: f64, band: f64, dwell: f64) -> Settling {
    let Some(&last) = f.last() else {
        return Settling { time: None, value: f64::NAN };
    };
    let start = f.iter().rposition(|&x| math::abs(x - last) > band).map(|k| k + 1).unwrap_or(0);
    let tail = (f.len() - 1 - start) as f64 * t_s;
    let time = if start == 0 || tail + 1e-12 >= dwell { Some(start as f64 * t_s) } else { None };
    Settling { time, value: last }
}

fn per_bus<T>(traj: &Trajectory, f: impl Fn(&[f64]) -> T) -> BTreeMap<BusId, T> {
    traj.series.iter().map(|(&bus, s)| (bus, f(s))).collect()
}

pub fn nadir(traj: &Trajectory) -> BTreeMap<BusId, f64> {
    per_bus(traj, series_nadir)
}

pub fn max_rocof(traj: &Trajectory, window: f64) -> BTreeMap<BusId, f64> {
    let t_s = traj.step();
    per_bus(traj, |s| series_rocof(s, t_s, window))
}

pub fn hs_metric(traj: &Trajectory, f0: f64, t0: f64, t1: f64) -> BTreeMap<BusId, f64> {
    let t_s = traj.step();
    per_bus(traj, |s| series_hs(s, t_s, f0, t0, t1))
}

pub fn settling(traj: &Trajectory, band: f64, dwell: f64) -> BTreeMap<BusId, Settling> {
    let t_s = traj.step();
    per_bus(traj, |s| series_settling(s, t_s, band, dwell))
}

/// Buses whose final value is below `low`.
pub fn voltage_screen(traj: &Trajectory, low: f64) -> Vec<BusId> {
    traj.series.iter().filter(|(_, s)| s.last().is_some_and(|&v| v < low)).map(|(&b, _)| b).collect()
}

/// All frequency metrics of one series.
pub fn series_freq_metrics(f: &[f64], t_s: f64, f0: f64, cfg: &MetricsConfig) -> FreqMetrics {
    let st = series_settling(f, t_s, cfg.settling_band, cfg.dwell);
    let horizon = f.len().saturating_sub(1) as f64 * t_s;
    FreqMetrics {
        nadir: series_nadir(f),
        max_abs_rocof: series_rocof(f, t_s, cfg.rocof_window),
        hs: series_hs(f, t_s, f0, 0.0, st.time.unwrap_or(horizon)),
        settling_time: st.time,
        settling_freq: st.value,
    }
}

pub fn freq_metrics(traj: &Trajectory, f0: f64, cfg: &MetricsConfig) -> BTreeMap<BusId, FreqMetrics> {
    let t_s = traj.step();
    per_bus(traj, |s| series_freq_metrics(s, t_s, f0, cfg))
}
