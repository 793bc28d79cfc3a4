//! Contingency screening for all-grid-forming networks.
//!
//! Reads a MATPOWER case, a GFM parameter overlay and a list of load steps,
//! then writes per-contingency frequency and voltage trajectories, metrics and
//! a summary. The models themselves live in `gridwave-core`.

pub mod ingest;
pub mod output;
pub mod screen;

use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde_json::json;

use crate::ingest::{read_contingencies, read_matpower, IngestError, Overlay};
use crate::screen::{ContingencyResult, Engine, PrepareError, PrepareTiming, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Prepare(#[from] PrepareError),
    #[error(transparent)]
    Model(#[from] gridwave_core::Error),
}

/// Process exit status of a screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 1,
    SolverFailure = 2,
    PartialFailure = 3,
}

#[derive(Debug)]
pub struct ScreenReport {
    pub status: ExitStatus,
    /// Human-readable problems, in the order found.
    pub messages: Vec<String>,
    /// Offline build times, when the build was reached.
    pub prepare: Option<PrepareTiming>,
    /// Summed per-contingency LIFE and LIVE times.
    pub online: (Duration, Duration),
}

impl ScreenReport {
    fn fail(status: ExitStatus, messages: Vec<String>) -> Self {
        ScreenReport { status, messages, prepare: None, online: Default::default() }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

/// Runs the whole screen described by `cfg`.
pub fn run_screen(cfg: &RunConfig) -> ScreenReport {
    let mut problems = cfg.settings.problems();
    let case = read_matpower(&cfg.case).map_err(|e| problems.push(format!("case {}: {e}", cfg.case.display()))).ok();
    let overlay = Overlay::read(&cfg.overlay).map_err(|e| problems.push(e.to_string())).ok();
    let list = read_contingencies(&cfg.contingencies).map_err(|e| problems.push(e.to_string())).ok();
    if let (Some(case), Some(list)) = (&case, &list) {
        for (k, c) in list.iter().enumerate() {
            if case.bus_index(gridwave_core::BusId(c.bus)).is_none() {
                problems.push(format!("contingency {k}: bus {} is not in the case", c.bus));
            }
            if !(c.dp_mw.is_finite() && c.dq_mvar.is_finite()) {
                problems.push(format!("contingency {k}: non-finite step"));
            }
        }
    }
    if !problems.is_empty() {
        return ScreenReport::fail(ExitStatus::ConfigError, problems);
    }
    let (case, overlay, list) = (case.unwrap(), overlay.unwrap(), list.unwrap());

    let engine = match Engine::from_inputs(&case, &overlay, cfg.settings.clone()) {
        Ok(e) => e,
        Err(Error::Prepare(e)) => return ScreenReport::fail(ExitStatus::SolverFailure, vec![e.to_string()]),
        Err(e) => return ScreenReport::fail(ExitStatus::ConfigError, vec![e.to_string()]),
    };
    let mut messages = Vec::new();
    for (bus, p) in engine.case.gfm() {
        if !p.kv_in_recommended_band() {
            messages.push(format!("warning: K_v = {} at bus {bus} is outside the recommended band", p.k_v));
        }
    }

    if let Err(e) = std::fs::create_dir_all(&cfg.out) {
        return ScreenReport::fail(ExitStatus::ConfigError, vec![format!("{}: {e}", cfg.out.display())]);
    }
    if cfg.dump_network {
        if let Err(e) = output::dump_network(&engine.red, &cfg.out, 5_000_000) {
            messages.push(format!("network dump: {e}"));
        }
    }

    let s_base = engine.case.s_base;
    let mut entries = Vec::with_capacity(list.len());
    let mut failed = 0;
    let mut online = (Duration::ZERO, Duration::ZERO);
    let chunk = (2 * rayon::current_num_threads()).max(1);
    for (c_idx, records) in list.chunks(chunk).enumerate() {
        let results: Vec<Result<ContingencyResult, gridwave_core::Error>> =
            records.par_iter().map(|c| engine.run(&engine.disturbance(c))).collect();
        // Single collector: files are written in contingency order.
        for (j, (c, res)) in records.iter().zip(results).enumerate() {
            let k = c_idx * chunk + j;
            let mut entry = json!({ "index": k, "bus": c.bus, "dp_mw": c.dp_mw, "dq_mvar": c.dq_mvar });
            match res.map_err(|e| e.to_string()).and_then(|r| write_contingency(cfg, k, &r, s_base).map(|_| r)) {
                Ok(r) => {
                    online.0 += r.life_time;
                    online.1 += r.live_time;
                    entry["status"] = json!("ok");
                    entry["distributions"] = output::distributions(&r, s_base);
                    entry["low_voltage_buses"] = json!(r.low_voltage.iter().map(|b| b.0).collect::<Vec<_>>());
                }
                Err(e) => {
                    failed += 1;
                    messages.push(format!("contingency {k} (bus {}): {e}", c.bus));
                    entry["status"] = json!("failed");
                    entry["error"] = json!(e);
                }
            }
            entries.push(entry);
        }
    }

    let summary = json!({
        "gfm_buses": engine.gen_ids.len(),
        "life_states": engine.life.n_states(),
        "settings": {
            "t_s": cfg.settings.t_s,
            "horizon_s": cfg.settings.horizon,
            "k_l": cfg.settings.k_l,
            "gfm_threshold_mva": cfg.settings.gfm_threshold,
        },
        "contingencies": entries,
    });
    if let Err(e) = write(&cfg.out.join("summary.json"), &output::to_pretty(&summary)) {
        messages.push(e);
        return ScreenReport { status: ExitStatus::SolverFailure, messages, prepare: Some(engine.timing), online };
    }

    let status = match failed {
        0 => ExitStatus::Success,
        n if n == list.len() => ExitStatus::SolverFailure,
        _ => ExitStatus::PartialFailure,
    };
    ScreenReport { status, messages, prepare: Some(engine.timing), online }
}

fn write_contingency(cfg: &RunConfig, k: usize, r: &ContingencyResult, s_base: f64) -> Result<(), String> {
    let dir = cfg.out.join(format!("c{k:04}_bus{}", r.disturbance.bus));
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    write(&dir.join("frequency.csv"), &output::trajectory_csv(&r.frequency))?;
    write(&dir.join("voltage.csv"), &output::trajectory_csv(&r.voltage))?;
    write(&dir.join("metrics.json"), &output::to_pretty(&output::metrics_json(r, s_base)))?;
    if cfg.svg {
        let title = format!("Bus {} step {} MW + {} MVAR", r.disturbance.bus, r.disturbance.dp, r.disturbance.dq);
        write(&dir.join("frequency.svg"), &output::trajectory_svg(&r.frequency, &format!("Frequency, {title}"), 500))?;
        write(&dir.join("voltage.svg"), &output::trajectory_svg(&r.voltage, &format!("Voltage, {title}"), 500))?;
    }
    Ok(())
}
