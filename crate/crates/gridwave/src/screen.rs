//! Contingency screening: the offline model build and the per-contingency
//! online evaluation.
//!
//! Everything that depends only on the case, the overlay and `t_s` is built
//! once in [`Engine::prepare`]: the Kron reduction, both discretized models and
//! the base power flow. Each contingency then costs one sparse forward
//! substitution, two matrix-vector recurrences and one warm-started power flow.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use gridwave_core::life::{assemble_life, compute_delta_pd, LifeSystem};
use gridwave_core::live::assemble_live;
use gridwave_core::metrics::{self, FreqMetrics, MetricsConfig};
use gridwave_core::netmodel::{build_susceptance, kron_reduce};
use gridwave_core::powerflow::{AcSolver, PowerFlowOptions, SlackPolicy};
use gridwave_core::sim::{discretize, simulate, states_to_frequency, states_to_voltage, DiscreteSystem, Trajectory};
use gridwave_core::{BusId, Disturbance, NetworkCase, PowerFlowSolution, ReducedNetwork, Vector};

use crate::ingest::{ContingencyRecord, Overlay};

/// Everything the screen needs besides the input files themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Sampling period, seconds.
    pub t_s: f64,
    /// Simulated time after the disturbance, seconds.
    pub horizon: f64,
    pub k_l: f64,
    /// Overrides K_v at every GFM when set.
    pub k_v: Option<f64>,
    /// Minimum aggregated capacity of a GFM, MVA.
    pub gfm_threshold: f64,
    pub metrics: MetricsConfig,
    /// Voltage settling band, pu.
    pub voltage_band: f64,
    /// Final voltages below this are reported, pu.
    pub v_low: f64,
    pub slack: SlackPolicy,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            t_s: 1e-3,
            horizon: 1.0,
            k_l: 1.05,
            k_v: None,
            gfm_threshold: 100.0,
            metrics: MetricsConfig::default(),
            voltage_band: metrics::VOLTAGE_BAND,
            v_low: 0.95,
            slack: SlackPolicy::Single,
        }
    }
}

impl Settings {
    /// Every problem with the numeric settings, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        positive("ts", self.t_s);
        positive("horizon", self.horizon);
        positive("gfm-threshold", self.gfm_threshold);
        positive("settling-band", self.metrics.settling_band);
        positive("voltage-band", self.voltage_band);
        positive("rocof-window", self.metrics.rocof_window);
        if let Some(kv) = self.k_v {
            positive("kv", kv);
        }
        if self.t_s > 0.0 && self.horizon < 10.0 * self.t_s {
            out.push(format!("horizon {} s must cover at least 10 samples of {} s", self.horizon, self.t_s));
        }
        if !(self.k_l >= 1.0 && self.k_l.is_finite()) {
            out.push(format!("kl must be at least 1, got {}", self.k_l));
        }
        out
    }
}

/// Full CLI configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: PathBuf,
    pub overlay: PathBuf,
    pub contingencies: PathBuf,
    pub out: PathBuf,
    pub settings: Settings,
    pub svg: bool,
    pub dump_network: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Reduction,
    Assembly,
    Discretization,
    PowerFlow,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage:?}: {source}")]
pub struct PrepareError {
    pub stage: Stage,
    pub source: gridwave_core::Error,
}

fn at(stage: Stage) -> impl Fn(gridwave_core::Error) -> PrepareError {
    move |source| PrepareError { stage, source }
}

/// Wall-clock time of each offline step.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrepareTiming {
    pub reduction: Duration,
    pub life_assembly: Duration,
    pub life_discretization: Duration,
    pub live_discretization: Duration,
    pub power_flow: Duration,
}

/// Offline part of the screen, shared read-only by all contingencies.
pub struct Engine {
    pub case: NetworkCase,
    pub settings: Settings,
    pub red: ReducedNetwork,
    pub life: LifeSystem,
    pub life_d: DiscreteSystem,
    pub live_d: DiscreteSystem,
    pub base: PowerFlowSolution,
    pub gen_ids: Vec<BusId>,
    pub v0: Vector,
    pub timing: PrepareTiming,
    pf_opts: PowerFlowOptions,
}

/// Outcome of one contingency.
#[derive(Debug, Clone)]
pub struct ContingencyResult {
    pub disturbance: Disturbance,
    pub dp_d: Vector,
    pub dq_g: Vector,
    pub frequency: Trajectory,
    pub voltage: Trajectory,
    pub freq_metrics: BTreeMap<BusId, FreqMetrics>,
    pub voltage_settling: BTreeMap<BusId, metrics::Settling>,
    pub low_voltage: Vec<BusId>,
    pub life_time: Duration,
    pub live_time: Duration,
}

impl Engine {
    /// Converts `case` to all-GFM with `overlay` and builds the offline state.
    pub fn from_inputs(case: &NetworkCase, overlay: &Overlay, settings: Settings) -> Result<Engine, crate::Error> {
        let mut gfm_case = overlay.apply(case, settings.gfm_threshold)?;
        if let Some(kv) = settings.k_v {
            for bus in gfm_case.gfm_buses() {
                let p = gfm_case.gfm_params(bus)?;
                gfm_case.set_gfm_params(bus, gridwave_core::GfmParams { k_v: kv, ..p })?;
            }
        }
        Ok(Engine::prepare(gfm_case, settings)?)
    }

    /// Builds the offline state for an already converted case.
    pub fn prepare(case: NetworkCase, settings: Settings) -> Result<Engine, PrepareError> {
        let mut timing = PrepareTiming::default();

        let t = Instant::now();
        let red = kron_reduce(&build_susceptance(&case).map_err(at(Stage::Reduction))?).map_err(at(Stage::Reduction))?;
        timing.reduction = t.elapsed();

        let t = Instant::now();
        let life = assemble_life(&red, &case).map_err(at(Stage::Assembly))?;
        timing.life_assembly = t.elapsed();

        let t = Instant::now();
        let life_d = discretize(&life.a_f, &life.b_f, settings.t_s).map_err(at(Stage::Discretization))?;
        timing.life_discretization = t.elapsed();

        let gen_ids = life.gen_ids().to_vec();
        let t = Instant::now();
        let pf_opts = PowerFlowOptions { slack: settings.slack, ..Default::default() };
        let solver = AcSolver::new(&case, pf_opts).map_err(at(Stage::PowerFlow))?;
        let base = solver.base().map_err(at(Stage::PowerFlow))?;
        timing.power_flow = t.elapsed();
        let v0 = Vector::from_iterator(gen_ids.len(), gen_ids.iter().map(|&b| base.v[case.bus_index(b).unwrap()]));

        let t = Instant::now();
        let live = assemble_live(&case, &gen_ids, &Vector::zeros(gen_ids.len()), Some(&v0)).map_err(at(Stage::Assembly))?;
        let live_d = discretize(&live.a_v, &live.b_v, settings.t_s).map_err(at(Stage::Discretization))?;
        timing.live_discretization = t.elapsed();

        Ok(Engine { case, settings, red, life, life_d, live_d, base, gen_ids, v0, timing, pf_opts })
    }

    pub fn disturbance(&self, c: &ContingencyRecord) -> Disturbance {
        c.to_disturbance(self.settings.k_l)
    }

    /// Frequency response to `d`: the trajectory and the active shares.
    pub fn run_life(&self, d: &Disturbance) -> Result<(Trajectory, Vector), gridwave_core::Error> {
        d.validate(&self.case)?;
        let dp_d = compute_delta_pd(&self.red, d, &self.case)?;
        let x0 = Vector::zeros(self.life_d.n_states());
        let samples = simulate(&self.life_d, &dp_d, self.settings.horizon, &x0)?;
        Ok((states_to_frequency(&samples, &self.life, self.settings.t_s), dp_d))
    }

    /// Voltage response to `d` given the active shares from [`Self::run_life`].
    pub fn run_live(&self, d: &Disturbance, dp_d: &Vector) -> Result<(Trajectory, Vector), gridwave_core::Error> {
        let solver = AcSolver::new(&self.case, self.pf_opts)?;
        let dq_g = solver.estimate_delta_qg(&self.base, d, dp_d)?;
        let live = assemble_live(&self.case, &self.gen_ids, &dq_g, Some(&self.v0))?;
        let x0 = Vector::zeros(self.gen_ids.len());
        let samples = simulate(&self.live_d, &live.input(), self.settings.horizon, &x0)?;
        Ok((states_to_voltage(&samples, &live, self.settings.t_s), dq_g))
    }

    pub fn run(&self, d: &Disturbance) -> Result<ContingencyResult, gridwave_core::Error> {
        let t = Instant::now();
        let (frequency, dp_d) = self.run_life(d)?;
        let life_time = t.elapsed();
        let t = Instant::now();
        let (voltage, dq_g) = self.run_live(d, &dp_d)?;
        let live_time = t.elapsed();

        let freq_metrics = metrics::freq_metrics(&frequency, self.case.f0, &self.settings.metrics);
        let voltage_settling = metrics::settling(&voltage, self.settings.voltage_band, self.settings.metrics.dwell);
        let low_voltage = metrics::voltage_screen(&voltage, self.settings.v_low);
        Ok(ContingencyResult {
            disturbance: *d,
            dp_d,
            dq_g,
            frequency,
            voltage,
            freq_metrics,
            voltage_settling,
            low_voltage,
            life_time,
            live_time,
        })
    }
}
