use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use gridwave::screen::{RunConfig, Settings};
use gridwave::{run_screen, ExitStatus};
use gridwave_core::metrics::{MetricsConfig, FREQ_BAND, ROCOF_WINDOW, VOLTAGE_BAND};
use gridwave_core::powerflow::SlackPolicy;

#[derive(Parser)]
#[command(name = "gridwave", version, about = "Frequency and voltage screening of all-grid-forming networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Slack {
    Single,
    Distributed,
}

#[derive(Subcommand)]
enum Command {
    /// Run every contingency in a list and write trajectories and metrics.
    #[command(allow_negative_numbers = true)]
    Screen {
        /// MATPOWER case file.
        #[arg(long)]
        case: PathBuf,
        /// GFM parameter overlay (JSON).
        #[arg(long)]
        overlay: PathBuf,
        /// JSON array of {bus, dp_mw, dq_mvar}.
        #[arg(long)]
        contingencies: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Sampling period, s.
        #[arg(long, default_value_t = 1e-3)]
        ts: f64,
        /// Simulated time, s.
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        /// Load multiplier applied to every step.
        #[arg(long, default_value_t = 1.05)]
        kl: f64,
        /// Voltage gain applied to every GFM, overriding the overlay.
        #[arg(long)]
        kv: Option<f64>,
        /// Minimum aggregated generator capacity of a GFM bus, MVA.
        #[arg(long, default_value_t = 100.0)]
        gfm_threshold: f64,
        /// Frequency settling band, Hz.
        #[arg(long, default_value_t = FREQ_BAND)]
        settling_band: f64,
        /// Voltage settling band, pu.
        #[arg(long, default_value_t = VOLTAGE_BAND)]
        voltage_band: f64,
        /// RoCoF window, s.
        #[arg(long, default_value_t = ROCOF_WINDOW)]
        rocof_window: f64,
        /// Final voltages below this are flagged, pu.
        #[arg(long, default_value_t = 0.95)]
        v_low: f64,
        /// Base power-flow slack treatment.
        #[arg(long, value_enum, default_value_t = Slack::Single)]
        slack: Slack,
        /// Also write SVG plots.
        #[arg(long)]
        svg: bool,
        /// Write the reduced susceptance matrices.
        #[arg(long)]
        dump_network: bool,
    },
}

fn main() -> ExitCode {
    let Command::Screen {
        case,
        overlay,
        contingencies,
        out,
        ts,
        horizon,
        kl,
        kv,
        gfm_threshold,
        settling_band,
        voltage_band,
        rocof_window,
        v_low,
        slack,
        svg,
        dump_network,
    } = match Cli::try_parse() {
        Ok(cli) => cli.command,
        // Usage errors are configuration errors; help and version are not errors.
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ExitStatus::ConfigError as u8 } else { 0 });
        }
    };

    let settings = Settings {
        t_s: ts,
        horizon,
        k_l: kl,
        k_v: kv,
        gfm_threshold,
        metrics: MetricsConfig { settling_band, rocof_window, ..Default::default() },
        voltage_band,
        v_low,
        slack: match slack {
            Slack::Single => SlackPolicy::Single,
            Slack::Distributed => SlackPolicy::Distributed,
        },
    };
    let cfg = RunConfig { case, overlay, contingencies, out, settings, svg, dump_network };

    let start = Instant::now();
    let report = run_screen(&cfg);
    for m in &report.messages {
        eprintln!("{m}");
    }
    if let Some(t) = report.prepare {
        eprintln!(
            "offline: reduction {:.3} s, LIFE assembly {:.3} s, LIFE discretization {:.3} s, LIVE discretization {:.3} s, base power flow {:.3} s",
            t.reduction.as_secs_f64(),
            t.life_assembly.as_secs_f64(),
            t.life_discretization.as_secs_f64(),
            t.live_discretization.as_secs_f64(),
            t.power_flow.as_secs_f64()
        );
        eprintln!("online: LIFE {:.3} s, LIVE {:.3} s", report.online.0.as_secs_f64(), report.online.1.as_secs_f64());
    }
    eprintln!("finished in {:.3} s", start.elapsed().as_secs_f64());
    if report.status != ExitStatus::Success {
        eprintln!("exit status: {:?}", report.status);
    }
    ExitCode::from(report.status as u8)
}
