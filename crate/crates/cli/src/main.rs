//! `barrier-guard`: validate scenarios, run and compare controllers, serve
//! live sessions.
//!
//! Exit codes: 0 success, 1 usage or IO error, 2 validation failure,
//! 3 runtime monitor failure (including aborted runs).

mod commands;

use std::net::IpAddr;
use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;

use barrier_guard::sim::ControllerMode;
use clap::{Parser, Subcommand};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_MONITOR: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "barrier-guard", version, about = "Blended Type-II ZCBF safety filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file: schema, annulus disjointness, gains, center exclusion, initial states.
    Validate { file: PathBuf },
    /// Simulate every initial state and write CSVs, monitor JSON and plot data.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "blended", value_parser = parse_mode)]
        mode: ControllerMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Half-open barrier index range `a..b` to keep.
        #[arg(long, value_parser = parse_range)]
        barriers: Option<Range<usize>>,
        /// Points per level-set polyline in the plot data.
        #[arg(long, default_value_t = barrier_guard::sim::export::DEFAULT_POLYLINE_POINTS)]
        polyline_points: usize,
    },
    /// Run several modes on one scenario and tabulate safety, effort, cost and smoothness.
    Compare {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "blended,stacked_qp", value_parser = parse_mode)]
        modes: Vec<ControllerMode>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Random pairs per Lipschitz probe.
        #[arg(long, default_value_t = 20_000)]
        pairs: usize,
        /// Also write the table as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Per-step cost of the blended filter and the stacked QP against the barrier count.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = barrier_guard::sim::bench::SCALING_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Serve live teleoperation sessions over a websocket.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Extra `*.toml` scenarios to offer next to the shipped one.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Where replay logs of finished sessions go.
        #[arg(long)]
        replay_dir: Option<PathBuf>,
        /// Override every scenario's pacing.
        #[arg(long)]
        steps_per_second: Option<f64>,
    },
}

fn parse_mode(s: &str) -> Result<ControllerMode, String> {
    s.parse().map_err(|e: barrier_guard::Error| e.to_string())
}

fn parse_range(s: &str) -> Result<Range<usize>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
    if a >= b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok(a..b)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BARRIER_GUARD_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Validate { file } => commands::validate(&file),
        Command::Run { file, mode, out, dt, horizon, seed, barriers, polyline_points } => {
            commands::run(&file, mode, &out, (dt, horizon, seed), barriers, polyline_points)
        }
        Command::Compare { file, modes, dt, horizon, seed, pairs, json } => {
            commands::compare(&file, &modes, (dt, horizon, seed), pairs, json.as_deref())
        }
        Command::Bench { sizes, samples, seed } => commands::bench(&sizes, samples, seed),
        Command::Serve { port, bind, scenarios, replay_dir, steps_per_second } => {
            commands::serve((bind, port).into(), scenarios.as_deref(), replay_dir, steps_per_second)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
