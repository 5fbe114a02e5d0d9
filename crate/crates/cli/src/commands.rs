use std::net::SocketAddr;
use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use barrier_guard::sim::bench::{format_scaling_table, scaling_table};
use barrier_guard::sim::export::{write_json, write_run};
use barrier_guard::sim::lipschitz::{crafted_contrast, scenario_mode_probe};
use barrier_guard::sim::{run_scenario, ControllerMode, RunResult, Scenario, ScenarioConfig, ScenarioRun};
use barrier_guard_teleop::{Catalog, ServerConfig};
use serde::Serialize;

use crate::{EXIT_INVALID, EXIT_MONITOR};

/// `--dt`, `--horizon`, `--seed`.
pub type Overrides = (Option<f64>, Option<f64>, Option<u64>);

/// Parses `file`; a parse failure is reported as a schema issue and yields `None`.
fn load_config(file: &Path) -> Result<Option<ScenarioConfig>> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    match ScenarioConfig::from_toml_str(&text) {
        Ok(c) => Ok(Some(c)),
        Err(e) => {
            println!("FAIL  [schema] {e}");
            Ok(None)
        }
    }
}

/// Loads, validates and applies overrides; `None` after printing why not.
fn load_scenario(file: &Path, overrides: Overrides, barriers: Option<Range<usize>>) -> Result<Option<Scenario>> {
    let Some(config) = load_config(file)? else { return Ok(None) };
    let report = config.validate();
    if !report.is_ok() {
        println!("{report}");
        return Ok(None);
    }
    let (dt, horizon, seed) = overrides;
    let built =
        Scenario::from_config(&config).and_then(|s| s.with_overrides(dt, horizon, seed)).and_then(
            |s| match &barriers {
                Some(r) => s.select_barriers(r.clone()),
                None => Ok(s),
            },
        );
    match built {
        Ok(s) => Ok(Some(s)),
        Err(e) => {
            println!("FAIL  {e}");
            Ok(None)
        }
    }
}

pub fn validate(file: &Path) -> Result<u8> {
    let Some(config) = load_config(file)? else { return Ok(EXIT_INVALID) };
    let report = config.validate();
    println!("{report}");
    if !report.is_ok() {
        return Ok(EXIT_INVALID);
    }
    if let Err(e) = Scenario::from_config(&config) {
        println!("FAIL  {e}");
        return Ok(EXIT_INVALID);
    }
    Ok(0)
}

fn describe_run(run: &ScenarioRun) {
    for (k, r) in run.runs.iter().enumerate() {
        let m = &r.report;
        let label = r.initial.label.as_deref().unwrap_or("-");
        let verdict = if m.safety_pass { "pass" } else { "FAIL" };
        print!("  run{k:<3} {label:<18} safety {verdict}  min h {:>11.4e}", m.min_h_overall);
        if let Some(v) = &m.first_violation {
            print!("  first violation t = {:.3} s (barrier {}, h = {:.4e})", v.t, v.barrier, v.h);
        }
        if let Some(t) = &m.robustness {
            match t.reached_at {
                Some(at) => print!("  reached C at t = {at:.3} s"),
                None => print!("  h(T) = {:.4e}", t.final_h),
            }
        }
        if let Some(a) = &m.aborted {
            print!("  ABORTED at step {} ({}), partial output", a.step, a.reason);
        }
        println!();
    }
}

pub fn run(
    file: &Path,
    mode: ControllerMode,
    out: &Path,
    overrides: Overrides,
    barriers: Option<Range<usize>>,
    polyline_points: usize,
) -> Result<u8> {
    let Some(scenario) = load_scenario(file, overrides, barriers)? else { return Ok(EXIT_INVALID) };
    log::info!("running {} in {mode} mode, {} initial states", scenario.name, scenario.initial_states.len());
    let run = run_scenario(&scenario, mode);
    let artifacts = write_run(out, &scenario, &run, polyline_points)
        .with_context(|| format!("writing results to {}", out.display()))?;
    println!(
        "{} / {mode}: {} runs, dt = {}, horizon = {} s",
        scenario.name,
        run.runs.len(),
        scenario.dt,
        scenario.horizon
    );
    describe_run(&run);
    let [up, ud] = run.max_abs_u();
    println!(
        "safety {}  input_box {}  max |u| = ({up:.4}, {ud:.4})",
        if run.safety_pass() { "pass" } else { "FAIL" },
        if run.input_box_pass() { "pass" } else { "FAIL" },
    );
    println!("monitor {}", artifacts.monitor.display());
    println!("plot    {}", artifacts.plot.display());
    println!("csv     {} files in {}", artifacts.csv.len(), out.display());
    if run.safety_pass() && run.input_box_pass() && !run.aborted() {
        Ok(0)
    } else {
        Ok(EXIT_MONITOR)
    }
}

fn reached(r: &RunResult) -> bool {
    r.report.robustness.as_ref().is_some_and(|t| t.reached_at.is_some())
}

#[derive(Debug, Serialize)]
struct CompareRow {
    mode: ControllerMode,
    safety_pass: bool,
    /// Over runs that start in the safe set.
    min_h_safe_starts: f64,
    /// Robustness runs that reached the safe set, out of all robustness runs.
    recovered: [usize; 2],
    max_abs_u: [f64; 2],
    mean_step_us: f64,
    lipschitz_bound: Option<f64>,
    probe_pairs: usize,
    qp_infeasible_steps: usize,
}

#[derive(Debug, Serialize)]
struct CraftedRow {
    blended: f64,
    stacked_qp: f64,
    ratio: f64,
}

#[derive(Debug, Serialize)]
struct Comparison {
    scenario: String,
    seed: u64,
    rows: Vec<CompareRow>,
    crafted: Option<CraftedRow>,
}

pub fn compare(
    file: &Path,
    modes: &[ControllerMode],
    overrides: Overrides,
    pairs: usize,
    json: Option<&Path>,
) -> Result<u8> {
    let Some(scenario) = load_scenario(file, overrides, None)? else { return Ok(EXIT_INVALID) };
    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let run = run_scenario(&scenario, mode);
        let probe = scenario_mode_probe(&scenario, mode, pairs, scenario.seed);
        rows.push(CompareRow {
            mode,
            safety_pass: run.safety_pass(),
            min_h_safe_starts: run
                .runs
                .iter()
                .filter(|r| !r.initial.robustness)
                .map(|r| r.report.min_h_overall)
                .fold(f64::INFINITY, f64::min),
            recovered: [
                run.runs.iter().filter(|r| reached(r)).count(),
                run.runs.iter().filter(|r| r.initial.robustness).count(),
            ],
            max_abs_u: run.max_abs_u(),
            mean_step_us: run.mean_control_time().as_secs_f64() * 1e6,
            lipschitz_bound: probe.as_ref().map(|p| p.max_quotient),
            probe_pairs: probe.as_ref().map_or(0, |p| p.evaluated),
            qp_infeasible_steps: run.runs.iter().map(|r| r.report.qp_infeasible_steps).sum(),
        });
    }
    println!(
        "{} ({} barriers, {} initial states)",
        scenario.name,
        scenario.barriers.len(),
        scenario.initial_states.len()
    );
    println!(
        "{:<14} {:>6} {:>12} {:>9} {:>8} {:>8} {:>10} {:>10} {:>8}",
        "mode", "safety", "min h safe", "recovered", "|u_p|", "|u_d|", "us/step", "lipschitz", "qp infs"
    );
    for r in &rows {
        let bound = r.lipschitz_bound.map_or("-".to_string(), |b| format!("{b:.3}"));
        println!(
            "{:<14} {:>6} {:>12.4e} {:>9} {:>8.4} {:>8.4} {:>10.3} {:>10} {:>8}",
            r.mode.to_string(),
            if r.safety_pass { "pass" } else { "FAIL" },
            r.min_h_safe_starts,
            format!("{}/{}", r.recovered[0], r.recovered[1]),
            r.max_abs_u[0],
            r.max_abs_u[1],
            r.mean_step_us,
            bound,
            r.qp_infeasible_steps
        );
    }
    let crafted = if modes.contains(&ControllerMode::Blended) && modes.contains(&ControllerMode::StackedQp) {
        let c = crafted_contrast(pairs, scenario.seed)?;
        println!(
            "crafted instance: lipschitz blended {:.3}, stacked_qp {:.3}, ratio {:.1}",
            c.blended.max_quotient, c.stacked_qp.max_quotient, c.ratio
        );
        Some(CraftedRow { blended: c.blended.max_quotient, stacked_qp: c.stacked_qp.max_quotient, ratio: c.ratio })
    } else {
        None
    };
    if let Some(path) = json {
        let table = Comparison { scenario: scenario.name.clone(), seed: scenario.seed, rows, crafted };
        write_json(path, &table).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

pub fn bench(sizes: &[usize], samples: usize, seed: u64) -> Result<u8> {
    let rows = scaling_table(sizes, samples, seed)?;
    print!("{}", format_scaling_table(&rows));
    Ok(0)
}

pub fn serve(
    addr: SocketAddr,
    scenarios: Option<&Path>,
    replay_dir: Option<PathBuf>,
    steps_per_second: Option<f64>,
) -> Result<u8> {
    let mut catalog = Catalog::shipped();
    if let Some(dir) = scenarios {
        let n = catalog.load_dir(dir).with_context(|| format!("loading scenarios from {}", dir.display()))?;
        log::info!("loaded {n} scenarios from {}", dir.display());
    }
    let config = ServerConfig { steps_per_second, replay_dir, ..Default::default() };
    println!("serving {} on ws://{addr}/ws", catalog.names().join(", "));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(barrier_guard_teleop::serve(addr, catalog, config))?;
    Ok(0)
}
