//! CSV trajectories, monitor JSON and plot data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Region;

use super::monitor::MonitorReport;
use super::runner::{ScenarioRun, Trajectory};
use super::scenario::Scenario;

pub const DEFAULT_POLYLINE_POINTS: usize = 512;

fn header(barriers: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "x1", "x2", "x3", "u_p", "u_d"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=barriers).map(|i| format!("h_{i}")));
    h.push("phi_bar".into());
    h.push("active_barrier".into());
    h
}

/// One row per sample. `phi_bar` and `active_barrier` are empty when absent.
/// Floats use the shortest representation that parses back exactly.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let barriers = traj.h.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(barriers))?;
    for k in 0..traj.len() {
        let x = traj.states[k];
        let u = traj.inputs[k];
        let mut row: Vec<String> = vec![
            traj.times[k].to_string(),
            x[0].to_string(),
            x[1].to_string(),
            x[2].to_string(),
            u[0].to_string(),
            u[1].to_string(),
        ];
        row.extend(traj.h[k].iter().map(f64::to_string));
        row.push(traj.phi_bar[k].map(|p| p.to_string()).unwrap_or_default());
        row.push(traj.active[k].map(|a| a.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back the channels written by [`write_trajectory_csv`]. Nominal
/// inputs and QP flags are not part of the file and come back empty.
pub fn read_trajectory_csv<R: std::io::Read>(input: R) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let barriers = headers.iter().filter(|h| h.starts_with("h_")).count();
    if headers.len() != 8 + barriers {
        return Err(Error::Scenario(format!("unexpected trajectory header with {} columns", headers.len())));
    }
    let num =
        |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::Scenario(format!("bad number {s:?}: {e}"))) };
    let mut traj = Trajectory::default();
    for record in r.records() {
        let rec = record?;
        let f = |i: usize| num(&rec[i]);
        traj.times.push(f(0)?);
        traj.states.push(Vector3::new(f(1)?, f(2)?, f(3)?));
        traj.inputs.push(Vector2::new(f(4)?, f(5)?));
        traj.h.push((0..barriers).map(|i| f(6 + i)).collect::<Result<_>>()?);
        let phi = &rec[6 + barriers];
        traj.phi_bar.push(if phi.is_empty() { None } else { Some(num(phi)?) });
        let active = &rec[7 + barriers];
        traj.active.push(if active.is_empty() {
            None
        } else {
            Some(active.parse().map_err(|e| Error::Scenario(format!("bad barrier index {active:?}: {e}")))?)
        });
    }
    Ok(traj)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary<'a> {
    pub scenario: &'a str,
    pub mode: String,
    pub runs: Vec<RunEntry<'a>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunEntry<'a> {
    pub initial_state: [f64; 3],
    pub robustness: bool,
    pub label: Option<&'a str>,
    pub csv: String,
    pub monitor: &'a MonitorReport,
    pub safety: &'static str,
    pub input_box: &'static str,
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierPlot {
    pub index: usize,
    pub name: String,
    pub region: Region,
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
    /// `h = 0`
    pub boundary: Vec<[f64; 2]>,
    /// `h = a`
    pub outer: Vec<[f64; 2]>,
    /// `h = -b`
    pub inner: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PathPlot {
    pub run: usize,
    pub label: Option<String>,
    /// Positions every `stride` samples, always including the last one.
    pub stride: usize,
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlotData {
    pub scenario: String,
    pub mode: String,
    pub barriers: Vec<BarrierPlot>,
    pub paths: Vec<PathPlot>,
}

fn pts(line: Vec<Vector2<f64>>) -> Vec<[f64; 2]> {
    line.into_iter().map(|p| [p[0], p[1]]).collect()
}

pub fn barrier_polylines(scenario: &Scenario, points: usize) -> Vec<BarrierPlot> {
    scenario
        .barriers
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let ell = b.shell.ellipsoid();
            BarrierPlot {
                index: i,
                name: scenario.barrier_names[i].clone(),
                region: ell.region(),
                center: [ell.center()[0], ell.center()[1]],
                a: b.shell.a(),
                b: b.shell.b(),
                boundary: pts(ell.polyline(0.0, points)),
                outer: pts(ell.polyline(b.shell.a(), points)),
                inner: pts(ell.polyline(-b.shell.b(), points)),
            }
        })
        .collect()
}

pub fn plot_data(scenario: &Scenario, run: &ScenarioRun, points: usize, stride: usize) -> PlotData {
    let stride = stride.max(1);
    let paths = run
        .runs
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let states = &r.trajectory.states;
            let mut idx: Vec<usize> = (0..states.len()).step_by(stride).collect();
            if let Some(last) = states.len().checked_sub(1) {
                if idx.last() != Some(&last) {
                    idx.push(last);
                }
            }
            PathPlot {
                run: k,
                label: r.initial.label.clone(),
                stride,
                points: idx.into_iter().map(|i| [states[i][0], states[i][1]]).collect(),
            }
        })
        .collect();
    PlotData {
        scenario: scenario.name.clone(),
        mode: run.mode.to_string(),
        barriers: barrier_polylines(scenario, points),
        paths,
    }
}

/// Files written by [`write_run`].
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub csv: Vec<PathBuf>,
    pub monitor: PathBuf,
    pub plot: PathBuf,
}

/// Writes `<mode>_run<k>.csv` per initial state, `<mode>_monitor.json` and
/// `<mode>_plot.json` into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, run: &ScenarioRun, polyline_points: usize) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir)?;
    let mode = run.mode.to_string();
    let mut csv_paths = Vec::with_capacity(run.runs.len());
    let mut entries = Vec::with_capacity(run.runs.len());
    for (k, r) in run.runs.iter().enumerate() {
        let name = format!("{mode}_run{k}.csv");
        let path = dir.join(&name);
        write_trajectory_csv(&r.trajectory, BufWriter::new(File::create(&path)?))?;
        csv_paths.push(path);
        let x = r.initial.x;
        entries.push(RunEntry {
            initial_state: [x[0], x[1], x[2]],
            robustness: r.initial.robustness,
            label: r.initial.label.as_deref(),
            csv: name,
            monitor: &r.report,
            safety: verdict(r.report.safety_pass),
            input_box: verdict(r.report.input_box_pass),
        });
    }
    let summary = RunSummary { scenario: &run.scenario, mode: mode.clone(), runs: entries };
    let monitor = dir.join(format!("{mode}_monitor.json"));
    write_json(&monitor, &summary)?;
    let plot = dir.join(format!("{mode}_plot.json"));
    write_json(&plot, &plot_data(scenario, run, polyline_points, 10))?;
    Ok(RunArtifacts { csv: csv_paths, monitor, plot })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
