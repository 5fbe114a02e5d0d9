//! Closed-loop execution of a scenario under one controller mode.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::{blend_multi, Barrier};
use crate::error::{Error, Result};
use crate::input_box::InputBox;
use crate::plants::{Unicycle, UnicycleBarrier};
use crate::qp::{solve_stacked_qp, stacked_problem, QpOutcome};

use super::integrate::rk4_step;
use super::monitor::{MonitorReport, RunAbort};
use super::scenario::{InitialState, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    Blended,
    NominalOnly,
    SafetyOnly,
    StackedQp,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 4] =
        [ControllerMode::Blended, ControllerMode::NominalOnly, ControllerMode::SafetyOnly, ControllerMode::StackedQp];
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerMode::Blended => "blended",
            ControllerMode::NominalOnly => "nominal_only",
            ControllerMode::SafetyOnly => "safety_only",
            ControllerMode::StackedQp => "stacked_qp",
        })
    }
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "blended" => Ok(ControllerMode::Blended),
            "nominal_only" | "nominal" => Ok(ControllerMode::NominalOnly),
            "safety_only" | "safety" => Ok(ControllerMode::SafetyOnly),
            "stacked_qp" | "qp" => Ok(ControllerMode::StackedQp),
            other => Err(Error::InvalidParameter(format!("unknown controller mode {other:?}"))),
        }
    }
}

/// Where `u_nom` comes from at each step.
#[derive(Clone, Debug, PartialEq)]
pub enum NominalSource {
    /// The scenario's own nominal law.
    Scenario,
    Zero,
    /// A recorded input per step; the last entry is held past the end.
    Tabulated(Vec<Vector2<f64>>),
}

impl NominalSource {
    pub fn command(&self, scenario: &Scenario, step: usize, x: &Vector3<f64>) -> Vector2<f64> {
        match self {
            NominalSource::Scenario => scenario.nominal_command(x),
            NominalSource::Zero => Vector2::zeros(),
            NominalSource::Tabulated(log) => log.get(step).or(log.last()).copied().unwrap_or_else(Vector2::zeros),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepOutput {
    pub u: Vector2<f64>,
    pub u_nom: Vector2<f64>,
    /// Blend weight; `None` in modes that do not blend.
    pub phi_bar: Option<f64>,
    pub active: Option<usize>,
    pub qp_infeasible: bool,
}

/// Per-step controller shared by offline runs and live sessions, so both
/// produce bit-identical inputs for identical `u_nom` sequences.
#[derive(Clone, Debug)]
pub struct ControlLoop<'a> {
    barriers: &'a [UnicycleBarrier],
    input_box: InputBox<2>,
    mode: ControllerMode,
    last_input: Vector2<f64>,
}

impl<'a> ControlLoop<'a> {
    pub fn new(barriers: &'a [UnicycleBarrier], input_box: InputBox<2>, mode: ControllerMode) -> Self {
        Self { barriers, input_box, mode, last_input: Vector2::zeros() }
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    /// Index of the annulus containing `x`; errors when two do.
    pub fn active_annulus(&self, x: &Vector3<f64>) -> Result<Option<usize>> {
        let mut active = None;
        for (i, b) in self.barriers.iter().enumerate() {
            if b.in_annulus(x) {
                if let Some(first) = active {
                    return Err(Error::AnnuliOverlap { first, second: i });
                }
                active = Some(i);
            }
        }
        Ok(active)
    }

    pub fn control(&mut self, x: &Vector3<f64>, u_nom: &Vector2<f64>) -> Result<StepOutput> {
        let out = match self.mode {
            ControllerMode::Blended | ControllerMode::SafetyOnly => {
                let nominal = if self.mode == ControllerMode::SafetyOnly { Vector2::zeros() } else { *u_nom };
                let r = blend_multi(self.barriers, &self.input_box, x, &nominal)?;
                StepOutput {
                    u: r.u_star,
                    u_nom: nominal,
                    phi_bar: Some(r.phi_bar),
                    active: r.active_barrier,
                    qp_infeasible: false,
                }
            }
            ControllerMode::NominalOnly => {
                let active = self.active_annulus(x)?;
                StepOutput { u: *u_nom, u_nom: *u_nom, phi_bar: None, active, qp_infeasible: false }
            }
            ControllerMode::StackedQp => {
                let active = self.active_annulus(x)?;
                let problem = stacked_problem(self.barriers, &Unicycle, x, u_nom, Some(self.input_box));
                match solve_stacked_qp(&problem)? {
                    QpOutcome::Solved(s) => {
                        StepOutput { u: s.u, u_nom: *u_nom, phi_bar: None, active, qp_infeasible: false }
                    }
                    QpOutcome::Infeasible => {
                        log::debug!("stacked QP infeasible at {x:?}; holding the previous input");
                        StepOutput { u: self.last_input, u_nom: *u_nom, phi_bar: None, active, qp_infeasible: true }
                    }
                }
            }
        };
        self.last_input = out.u;
        Ok(out)
    }

    /// Control at `x`, then one RK4 step of length `dt` under that input.
    pub fn advance(&mut self, x: &Vector3<f64>, u_nom: &Vector2<f64>, dt: f64) -> Result<(StepOutput, Vector3<f64>)> {
        let out = self.control(x, u_nom)?;
        let next = rk4_step(&Unicycle, x, &out.u, dt)?;
        Ok((out, next))
    }
}

/// Recorded channels of one run. Entry `k` of every array belongs to time
/// `times[k]`; the input at the final sample is computed but not applied.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector3<f64>>,
    pub inputs: Vec<Vector2<f64>>,
    pub nominal: Vec<Vector2<f64>>,
    /// `h[k][i]`: barrier `i` at sample `k`.
    pub h: Vec<Vec<f64>>,
    pub phi_bar: Vec<Option<f64>>,
    pub active: Vec<Option<usize>>,
    pub qp_infeasible: Vec<bool>,
    pub abort: Option<RunAbort>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, x: Vector3<f64>, h: Vec<f64>, out: &StepOutput) {
        self.times.push(t);
        self.states.push(x);
        self.inputs.push(out.u);
        self.nominal.push(out.u_nom);
        self.h.push(h);
        self.phi_bar.push(out.phi_bar);
        self.active.push(out.active);
        self.qp_infeasible.push(out.qp_infeasible);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub initial: InitialState,
    pub trajectory: Trajectory,
    pub report: MonitorReport,
    /// Wall time spent computing control inputs (excludes integration).
    #[serde(skip)]
    pub control_time: Duration,
}

impl RunResult {
    pub fn mean_control_time(&self) -> Duration {
        let n = self.trajectory.len().max(1) as u32;
        self.control_time / n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioRun {
    pub scenario: String,
    pub mode: ControllerMode,
    pub runs: Vec<RunResult>,
}

impl ScenarioRun {
    pub fn safety_pass(&self) -> bool {
        self.runs.iter().all(|r| r.report.safety_pass)
    }

    pub fn input_box_pass(&self) -> bool {
        self.runs.iter().all(|r| r.report.input_box_pass)
    }

    pub fn aborted(&self) -> bool {
        self.runs.iter().any(|r| r.report.aborted.is_some())
    }

    pub fn min_h(&self) -> f64 {
        self.runs.iter().map(|r| r.report.min_h_overall).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_u(&self) -> [f64; 2] {
        self.runs.iter().fold([0.0, 0.0], |m, r| [m[0].max(r.report.max_abs_u[0]), m[1].max(r.report.max_abs_u[1])])
    }

    pub fn mean_control_time(&self) -> Duration {
        let total: Duration = self.runs.iter().map(|r| r.control_time).sum();
        let steps: usize = self.runs.iter().map(|r| r.trajectory.len()).sum();
        total / steps.max(1) as u32
    }
}

/// Runs one initial state for the scenario horizon.
pub fn run_single(
    scenario: &Scenario,
    mode: ControllerMode,
    initial: &InitialState,
    nominal: &NominalSource,
) -> RunResult {
    let steps = scenario.steps();
    let mut traj = Trajectory::default();
    let mut ctl = ControlLoop::new(&scenario.barriers, scenario.input_box, mode);
    let mut x = initial.x;
    let mut control_time = Duration::ZERO;
    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        let u_nom = nominal.command(scenario, k, &x);
        let start = Instant::now();
        let out = ctl.control(&x, &u_nom);
        control_time += start.elapsed();
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                traj.abort = Some(RunAbort { step: k, t, reason: e.to_string() });
                break;
            }
        };
        traj.push(t, x, scenario.barrier_values(&x), &out);
        if k == steps {
            break;
        }
        match rk4_step(&Unicycle, &x, &out.u, scenario.dt) {
            Ok(next) => x = next,
            Err(e) => {
                traj.abort = Some(RunAbort { step: k, t, reason: e.to_string() });
                break;
            }
        }
    }
    let report = MonitorReport::from_trajectory(scenario, &traj, initial.robustness);
    RunResult { initial: initial.clone(), trajectory: traj, report, control_time }
}

/// Runs every initial state, in parallel, with the scenario's nominal law
/// (or zero input in safety-only mode).
pub fn run_scenario(scenario: &Scenario, mode: ControllerMode) -> ScenarioRun {
    let nominal = match mode {
        ControllerMode::SafetyOnly => NominalSource::Zero,
        _ => NominalSource::Scenario,
    };
    let runs = scenario.initial_states.par_iter().map(|s| run_single(scenario, mode, s, &nominal)).collect();
    ScenarioRun { scenario: scenario.name.clone(), mode, runs }
}
