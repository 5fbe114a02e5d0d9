//! One live teleoperation session.

use std::sync::Arc;

use barrier_guard::sim::monitor::SAFETY_SLACK;
use barrier_guard::sim::{ControlLoop, ControllerMode, Scenario};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TeleopError};
use crate::protocol::{Frame, ServerMessage};

/// Inputs needed to replay a session offline: feed `inputs` to the runner
/// as a tabulated nominal from `initial`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayLog {
    pub session: u64,
    pub scenario: String,
    pub initial: [f64; 3],
    /// Clamped `u_nom` applied at each step since the last reset.
    pub inputs: Vec<[f64; 2]>,
}

/// Messages produced by one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepEvents {
    pub frame: Frame,
    pub violation: Option<ServerMessage>,
    pub ended: Option<ServerMessage>,
}

impl StepEvents {
    pub fn into_messages(self) -> Vec<ServerMessage> {
        let mut out = vec![ServerMessage::Frame(self.frame)];
        out.extend(self.violation);
        out.extend(self.ended);
        out
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    id: u64,
    scenario: Arc<Scenario>,
    initial: Vector3<f64>,
    x: Vector3<f64>,
    step: usize,
    /// Latest clamped human input, held until the next one arrives.
    held: Vector2<f64>,
    log: Vec<Vector2<f64>>,
    /// Per barrier: has `h` been at or above `-SAFETY_SLACK` yet.
    entered: Vec<bool>,
    violated: bool,
    ended: bool,
    min_h: f64,
}

impl Session {
    /// Starts at initial state `initial`, or the first safe one when `None`.
    pub fn new(id: u64, scenario: Arc<Scenario>, initial: Option<usize>) -> Result<Self> {
        let count = scenario.initial_states.len();
        let index = match initial {
            Some(i) if i < count => i,
            Some(i) => return Err(TeleopError::UnknownInitialState { index: i, count }),
            None => scenario.initial_states.iter().position(|s| !s.robustness).unwrap_or(0),
        };
        let x0 =
            scenario.initial_states.get(index).map(|s| s.x).ok_or(TeleopError::UnknownInitialState { index, count })?;
        let mut s = Self {
            id,
            entered: vec![false; scenario.barriers.len()],
            scenario,
            initial: x0,
            x: x0,
            step: 0,
            held: Vector2::zeros(),
            log: Vec::new(),
            violated: false,
            ended: false,
            min_h: f64::INFINITY,
        };
        s.reset();
        Ok(s)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn state(&self) -> Vector3<f64> {
        self.x
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    /// Smallest barrier value seen at any frame since the last reset.
    pub fn min_h(&self) -> f64 {
        self.min_h
    }

    pub fn held_input(&self) -> Vector2<f64> {
        self.held
    }

    /// Back to the initial state with zero input and an empty log.
    pub fn reset(&mut self) {
        self.x = self.initial;
        self.step = 0;
        self.held = Vector2::zeros();
        self.log.clear();
        self.entered.iter_mut().for_each(|e| *e = false);
        self.violated = false;
        self.ended = false;
        self.min_h = f64::INFINITY;
    }

    /// Clamps a human input into the box and holds it; returns the ack to echo.
    pub fn set_input(&mut self, u: [f64; 2]) -> Result<ServerMessage> {
        if self.ended {
            return Err(TeleopError::SessionEnded);
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(TeleopError::NonFiniteInput(u));
        }
        let raw = Vector2::new(u[0], u[1]);
        self.held = self.scenario.input_box.clamp(&raw);
        Ok(ServerMessage::InputAck { u: [self.held[0], self.held[1]], clamped: self.held != raw })
    }

    /// One control step at the held input followed by one integration step.
    /// The frame describes the state before integration, matching sample
    /// `step` of an offline trajectory.
    pub fn step(&mut self) -> Result<StepEvents> {
        if self.ended {
            return Err(TeleopError::SessionEnded);
        }
        let s = Arc::clone(&self.scenario);
        let mut ctl = ControlLoop::new(&s.barriers, s.input_box, ControllerMode::Blended);
        let (out, next) = match ctl.advance(&self.x, &self.held, s.dt) {
            Ok(r) => r,
            Err(e) => {
                self.ended = true;
                return Err(e.into());
            }
        };
        let t = self.step as f64 * s.dt;
        let h = s.barrier_values(&self.x);
        let mut violation = None;
        for (i, &hi) in h.iter().enumerate() {
            self.min_h = self.min_h.min(hi);
            if hi >= -SAFETY_SLACK {
                self.entered[i] = true;
            } else if self.entered[i] && !self.violated {
                self.violated = true;
                violation = Some(ServerMessage::Violation { step: self.step, t, barrier: i, h: hi });
            }
        }
        let frame = Frame {
            step: self.step,
            t,
            x: [self.x[0], self.x[1], self.x[2]],
            u_nom: [out.u_nom[0], out.u_nom[1]],
            u_star: [out.u[0], out.u[1]],
            h,
            phi: out.phi_bar.unwrap_or(1.0),
            active: out.active,
        };
        self.log.push(self.held);
        self.x = next;
        self.step += 1;
        let ended = if self.step > s.steps() {
            self.ended = true;
            Some(ServerMessage::Ended { reason: "horizon".into() })
        } else {
            None
        };
        Ok(StepEvents { frame, violation, ended })
    }

    pub fn replay_log(&self) -> ReplayLog {
        ReplayLog {
            session: self.id,
            scenario: self.scenario.name.clone(),
            initial: [self.initial[0], self.initial[1], self.initial[2]],
            inputs: self.log.iter().map(|u| [u[0], u[1]]).collect(),
        }
    }
}

/// Clamps `human_input`, holds it, and advances the session one step.
pub fn session_step(session: &mut Session, human_input: [f64; 2]) -> Result<StepEvents> {
    session.set_input(human_input)?;
    session.step()
}
