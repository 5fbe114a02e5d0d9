//! JSON messages exchanged over the session websocket.
//!
//! Client to server:
//! `{"type":"join","scenario":<name>}` (optional `"initial":<index>`),
//! `{"type":"input","u":[u_p,u_d]}`, `{"type":"reset"}`.
//!
//! Server to client: `joined` once per join with the barrier geometry,
//! `input_ack` echoing every clamped input, one `frame` per step,
//! `violation` the first time a barrier goes negative, `ended`, and
//! `error` for anything rejected.

use serde::{Deserialize, Serialize};

use crate::catalog::ScenarioSummary;
use crate::error::{Result, TeleopError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Join {
        scenario: String,
        /// Index into the scenario's initial states; defaults to the first safe one.
        #[serde(default)]
        initial: Option<usize>,
    },
    Input {
        u: [f64; 2],
    },
    Reset {},
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| TeleopError::BadMessage(e.to_string()))
    }
}

/// State of one step: sample `step` of the equivalent offline trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub t: f64,
    pub x: [f64; 3],
    /// Clamped human input used as `u_nom` at this step.
    pub u_nom: [f64; 2],
    pub u_star: [f64; 2],
    pub h: Vec<f64>,
    pub phi: f64,
    pub active: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Joined { session: u64, scenario: ScenarioSummary, x: [f64; 3] },
    InputAck { u: [f64; 2], clamped: bool },
    Frame(Frame),
    Violation { step: usize, t: f64, barrier: usize, h: f64 },
    Ended { reason: String },
    Error { msg: String },
}

impl ServerMessage {
    pub fn error(msg: impl ToString) -> Self {
        ServerMessage::Error { msg: msg.to_string() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}
