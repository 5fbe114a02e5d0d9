//! Live teleoperation over a websocket: a human drives the unicycle and the
//! blended safety filter sits between the keyboard and the plant.
//!
//! Each connection owns one [`Session`]. The server samples the latest
//! received input at every step (zero-order hold), clamps it into the input
//! box and advances the session through the same control loop used by
//! offline runs, so a recorded input log replays bit for bit.

pub mod catalog;
pub mod error;
pub mod protocol;
pub mod server;
pub mod session;

pub use catalog::{BarrierGeometry, Catalog, ScenarioSummary};
pub use error::{Result, TeleopError};
pub use protocol::{ClientMessage, Frame, ServerMessage};
pub use server::{router, serve, ServerConfig, ServerState};
pub use session::{session_step, ReplayLog, Session, StepEvents};
