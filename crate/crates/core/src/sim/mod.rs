//! Fixed-step simulation, scenario files, run monitors and exports.

pub mod bench;
pub mod distance;
pub mod export;
pub mod integrate;
pub mod lipschitz;
pub mod monitor;
pub mod runner;
pub mod scenario;

pub use distance::distance_to_set;
pub use integrate::{rk4, rk4_step};
pub use monitor::{MonitorReport, RobustnessTrend, Violation, SAFETY_SLACK};
pub use runner::{
    run_scenario, run_single, ControlLoop, ControllerMode, NominalSource, RunResult, ScenarioRun, StepOutput,
    Trajectory,
};
pub use scenario::{InitialState, Scenario, ScenarioConfig, ValidationIssue, ValidationReport};
