//! Post-hoc checks over a recorded trajectory.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::barrier::Barrier;

use super::distance::distance_to_set;
use super::runner::Trajectory;
use super::scenario::Scenario;

/// Slack below zero tolerated on `h` (zero-order hold and rounding).
pub const SAFETY_SLACK: f64 = 1e-9;
/// Largest per-step decrease of `h` inside an annulus not counted as a violation.
pub const DECREASE_TOL: f64 = 1e-6;
/// Steps at the start of a robustness run excluded from the distance trend.
pub const TREND_TRANSIENT: usize = 2;
/// Allowance on the distance trend for dips caused by holding `u` over a
/// step while the heading turns, same size as [`SAFETY_SLACK`].
pub const TREND_TOL: f64 = SAFETY_SLACK;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAbort {
    pub step: usize,
    pub t: f64,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub t: f64,
    pub barrier: usize,
    pub h: f64,
}

/// Convergence of a robustness run toward the violated safe set. Observed
/// on one trajectory only, hence labelled empirical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTrend {
    pub label: String,
    pub barrier: usize,
    pub initial_h: f64,
    pub final_h: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    /// Distance never grew after the first [`TREND_TRANSIENT`] steps.
    pub distance_nonincreasing: bool,
    /// First time with `h >= -SAFETY_SLACK`.
    pub reached_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub samples: usize,
    pub min_h: Vec<f64>,
    pub min_h_overall: f64,
    pub max_abs_u: [f64; 2],
    pub input_box_pass: bool,
    /// Every barrier stays at or above `-SAFETY_SLACK` from the first sample
    /// where it gets there, and gets there by the end.
    pub safety_pass: bool,
    pub first_violation: Option<Violation>,
    /// Per barrier: steps inside its annulus where `h` fell by more than
    /// [`DECREASE_TOL`]. Expected to be zero only without a nominal input.
    pub nondecrease_violations: Vec<usize>,
    pub max_annulus_decrease: f64,
    pub qp_infeasible_steps: usize,
    pub robustness: Option<RobustnessTrend>,
    pub aborted: Option<RunAbort>,
}

impl MonitorReport {
    pub fn from_trajectory(scenario: &Scenario, traj: &Trajectory, robustness: bool) -> Self {
        let n = scenario.barriers.len();
        let mut min_h = vec![f64::INFINITY; n];
        let mut max_abs_u = [0.0f64; 2];
        let mut input_box_pass = true;
        let mut first_violation: Option<Violation> = None;
        let mut entered = vec![false; n];
        let mut nondecrease_violations = vec![0; n];
        let mut max_annulus_decrease = 0.0f64;

        for (k, h) in traj.h.iter().enumerate() {
            let u = traj.inputs[k];
            max_abs_u[0] = max_abs_u[0].max(u[0].abs());
            max_abs_u[1] = max_abs_u[1].max(u[1].abs());
            input_box_pass &= scenario.input_box.contains(&u);
            for i in 0..n {
                min_h[i] = min_h[i].min(h[i]);
                if h[i] >= -SAFETY_SLACK {
                    entered[i] = true;
                } else if entered[i] && first_violation.is_none() {
                    first_violation = Some(Violation { step: k, t: traj.times[k], barrier: i, h: h[i] });
                }
                if k > 0 {
                    let prev = traj.h[k - 1][i];
                    if scenario.barriers[i].margins().contains(prev) {
                        let drop = prev - h[i];
                        max_annulus_decrease = max_annulus_decrease.max(drop);
                        if drop > DECREASE_TOL {
                            nondecrease_violations[i] += 1;
                        }
                    }
                }
            }
        }
        let never_entered = entered.iter().any(|e| !e) && !traj.h.is_empty();
        let safety_pass = first_violation.is_none() && !never_entered;
        let min_h_overall = min_h.iter().copied().fold(f64::INFINITY, f64::min);
        let robustness = if robustness { robustness_trend(scenario, traj) } else { None };
        Self {
            samples: traj.len(),
            min_h,
            min_h_overall,
            max_abs_u,
            input_box_pass,
            safety_pass,
            first_violation,
            nondecrease_violations,
            max_annulus_decrease,
            qp_infeasible_steps: traj.qp_infeasible.iter().filter(|b| **b).count(),
            robustness,
            aborted: traj.abort.clone(),
        }
    }
}

fn robustness_trend(scenario: &Scenario, traj: &Trajectory) -> Option<RobustnessTrend> {
    let first = traj.h.first()?;
    let (barrier, &initial_h) =
        first.iter().enumerate().filter(|(_, h)| **h < 0.0).min_by(|a, b| a.1.total_cmp(b.1))?;
    let shell = &scenario.barriers[barrier].shell;
    let dist: Vec<f64> = traj.states.iter().map(|x| distance_to_set(shell, &Vector2::new(x[0], x[1]))).collect();
    let distance_nonincreasing = dist.windows(2).skip(TREND_TRANSIENT).all(|w| w[1] <= w[0] + TREND_TOL);
    let reached_at = traj.h.iter().position(|h| h[barrier] >= -SAFETY_SLACK).map(|k| traj.times[k]);
    Some(RobustnessTrend {
        label: "empirical".into(),
        barrier,
        initial_h,
        final_h: traj.h.last()?[barrier],
        initial_distance: dist[0],
        final_distance: *dist.last()?,
        distance_nonincreasing,
        reached_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::runner::StepOutput;
    use nalgebra::Vector3;

    fn synthetic(h: &[f64], u: &[[f64; 2]]) -> Trajectory {
        let mut t = Trajectory::default();
        for (k, (&hk, uk)) in h.iter().zip(u).enumerate() {
            let out = StepOutput {
                u: Vector2::new(uk[0], uk[1]),
                u_nom: Vector2::zeros(),
                phi_bar: Some(1.0),
                active: None,
                qp_infeasible: false,
            };
            t.times.push(k as f64 * 0.1);
            t.states.push(Vector3::new(10.0, 0.0, 0.0));
            t.inputs.push(out.u);
            t.nominal.push(out.u_nom);
            t.h.push(vec![hk; 13]);
            t.phi_bar.push(out.phi_bar);
            t.active.push(out.active);
            t.qp_infeasible.push(false);
        }
        t
    }

    #[test]
    fn box_monitor_is_exact() {
        let s = Scenario::shipped();
        let ok = synthetic(&[1.0, 1.0], &[[2.0, -2.0], [0.0, 0.0]]);
        assert!(MonitorReport::from_trajectory(&s, &ok, false).input_box_pass);
        let bad = synthetic(&[1.0, 1.0], &[[2.0 + 1e-15, 0.0], [0.0, 0.0]]);
        let r = MonitorReport::from_trajectory(&s, &bad, false);
        assert!(!r.input_box_pass);
        assert_eq!(r.max_abs_u[0], 2.0 + 1e-15);
    }

    #[test]
    fn violation_is_reported_with_its_time() {
        let s = Scenario::shipped();
        let t = synthetic(&[0.5, 0.0, -1e-8, 0.2], &[[0.0, 0.0]; 4]);
        let r = MonitorReport::from_trajectory(&s, &t, false);
        assert!(!r.safety_pass);
        let v = r.first_violation.unwrap();
        assert_eq!((v.step, v.barrier), (2, 0));
        assert_eq!(v.t, 0.2);

        let within_slack = synthetic(&[0.5, -1e-10, 0.0], &[[0.0, 0.0]; 3]);
        assert!(MonitorReport::from_trajectory(&s, &within_slack, false).safety_pass);
    }

    #[test]
    fn late_entry_passes_and_never_entering_fails() {
        let s = Scenario::shipped();
        let entering = synthetic(&[-0.3, -0.1, 0.0, 0.0], &[[0.0, 0.0]; 4]);
        assert!(MonitorReport::from_trajectory(&s, &entering, false).safety_pass);
        let stuck = synthetic(&[-0.3, -0.2, -0.1], &[[0.0, 0.0]; 3]);
        assert!(!MonitorReport::from_trajectory(&s, &stuck, false).safety_pass);
    }
}
