//! Lipschitz probes of the blended filter and the stacked QP.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::Serialize;

use crate::barrier::{blend_multi, AlphaFn, Barrier, BarrierSpec, Margins};
use crate::dynamics::ControlAffine;
use crate::error::Result;
use crate::input_box::InputBox;
use crate::plants::Unicycle;
use crate::qp::{lipschitz_probe, solve_stacked_qp, stacked_problem, ProbeRegion, ProbeReport};

use super::runner::{ControlLoop, ControllerMode};
use super::scenario::Scenario;

/// Tilt of the crafted barrier `h = x2 + TILT x1`.
pub const TILT: f64 = 1e-3;

/// Planar integrator `x' = (0, -2) + u`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SinkingIntegrator;

impl ControlAffine<2, 2> for SinkingIntegrator {
    fn drift(&self, _x: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(0.0, -2.0)
    }

    fn input_matrix(&self, _x: &Vector2<f64>) -> Matrix2<f64> {
        Matrix2::identity()
    }
}

/// An instance where the box face `u2 <= 2` turns on and off across a thin
/// band of `h`, forcing the QP solution to swing `u1` over the whole box.
///
/// With `u_nom = (-2, -2)` the barrier row `TILT u1 + u2 >= 2 - h` can only
/// be met with `u2 = 2` and `u1 >= -h / TILT`, so `u1` moves by 2 while `h`
/// moves by `2 TILT`.
#[derive(Clone, Debug)]
pub struct CraftedInstance {
    pub barrier: BarrierSpec<2, 2>,
    pub input_box: InputBox<2>,
    pub u_nom: Vector2<f64>,
    pub region: ProbeRegion<2>,
}

impl CraftedInstance {
    pub fn new() -> Result<Self> {
        let barrier = BarrierSpec::new(
            |x: &Vector2<f64>| x[1] + TILT * x[0],
            |_x: &Vector2<f64>| Vector2::new(TILT, 1.0),
            Margins::new(0.5, 0.5)?,
            AlphaFn::new(1.0)?,
            |_x: &Vector2<f64>| Vector2::new(2.0, 2.0),
        );
        Ok(Self {
            barrier,
            input_box: InputBox::symmetric(Vector2::new(2.0, 2.0))?,
            u_nom: Vector2::new(-2.0, -2.0),
            region: ProbeRegion::new(Vector2::new(-1.0, -0.25), Vector2::new(1.0, 0.25))?,
        })
    }

    pub fn blended(&self, x: &Vector2<f64>) -> Option<Vector2<f64>> {
        blend_multi(std::slice::from_ref(&self.barrier), &self.input_box, x, &self.u_nom).ok().map(|r| r.u_star)
    }

    pub fn stacked_qp(&self, x: &Vector2<f64>) -> Option<Vector2<f64>> {
        let p = stacked_problem(
            std::slice::from_ref(&self.barrier),
            &SinkingIntegrator,
            x,
            &self.u_nom,
            Some(self.input_box),
        );
        solve_stacked_qp(&p).ok()?.solution().map(|s| s.u)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContrastReport {
    pub blended: ProbeReport,
    pub stacked_qp: ProbeReport,
    pub ratio: f64,
}

pub fn crafted_contrast(pairs: usize, seed: u64) -> Result<ContrastReport> {
    let inst = CraftedInstance::new()?;
    let blended = lipschitz_probe(|x| inst.blended(x), &inst.region, pairs, seed);
    let stacked_qp = lipschitz_probe(|x| inst.stacked_qp(x), &inst.region, pairs, seed);
    let ratio = stacked_qp.max_quotient / blended.max_quotient;
    Ok(ContrastReport { blended, stacked_qp, ratio })
}

/// Points where some barrier is below `-b` lie outside the domain on which
/// the blended law is defined to be continuous; the probe skips them.
fn in_domain(scenario: &Scenario, x: &Vector3<f64>) -> bool {
    scenario.barriers.iter().all(|b| b.value(x) >= -b.shell.b())
}

/// Probe of the blended filter with the scenario's nominal law over its
/// probe region; `None` when the scenario defines no region.
pub fn scenario_blend_probe(scenario: &Scenario, pairs: usize, seed: u64) -> Option<ProbeReport> {
    let region = scenario.probe?;
    Some(lipschitz_probe(
        |x: &Vector3<f64>| {
            if !in_domain(scenario, x) {
                return None;
            }
            let r = blend_multi(&scenario.barriers, &scenario.input_box, x, &scenario.nominal_command(x)).ok()?;
            Some(r.u_star)
        },
        &region,
        pairs,
        seed,
    ))
}

/// Same as [`scenario_blend_probe`] for the stacked QP; infeasible points are skipped.
pub fn scenario_qp_probe(scenario: &Scenario, pairs: usize, seed: u64) -> Option<ProbeReport> {
    let region = scenario.probe?;
    Some(lipschitz_probe(
        |x: &Vector3<f64>| {
            if !in_domain(scenario, x) {
                return None;
            }
            let u_nom = scenario.nominal_command(x);
            let p = stacked_problem(&scenario.barriers, &Unicycle, x, &u_nom, Some(scenario.input_box));
            solve_stacked_qp(&p).ok()?.solution().map(|s| s.u)
        },
        &region,
        pairs,
        seed,
    ))
}

/// Probe of whatever `mode` computes from the scenario's nominal law. Each
/// point gets a fresh controller, so an infeasible QP is skipped rather than
/// holding an input from an unrelated point.
pub fn scenario_mode_probe(scenario: &Scenario, mode: ControllerMode, pairs: usize, seed: u64) -> Option<ProbeReport> {
    let region = scenario.probe?;
    Some(lipschitz_probe(
        |x: &Vector3<f64>| {
            if !in_domain(scenario, x) {
                return None;
            }
            let mut ctl = ControlLoop::new(&scenario.barriers, scenario.input_box, mode);
            let out = ctl.control(x, &scenario.nominal_command(x)).ok()?;
            (!out.qp_infeasible).then_some(out.u)
        },
        &region,
        pairs,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::check_type_ii;

    #[test]
    fn crafted_barrier_is_type_ii() {
        let inst = CraftedInstance::new().unwrap();
        let samples: Vec<Vector2<f64>> =
            (0..200).map(|i| Vector2::new(-1.0 + 0.01 * i as f64, -0.5 + 0.005 * i as f64)).collect();
        assert!(check_type_ii(&inst.barrier, &SinkingIntegrator, &samples).certified(1e-12));
    }

    #[test]
    fn qp_swings_across_the_band() {
        let inst = CraftedInstance::new().unwrap();
        // h = 0 needs u1 >= 0; at h = 2 TILT u1 sits within O(TILT) of -2
        let at_zero = inst.stacked_qp(&Vector2::new(0.0, 0.0)).unwrap();
        let above = inst.stacked_qp(&Vector2::new(0.0, 2.0 * TILT)).unwrap();
        assert!((at_zero - Vector2::new(0.0, 2.0)).norm() < 1e-9);
        assert!((above - Vector2::new(-2.0, 2.0)).norm() < 10.0 * TILT, "{above}");
    }

    #[test]
    fn contrast_is_large() {
        let c = crafted_contrast(10_000, 11).unwrap();
        assert!(c.blended.max_quotient.is_finite());
        assert!(c.ratio >= 10.0, "{c:?}");
    }

    #[test]
    fn mode_probe_matches_the_dedicated_probes() {
        let s = Scenario::shipped();
        let blend = scenario_mode_probe(&s, ControllerMode::Blended, 2000, 5).unwrap();
        assert_eq!(blend, scenario_blend_probe(&s, 2000, 5).unwrap());
        let qp = scenario_mode_probe(&s, ControllerMode::StackedQp, 2000, 5).unwrap();
        assert_eq!(qp, scenario_qp_probe(&s, 2000, 5).unwrap());
    }
}
