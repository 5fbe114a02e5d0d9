//! Per-step cost of the blended filter against the stacked QP as the number
//! of barriers grows.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barrier::{blend_multi, AlphaFn};
use crate::error::Result;
use crate::geometry::{AnnulusShell, Ellipsoid, Region};
use crate::input_box::InputBox;
use crate::plants::{Unicycle, UnicycleBarrier};
use crate::qp::{solve_stacked_qp, stacked_problem, QpOutcome};

pub const SCALING_SIZES: [usize; 4] = [1, 4, 13, 32];
const SPACING: f64 = 4.0;

/// `n` unit circular obstacles on a square grid, 4 apart, with `a = b = 0.5`.
pub fn synthetic_field(n: usize, input_box: &InputBox<2>) -> Result<Vec<UnicycleBarrier>> {
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let center = Vector2::new((i % cols) as f64 * SPACING, (i / cols) as f64 * SPACING);
            let ell = Ellipsoid::new(Region::Exterior, 1.0, Matrix2::identity(), center)?;
            UnicycleBarrier::with_synthesized_gains(AnnulusShell::new(ell, 0.5, 0.5)?, input_box, AlphaFn::default())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub barriers: usize,
    pub blend_ns_per_step: f64,
    pub qp_ns_per_step: f64,
    pub qp_infeasible: usize,
    pub samples: usize,
}

/// Times both controllers at the same `samples` random states per size.
pub fn scaling_table(sizes: &[usize], samples: usize, seed: u64) -> Result<Vec<ScalingRow>> {
    let input_box = InputBox::symmetric(Vector2::new(2.0, 2.0))?;
    let u_nom = Vector2::new(1.0, 0.5);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let field = synthetic_field(n, &input_box)?;
        let cols = (n as f64).sqrt().ceil().max(1.0);
        let extent = cols * SPACING;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
        let states: Vec<Vector3<f64>> = (0..samples)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-2.0..extent),
                    rng.random_range(-2.0..extent),
                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                )
            })
            .collect();

        let start = Instant::now();
        for x in &states {
            black_box(blend_multi(&field, &input_box, x, &u_nom)?);
        }
        let blend = start.elapsed().as_nanos() as f64 / samples.max(1) as f64;

        let mut infeasible = 0;
        let start = Instant::now();
        for x in &states {
            let p = stacked_problem(&field, &Unicycle, x, &u_nom, Some(input_box));
            if matches!(black_box(solve_stacked_qp(&p)?), QpOutcome::Infeasible) {
                infeasible += 1;
            }
        }
        let qp = start.elapsed().as_nanos() as f64 / samples.max(1) as f64;
        rows.push(ScalingRow {
            barriers: n,
            blend_ns_per_step: blend,
            qp_ns_per_step: qp,
            qp_infeasible: infeasible,
            samples,
        });
    }
    Ok(rows)
}

pub fn format_scaling_table(rows: &[ScalingRow]) -> String {
    let mut s = String::new();
    let _ =
        writeln!(s, "{:>8} {:>16} {:>16} {:>8} {:>10}", "N", "blend ns/step", "qp ns/step", "qp/blend", "qp infeas");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8} {:>16.0} {:>16.0} {:>8.1} {:>10}",
            r.barriers,
            r.blend_ns_per_step,
            r.qp_ns_per_step,
            r.qp_ns_per_step / r.blend_ns_per_step.max(1e-9),
            r.qp_infeasible
        );
    }
    s
}
