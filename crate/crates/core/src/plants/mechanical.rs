//! Damped planar point mass with a storage-function barrier.
//!
//! Mechanical systems `q' = v`, `M v' = -C v - g - F v + u` are passive from
//! `mu = u - g` to `v` with storage `S = 0.5 v'Mv`. The barrier
//! `h = k_h c(q) - S` then satisfies `h' >= 0` under `u_s = g + k_h grad c`.
//! The shipped instance fixes `M = m I`, `C = 0`, constant `g` and `F = f I`.

use nalgebra::{Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::barrier::{AlphaFn, Barrier, Margins};
use crate::dynamics::ControlAffine;
use crate::error::{Error, Result};
use crate::geometry::{AnnulusShell, Region};
use crate::input_box::InputBox;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechState {
    pub q: Vector2<f64>,
    pub v: Vector2<f64>,
}

impl MechState {
    pub fn new(q: Vector2<f64>, v: Vector2<f64>) -> Self {
        Self { q, v }
    }

    pub fn from_vector(x: &Vector4<f64>) -> Self {
        Self { q: Vector2::new(x[0], x[1]), v: Vector2::new(x[2], x[3]) }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.q[0], self.q[1], self.v[0], self.v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.v.iter()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampedPointMass {
    pub mass: f64,
    pub damping: f64,
    /// Constant generalized gravity force `g`.
    pub gravity: Vector2<f64>,
}

impl DampedPointMass {
    pub fn new(mass: f64, damping: f64, gravity: Vector2<f64>) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        if !(damping >= 0.0 && damping.is_finite()) {
            return Err(Error::InvalidParameter(format!("damping must be non-negative, got {damping}")));
        }
        Ok(Self { mass, damping, gravity })
    }

    pub fn storage(&self, s: &MechState) -> f64 {
        0.5 * self.mass * s.v.norm_squared()
    }

    /// `dS/dt = v' (u - g - F v)` for the constant-mass instance.
    pub fn storage_rate(&self, s: &MechState, u: &Vector2<f64>) -> f64 {
        s.v.dot(&(u - self.gravity - s.v * self.damping))
    }
}

impl ControlAffine<4, 2> for DampedPointMass {
    fn drift(&self, x: &Vector4<f64>) -> Vector4<f64> {
        let s = MechState::from_vector(x);
        let acc = (-self.gravity - s.v * self.damping) / self.mass;
        Vector4::new(s.v[0], s.v[1], acc[0], acc[1])
    }

    fn input_matrix(&self, _x: &Vector4<f64>) -> Matrix4x2<f64> {
        let w = 1.0 / self.mass;
        Matrix4x2::new(0.0, 0.0, 0.0, 0.0, w, 0.0, 0.0, w)
    }
}

/// `(q', v') = (v, M^-1 (-g - F v + u))`.
pub fn mech_flow(s: &MechState, u: &Vector2<f64>, plant: &DampedPointMass) -> MechState {
    let d = plant.flow(&s.to_vector(), u);
    MechState::from_vector(&d)
}

/// `h(q, v) = k_h c(q) - 0.5 m |v|^2` with `c` an ellipse constraint on `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBarrier {
    pub constraint: AnnulusShell,
    pub plant: DampedPointMass,
    pub k_h: f64,
    pub margins: Margins,
    pub alpha: AlphaFn,
}

impl EnergyBarrier {
    /// The constraint must be a stay-inside ellipse, and its shell must cover every `q` the state annulus can reach,
    /// i.e. `c(q) >= -b / k_h`, so that `k_h` from [`energy_kh_synthesis`]
    /// bounds the safety input over the whole annulus.
    pub fn new(
        constraint: AnnulusShell,
        plant: DampedPointMass,
        k_h: f64,
        margins: Margins,
        alpha: AlphaFn,
    ) -> Result<Self> {
        if !(k_h > 0.0 && k_h.is_finite()) {
            return Err(Error::InvalidParameter(format!("k_h must be positive, got {k_h}")));
        }
        if constraint.ellipsoid().region() != Region::Interior {
            return Err(Error::InvalidShell("the energy barrier needs a stay-inside constraint".into()));
        }
        if margins.b / k_h > constraint.b() {
            return Err(Error::InvalidShell(format!(
                "state annulus reaches c(q) = {} below the position shell's -b = {}",
                -margins.b / k_h,
                -constraint.b()
            )));
        }
        Ok(Self { constraint, plant, k_h, margins, alpha })
    }

    pub fn safety_ctrl(&self, s: &MechState) -> Vector2<f64> {
        energy_safety_ctrl(&self.constraint, &self.plant, self.k_h, s)
    }
}

pub fn energy_barrier(constraint: &AnnulusShell, plant: &DampedPointMass, k_h: f64, s: &MechState) -> f64 {
    k_h * constraint.value(&s.q) - plant.storage(s)
}

pub fn energy_safety_ctrl(constraint: &AnnulusShell, plant: &DampedPointMass, k_h: f64, s: &MechState) -> Vector2<f64> {
    plant.gravity + constraint.ellipsoid().gradient(&s.q) * k_h
}

impl Barrier<4, 2> for EnergyBarrier {
    fn value(&self, x: &Vector4<f64>) -> f64 {
        energy_barrier(&self.constraint, &self.plant, self.k_h, &MechState::from_vector(x))
    }

    fn gradient(&self, x: &Vector4<f64>) -> Vector4<f64> {
        let s = MechState::from_vector(x);
        let gc = self.constraint.ellipsoid().gradient(&s.q) * self.k_h;
        let gv = -s.v * self.plant.mass;
        Vector4::new(gc[0], gc[1], gv[0], gv[1])
    }

    fn margins(&self) -> Margins {
        self.margins
    }

    fn alpha(&self) -> AlphaFn {
        self.alpha
    }

    fn safety_input(&self, x: &Vector4<f64>) -> Vector2<f64> {
        self.safety_ctrl(&MechState::from_vector(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KhSynthesis {
    pub k_h: f64,
    /// The gradient vanished on every sample and the cap was returned.
    pub capped: bool,
}

pub const KH_MARGIN: f64 = 0.95;
pub const DEFAULT_KH_RESOLUTION: usize = 64;

/// Largest `k` with `g + k grad c(q)` in the box over a polar grid on the
/// shell, times [`KH_MARGIN`].
///
/// For an interior ellipse the gradient is linear in the offset, so its
/// componentwise maximum over the filled region is attained on the shell's
/// outer level and the grid covers it.
pub fn energy_kh_synthesis(
    shell: &AnnulusShell,
    input_box: &InputBox<2>,
    gravity: &Vector2<f64>,
    resolution: usize,
    cap: f64,
) -> Result<KhSynthesis> {
    if !input_box.contains_interior(gravity) {
        return Err(Error::NoAdmissibleGain);
    }
    let resolution = resolution.max(2);
    let mut k_max = f64::INFINITY;
    for i in 0..resolution {
        let angle = std::f64::consts::TAU * i as f64 / resolution as f64;
        for j in 0..resolution {
            let t = j as f64 / (resolution - 1) as f64;
            let h = (1.0 - t) * -shell.b() + t * shell.a();
            let grad = shell.ellipsoid().gradient(&shell.sample(angle, h));
            for ch in 0..2 {
                let limit = if grad[ch] > 0.0 {
                    (input_box.upper()[ch] - gravity[ch]) / grad[ch]
                } else if grad[ch] < 0.0 {
                    (input_box.lower()[ch] - gravity[ch]) / grad[ch]
                } else {
                    f64::INFINITY
                };
                k_max = k_max.min(limit);
            }
        }
    }
    if k_max.is_infinite() {
        log::warn!("grad c vanishes on every shell sample; returning the configured cap {cap}");
        return Ok(KhSynthesis { k_h: cap, capped: true });
    }
    if !(k_max > 0.0) {
        return Err(Error::NoAdmissibleGain);
    }
    Ok(KhSynthesis { k_h: KH_MARGIN * k_max, capped: false })
}
