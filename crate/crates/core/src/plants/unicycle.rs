use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::barrier::{AlphaFn, Barrier, Margins};
use crate::dynamics::ControlAffine;
use crate::error::{Error, Result};
use crate::geometry::AnnulusShell;
use crate::input_box::InputBox;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Planar position `(x1, x2)` in metres and heading `x3` in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnicycleState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl UnicycleState {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3: wrap_angle(x3) }
    }

    pub fn from_vector(x: &Vector3<f64>) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x1, self.x2, self.x3)
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x1, self.x2)
    }
}

/// Forward speed `u_p` and turn rate `u_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnicycleInput {
    pub u_p: f64,
    pub u_d: f64,
}

impl UnicycleInput {
    pub fn new(u_p: f64, u_d: f64) -> Self {
        Self { u_p, u_d }
    }

    pub fn from_vector(u: &Vector2<f64>) -> Self {
        Self::new(u[0], u[1])
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.u_p, self.u_d)
    }
}

/// Unicycle kinematics `x1' = u_p cos x3, x2' = u_p sin x3, x3' = u_d`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Unicycle;

impl ControlAffine<3, 2> for Unicycle {
    fn drift(&self, _x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }

    fn input_matrix(&self, x: &Vector3<f64>) -> Matrix3x2<f64> {
        let (s, c) = x[2].sin_cos();
        Matrix3x2::new(c, 0.0, s, 0.0, 0.0, 1.0)
    }

    fn flow(&self, x: &Vector3<f64>, u: &Vector2<f64>) -> Vector3<f64> {
        let (s, c) = x[2].sin_cos();
        Vector3::new(u[0] * c, u[0] * s, u[1])
    }

    fn normalize(&self, mut x: Vector3<f64>) -> Vector3<f64> {
        x[2] = wrap_angle(x[2]);
        x
    }
}

pub fn unicycle_flow(x: &UnicycleState, u: &UnicycleInput) -> Vector3<f64> {
    Unicycle.flow(&x.to_vector(), &u.to_vector())
}

/// Gains of the passivity-motivated safety law for one ellipse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnicycleBarrierGains {
    pub k_p: f64,
    pub k_d: f64,
}

impl UnicycleBarrierGains {
    /// Largest gains for which the safety law stays in a symmetric box:
    /// `k_p <= u_p_max / (eta * max(a, b))`, `k_d <= u_d_max / eta`.
    pub fn max_admissible(shell: &AnnulusShell, input_box: &InputBox<2>) -> Result<Self> {
        if !input_box.is_symmetric() {
            return Err(Error::InvalidBox("gain synthesis needs a box symmetric about zero".into()));
        }
        let eta = shell.eta()?;
        if !(eta > 0.0) {
            return Err(Error::DegenerateShell(format!("eta = {eta}")));
        }
        let upper = input_box.upper();
        Ok(Self { k_p: upper[0] / (eta * shell.a().max(shell.b())), k_d: upper[1] / eta })
    }

    pub fn synthesize(shell: &AnnulusShell, input_box: &InputBox<2>) -> Result<Self> {
        Self::max_admissible(shell, input_box)
    }

    pub fn new(k_p: f64, k_d: f64) -> Result<Self> {
        if !(k_p > 0.0 && k_p.is_finite() && k_d > 0.0 && k_d.is_finite()) {
            return Err(Error::InvalidParameter(format!("gains must be positive, got k_p = {k_p}, k_d = {k_d}")));
        }
        Ok(Self { k_p, k_d })
    }
}

/// Safety input for one ellipse:
/// `u_sp = -s k_p gamma c (e'P [cos x3, sin x3])`, `s = +1` if `c >= 0` else `-1`,
/// `u_sd = -k_d e'P [-sin x3, cos x3]`.
pub fn unicycle_safety_ctrl(shell: &AnnulusShell, gains: &UnicycleBarrierGains, x: &UnicycleState) -> UnicycleInput {
    let ell = shell.ellipsoid();
    let z = x.position();
    let zeta = ell.shape() * ell.offset(&z);
    let c = ell.value(&z);
    let (s, co) = x.x3.sin_cos();
    let along = zeta[0] * co + zeta[1] * s;
    let across = -zeta[0] * s + zeta[1] * co;
    let branch = if c >= 0.0 { 1.0 } else { -1.0 };
    UnicycleInput { u_p: -branch * gains.k_p * ell.gamma() * c * along, u_d: -gains.k_d * across }
}

/// Ellipse barrier `h(x) = c(x1, x2)` for the unicycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnicycleBarrier {
    pub shell: AnnulusShell,
    pub gains: UnicycleBarrierGains,
    pub alpha: AlphaFn,
}

impl UnicycleBarrier {
    pub fn new(shell: AnnulusShell, gains: UnicycleBarrierGains, alpha: AlphaFn) -> Self {
        Self { shell, gains, alpha }
    }

    /// Barrier with the largest gains the box admits.
    pub fn with_synthesized_gains(shell: AnnulusShell, input_box: &InputBox<2>, alpha: AlphaFn) -> Result<Self> {
        Ok(Self::new(shell, UnicycleBarrierGains::synthesize(&shell, input_box)?, alpha))
    }
}

impl Barrier<3, 2> for UnicycleBarrier {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        self.shell.value(&Vector2::new(x[0], x[1]))
    }

    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let g = self.shell.ellipsoid().gradient(&Vector2::new(x[0], x[1]));
        Vector3::new(g[0], g[1], 0.0)
    }

    fn margins(&self) -> Margins {
        Margins { a: self.shell.a(), b: self.shell.b() }
    }

    fn alpha(&self) -> AlphaFn {
        self.alpha
    }

    fn safety_input(&self, x: &Vector3<f64>) -> Vector2<f64> {
        unicycle_safety_ctrl(&self.shell, &self.gains, &UnicycleState::from_vector(x)).to_vector()
    }
}
