use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input_box::InputBox;

use super::unicycle::wrap_angle;

const GOAL_RADIUS: f64 = 1e-9;
const SMALL_ANGLE: f64 = 1e-6;

/// Polar-coordinate stabilizer driving the unicycle to the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AicardiNominal {
    pub k_r: f64,
    pub k_a: f64,
}

impl AicardiNominal {
    pub fn new(k_r: f64, k_a: f64) -> Result<Self> {
        if !(k_r > 0.0 && k_r.is_finite() && k_a > 0.0 && k_a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nominal gains must be positive, got k_r = {k_r}, k_a = {k_a}"
            )));
        }
        Ok(Self { k_r, k_a })
    }

    /// Upper bound on `k_r` keeping the speed in the box while `r <= max_radius`.
    pub fn max_k_r(max_radius: f64, input_box: &InputBox<2>) -> f64 {
        input_box.upper()[0] / max_radius
    }

    /// Upper bound on `k_a` for a given `k_r`.
    pub fn max_k_a(k_r: f64, input_box: &InputBox<2>) -> f64 {
        (input_box.upper()[1] - k_r * 1.5 * PI) / (2.0 * PI)
    }

    /// Gains at `fraction` of each bound; `k_a`'s bound uses the chosen `k_r`.
    pub fn at_fraction(max_radius: f64, input_box: &InputBox<2>, fraction: f64) -> Result<Self> {
        let k_r = fraction * Self::max_k_r(max_radius, input_box);
        let k_a = fraction * Self::max_k_a(k_r, input_box);
        Self::new(k_r, k_a)
    }

    /// Violations of the gain preconditions, as human-readable messages.
    pub fn check(&self, max_radius: f64, input_box: &InputBox<2>) -> Vec<String> {
        let mut issues = Vec::new();
        let kr_max = Self::max_k_r(max_radius, input_box);
        if self.k_r > kr_max {
            issues.push(format!("k_r = {} exceeds {kr_max} (= u_p_max / r0 with r0 = {max_radius})", self.k_r));
        }
        let ka_max = Self::max_k_a(self.k_r, input_box);
        if self.k_a > ka_max {
            issues.push(format!("k_a = {} exceeds {ka_max}", self.k_a));
        }
        issues
    }

    pub fn command(&self, x: &Vector3<f64>) -> Vector2<f64> {
        let r = x[0].hypot(x[1]);
        if r < GOAL_RADIUS {
            return Vector2::zeros();
        }
        let theta = x[1].atan2(x[0]);
        let alpha = wrap_angle(x[2] - theta);
        let (s, c) = alpha.sin_cos();
        let u_p = -self.k_r * r * c;
        // sin(a) cos(a) / a -> cos^2(a) as a -> 0
        let ratio = if alpha.abs() < SMALL_ANGLE { c * c } else { s * c / alpha };
        let u_d = -self.k_a * alpha - self.k_r * ratio * (alpha - theta);
        Vector2::new(u_p, u_d)
    }
}
