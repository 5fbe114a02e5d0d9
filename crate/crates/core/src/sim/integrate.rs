use nalgebra::SVector;

use crate::dynamics::ControlAffine;
use crate::error::{Error, Result};

/// One classical Runge-Kutta step of `x' = flow(x)`.
pub fn rk4<const N: usize>(
    flow: impl Fn(&SVector<f64, N>) -> SVector<f64, N>,
    x: &SVector<f64, N>,
    dt: f64,
) -> SVector<f64, N> {
    let k1 = flow(x);
    let k2 = flow(&(x + k1 * (0.5 * dt)));
    let k3 = flow(&(x + k2 * (0.5 * dt)));
    let k4 = flow(&(x + k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// RK4 with `u` held over the step, followed by the plant's normalization.
pub fn rk4_step<const N: usize, const M: usize, P>(
    plant: &P,
    x: &SVector<f64, N>,
    u: &SVector<f64, M>,
    dt: f64,
) -> Result<SVector<f64, N>>
where
    P: ControlAffine<N, M> + ?Sized,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {dt}")));
    }
    let next = plant.normalize(rk4(|y| plant.flow(y, u), x, dt));
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::Integration { state: x.iter().copied().collect() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::Unicycle;
    use nalgebra::{Matrix2, Vector2, Vector3};
    use std::f64::consts::PI;

    #[test]
    fn zero_flow_is_identity() {
        let x = Vector3::new(0.3, -1.0, 2.0);
        assert_eq!(rk4(|_y: &Vector3<f64>| Vector3::zeros(), &x, 0.1), x);
    }

    #[test]
    fn constant_unicycle_flow_is_exact() {
        let x = rk4_step(&Unicycle, &Vector3::zeros(), &Vector2::new(1.0, 0.0), 0.1).unwrap();
        assert_eq!(x, Vector3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn heading_is_normalized() {
        let x = rk4_step(&Unicycle, &Vector3::new(0.0, 0.0, PI - 0.01), &Vector2::new(0.0, 1.0), 0.1).unwrap();
        assert!(x[2] > -PI && x[2] <= PI);
        assert!((x[2] - (-PI + 0.09)).abs() < 1e-12);
    }

    #[test]
    fn linear_flow_matches_series() {
        let a = Matrix2::new(-0.5, 1.0, -1.0, -0.2);
        let x0 = Vector2::new(1.0, 0.5);
        // expm(a dt) x0 from a 30-term series
        let series = |dt: f64| {
            let mut term = x0;
            let mut sum = x0;
            for k in 1..30 {
                term = a * term * (dt / k as f64);
                sum += term;
            }
            sum
        };
        let err = |dt: f64| (rk4(|y: &Vector2<f64>| a * y, &x0, dt) - series(dt)).norm();
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 < 1e-6);
        // local error is fifth order in dt
        assert!(e1 / e2 > 25.0);
    }

    #[test]
    fn bad_step_size_and_blowup() {
        assert!(rk4_step(&Unicycle, &Vector3::zeros(), &Vector2::zeros(), 0.0).is_err());
        let r = rk4_step(&Unicycle, &Vector3::zeros(), &Vector2::new(f64::INFINITY, 0.0), 0.1);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }
}
