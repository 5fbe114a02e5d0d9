use nalgebra::{SymmetricEigen, Vector2};

use crate::geometry::{AnnulusShell, Region};

const BISECTION_ITERS: usize = 200;

/// Euclidean distance from `z` to the safe set `{c >= 0}` of the shell's
/// ellipse; zero inside the set.
///
/// The closest boundary point satisfies `y = (I + t P)^-1 e` for a scalar
/// multiplier `t`, which is found by bisection in the eigenbasis of `P`.
pub fn distance_to_set(shell: &AnnulusShell, z: &Vector2<f64>) -> f64 {
    let ell = shell.ellipsoid();
    if ell.value(z) >= 0.0 {
        return 0.0;
    }
    let e = ell.offset(z);
    if ell.delta() == 0.0 {
        // the stay-inside set is the center alone; the obstacle set is everything
        return match ell.region() {
            Region::Interior => e.norm(),
            Region::Exterior => 0.0,
        };
    }
    let eig = SymmetricEigen::new(*ell.shape());
    let (major, minor) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let level = 2.0 * ell.boundary_level();
    let e0 = (level / eig.eigenvalues[major]).sqrt();
    let e1 = (level / eig.eigenvalues[minor]).sqrt();
    let y0 = eig.eigenvectors.column(major).dot(&e).abs();
    let y1 = eig.eigenvectors.column(minor).dot(&e).abs();
    point_ellipse_distance(e0, e1, y0, y1)
}

/// Distance from `(y0, y1)` in the first quadrant to the ellipse with
/// semi-axes `e0 >= e1 > 0`.
fn point_ellipse_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let s = ellipse_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let ratio = numer / denom;
            let x0 = e0 * ratio;
            let x1 = e1 * (1.0 - ratio * ratio).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

fn ellipse_root(r0: f64, z0: f64, z1: f64, mut g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..BISECTION_ITERS {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ellipsoid;
    use nalgebra::Matrix2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shell(region: Region, delta: f64, p: Matrix2<f64>, center: Vector2<f64>) -> AnnulusShell {
        let ell = Ellipsoid::new(region, delta, p, center).unwrap();
        let small = 0.25 * delta * delta;
        AnnulusShell::new(ell, small, small).unwrap()
    }

    /// Dense boundary parametrization followed by golden-section refinement.
    fn oracle(shell: &AnnulusShell, z: &Vector2<f64>) -> f64 {
        let ell = shell.ellipsoid();
        let dist = |t: f64| (ell.point_on_level(t, ell.boundary_level()) - z).norm();
        let n = 20_000;
        let step = std::f64::consts::TAU / n as f64;
        let best = (0..n).map(|i| i as f64 * step).min_by(|a, b| dist(*a).total_cmp(&dist(*b))).unwrap();
        let (mut lo, mut hi) = (best - step, best + step);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if dist(m1) < dist(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        dist(0.5 * (lo + hi))
    }

    #[test]
    fn examples() {
        let s = shell(Region::Interior, 1.0, Matrix2::identity() * 2.0, Vector2::zeros());
        assert_eq!(distance_to_set(&s, &Vector2::new(0.3, 0.2)), 0.0);
        assert!((distance_to_set(&s, &Vector2::new(2.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!((distance_to_set(&s, &Vector2::new(0.0, -2.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_boundary_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (l1, l2) = (rng.random_range(0.3..4.0), rng.random_range(0.3..4.0));
            let r = nalgebra::Rotation2::new(t).into_inner();
            let p = r * Matrix2::new(l1, 0.0, 0.0, l2) * r.transpose();
            let p = 0.5 * (p + p.transpose());
            let region = if rng.random_bool(0.5) { Region::Interior } else { Region::Exterior };
            let s = shell(region, rng.random_range(0.5..2.0), p, Vector2::new(1.0, -2.0));
            for _ in 0..10 {
                let z = Vector2::new(rng.random_range(-4.0..6.0), rng.random_range(-7.0..3.0));
                let d = distance_to_set(&s, &z);
                if s.ellipsoid().value(&z) >= 0.0 {
                    assert_eq!(d, 0.0);
                } else {
                    assert!((d - oracle(&s, &z)).abs() < 1e-6, "{d} vs {}", oracle(&s, &z));
                }
            }
        }
    }

    #[test]
    fn axis_and_center_cases() {
        let p = Matrix2::new(4.0, 0.0, 0.0, 1.0);
        let s = shell(Region::Exterior, 1.0, p, Vector2::zeros());
        for z in [Vector2::zeros(), Vector2::new(0.2, 0.0), Vector2::new(0.0, 0.5), Vector2::new(0.0, -1.0)] {
            assert!((distance_to_set(&s, &z) - oracle(&s, &z)).abs() < 1e-9);
        }
    }

    #[test]
    fn continuous_across_the_boundary() {
        let s = shell(Region::Interior, 1.0, Matrix2::new(3.0, 0.5, 0.5, 1.0), Vector2::zeros());
        let ell = s.ellipsoid();
        for i in 0..64 {
            let b = ell.point_on_level(i as f64 * 0.1, ell.boundary_level());
            let n = -ell.gradient(&b).normalize();
            let outside = distance_to_set(&s, &(b + n * 1e-6));
            let inside = distance_to_set(&s, &(b - n * 1e-6));
            assert!((outside - inside).abs() < 1e-5);
        }
    }
}
