//! Ellipsoidal constraint functions on the plane.
//!
//! An [`Ellipsoid`] encodes `c(z) = gamma * (delta^2 - 0.5 * e' P e)` with
//! `e = z - center`. With `gamma = +1` the safe set is the interior of the
//! ellipse (a workspace), with `gamma = -1` it is the exterior (an obstacle).

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `gamma = +1`: stay inside the ellipse.
    Interior,
    /// `gamma = -1`: stay outside the ellipse.
    Exterior,
}

impl Region {
    pub fn sign(self) -> f64 {
        match self {
            Region::Interior => 1.0,
            Region::Exterior => -1.0,
        }
    }

    pub fn from_sign(gamma: i32) -> Result<Self> {
        match gamma {
            1 => Ok(Region::Interior),
            -1 => Ok(Region::Exterior),
            other => Err(Error::InvalidEllipsoid(format!("gamma must be +1 or -1, got {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    region: Region,
    delta: f64,
    shape: Matrix2<f64>,
    center: Vector2<f64>,
}

impl Ellipsoid {
    pub fn new(region: Region, delta: f64, shape: Matrix2<f64>, center: Vector2<f64>) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidEllipsoid(format!("delta must be finite and >= 0, got {delta}")));
        }
        if shape.iter().chain(center.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidEllipsoid("non-finite shape matrix or center".into()));
        }
        if (shape[(0, 1)] - shape[(1, 0)]).abs() > 1e-12 {
            return Err(Error::InvalidEllipsoid(format!(
                "shape matrix is not symmetric: off-diagonal {} vs {}",
                shape[(0, 1)],
                shape[(1, 0)]
            )));
        }
        let (lo, _) = eigenvalues(&shape);
        if !(lo > 0.0) {
            return Err(Error::InvalidEllipsoid(format!(
                "shape matrix is not positive definite (smallest eigenvalue {lo})"
            )));
        }
        Ok(Self { region, delta, shape, center })
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn gamma(&self) -> f64 {
        self.region.sign()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn shape(&self) -> &Matrix2<f64> {
        &self.shape
    }

    pub fn center(&self) -> &Vector2<f64> {
        &self.center
    }

    /// `delta^2`, the value of the quadratic form on the boundary.
    pub fn boundary_level(&self) -> f64 {
        self.delta * self.delta
    }

    pub fn offset(&self, z: &Vector2<f64>) -> Vector2<f64> {
        z - self.center
    }

    /// Quadratic form `0.5 * e' P e`.
    pub fn level(&self, z: &Vector2<f64>) -> f64 {
        let e = self.offset(z);
        0.5 * e.dot(&(self.shape * e))
    }

    /// `c(z) = gamma * (delta^2 - 0.5 e' P e)`.
    pub fn value(&self, z: &Vector2<f64>) -> f64 {
        self.gamma() * (self.boundary_level() - self.level(z))
    }

    /// `dc/dz = -gamma * P e`.
    pub fn gradient(&self, z: &Vector2<f64>) -> Vector2<f64> {
        -self.gamma() * (self.shape * self.offset(z))
    }

    /// Level `0.5 e' P e` at which `c` takes the value `h`.
    pub fn level_for_value(&self, h: f64) -> f64 {
        self.boundary_level() - self.gamma() * h
    }

    /// Point on the level set `0.5 e' P e = level` along the ray with the given angle.
    pub fn point_on_level(&self, angle: f64, level: f64) -> Vector2<f64> {
        let d = Vector2::new(angle.cos(), angle.sin());
        let r = (2.0 * level / d.dot(&(self.shape * d))).sqrt();
        self.center + d * r
    }

    /// Eigenvalues of the shape matrix, ascending.
    pub fn eigenvalues(&self) -> (f64, f64) {
        eigenvalues(&self.shape)
    }

    /// Closed polyline of the level set `c = h`, `points` vertices.
    pub fn polyline(&self, h: f64, points: usize) -> Vec<Vector2<f64>> {
        let level = self.level_for_value(h);
        (0..points).map(|k| self.point_on_level(std::f64::consts::TAU * k as f64 / points as f64, level)).collect()
    }
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub(crate) fn eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let radius = half_diff.hypot(off);
    (mean - radius, mean + radius)
}

/// An ellipsoid together with the annulus `c in [-b, a]` around its boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusShell {
    ellipsoid: Ellipsoid,
    a: f64,
    b: f64,
}

impl AnnulusShell {
    /// Rejects shells that reach the ellipse center, where the unicycle safety
    /// law loses its ability to push the state out.
    pub fn new(ellipsoid: Ellipsoid, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidShell(format!("margins must be positive, got a = {a}, b = {b}")));
        }
        let shell = Self { ellipsoid, a, b };
        let (inner, _) = shell.level_range();
        if !(inner > 0.0) {
            let (name, value) = match ellipsoid.region() {
                Region::Interior => ("a", a),
                Region::Exterior => ("b", b),
            };
            return Err(Error::InvalidShell(format!(
                "shell contains the ellipse center: {name} = {value} must be below delta^2 = {}",
                ellipsoid.boundary_level()
            )));
        }
        Ok(shell)
    }

    pub fn ellipsoid(&self) -> &Ellipsoid {
        &self.ellipsoid
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn value(&self, z: &Vector2<f64>) -> f64 {
        self.ellipsoid.value(z)
    }

    pub fn contains(&self, z: &Vector2<f64>) -> bool {
        let h = self.value(z);
        h >= -self.b && h <= self.a
    }

    /// Range of `0.5 e' P e` covered by the shell, `(inner, outer)`.
    pub fn level_range(&self) -> (f64, f64) {
        let lo = self.ellipsoid.level_for_value(match self.ellipsoid.region() {
            Region::Interior => self.a,
            Region::Exterior => -self.b,
        });
        let hi = self.ellipsoid.level_for_value(match self.ellipsoid.region() {
            Region::Interior => -self.b,
            Region::Exterior => self.a,
        });
        (lo, hi)
    }

    /// Point of the shell at the given ray angle and barrier value `h in [-b, a]`.
    pub fn sample(&self, angle: f64, h: f64) -> Vector2<f64> {
        self.ellipsoid.point_on_level(angle, self.ellipsoid.level_for_value(h))
    }

    /// Exact maximum of `|P e|` over the shell.
    ///
    /// On the level `0.5 e' P e = q` the maximum of `e' P^2 e` is
    /// `2 q lambda_max(P)`, so the supremum sits on the outermost level.
    pub fn eta(&self) -> Result<f64> {
        let (_, outer) = self.level_range();
        if !(outer > 0.0) {
            return Err(Error::DegenerateShell(format!("outer level {outer} is not positive")));
        }
        let (_, lambda_max) = self.ellipsoid.eigenvalues();
        Ok((2.0 * outer * lambda_max).sqrt())
    }
}

/// Result of the sampled disjointness check between two shells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DisjointnessReport {
    pub disjoint: bool,
    /// Smallest signed distance, in barrier units, of a sampled point of one
    /// shell from the other shell's band. Non-positive when they intersect.
    pub min_margin: f64,
    pub samples: usize,
}

pub const DEFAULT_DISJOINT_RESOLUTION: usize = 256;

/// Deterministic polar-grid test that no sampled point of either shell lies in the other.
///
/// Each shell is sampled at `resolution` ray angles and `resolution` barrier
/// levels spanning `[-b, a]` inclusive. Resolutions below 64 are raised to 64.
pub fn annuli_disjoint(s1: &AnnulusShell, s2: &AnnulusShell, resolution: usize) -> DisjointnessReport {
    let resolution = resolution.max(64);
    let mut min_margin = f64::INFINITY;
    let mut samples = 0;
    for (src, dst) in [(s1, s2), (s2, s1)] {
        for i in 0..resolution {
            let angle = std::f64::consts::TAU * i as f64 / resolution as f64;
            for j in 0..resolution {
                let t = j as f64 / (resolution - 1) as f64;
                let h = (1.0 - t) * -src.b + t * src.a;
                let z = src.sample(angle, h);
                let hd = dst.value(&z);
                let margin = (-dst.b - hd).max(hd - dst.a);
                min_margin = min_margin.min(margin);
                samples += 1;
            }
        }
    }
    DisjointnessReport { disjoint: min_margin > 0.0, min_margin, samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(region: Region) -> Ellipsoid {
        Ellipsoid::new(region, 1.0, Matrix2::identity(), Vector2::zeros()).unwrap()
    }

    #[test]
    fn value_examples() {
        assert_eq!(unit(Region::Interior).value(&Vector2::zeros()), 1.0);
        let on_boundary = Vector2::new(2f64.sqrt(), 0.0);
        assert!(unit(Region::Interior).value(&on_boundary).abs() < 1e-15);
        // 0.5 e'Pe = 2, c = -(1 - 2) = 1
        assert_eq!(unit(Region::Exterior).value(&Vector2::new(2.0, 0.0)), 1.0);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(unit(Region::Interior).gradient(&Vector2::zeros()), Vector2::zeros());
        assert_eq!(unit(Region::Interior).gradient(&Vector2::new(1.0, 0.0)), Vector2::new(-1.0, 0.0));
        let e = Ellipsoid::new(Region::Exterior, 1.0, Matrix2::new(2.0, 0.0, 0.0, 1.0), Vector2::zeros()).unwrap();
        let g = e.gradient(&Vector2::new(1.0, 1.0));
        assert_eq!(g, Vector2::new(2.0, 1.0));
        let fd = central_difference(&e, &Vector2::new(1.0, 1.0));
        assert!((g - fd).norm() < 1e-8);
    }

    fn central_difference(e: &Ellipsoid, z: &Vector2<f64>) -> Vector2<f64> {
        let step = 1e-6;
        Vector2::from_fn(|i, _| {
            let mut dz = Vector2::zeros();
            dz[i] = step;
            (e.value(&(z + dz)) - e.value(&(z - dz))) / (2.0 * step)
        })
    }

    fn random_ellipsoid(rng: &mut ChaCha8Rng) -> Ellipsoid {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (l1, l2): (f64, f64) = (rng.random_range(0.2..4.0), rng.random_range(0.2..4.0));
        let (c, s) = (theta.cos(), theta.sin());
        let rot = Matrix2::new(c, -s, s, c);
        let p = rot * Matrix2::new(l1, 0.0, 0.0, l2) * rot.transpose();
        let p = 0.5 * (p + p.transpose());
        let region = if rng.random_bool(0.5) { Region::Interior } else { Region::Exterior };
        let center = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        Ellipsoid::new(region, rng.random_range(0.5..3.0), p, center).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let e = random_ellipsoid(&mut rng);
            let z = e.center() + Vector2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let g = e.gradient(&z);
            let fd = central_difference(&e, &z);
            worst = worst.max((g - fd).norm() / g.norm().max(1.0));
        }
        assert!(worst <= 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn boundary_rays_have_zero_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let e = random_ellipsoid(&mut rng);
            let z = e.point_on_level(rng.random_range(0.0..std::f64::consts::TAU), e.boundary_level());
            assert!(e.value(&z).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_shape_matrices() {
        let asym = Matrix2::new(1.0, 0.1, 0.0, 1.0);
        assert!(Ellipsoid::new(Region::Interior, 1.0, asym, Vector2::zeros()).is_err());
        let indefinite = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert!(Ellipsoid::new(Region::Interior, 1.0, indefinite, Vector2::zeros()).is_err());
        assert!(Ellipsoid::new(Region::Interior, -1.0, Matrix2::identity(), Vector2::zeros()).is_err());
        assert!(Region::from_sign(0).is_err());
    }

    #[test]
    fn shell_center_exclusion() {
        // Interior: inner level is delta^2 - a.
        assert!(AnnulusShell::new(unit(Region::Interior), 0.5, 5.0).is_ok());
        assert!(AnnulusShell::new(unit(Region::Interior), 1.0, 0.5).is_err());
        // Exterior: inner level is delta^2 - b.
        assert!(AnnulusShell::new(unit(Region::Exterior), 5.0, 0.5).is_ok());
        assert!(AnnulusShell::new(unit(Region::Exterior), 0.5, 1.0).is_err());
        assert!(AnnulusShell::new(unit(Region::Exterior), 0.0, 0.5).is_err());
    }

    /// Grid maximisation of |P e| over the shell without using eigenvalues.
    fn eta_grid(shell: &AnnulusShell, n: usize) -> f64 {
        let p = shell.ellipsoid().shape();
        let mut best: f64 = 0.0;
        for i in 0..n {
            let angle = std::f64::consts::TAU * i as f64 / n as f64;
            for j in 0..n {
                let t = j as f64 / (n - 1) as f64;
                let h = (1.0 - t) * -shell.b() + t * shell.a();
                let z = shell.sample(angle, h);
                best = best.max((p * shell.ellipsoid().offset(&z)).norm());
            }
        }
        best
    }

    #[test]
    fn eta_examples() {
        let s = AnnulusShell::new(unit(Region::Interior), 0.5, 0.5).unwrap();
        assert!((s.eta().unwrap() - 3f64.sqrt()).abs() < 1e-12);
        assert!((eta_grid(&s, 256) / 3f64.sqrt() - 1.0).abs() < 1e-3);

        let e = Ellipsoid::new(Region::Exterior, 1.0, Matrix2::new(4.0, 0.0, 0.0, 1.0), Vector2::zeros()).unwrap();
        let s = AnnulusShell::new(e, 1.0, 0.5).unwrap();
        assert!((s.eta().unwrap() - 4.0).abs() < 1e-12);
        assert!((eta_grid(&s, 256) / 4.0 - 1.0).abs() < 1e-3);

        let s = AnnulusShell::new(unit(Region::Interior), 1e-12, 1e-12).unwrap();
        assert!((s.eta().unwrap() - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn eta_dominates_random_shell_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let e = random_ellipsoid(&mut rng);
            let dd = e.boundary_level();
            let shell = AnnulusShell::new(e, 0.3 * dd, 0.3 * dd).unwrap();
            let eta = shell.eta().unwrap();
            for _ in 0..500 {
                let h = rng.random_range(-shell.b()..=shell.a());
                let z = shell.sample(rng.random_range(0.0..std::f64::consts::TAU), h);
                assert!((e.shape() * e.offset(&z)).norm() <= eta + 1e-9);
            }
        }
    }

    #[test]
    fn membership_matches_value_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let e = random_ellipsoid(&mut rng);
        let dd = e.boundary_level();
        let shell = AnnulusShell::new(e, 0.4 * dd, 0.2 * dd).unwrap();
        for _ in 0..10_000 {
            let z = e.center() + Vector2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
            let h = e.value(&z);
            assert_eq!(shell.contains(&z), (-shell.b()..=shell.a()).contains(&h));
        }
    }

    fn circle(region: Region, center: Vector2<f64>, a: f64, b: f64) -> AnnulusShell {
        // P = 2I so the level 0.5 e'Pe equals |e|^2
        let e = Ellipsoid::new(region, 1.0, Matrix2::identity() * 2.0, center).unwrap();
        AnnulusShell::new(e, a, b).unwrap()
    }

    #[test]
    fn disjoint_far_apart() {
        let s1 = circle(Region::Exterior, Vector2::zeros(), 0.1, 0.1);
        let s2 = circle(Region::Exterior, Vector2::new(10.0, 0.0), 0.1, 0.1);
        let r = annuli_disjoint(&s1, &s2, 64);
        assert!(r.disjoint);
        assert!(r.min_margin > 0.0);
    }

    #[test]
    fn identical_shells_intersect() {
        let s = circle(Region::Exterior, Vector2::new(1.0, 2.0), 0.3, 0.3);
        assert!(!annuli_disjoint(&s, &s, 64).disjoint);
    }

    #[test]
    fn tangent_shells_are_detected() {
        // Outer level |e|^2 = delta^2 + a = 4, i.e. outer radius 2 for both
        // shells; centers 4 apart touch at (2, 0).
        let s1 = circle(Region::Exterior, Vector2::zeros(), 3.0, 0.5);
        let s2 = circle(Region::Exterior, Vector2::new(4.0, 0.0), 3.0, 0.5);
        let r = annuli_disjoint(&s1, &s2, DEFAULT_DISJOINT_RESOLUTION);
        assert!(!r.disjoint);
        assert!(r.min_margin.abs() < 1e-12);
        // nudge them apart and the check passes
        let s2 = circle(Region::Exterior, Vector2::new(4.05, 0.0), 3.0, 0.5);
        assert!(annuli_disjoint(&s1, &s2, DEFAULT_DISJOINT_RESOLUTION).disjoint);
    }
}
