//! Type-II barrier abstractions and the mixed-initiative blending laws.
//!
//! A barrier `h` defines the safe set `C = {x : h(x) >= 0}` and the annulus
//! `A = {x : h(x) in [-b, a]}` around its boundary. The safety input only has
//! to satisfy the barrier inequality on `A`; elsewhere the blend hands control
//! to the nominal input.

use std::sync::Arc;

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlAffine;
use crate::error::{Error, Result};
use crate::input_box::InputBox;

/// Class-K branch on `h >= 0`, identically zero for `h < 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaFn {
    gain: f64,
}

impl AlphaFn {
    pub fn new(gain: f64) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha gain must be positive, got {gain}")));
        }
        Ok(Self { gain })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn eval(&self, h: f64) -> f64 {
        if h >= 0.0 {
            self.gain * h
        } else {
            0.0
        }
    }
}

impl Default for AlphaFn {
    fn default() -> Self {
        Self { gain: 1.0 }
    }
}

/// Annulus margins: the band is `h in [-b, a]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub a: f64,
    pub b: f64,
}

impl Margins {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("annulus margins must be positive, got a = {a}, b = {b}")));
        }
        Ok(Self { a, b })
    }

    pub fn contains(&self, h: f64) -> bool {
        h >= -self.b && h <= self.a
    }
}

/// Ramp used on `[0, a]`. Must satisfy `k(0, a) = 0`, `k(a, a) = 1`, be locally
/// Lipschitz and non-decreasing.
pub type KappaFn = fn(f64, f64) -> f64;

/// Cubic smoothstep `-2h^3/a^3 + 3h^2/a^2`.
pub fn smoothstep(h: f64, a: f64) -> f64 {
    let s = h / a;
    s * s * (3.0 - 2.0 * s)
}

/// The default ramp, defined only on `[0, a]`.
pub fn kappa(h: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) || !(0.0..=a).contains(&h) {
        return Err(Error::KappaDomain { h, a });
    }
    Ok(smoothstep(h, a))
}

/// Blend weight on the nominal input: 0 below the boundary, 1 beyond `a`.
pub fn phi(h: f64, a: f64) -> f64 {
    phi_with(h, a, smoothstep)
}

pub fn phi_with(h: f64, a: f64, ramp: KappaFn) -> f64 {
    if h > a {
        1.0
    } else if h >= 0.0 {
        ramp(h, a)
    } else {
        0.0
    }
}

/// A Type-II zeroing control barrier function together with the safety
/// controller certified on its annulus.
pub trait Barrier<const N: usize, const M: usize>: Send + Sync {
    fn value(&self, x: &SVector<f64, N>) -> f64;

    /// Gradient `dh/dx` (as a column vector).
    fn gradient(&self, x: &SVector<f64, N>) -> SVector<f64, N>;

    fn margins(&self) -> Margins;

    fn alpha(&self) -> AlphaFn;

    /// The safety input `u_s(x)`; required to lie in the input box on the annulus.
    fn safety_input(&self, x: &SVector<f64, N>) -> SVector<f64, M>;

    fn kappa(&self) -> KappaFn {
        smoothstep
    }

    fn in_annulus(&self, x: &SVector<f64, N>) -> bool {
        self.margins().contains(self.value(x))
    }
}

impl<const N: usize, const M: usize, T: Barrier<N, M> + ?Sized> Barrier<N, M> for &T {
    fn value(&self, x: &SVector<f64, N>) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &SVector<f64, N>) -> SVector<f64, N> {
        (**self).gradient(x)
    }
    fn margins(&self) -> Margins {
        (**self).margins()
    }
    fn alpha(&self) -> AlphaFn {
        (**self).alpha()
    }
    fn safety_input(&self, x: &SVector<f64, N>) -> SVector<f64, M> {
        (**self).safety_input(x)
    }
    fn kappa(&self) -> KappaFn {
        (**self).kappa()
    }
}

impl<const N: usize, const M: usize, T: Barrier<N, M> + ?Sized> Barrier<N, M> for Box<T> {
    fn value(&self, x: &SVector<f64, N>) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &SVector<f64, N>) -> SVector<f64, N> {
        (**self).gradient(x)
    }
    fn margins(&self) -> Margins {
        (**self).margins()
    }
    fn alpha(&self) -> AlphaFn {
        (**self).alpha()
    }
    fn safety_input(&self, x: &SVector<f64, N>) -> SVector<f64, M> {
        (**self).safety_input(x)
    }
    fn kappa(&self) -> KappaFn {
        (**self).kappa()
    }
}

type ScalarField<const N: usize> = Arc<dyn Fn(&SVector<f64, N>) -> f64 + Send + Sync>;
type VectorField<const N: usize, const K: usize> = Arc<dyn Fn(&SVector<f64, N>) -> SVector<f64, K> + Send + Sync>;

/// Closure-backed barrier for systems that do not warrant a dedicated type.
#[derive(Clone)]
pub struct BarrierSpec<const N: usize, const M: usize> {
    h: ScalarField<N>,
    grad_h: VectorField<N, N>,
    margins: Margins,
    alpha: AlphaFn,
    safety_ctrl: VectorField<N, M>,
    kappa: KappaFn,
}

impl<const N: usize, const M: usize> BarrierSpec<N, M> {
    pub fn new(
        h: impl Fn(&SVector<f64, N>) -> f64 + Send + Sync + 'static,
        grad_h: impl Fn(&SVector<f64, N>) -> SVector<f64, N> + Send + Sync + 'static,
        margins: Margins,
        alpha: AlphaFn,
        safety_ctrl: impl Fn(&SVector<f64, N>) -> SVector<f64, M> + Send + Sync + 'static,
    ) -> Self {
        Self {
            h: Arc::new(h),
            grad_h: Arc::new(grad_h),
            margins,
            alpha,
            safety_ctrl: Arc::new(safety_ctrl),
            kappa: smoothstep,
        }
    }

    pub fn with_kappa(mut self, kappa: KappaFn) -> Self {
        self.kappa = kappa;
        self
    }
}

impl<const N: usize, const M: usize> std::fmt::Debug for BarrierSpec<N, M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BarrierSpec")
            .field("margins", &self.margins)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl<const N: usize, const M: usize> Barrier<N, M> for BarrierSpec<N, M> {
    fn value(&self, x: &SVector<f64, N>) -> f64 {
        (self.h)(x)
    }
    fn gradient(&self, x: &SVector<f64, N>) -> SVector<f64, N> {
        (self.grad_h)(x)
    }
    fn margins(&self) -> Margins {
        self.margins
    }
    fn alpha(&self) -> AlphaFn {
        self.alpha
    }
    fn safety_input(&self, x: &SVector<f64, N>) -> SVector<f64, M> {
        (self.safety_ctrl)(x)
    }
    fn kappa(&self) -> KappaFn {
        self.kappa
    }
}

/// Outcome of one blending step.
///
/// `u_star == (1 - phi_bar) * u_s_used + phi_bar * u_nom_used` holds exactly:
/// `u_star` is computed from that expression and nothing else.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendReport<const M: usize> {
    pub u_star: SVector<f64, M>,
    pub phi_bar: f64,
    pub active_barrier: Option<usize>,
    pub u_nom_used: SVector<f64, M>,
    pub u_s_used: SVector<f64, M>,
}

impl<const M: usize> BlendReport<M> {
    fn from_parts(phi_bar: f64, active_barrier: Option<usize>, u_s: SVector<f64, M>, u_nom: SVector<f64, M>) -> Self {
        Self {
            u_star: u_s * (1.0 - phi_bar) + u_nom * phi_bar,
            phi_bar,
            active_barrier,
            u_nom_used: u_nom,
            u_s_used: u_s,
        }
    }
}

fn require_in_box<const M: usize>(input_box: &InputBox<M>, u: &SVector<f64, M>) -> Result<()> {
    if input_box.contains(u) {
        Ok(())
    } else {
        Err(Error::InputOutsideBox { input: u.iter().copied().collect() })
    }
}

/// Single-barrier mixed-initiative law `u* = (1 - phi(h)) u_s + phi(h) u_nom`.
pub fn blend_single<const N: usize, const M: usize, B: Barrier<N, M> + ?Sized>(
    barrier: &B,
    input_box: &InputBox<M>,
    x: &SVector<f64, N>,
    u_nom: &SVector<f64, M>,
) -> Result<BlendReport<M>> {
    require_in_box(input_box, u_nom)?;
    let h = barrier.value(x);
    let weight = phi_with(h, barrier.margins().a, barrier.kappa());
    Ok(BlendReport::from_parts(weight, Some(0), barrier.safety_input(x), *u_nom))
}

/// Multi-barrier law: blends with the unique barrier whose annulus contains
/// `x`, and returns `u_nom` untouched when no annulus does.
pub fn blend_multi<const N: usize, const M: usize, B: Barrier<N, M>>(
    barriers: &[B],
    input_box: &InputBox<M>,
    x: &SVector<f64, N>,
    u_nom: &SVector<f64, M>,
) -> Result<BlendReport<M>> {
    require_in_box(input_box, u_nom)?;
    let mut active: Option<(usize, f64)> = None;
    for (i, barrier) in barriers.iter().enumerate() {
        let h = barrier.value(x);
        if barrier.margins().contains(h) {
            if let Some((first, _)) = active {
                return Err(Error::AnnuliOverlap { first, second: i });
            }
            active = Some((i, h));
        }
    }
    Ok(match active {
        Some((i, h)) => {
            let barrier = &barriers[i];
            let weight = phi_with(h, barrier.margins().a, barrier.kappa());
            BlendReport::from_parts(weight, Some(i), barrier.safety_input(x), *u_nom)
        }
        None => BlendReport::from_parts(1.0, None, SVector::zeros(), *u_nom),
    })
}

/// Sampled evaluation of `L_f h + L_g h u_s + alpha(h)` on annulus states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TypeIIReport {
    pub count: usize,
    /// Smallest residual observed; `+inf` when no samples were given.
    pub min_residual: f64,
    pub argmin: Option<usize>,
}

impl TypeIIReport {
    /// Membership of every sampled `u_s(x)` in `S(x)`, up to `tol`.
    /// Vacuously true for an empty sample set.
    pub fn certified(&self, tol: f64) -> bool {
        self.count == 0 || self.min_residual >= -tol
    }
}

/// Residual of the barrier inequality at `x` for input `u`.
pub fn type_ii_residual<const N: usize, const M: usize, B, P>(
    barrier: &B,
    plant: &P,
    x: &SVector<f64, N>,
    u: &SVector<f64, M>,
) -> f64
where
    B: Barrier<N, M> + ?Sized,
    P: ControlAffine<N, M> + ?Sized,
{
    let grad = barrier.gradient(x);
    let lf = grad.dot(&plant.drift(x));
    let lg = grad.transpose() * plant.input_matrix(x);
    lf + (lg * u)[(0, 0)] + barrier.alpha().eval(barrier.value(x))
}

pub fn check_type_ii<const N: usize, const M: usize, B, P>(
    barrier: &B,
    plant: &P,
    samples: &[SVector<f64, N>],
) -> TypeIIReport
where
    B: Barrier<N, M> + ?Sized,
    P: ControlAffine<N, M> + ?Sized,
{
    let mut report = TypeIIReport { count: samples.len(), min_residual: f64::INFINITY, argmin: None };
    for (i, x) in samples.iter().enumerate() {
        let r = type_ii_residual(barrier, plant, x, &barrier.safety_input(x));
        if r < report.min_residual {
            report.min_residual = r;
            report.argmin = Some(i);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{SMatrix, Vector1, Vector2};
    use proptest::prelude::*;

    /// Scalar barrier h(x) = x on a 1-D state with two inputs.
    fn line_barrier(a: f64, u_s: Vector2<f64>) -> BarrierSpec<1, 2> {
        BarrierSpec::new(
            |x: &Vector1<f64>| x[0],
            |_| Vector1::new(1.0),
            Margins::new(a, 0.5).unwrap(),
            AlphaFn::default(),
            move |_| u_s,
        )
    }

    fn unit_box() -> InputBox<2> {
        InputBox::symmetric(Vector2::new(2.0, 2.0)).unwrap()
    }

    #[test]
    fn kappa_endpoints_and_midpoint() {
        assert_eq!(kappa(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(kappa(0.5, 0.5).unwrap(), 1.0);
        // direct cubic
        let direct = -2.0 / 0.125 * 0.25f64.powi(3) + 3.0 / 0.25 * 0.25f64.powi(2);
        assert!((direct - 0.5).abs() < 1e-15);
        assert!((kappa(0.25, 0.5).unwrap() - 0.5).abs() < 1e-15);
        // smoothstep is point-symmetric about a/2
        for t in [0.01, 0.1, 0.2, 0.25] {
            let s = kappa(0.25 + t, 0.5).unwrap() + kappa(0.25 - t, 0.5).unwrap();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn kappa_rejects_out_of_domain() {
        assert!(matches!(kappa(-0.1, 0.5), Err(Error::KappaDomain { .. })));
        assert!(matches!(kappa(0.6, 0.5), Err(Error::KappaDomain { .. })));
    }

    #[test]
    fn phi_branches() {
        assert_eq!(phi(-0.1, 0.5), 0.0);
        assert_eq!(phi(1.0, 0.5), 1.0);
        assert!((phi(0.25, 0.5) - kappa(0.25, 0.5).unwrap()).abs() < 1e-15);
        assert_eq!(phi(0.0, 0.5), 0.0);
        assert_eq!(phi(0.5, 0.5), 1.0);
    }

    #[test]
    fn phi_monotone_and_lipschitz() {
        let a = 0.7;
        let n = 200_000;
        let (lo, hi) = (-0.5, 1.5);
        let step = (hi - lo) / n as f64;
        let bound = 1.5 / a;
        let mut prev = phi(lo, a);
        for k in 1..=n {
            let h = lo + step * k as f64;
            let v = phi(h, a);
            assert!(v >= prev, "phi decreased at h = {h}");
            assert!((v - prev) / step <= bound * (1.0 + 1e-6), "slope bound broken at h = {h}");
            prev = v;
        }
    }

    #[test]
    fn alpha_properties() {
        let alpha = AlphaFn::new(2.5).unwrap();
        assert_eq!(alpha.eval(0.0), 0.0);
        for k in 1..1000 {
            let h = k as f64 * 0.01;
            assert!(alpha.eval(h) > alpha.eval(h - 0.01));
            assert_eq!(alpha.eval(-h), 0.0);
        }
        assert!(AlphaFn::new(0.0).is_err());
    }

    #[test]
    fn blend_single_cases() {
        let u_s = Vector2::new(-1.0, 0.5);
        let b = line_barrier(0.5, u_s);
        let bx = unit_box();
        let u_nom = Vector2::new(1.5, -2.0);

        let r = blend_single(&b, &bx, &Vector1::new(-0.2), &u_nom).unwrap();
        assert_eq!(r.u_star, u_s);
        let r = blend_single(&b, &bx, &Vector1::new(1.0), &u_nom).unwrap();
        assert_eq!(r.u_star, u_nom);

        let b = line_barrier(0.5, Vector2::zeros());
        let r = blend_single(&b, &bx, &Vector1::new(0.25), &Vector2::new(2.0, 2.0)).unwrap();
        assert!((r.u_star - Vector2::new(1.0, 1.0)).norm() < 1e-15);
        assert!((r.phi_bar - 0.5).abs() < 1e-15);

        let err = blend_single(&b, &bx, &Vector1::new(0.25), &Vector2::new(2.5, 0.0));
        assert!(matches!(err, Err(Error::InputOutsideBox { .. })));
    }

    /// Three barriers h_i(x) = x - c_i with well separated annuli.
    fn shifted(center: f64, a: f64, u_s: Vector2<f64>) -> BarrierSpec<1, 2> {
        BarrierSpec::new(
            move |x: &Vector1<f64>| x[0] - center,
            |_| Vector1::new(1.0),
            Margins::new(a, 0.2).unwrap(),
            AlphaFn::default(),
            move |_| u_s,
        )
    }

    #[test]
    fn blend_multi_cases() {
        let us = [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0), Vector2::new(-1.0, -1.0)];
        let bs = vec![shifted(0.0, 0.4, us[0]), shifted(10.0, 0.4, us[1]), shifted(20.0, 0.4, us[2])];
        let bx = unit_box();
        let u_nom = Vector2::new(0.3, -1.7);

        // h_i > a_i for all i: x = 25
        let r = blend_multi(&bs, &bx, &Vector1::new(25.0), &u_nom).unwrap();
        assert_eq!(r.u_star, u_nom);
        assert_eq!(r.active_barrier, None);
        assert_eq!(r.u_s_used, Vector2::zeros());
        assert_eq!(r.phi_bar, 1.0);

        // on the boundary of the third set
        let r = blend_multi(&bs, &bx, &Vector1::new(20.0), &u_nom).unwrap();
        assert_eq!(r.u_star, us[2]);
        assert_eq!(r.active_barrier, Some(2));

        // halfway through the first annulus
        let r = blend_multi(&bs, &bx, &Vector1::new(0.2), &u_nom).unwrap();
        assert!((r.u_star - (us[0] * 0.5 + u_nom * 0.5)).norm() < 1e-12);
        assert_eq!(r.active_barrier, Some(0));
    }

    #[test]
    fn blend_multi_detects_overlap() {
        let bs = vec![shifted(0.0, 0.4, Vector2::zeros()), shifted(0.3, 0.4, Vector2::zeros())];
        let err = blend_multi(&bs, &unit_box(), &Vector1::new(0.2), &Vector2::zeros());
        assert!(matches!(err, Err(Error::AnnuliOverlap { first: 0, second: 1 })));
    }

    struct Drift1D(f64);
    impl ControlAffine<1, 2> for Drift1D {
        fn drift(&self, _x: &Vector1<f64>) -> Vector1<f64> {
            Vector1::new(self.0)
        }
        fn input_matrix(&self, _x: &Vector1<f64>) -> SMatrix<f64, 1, 2> {
            SMatrix::<f64, 1, 2>::new(1.0, 0.0)
        }
    }

    #[test]
    fn type_ii_check_flags_inward_flow() {
        // u_s = 0 while the drift pushes h downward: the inequality fails below 0.
        let b = shifted(0.0, 0.5, Vector2::zeros());
        let samples: Vec<_> = (0..=70).map(|k| Vector1::new(-0.2 + 0.01 * k as f64)).collect();
        let report = check_type_ii(&b, &Drift1D(-1.0), &samples);
        assert_eq!(report.count, samples.len());
        assert!((report.min_residual + 1.0).abs() < 1e-12);
        assert!(!report.certified(1e-6));

        // a safety input that cancels the drift certifies the annulus
        let b = shifted(0.0, 0.5, Vector2::new(1.0, 0.0));
        assert!(check_type_ii(&b, &Drift1D(-1.0), &samples).certified(1e-12));
    }

    #[test]
    fn type_ii_check_empty_is_vacuous() {
        let b = shifted(0.0, 0.5, Vector2::zeros());
        let report = check_type_ii(&b, &Drift1D(-1.0), &[]);
        assert_eq!(report.count, 0);
        assert!(report.certified(0.0));
        assert_eq!(report.argmin, None);
    }

    proptest! {
        #[test]
        fn blend_is_exact_convex_combination_and_stays_in_box(
            x in -1.0f64..1.0,
            us in prop::array::uniform2(-2.0f64..=2.0),
            un in prop::array::uniform2(-2.0f64..=2.0),
        ) {
            let u_s = Vector2::from(us);
            let u_nom = Vector2::from(un);
            let b = line_barrier(0.5, u_s);
            let bx = unit_box();
            let r = blend_single(&b, &bx, &Vector1::new(x), &u_nom).unwrap();
            let again = r.u_s_used * (1.0 - r.phi_bar) + r.u_nom_used * r.phi_bar;
            prop_assert_eq!(r.u_star, again);
            prop_assert!(bx.contains(&r.u_star));
        }
    }
}
