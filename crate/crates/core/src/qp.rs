//! Minimum-norm safety inputs and the stacked-constraint QP baseline.
//!
//! The stacked QP minimizes `0.5 |u - u_nom|^2` subject to one half-space per
//! barrier plus an optional box. Problems are tiny (`m <= 4`), so the solver
//! enumerates active sets exactly instead of iterating.

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::Barrier;
use crate::dynamics::ControlAffine;
use crate::error::{Error, Result};
use crate::input_box::InputBox;

pub const MAX_INPUT_DIM: usize = 4;
pub const MAX_CONSTRAINTS: usize = 64;
const FEAS_TOL: f64 = 1e-10;
const DUAL_TOL: f64 = 1e-12;
const DEGENERATE_LG: f64 = 1e-12;

/// The constraint `row . u >= rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace<const M: usize> {
    pub row: SVector<f64, M>,
    pub rhs: f64,
}

impl<const M: usize> HalfSpace<M> {
    pub fn new(row: SVector<f64, M>, rhs: f64) -> Self {
        Self { row, rhs }
    }

    /// `row . u - rhs`; non-negative when satisfied.
    pub fn slack(&self, u: &SVector<f64, M>) -> f64 {
        self.row.dot(u) - self.rhs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem<const M: usize> {
    pub u_nom: SVector<f64, M>,
    pub half_spaces: Vec<HalfSpace<M>>,
    pub input_box: Option<InputBox<M>>,
}

impl<const M: usize> QpProblem<M> {
    pub fn new(u_nom: SVector<f64, M>, half_spaces: Vec<HalfSpace<M>>, input_box: Option<InputBox<M>>) -> Self {
        Self { u_nom, half_spaces, input_box }
    }

    /// Half-spaces followed by the box faces (`u_i >= lo_i`, then `-u_i >= -hi_i`).
    pub fn constraints(&self) -> Vec<HalfSpace<M>> {
        let mut all = self.half_spaces.clone();
        if let Some(b) = &self.input_box {
            for i in 0..M {
                let mut e = SVector::<f64, M>::zeros();
                e[i] = 1.0;
                all.push(HalfSpace::new(e, b.lower()[i]));
                all.push(HalfSpace::new(-e, -b.upper()[i]));
            }
        }
        all
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution<const M: usize> {
    pub u: SVector<f64, M>,
    /// One multiplier per entry of [`QpProblem::constraints`]; zero off the active set.
    pub multipliers: Vec<f64>,
    pub active: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum QpOutcome<const M: usize> {
    Solved(QpSolution<M>),
    Infeasible,
}

impl<const M: usize> QpOutcome<M> {
    pub fn solution(&self) -> Option<&QpSolution<M>> {
        match self {
            QpOutcome::Solved(s) => Some(s),
            QpOutcome::Infeasible => None,
        }
    }
}

/// Exact minimizer of `0.5 |u - u_nom|^2` by active-set enumeration.
///
/// Active sets of size `0..=M` are visited in lexicographic order; the first
/// KKT point with the least objective wins.
pub fn solve_stacked_qp<const M: usize>(problem: &QpProblem<M>) -> Result<QpOutcome<M>> {
    if M == 0 || M > MAX_INPUT_DIM {
        return Err(Error::QpShape(format!("input dimension {M} outside 1..={MAX_INPUT_DIM}")));
    }
    if problem.half_spaces.len() > MAX_CONSTRAINTS {
        return Err(Error::QpShape(format!(
            "{} constraints exceed the limit of {MAX_CONSTRAINTS}",
            problem.half_spaces.len()
        )));
    }
    let rows = problem.constraints();
    if rows.iter().any(|c| !c.rhs.is_finite() || c.row.iter().any(|v| !v.is_finite())) {
        return Err(Error::QpShape("non-finite constraint".into()));
    }
    let u0 = problem.u_nom;
    let mut best: Option<(f64, QpSolution<M>)> = None;
    let mut subset = Vec::with_capacity(M);
    for size in 0..=M.min(rows.len()) {
        subset.clear();
        subset.extend(0..size);
        loop {
            if let Some(candidate) = kkt_point(&rows, &u0, &subset) {
                let objective = 0.5 * (candidate.u - u0).norm_squared();
                if best.as_ref().is_none_or(|(f, _)| objective < *f) {
                    best = Some((objective, candidate));
                }
            }
            if !next_combination(&mut subset, rows.len()) {
                break;
            }
        }
    }
    Ok(match best {
        Some((_, s)) => QpOutcome::Solved(s),
        None => QpOutcome::Infeasible,
    })
}

fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    for i in (0..k).rev() {
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves the equality-constrained subproblem on `active` and keeps it when
/// it is primal and dual feasible.
fn kkt_point<const M: usize>(rows: &[HalfSpace<M>], u0: &SVector<f64, M>, active: &[usize]) -> Option<QpSolution<M>> {
    let k = active.len();
    let mut lambda = [0.0; MAX_INPUT_DIM];
    if k > 0 {
        let mut gram = [[0.0; MAX_INPUT_DIM]; MAX_INPUT_DIM];
        let mut rhs = [0.0; MAX_INPUT_DIM];
        for (i, &a) in active.iter().enumerate() {
            for (j, &b) in active.iter().enumerate() {
                gram[i][j] = rows[a].row.dot(&rows[b].row);
            }
            rhs[i] = rows[a].rhs - rows[a].row.dot(u0);
        }
        cholesky_solve(&mut gram, &mut rhs, k)?;
        lambda[..k].copy_from_slice(&rhs[..k]);
        if lambda[..k].iter().any(|&l| l < -DUAL_TOL) {
            return None;
        }
    }
    let mut u = *u0;
    for (i, &a) in active.iter().enumerate() {
        u += rows[a].row * lambda[i];
    }
    let feasible = rows.iter().all(|c| c.slack(&u) >= -FEAS_TOL * (1.0 + c.row.norm() + c.rhs.abs()));
    if !feasible {
        return None;
    }
    let mut multipliers = vec![0.0; rows.len()];
    for (i, &a) in active.iter().enumerate() {
        multipliers[a] = lambda[i].max(0.0);
    }
    Some(QpSolution { u, multipliers, active: active.to_vec() })
}

/// In-place Cholesky solve of the leading `k x k` block; `None` when the
/// active rows are linearly dependent.
fn cholesky_solve(g: &mut [[f64; MAX_INPUT_DIM]; MAX_INPUT_DIM], b: &mut [f64; MAX_INPUT_DIM], k: usize) -> Option<()> {
    for j in 0..k {
        let scale = g[j][j];
        let mut d = g[j][j];
        for p in 0..j {
            d -= g[j][p] * g[j][p];
        }
        if !(d > 1e-12 * scale) {
            return None;
        }
        let d = d.sqrt();
        g[j][j] = d;
        for i in j + 1..k {
            let mut s = g[i][j];
            for p in 0..j {
                s -= g[i][p] * g[j][p];
            }
            g[i][j] = s / d;
        }
    }
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= g[i][p] * b[p];
        }
        b[i] = s / g[i][i];
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for p in i + 1..k {
            s -= g[p][i] * b[p];
        }
        b[i] = s / g[i][i];
    }
    Some(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `|u - u_nom - sum lambda_i row_i|`
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

pub fn kkt_residuals<const M: usize>(problem: &QpProblem<M>, solution: &QpSolution<M>) -> KktResiduals {
    let rows = problem.constraints();
    let mut grad = solution.u - problem.u_nom;
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut complementarity = 0.0f64;
    for (c, &l) in rows.iter().zip(&solution.multipliers) {
        grad -= c.row * l;
        let slack = c.slack(&solution.u);
        primal = primal.max(-slack);
        dual = dual.max(-l);
        complementarity = complementarity.max((l * slack).abs());
    }
    KktResiduals { stationarity: grad.norm(), primal, dual, complementarity }
}

/// Lie derivatives `(L_f h, L_g h)` of a barrier at `x`.
pub fn lie_derivatives<const N: usize, const M: usize, B, P>(
    barrier: &B,
    plant: &P,
    x: &SVector<f64, N>,
) -> (f64, SVector<f64, M>)
where
    B: Barrier<N, M> + ?Sized,
    P: ControlAffine<N, M> + ?Sized,
{
    let grad = barrier.gradient(x);
    let lf = grad.dot(&plant.drift(x));
    let g: SMatrix<f64, N, M> = plant.input_matrix(x);
    (lf, g.transpose() * grad)
}

/// The minimum-norm input satisfying the barrier inequality at `x`, and zero
/// outside the annulus.
pub fn min_norm_us<const N: usize, const M: usize, B, P>(
    barrier: &B,
    plant: &P,
    x: &SVector<f64, N>,
) -> Result<SVector<f64, M>>
where
    B: Barrier<N, M> + ?Sized,
    P: ControlAffine<N, M> + ?Sized,
{
    let h = barrier.value(x);
    if !barrier.margins().contains(h) {
        return Ok(SVector::zeros());
    }
    let (lf, lg) = lie_derivatives(barrier, plant, x);
    let norm = lg.norm();
    if norm < DEGENERATE_LG {
        return Err(Error::DegenerateConstraint { norm });
    }
    let rho = lf + barrier.alpha().eval(h);
    if rho >= 0.0 {
        return Ok(SVector::zeros());
    }
    Ok(lg * (-rho / (norm * norm)))
}

/// One half-space `L_g h_j u >= -L_f h_j - alpha_j(h_j)` per barrier.
pub fn stacked_problem<const N: usize, const M: usize, B, P>(
    barriers: &[B],
    plant: &P,
    x: &SVector<f64, N>,
    u_nom: &SVector<f64, M>,
    input_box: Option<InputBox<M>>,
) -> QpProblem<M>
where
    B: Barrier<N, M>,
    P: ControlAffine<N, M> + ?Sized,
{
    let half_spaces = barriers
        .iter()
        .map(|b| {
            let (lf, lg) = lie_derivatives(b, plant, x);
            HalfSpace::new(lg, -lf - b.alpha().eval(b.value(x)))
        })
        .collect();
    QpProblem::new(*u_nom, half_spaces, input_box)
}

/// Axis-aligned box of states to probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct ProbeRegion<const N: usize> {
    pub lower: SVector<f64, N>,
    pub upper: SVector<f64, N>,
}

impl<const N: usize> ProbeRegion<N> {
    pub fn new(lower: SVector<f64, N>, upper: SVector<f64, N>) -> Result<Self> {
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidParameter("probe region needs finite lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: &SVector<f64, N>) -> bool {
        (0..N).all(|i| self.lower[i] <= x[i] && x[i] <= self.upper[i])
    }
}

pub const PROBE_MIN_SEPARATION: f64 = 1e-4;
pub const PROBE_MAX_SEPARATION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub max_quotient: f64,
    /// Pairs where the controller returned a value at both points.
    pub evaluated: usize,
    pub skipped: usize,
    pub argmax: Option<Vec<f64>>,
}

/// Largest `|u(x) - u(x')| / |x - x'|` over random close pairs in `region`.
///
/// Pairs are drawn up front from `seed`, so the report does not depend on
/// thread scheduling. The controller may decline a point (e.g. an
/// infeasible QP) by returning `None`; such pairs are skipped.
pub fn lipschitz_probe<const N: usize, const M: usize, F>(
    controller: F,
    region: &ProbeRegion<N>,
    pairs: usize,
    seed: u64,
) -> ProbeReport
where
    F: Fn(&SVector<f64, N>) -> Option<SVector<f64, M>> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(pairs);
    while samples.len() < pairs {
        let x = SVector::<f64, N>::from_fn(|i, _| rng.random_range(region.lower[i]..region.upper[i]));
        let dir = loop {
            let d = SVector::<f64, N>::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let n = d.norm();
            if n > 1e-3 && n <= 1.0 {
                break d / n;
            }
        };
        let sep = rng.random_range(PROBE_MIN_SEPARATION..=PROBE_MAX_SEPARATION);
        let y = x + dir * sep;
        if region.contains(&y) {
            samples.push((x, y));
        }
    }
    let results: Vec<Option<(f64, usize)>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let (ux, uy) = (controller(x)?, controller(y)?);
            Some(((ux - uy).norm() / (x - y).norm(), i))
        })
        .collect();
    let mut report = ProbeReport { max_quotient: 0.0, evaluated: 0, skipped: 0, argmax: None };
    let mut best: Option<usize> = None;
    for r in results {
        match r {
            Some((q, i)) => {
                report.evaluated += 1;
                if best.is_none() || q > report.max_quotient {
                    report.max_quotient = q;
                    best = Some(i);
                }
            }
            None => report.skipped += 1,
        }
    }
    report.argmax = best.map(|i| samples[i].0.iter().copied().collect());
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{AlphaFn, BarrierSpec, Margins};
    use nalgebra::{Matrix2, Vector2};
    use rand::Rng;

    /// `x' = u` in the plane.
    struct Integrator;

    impl ControlAffine<2, 2> for Integrator {
        fn drift(&self, _x: &Vector2<f64>) -> Vector2<f64> {
            Vector2::zeros()
        }
        fn input_matrix(&self, _x: &Vector2<f64>) -> Matrix2<f64> {
            Matrix2::identity()
        }
    }

    /// `x' = (-1, 0) + u`.
    struct Drifting;

    impl ControlAffine<2, 2> for Drifting {
        fn drift(&self, _x: &Vector2<f64>) -> Vector2<f64> {
            Vector2::new(-1.0, 0.0)
        }
        fn input_matrix(&self, _x: &Vector2<f64>) -> Matrix2<f64> {
            Matrix2::identity()
        }
    }

    fn half_plane_barrier() -> BarrierSpec<2, 2> {
        // h = x1 on the band [-1, 1]
        BarrierSpec::new(
            |x: &Vector2<f64>| x[0],
            |_x: &Vector2<f64>| Vector2::new(1.0, 0.0),
            Margins::new(1.0, 1.0).unwrap(),
            AlphaFn::new(1.0).unwrap(),
            |_x: &Vector2<f64>| Vector2::zeros(),
        )
    }

    /// Minimum of `0.5 |u - u0|^2` over a lattice on `[-l, l]^2` restricted to feasible points.
    fn lattice_qp(rows: &[HalfSpace<2>], u0: &Vector2<f64>, l: f64, n: usize) -> Option<(Vector2<f64>, f64)> {
        let step = 2.0 * l / (n - 1) as f64;
        let mut best: Option<(Vector2<f64>, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                let u = Vector2::new(-l + step * i as f64, -l + step * j as f64);
                if rows.iter().all(|c| c.slack(&u) >= 0.0) {
                    let f = 0.5 * (u - u0).norm_squared();
                    if best.is_none_or(|(_, g)| f < g) {
                        best = Some((u, f));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn min_norm_examples() {
        let b = half_plane_barrier();
        assert_eq!(min_norm_us(&b, &Integrator, &Vector2::new(3.0, 0.0)).unwrap(), Vector2::zeros());
        // L_f h = -1 and alpha(0) = 0 give (1, 0)
        assert_eq!(min_norm_us(&b, &Drifting, &Vector2::new(0.0, 0.5)).unwrap(), Vector2::new(1.0, 0.0));
        // L_f h + alpha(h) = -1 + 1.3 > 0
        assert_eq!(min_norm_us(&b, &Drifting, &Vector2::new(1.3, 0.0)).unwrap(), Vector2::zeros());
    }

    #[test]
    fn min_norm_degenerate_gradient() {
        let flat = BarrierSpec::<2, 2>::new(
            |_x: &Vector2<f64>| 0.0,
            |_x: &Vector2<f64>| Vector2::zeros(),
            Margins::new(1.0, 1.0).unwrap(),
            AlphaFn::default(),
            |_x: &Vector2<f64>| Vector2::zeros(),
        );
        assert!(matches!(min_norm_us(&flat, &Drifting, &Vector2::zeros()), Err(Error::DegenerateConstraint { .. })));
    }

    #[test]
    fn feasible_nominal_is_returned() {
        let p = QpProblem::new(
            Vector2::new(0.5, 0.5),
            vec![HalfSpace::new(Vector2::new(1.0, 0.0), 0.0)],
            Some(InputBox::symmetric(Vector2::new(2.0, 2.0)).unwrap()),
        );
        let s = solve_stacked_qp(&p).unwrap();
        assert_eq!(s.solution().unwrap().u, Vector2::new(0.5, 0.5));
        assert!(s.solution().unwrap().active.is_empty());
    }

    #[test]
    fn single_halfspace_is_a_projection() {
        let row = Vector2::new(1.0, 2.0);
        let c = HalfSpace::new(row, 1.0);
        let u0 = Vector2::new(-0.5, -0.25);
        let p = QpProblem::new(u0, vec![c], None);
        let u = solve_stacked_qp(&p).unwrap().solution().unwrap().u;
        let projected = u0 + row * ((1.0 - row.dot(&u0)) / row.norm_squared());
        assert!((u - projected).norm() < 1e-14);

        let n = 400;
        let step = 4.0 / (n - 1) as f64;
        let (lattice, _) = lattice_qp(&[c], &u0, 2.0, n).unwrap();
        assert!((lattice - u).norm() <= 2.0 * step);
    }

    #[test]
    fn antiparallel_halfspaces_are_infeasible() {
        let e = Vector2::new(1.0, 0.0);
        let p = QpProblem::new(Vector2::zeros(), vec![HalfSpace::new(e, 1.0), HalfSpace::new(-e, 1.0)], None);
        assert_eq!(solve_stacked_qp(&p).unwrap(), QpOutcome::Infeasible);
    }

    #[test]
    fn shape_limits() {
        let too_many = QpProblem::new(Vector2::zeros(), vec![HalfSpace::new(Vector2::zeros(), -1.0); 65], None);
        assert!(matches!(solve_stacked_qp(&too_many), Err(Error::QpShape(_))));
    }

    #[test]
    fn random_problems_match_lattice_and_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ub = InputBox::symmetric(Vector2::new(2.0, 2.0)).unwrap();
        let n = 201;
        let step = 4.0 / (n - 1) as f64;
        for _ in 0..100 {
            let k = rng.random_range(0..4);
            let rows: Vec<HalfSpace<2>> = (0..k)
                .map(|_| {
                    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    HalfSpace::new(Vector2::new(t.cos(), t.sin()), rng.random_range(-1.5..0.5))
                })
                .collect();
            let u0 = Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let p = QpProblem::new(u0, rows, Some(ub));
            let all = p.constraints();
            match (solve_stacked_qp(&p).unwrap(), lattice_qp(&all, &u0, 2.0, n)) {
                (QpOutcome::Solved(s), Some((_, f_lattice))) => {
                    assert!(kkt_residuals(&p, &s).max() <= 1e-9);
                    let f = 0.5 * (s.u - u0).norm_squared();
                    assert!(f <= f_lattice + 1e-12);
                    // a feasible lattice point lies within 1.5 sqrt(2) steps of the optimum
                    let slack = 1.5 * 2f64.sqrt() * step;
                    assert!(f_lattice <= 0.5 * ((s.u - u0).norm() + slack).powi(2) + 1e-12);
                }
                (QpOutcome::Infeasible, None) => {}
                (QpOutcome::Infeasible, Some(_)) => panic!("solver missed a feasible lattice point"),
                // the feasible set can be thinner than the lattice
                (QpOutcome::Solved(s), None) => assert!(kkt_residuals(&p, &s).max() <= 1e-9),
            }
        }
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut s = vec![0, 1];
        let mut seen = vec![s.clone()];
        while next_combination(&mut s, 4) {
            seen.push(s.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn probe_of_constant_controller_is_zero() {
        let region = ProbeRegion::new(Vector2::new(-1.0, -1.0), Vector2::new(1.0, 1.0)).unwrap();
        let r = lipschitz_probe(|_x: &Vector2<f64>| Some(Vector2::new(1.0, -1.0)), &region, 1000, 3);
        assert_eq!(r.max_quotient, 0.0);
        assert_eq!(r.evaluated, 1000);
    }

    #[test]
    fn probe_of_linear_controller_approaches_its_norm() {
        let region = ProbeRegion::new(Vector2::new(-1.0, -1.0), Vector2::new(1.0, 1.0)).unwrap();
        let a = Matrix2::new(3.0, 0.0, 0.0, 1.0);
        let r = lipschitz_probe(|x: &Vector2<f64>| Some(a * x), &region, 10_000, 3);
        assert!(r.max_quotient <= 3.0 + 1e-9);
        assert!(r.max_quotient > 2.99);
    }
}
