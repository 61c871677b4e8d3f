//! Matrix Riccati and Jacobi flows along a parameter, and the comparison,
//! rigidity, domain and tube statements built on them.
//!
//! The shape operator of a family of parallel hypersurfaces obeys
//! `S′ = S² + R(t)`; equivalently `S = −F′F⁻¹` for a Jacobi solution
//! `F″ + R F = 0`. Everything here is generic over [`Real`].

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use crate::func::{piece_index, ScalarFn};
use crate::linalg::{
    is_self_adjoint, monotone_pair_with, order_leq, psd_check, random_psd_operator, same_space, InnerSpace,
    LinalgError, Operator,
};
use crate::ode::{integrate, Controls, Side, Solution, System, Termination};
use crate::scalar::{finite, lit, Real};

/// Gap tolerance used by [`compare_trajectories`].
pub const COMPARISON_TOL: f64 = 1e-7;
/// Shape operators are refused this close to a singular time of `F`.
pub const SINGULAR_EXCLUSION: f64 = 1e-6;
/// Below this parameter value a tube's shape operator is not formed.
pub const TUBE_CUTOFF: f64 = 1e-3;
/// Uniform resampling points per comparison.
pub const COMPARISON_POINTS: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("stiff failure: step size {h:e} underflowed at t = {t} while the solution stayed bounded")]
    StiffFailure { t: f64, h: f64 },
    #[error("step budget exhausted at t = {0}")]
    MaxSteps(f64),
    #[error("t = {t} is within {distance:e} of the singular time {nearest}")]
    NearSingular { t: f64, nearest: f64, distance: f64 },
    #[error("t = {t} is below the tube cutoff {cutoff}")]
    BelowCutoff { t: f64, cutoff: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("the form on the slice is indefinite; the Cauchy–Schwarz step does not apply")]
    IndefiniteSlice,
}

pub type Result<T, E = RiccatiError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// Curvature profiles

#[derive(Debug, Clone)]
enum ProfileKind<T: Real> {
    Constant(Operator<T>),
    Piecewise { breaks: Vec<T>, pieces: Vec<Operator<T>> },
    DiagonalTable(Vec<ScalarFn<T>>),
    ScalarMultiple(ScalarFn<T>, Operator<T>),
    Sum(Vec<CurvatureProfile<T>>),
}

/// A self-adjoint operator valued function `t ↦ R(t)`.
///
/// Every constructor checks self-adjointness of its operator data, so every
/// evaluation is self-adjoint by construction.
#[derive(Debug, Clone)]
pub struct CurvatureProfile<T: Real> {
    space: Arc<InnerSpace<T>>,
    kind: ProfileKind<T>,
}

fn require_self_adjoint<T: Real>(op: &Operator<T>) -> Result<()> {
    if is_self_adjoint(op) {
        Ok(())
    } else {
        Err(LinalgError::NotSelfAdjoint(op.adjoint_defect().to_f64()).into())
    }
}

fn require_space<T: Real>(space: &Arc<InnerSpace<T>>, op: &Operator<T>) -> Result<()> {
    if same_space(space, op.space()) {
        Ok(())
    } else {
        Err(LinalgError::SpaceMismatch.into())
    }
}

impl<T: Real> CurvatureProfile<T> {
    pub fn zero(space: Arc<InnerSpace<T>>) -> Self {
        let op = Operator::zero(space.clone());
        Self { space, kind: ProfileKind::Constant(op) }
    }

    pub fn constant(r0: Operator<T>) -> Result<Self> {
        require_self_adjoint(&r0)?;
        Ok(Self { space: r0.space().clone(), kind: ProfileKind::Constant(r0) })
    }

    /// `r_a` on `t < t_switch`, `r_b` from `t_switch` on.
    pub fn step(r_a: Operator<T>, r_b: Operator<T>, t_switch: T) -> Result<Self> {
        Self::piecewise(vec![t_switch], vec![r_a, r_b])
    }

    /// Piecewise constant profile; `pieces.len() == breaks.len() + 1`.
    pub fn piecewise(breaks: Vec<T>, pieces: Vec<Operator<T>>) -> Result<Self> {
        if pieces.len() != breaks.len() + 1 {
            return Err(RiccatiError::Invalid(format!(
                "{} pieces need {} breaks, got {}",
                pieces.len(),
                pieces.len().saturating_sub(1),
                breaks.len()
            )));
        }
        if !breaks.windows(2).all(|w| w[0] < w[1]) || !breaks.iter().all(|b| finite(*b)) {
            return Err(RiccatiError::Invalid("breaks must be finite and strictly increasing".into()));
        }
        let space = pieces[0].space().clone();
        for p in &pieces {
            require_space(&space, p)?;
            require_self_adjoint(p)?;
        }
        Ok(Self { space, kind: ProfileKind::Piecewise { breaks, pieces } })
    }

    /// `op` on `[t0, t1)`, zero elsewhere.
    pub fn window(op: Operator<T>, t0: T, t1: T) -> Result<Self> {
        let z = Operator::zero(op.space().clone());
        Self::piecewise(vec![t0, t1], vec![z.clone(), op, z])
    }

    /// `diag(f₁(t), …, fₙ(t))`; needs a diagonal Gram matrix.
    pub fn diagonal_table(space: Arc<InnerSpace<T>>, fns: Vec<ScalarFn<T>>) -> Result<Self> {
        if fns.len() != space.dim() {
            return Err(LinalgError::DimensionMismatch { expected: space.dim(), got: fns.len() }.into());
        }
        let g = space.gram();
        let off_diag = (0..g.nrows()).any(|i| (0..g.ncols()).any(|j| i != j && g[(i, j)] != T::zero()));
        if off_diag {
            return Err(RiccatiError::Invalid("diagonal profiles need a diagonal Gram matrix".into()));
        }
        Ok(Self { space, kind: ProfileKind::DiagonalTable(fns) })
    }

    /// `r(t)·op`.
    pub fn scalar_multiple(r: ScalarFn<T>, op: Operator<T>) -> Result<Self> {
        require_self_adjoint(&op)?;
        Ok(Self { space: op.space().clone(), kind: ProfileKind::ScalarMultiple(r, op) })
    }

    pub fn sum(parts: Vec<CurvatureProfile<T>>) -> Result<Self> {
        let first = parts.first().ok_or_else(|| RiccatiError::Invalid("empty sum".into()))?;
        let space = first.space.clone();
        if parts.iter().any(|p| !same_space(&space, &p.space)) {
            return Err(LinalgError::SpaceMismatch.into());
        }
        Ok(Self { space, kind: ProfileKind::Sum(parts) })
    }

    pub fn space(&self) -> &Arc<InnerSpace<T>> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn eval_side(&self, t: T, side: Side) -> Operator<T> {
        Operator::new(self.space.clone(), self.matrix_side(t, side)).expect("profile dimensions are fixed")
    }

    pub fn eval(&self, t: T) -> Operator<T> {
        self.eval_side(t, Side::Right)
    }

    fn matrix_side(&self, t: T, side: Side) -> DMatrix<T> {
        match &self.kind {
            ProfileKind::Constant(op) => op.matrix().clone(),
            ProfileKind::Piecewise { breaks, pieces } => pieces[piece_index(breaks, t, side)].matrix().clone(),
            ProfileKind::DiagonalTable(fns) => {
                let n = fns.len();
                DMatrix::from_fn(n, n, |i, j| if i == j { fns[i].eval_side(t, side) } else { T::zero() })
            }
            ProfileKind::ScalarMultiple(r, op) => op.matrix() * r.eval_side(t, side),
            ProfileKind::Sum(parts) => {
                let n = self.dim();
                parts.iter().fold(DMatrix::zeros(n, n), |acc, p| acc + p.matrix_side(t, side))
            }
        }
    }

    /// Sorted, deduplicated times where the profile may jump.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out = match &self.kind {
            ProfileKind::Constant(_) => Vec::new(),
            ProfileKind::Piecewise { breaks, .. } => breaks.clone(),
            ProfileKind::DiagonalTable(fns) => fns.iter().flat_map(|f| f.breakpoints()).collect(),
            ProfileKind::ScalarMultiple(r, _) => r.breakpoints(),
            ProfileKind::Sum(parts) => parts.iter().flat_map(|p| p.breakpoints()).collect(),
        };
        sort_dedup(&mut out);
        out
    }

    /// Times at which pointwise statements about the profile are checked on
    /// `[0, t_end]`: a uniform grid plus both sides of every breakpoint.
    pub fn check_times(&self, t_end: T, points: usize) -> Vec<(T, Side)> {
        let mut out: Vec<(T, Side)> =
            uniform_grid(t_end, points).into_iter().map(|t| (t, Side::Right)).collect();
        for b in self.breakpoints() {
            if b >= T::zero() && b <= t_end {
                out.push((b, Side::Left));
                out.push((b, Side::Right));
            }
        }
        out
    }
}

/// `true` iff `lower(t) ≤ upper(t)` at every check time on `[0, t_end]`.
pub fn profiles_ordered<T: Real>(
    lower: &CurvatureProfile<T>,
    upper: &CurvatureProfile<T>,
    t_end: T,
) -> Result<bool> {
    let mut times = lower.check_times(t_end, 257);
    times.extend(upper.check_times(t_end, 0));
    for (t, side) in times {
        if !order_leq(&lower.eval_side(t, side), &upper.eval_side(t, side))? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub(crate) fn sort_dedup<T: Real>(v: &mut Vec<T>) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    v.dedup();
}

/// `points` equally spaced times on `[0, t_end]`, endpoints included.
pub(crate) fn uniform_grid<T: Real>(t_end: T, points: usize) -> Vec<T> {
    match points {
        0 => Vec::new(),
        1 => vec![T::zero()],
        _ => (0..points).map(|i| t_end * lit::<T>(i as f64 / (points - 1) as f64)).collect(),
    }
}

fn mat<T: Real>(y: &[T], n: usize, offset: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(n, n, &y[offset..offset + n * n])
}

fn same_data<T: Real>(a: &Operator<T>, b: &Operator<T>) -> bool {
    let scale = T::one() + a.norm() + b.norm();
    (a.matrix() - b.matrix()).norm() <= T::tol(1e-14) * scale
}

// ---------------------------------------------------------------------------
// Riccati flow

struct RiccatiSystem<'a, T: Real> {
    profile: &'a CurvatureProfile<T>,
}

impl<T: Real> System<T> for RiccatiSystem<'_, T> {
    fn dim(&self) -> usize {
        self.profile.dim().pow(2)
    }

    fn rhs(&self, t: T, y: &[T], dy: &mut [T], side: Side) {
        let n = self.profile.dim();
        let s = mat(y, n, 0);
        let d = &s * &s + self.profile.matrix_side(t, side);
        dy.copy_from_slice(d.as_slice());
    }

    /// Replaces `S` by its self-adjoint part `½(S + G⁻¹SᵀG)`.
    fn project(&self, _t: T, y: &mut [T]) {
        let n = self.profile.dim();
        let s = mat(y, n, 0);
        let sym = (&s + self.profile.space().adjoint(&s)) * lit::<T>(0.5);
        y.copy_from_slice(sym.as_slice());
    }

    fn escape_norm(&self, y: &[T]) -> Option<T> {
        Some(y.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt())
    }

    fn breakpoints(&self) -> Vec<T> {
        self.profile.breakpoints()
    }
}

/// Finite escape record of a Riccati trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowUp<T> {
    pub t_star: T,
    pub lower: T,
    pub upper: T,
    pub bracket_width: T,
}

/// Solution of `S′ = S² + R`, `S(0) = S₀`, with dense output.
#[derive(Debug, Clone)]
pub struct RiccatiTrajectory<T: Real> {
    profile: CurvatureProfile<T>,
    initial: Operator<T>,
    t_end: T,
    solution: Solution<T>,
}

impl<T: Real> RiccatiTrajectory<T> {
    pub fn profile(&self) -> &CurvatureProfile<T> {
        &self.profile
    }

    pub fn initial(&self) -> &Operator<T> {
        &self.initial
    }

    pub fn space(&self) -> &Arc<InnerSpace<T>> {
        self.profile.space()
    }

    /// Requested end of integration.
    pub fn t_end(&self) -> T {
        self.t_end
    }

    /// Last time covered by the solution (`t_end` unless it blew up).
    pub fn domain_end(&self) -> T {
        self.solution.t_last()
    }

    pub fn solution(&self) -> &Solution<T> {
        &self.solution
    }

    pub fn blow_up(&self) -> Option<BlowUp<T>> {
        match self.solution.termination {
            Termination::BlowUp { t_star, lower, upper } => {
                Some(BlowUp { t_star, lower, upper, bracket_width: upper - lower })
            }
            _ => None,
        }
    }

    /// `true` when the solution exists on all of `[0, b]`.
    pub fn reaches(&self, b: T) -> bool {
        self.blow_up().is_none() && self.domain_end() >= b
    }

    pub fn native_times(&self) -> Vec<T> {
        self.solution.times()
    }

    pub fn samples(&self) -> Vec<(T, Operator<T>)> {
        let n = self.profile.dim();
        self.solution
            .states()
            .map(|(t, y)| (t, Operator::new(self.space().clone(), mat(y, n, 0)).expect("dimension")))
            .collect()
    }

    /// Dense-output value of `S(t)`, symmetrized; `None` off the domain.
    pub fn at(&self, t: T) -> Option<Operator<T>> {
        let y = self.solution.eval(t)?;
        let op = Operator::new(self.space().clone(), mat(&y, self.profile.dim(), 0)).ok()?;
        Some(op.self_adjoint_part())
    }

    /// Derivative of the dense output at `t`.
    pub fn derivative_at(&self, t: T) -> Option<Operator<T>> {
        let y = self.solution.eval_derivative(t)?;
        Operator::new(self.space().clone(), mat(&y, self.profile.dim(), 0)).ok()
    }

    /// `‖S′ − S² − R‖` from the dense output at `t`.
    pub fn residual_at(&self, t: T) -> Option<T> {
        let s = self.at(t)?;
        let ds = self.derivative_at(t)?;
        let r = self.profile.eval(t);
        Some((ds.matrix() - s.matrix() * s.matrix() - r.matrix()).norm())
    }
}

fn check_termination<T: Real>(sol: &Solution<T>) -> Result<()> {
    match sol.termination {
        Termination::StiffFailure { t, h } => Err(RiccatiError::StiffFailure { t: t.to_f64(), h: h.to_f64() }),
        Termination::MaxSteps { t } => Err(RiccatiError::MaxSteps(t.to_f64())),
        _ => Ok(()),
    }
}

fn check_t_end<T: Real>(t_end: T) -> Result<()> {
    if finite(t_end) && t_end > T::zero() {
        Ok(())
    } else {
        Err(RiccatiError::Invalid(format!("t_end must be positive and finite, got {t_end}")))
    }
}

/// Integrates `S′ = S² + R(t)` from `S(0) = s0` up to `t_end` or blow-up.
pub fn integrate_riccati<T: Real>(
    profile: &CurvatureProfile<T>,
    s0: &Operator<T>,
    t_end: T,
    controls: &Controls,
) -> Result<RiccatiTrajectory<T>> {
    require_space(profile.space(), s0)?;
    require_self_adjoint(s0)?;
    check_t_end(t_end)?;
    let sys = RiccatiSystem { profile };
    let solution = integrate(&sys, T::zero(), s0.matrix().as_slice(), t_end, controls);
    check_termination(&solution)?;
    Ok(RiccatiTrajectory { profile: profile.clone(), initial: s0.clone(), t_end, solution })
}

// ---------------------------------------------------------------------------
// Jacobi flow

struct JacobiSystem<'a, T: Real> {
    profile: &'a CurvatureProfile<T>,
}

impl<T: Real> System<T> for JacobiSystem<'_, T> {
    fn dim(&self) -> usize {
        2 * self.profile.dim().pow(2)
    }

    fn rhs(&self, t: T, y: &[T], dy: &mut [T], side: Side) {
        let n = self.profile.dim();
        let nn = n * n;
        dy[..nn].copy_from_slice(&y[nn..]);
        let f = mat(y, n, 0);
        let d = -(self.profile.matrix_side(t, side) * f);
        dy[nn..].copy_from_slice(d.as_slice());
    }

    fn breakpoints(&self) -> Vec<T> {
        self.profile.breakpoints()
    }
}

/// Solution of `F″ + R F = 0` with its singular times.
#[derive(Debug, Clone)]
pub struct JacobiTrajectory<T: Real> {
    profile: CurvatureProfile<T>,
    f0: DMatrix<T>,
    f0_prime: DMatrix<T>,
    t_end: T,
    solution: Solution<T>,
    singular_times: Vec<T>,
    cutoff: T,
}

impl<T: Real> JacobiTrajectory<T> {
    pub fn profile(&self) -> &CurvatureProfile<T> {
        &self.profile
    }

    pub fn space(&self) -> &Arc<InnerSpace<T>> {
        self.profile.space()
    }

    pub fn initial(&self) -> (&DMatrix<T>, &DMatrix<T>) {
        (&self.f0, &self.f0_prime)
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn domain_end(&self) -> T {
        self.solution.t_last()
    }

    pub fn solution(&self) -> &Solution<T> {
        &self.solution
    }

    /// Times where `F` is singular, in increasing order.
    pub fn singular_times(&self) -> &[T] {
        &self.singular_times
    }

    /// Shape operators are only formed for `t ≥ t_min_cutoff`.
    pub fn t_min_cutoff(&self) -> T {
        self.cutoff
    }

    /// `(F(t), F′(t))` from the dense output.
    pub fn at(&self, t: T) -> Option<(DMatrix<T>, DMatrix<T>)> {
        let y = self.solution.eval(t)?;
        let n = self.profile.dim();
        Some((mat(&y, n, 0), mat(&y, n, n * n)))
    }

    pub fn samples(&self) -> Vec<(T, DMatrix<T>, DMatrix<T>)> {
        let n = self.profile.dim();
        self.solution.states().map(|(t, y)| (t, mat(y, n, 0), mat(y, n, n * n))).collect()
    }

    pub fn det_at(&self, t: T) -> Option<T> {
        self.at(t).map(|(f, _)| f.determinant())
    }

    /// `F*F′ − F′*F` with `X* = G⁻¹XᵀG`.
    pub fn wronskian_at(&self, t: T) -> Option<DMatrix<T>> {
        let (f, fp) = self.at(t)?;
        Some(self.wronskian(&f, &fp))
    }

    fn wronskian(&self, f: &DMatrix<T>, fp: &DMatrix<T>) -> DMatrix<T> {
        let sp = self.space();
        sp.adjoint(f) * fp - sp.adjoint(fp) * f
    }

    /// Largest deviation of the Wronskian from its initial value over the
    /// native samples, relative to `1 + max ‖F‖·‖F′‖`.
    pub fn wronskian_drift(&self) -> T {
        let w0 = self.wronskian(&self.f0, &self.f0_prime);
        let mut scale = T::one();
        let mut worst = T::zero();
        for (_, f, fp) in self.samples() {
            let s = f.norm() * fp.norm();
            if s > scale {
                scale = s;
            }
            let d = (self.wronskian(&f, &fp) - &w0).norm();
            if d > worst {
                worst = d;
            }
        }
        worst / scale
    }

    fn nearest_singular(&self, t: T) -> Option<(T, T)> {
        self.singular_times
            .iter()
            .map(|s| (*s, (*s - t).abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"))
    }
}

fn sigma_min<T: Real>(f: &DMatrix<T>) -> T {
    f.singular_values().iter().fold(T::max_value().unwrap_or(T::one()), |m, v| if *v < m { *v } else { m })
}

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_min<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> T {
    let g = lit::<T>(0.618_033_988_749_894_9);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) * lit::<T>(0.5)
}

/// Locates zeros of `det F` on `[t_lo, t_last]`: sign changes are bisected,
/// and local minima of `σ_min(F)` catch zeros of even multiplicity.
fn locate_singular_times<T: Real>(sol: &Solution<T>, n: usize, t_lo: T) -> Vec<T> {
    let f_at = |t: T| sol.eval(t).map(|y| mat(&y, n, 0));
    let mut grid = Vec::new();
    for step in &sol.steps {
        for k in 0..8 {
            grid.push(step.t0 + step.h * lit::<T>(k as f64 / 8.0));
        }
    }
    grid.push(sol.t_last());
    grid.retain(|t| *t >= t_lo);
    if grid.len() < 2 {
        return Vec::new();
    }
    let vals: Vec<(T, T, T)> = grid
        .iter()
        .map(|t| {
            let f = f_at(*t).expect("grid inside domain");
            (f.determinant(), sigma_min(&f), f.norm())
        })
        .collect();
    let bisect_tol = T::tol(1e-10);
    let mut roots = Vec::new();
    for i in 0..grid.len() - 1 {
        let (da, db) = (vals[i].0, vals[i + 1].0);
        if da == T::zero() && vals[i].1 <= T::tol(1e-12) * (T::one() + vals[i].2) {
            roots.push(grid[i]);
        } else if da * db < T::zero() {
            let (mut a, mut b) = (grid[i], grid[i + 1]);
            let mut fa = da;
            while b - a > bisect_tol {
                let m = (a + b) * lit::<T>(0.5);
                let fm = f_at(m).expect("inside").determinant();
                if fm == T::zero() {
                    a = m;
                    b = m;
                    break;
                }
                if (fm < T::zero()) == (fa < T::zero()) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push((a + b) * lit::<T>(0.5));
        }
    }
    for i in 1..grid.len() - 1 {
        let (prev, cur, next) = (vals[i - 1].1, vals[i].1, vals[i + 1].1);
        if cur <= prev && cur <= next && cur <= lit::<T>(1e-2) * (T::one() + vals[i].2) {
            let t = golden_min(|t| sigma_min(&f_at(t).expect("inside")), grid[i - 1], grid[i + 1], bisect_tol);
            let f = f_at(t).expect("inside");
            if sigma_min(&f) <= T::tol(1e-7) * (T::one() + f.norm()) {
                roots.push(t);
            }
        }
    }
    sort_dedup(&mut roots);
    let sep = lit::<T>(SINGULAR_EXCLUSION);
    let mut out: Vec<T> = Vec::new();
    for r in roots {
        if out.last().is_none_or(|l| r - *l > sep) {
            out.push(r);
        }
    }
    out
}

fn jacobi_with_cutoff<T: Real>(
    profile: &CurvatureProfile<T>,
    f0: DMatrix<T>,
    f0_prime: DMatrix<T>,
    t_end: T,
    cutoff: T,
    controls: &Controls,
) -> Result<JacobiTrajectory<T>> {
    let n = profile.dim();
    for m in [&f0, &f0_prime] {
        if m.nrows() != n || m.ncols() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: m.nrows().max(m.ncols()) }.into());
        }
    }
    check_t_end(t_end)?;
    let mut y0 = f0.as_slice().to_vec();
    y0.extend_from_slice(f0_prime.as_slice());
    let sys = JacobiSystem { profile };
    let solution = integrate(&sys, T::zero(), &y0, t_end, controls);
    check_termination(&solution)?;
    let t_lo = if cutoff > T::zero() { cutoff } else { T::zero() };
    let mut singular_times = locate_singular_times(&solution, n, t_lo);
    if cutoff == T::zero() {
        singular_times.retain(|t| *t > T::zero() || f0.determinant() == T::zero());
    }
    Ok(JacobiTrajectory { profile: profile.clone(), f0, f0_prime, t_end, solution, singular_times, cutoff })
}

/// Integrates `F″ + R F = 0` from `(F0, F0′)` and records singular times.
pub fn integrate_jacobi<T: Real>(
    profile: &CurvatureProfile<T>,
    f0: &Operator<T>,
    f0_prime: &Operator<T>,
    t_end: T,
    controls: &Controls,
) -> Result<JacobiTrajectory<T>> {
    require_space(profile.space(), f0)?;
    require_space(profile.space(), f0_prime)?;
    jacobi_with_cutoff(profile, f0.matrix().clone(), f0_prime.matrix().clone(), t_end, T::zero(), controls)
}

/// `S(t) = −F′(t)F(t)⁻¹`, refused near singular times and below the tube cutoff.
pub fn shape_from_jacobi<T: Real>(j: &JacobiTrajectory<T>, t: T) -> Result<Operator<T>> {
    if t < T::zero() || t > j.domain_end() {
        return Err(RiccatiError::Invalid(format!("t = {t} outside [0, {}]", j.domain_end())));
    }
    if j.cutoff > T::zero() && t < j.cutoff {
        return Err(RiccatiError::BelowCutoff { t: t.to_f64(), cutoff: j.cutoff.to_f64() });
    }
    let near = |nearest: T| RiccatiError::NearSingular {
        t: t.to_f64(),
        nearest: nearest.to_f64(),
        distance: (nearest - t).abs().to_f64(),
    };
    if let Some((s, d)) = j.nearest_singular(t) {
        if d < lit::<T>(SINGULAR_EXCLUSION) {
            return Err(near(s));
        }
    }
    let (f, fp) = j.at(t).expect("inside domain");
    let nearest = j.nearest_singular(t).map_or(t, |p| p.0);
    let inv = f.try_inverse().ok_or_else(|| near(nearest))?;
    if !inv.iter().all(|v| finite(*v)) {
        return Err(near(nearest));
    }
    Ok(Operator::new(j.space().clone(), -(fp * inv))?)
}

// ---------------------------------------------------------------------------
// Comparison statements

#[derive(Debug, Clone)]
pub struct Comparison<T: Real> {
    pub holds: bool,
    /// `(t, least eigenvalue of G·(S₂ − S₁))` on the common grid.
    pub min_gap_curve: Vec<(T, T)>,
    /// Most negative gap and where it occurred.
    pub worst: (T, T),
    /// End of the common domain.
    pub t_common: T,
}

/// Checks `S₁(t) ≤ S₂(t)` on the common domain of two trajectories.
///
/// The grid is 512 uniform points plus both trajectories' native steps. The
/// gap passes when its least eigenvalue is at least
/// `−1e-7·max(1, ‖G·S₁‖, ‖G·S₂‖)`, so the test stays meaningful as the
/// operators grow towards a blow-up.
pub fn compare_trajectories<T: Real>(t1: &RiccatiTrajectory<T>, t2: &RiccatiTrajectory<T>) -> Result<Comparison<T>> {
    if !same_space(t1.space(), t2.space()) {
        return Err(LinalgError::SpaceMismatch.into());
    }
    let tc = if t1.domain_end() < t2.domain_end() { t1.domain_end() } else { t2.domain_end() };
    if tc <= T::zero() {
        return Err(RiccatiError::Inconclusive("trajectories share no domain beyond t = 0".into()));
    }
    let mut grid = uniform_grid(tc, COMPARISON_POINTS);
    grid.extend(t1.native_times().into_iter().chain(t2.native_times()).filter(|t| *t <= tc));
    sort_dedup(&mut grid);
    let tol = lit::<T>(COMPARISON_TOL);
    let mut holds = true;
    let mut worst = (T::zero(), T::max_value().unwrap_or(T::one()));
    let mut curve = Vec::with_capacity(grid.len());
    for t in grid {
        let (s1, s2) = match (t1.at(t), t2.at(t)) {
            (Some(a), Some(b)) => (a, b),
            _ => continue,
        };
        let gap = (&s2 - &s1).self_adjoint_part();
        let report = psd_check(&gap)?;
        let lam = report.min_quadratic_eigenvalue;
        let scale = [T::one(), s1.quadratic().norm(), s2.quadratic().norm()]
            .into_iter()
            .fold(T::one(), |m, v| if v > m { v } else { m });
        if lam < -tol * scale {
            holds = false;
        }
        if lam < worst.1 {
            worst = (t, lam);
        }
        curve.push((t, lam));
    }
    Ok(Comparison { holds, min_gap_curve: curve, worst, t_common: tc })
}

#[derive(Debug, Clone)]
pub struct RigidityReport<T: Real> {
    /// `S₂(b) − S₁(b)`.
    pub gap: Operator<T>,
    pub gap_min_eigenvalue: T,
    pub gap_norm: T,
    /// Initial operators and profiles coincide on the check grid.
    pub data_identical: bool,
    /// `S₁(b) ≠ S₂(b)` beyond integration noise.
    pub distinct: bool,
    /// The gap is positive definite.
    pub strictly_positive: bool,
    /// Identical data gives a zero gap; differing data gives a nonzero gap.
    pub consistent: bool,
}

/// Rigidity in the comparison theorem: `S₁(b) = S₂(b)` forces equal data.
pub fn rigidity_probe<T: Real>(
    r1: &CurvatureProfile<T>,
    r2: &CurvatureProfile<T>,
    a1: &Operator<T>,
    a2: &Operator<T>,
    b: T,
    controls: &Controls,
) -> Result<RigidityReport<T>> {
    if !order_leq(a1, a2)? {
        return Err(RiccatiError::Precondition("A₁ ≤ A₂ fails".into()));
    }
    if !profiles_ordered(r1, r2, b)? {
        return Err(RiccatiError::Precondition("R₁ ≤ R₂ fails on the check grid".into()));
    }
    let t1 = integrate_riccati(r1, a1, b, controls)?;
    let t2 = integrate_riccati(r2, a2, b, controls)?;
    if !t1.reaches(b) || !t2.reaches(b) {
        return Err(RiccatiError::Inconclusive("a trajectory blows up before b".into()));
    }
    let (s1, s2) = (t1.at(b).expect("reached"), t2.at(b).expect("reached"));
    let gap = (&s2 - &s1).self_adjoint_part();
    let report = psd_check(&gap)?;
    let gap_norm = gap.norm();
    let scale = T::one() + s1.norm() + s2.norm();
    let noise = T::tol(1e-9) * scale;
    let data_identical = same_data(a1, a2)
        && r1.check_times(b, 257).into_iter().chain(r2.check_times(b, 0)).all(|(t, side)| {
            same_data(&r1.eval_side(t, side), &r2.eval_side(t, side))
        });
    let distinct = gap_norm > noise;
    let consistent = data_identical != distinct;
    Ok(RigidityReport {
        gap,
        gap_min_eigenvalue: report.min_quadratic_eigenvalue,
        gap_norm,
        data_identical,
        distinct,
        strictly_positive: report.min_quadratic_eigenvalue > noise,
        consistent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BracketReport {
    /// If the outer trajectories reach `b`, so does the middle one.
    pub holds: bool,
    pub reached: [bool; 3],
}

/// Two-sided domain statement for sandwiched data `R₁ ≤ R₂ ≤ R₃`, `S₁(0) ≤ S₂(0) ≤ S₃(0)`.
pub fn domain_bracket_check<T: Real>(
    profiles: [&CurvatureProfile<T>; 3],
    inits: [&Operator<T>; 3],
    b: T,
    controls: &Controls,
) -> Result<BracketReport> {
    for k in 0..2 {
        if !order_leq(inits[k], inits[k + 1])? {
            return Err(RiccatiError::Precondition(format!("S{}(0) ≤ S{}(0) fails", k + 1, k + 2)));
        }
        if !profiles_ordered(profiles[k], profiles[k + 1], b)? {
            return Err(RiccatiError::Precondition(format!("R{} ≤ R{} fails", k + 1, k + 2)));
        }
    }
    let mut reached = [false; 3];
    for k in 0..3 {
        reached[k] = integrate_riccati(profiles[k], inits[k], b, controls)?.reaches(b);
    }
    Ok(BracketReport { holds: !(reached[0] && reached[2]) || reached[1], reached })
}

// ---------------------------------------------------------------------------
// Trace channel

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample<T> {
    pub t: T,
    pub trace_s: T,
    pub trace_s2: T,
    pub trace_r: T,
    pub trace_ds: T,
    /// `|tr S′ − tr S² − tr R|`.
    pub residual: T,
    /// `1 + |tr S²| + |tr R|`, the scale `residual` is judged against.
    pub scale: T,
    /// `m·tr S² − (tr S)²`, nonnegative by Cauchy–Schwarz.
    pub cs_gap: T,
    pub cs_equality: bool,
    /// `S` is a multiple of the identity.
    pub umbilic: bool,
    /// Mean curvature `H = tr S / m`.
    pub mean_curvature: T,
    /// `H′ − H² − tr R / m`.
    pub normalized_slack: T,
    /// `tr S′ − (tr S)²/m − tr R`.
    pub trace_slack: T,
    /// `H′ − m·H² − tr R`, the displayed form read with `H = tr S / m`.
    pub displayed_slack: T,
}

#[derive(Debug, Clone)]
pub struct TraceReport<T: Real> {
    pub samples: Vec<TraceSample<T>>,
    /// Largest `residual / scale`.
    pub max_relative_residual: T,
    pub max_residual: T,
    pub cs_holds: bool,
    pub cs_equality_times: Vec<T>,
    /// Equality in Cauchy–Schwarz occurs exactly at umbilic samples.
    pub equality_matches_umbilic: bool,
}

/// Trace identity and Cauchy–Schwarz bound along a trajectory on a definite slice.
///
/// Sampled at step midpoints, where the dense output is a genuine
/// interpolant rather than a stored stage.
pub fn trace_channel<T: Real>(traj: &RiccatiTrajectory<T>) -> Result<TraceReport<T>> {
    let space = traj.space();
    if !space.is_definite() {
        return Err(RiccatiError::IndefiniteSlice);
    }
    let m = lit::<T>(space.dim() as f64);
    let tol = T::tol(1e-8);
    let mut samples = Vec::new();
    // Step ends: there the dense derivative is the stage value f(t₁, y₁), so
    // the residual measures the stored state rather than interpolation error.
    let n = space.dim();
    let mut y = vec![T::zero(); n * n];
    let mut dy = vec![T::zero(); n * n];
    for step in &traj.solution().steps {
        let t = step.t1();
        y.copy_from_slice(&step.y1);
        step.end_derivative(&mut dy);
        let s = Operator::new(space.clone(), mat(&y, n, 0))?;
        let ds = Operator::new(space.clone(), mat(&dy, n, 0))?;
        let r = traj.profile().eval_side(t, Side::Left);
        let trace_s = s.trace();
        let trace_s2 = (s.matrix() * s.matrix()).trace();
        let trace_r = r.trace();
        let trace_ds = ds.trace();
        let residual = (trace_ds - trace_s2 - trace_r).abs();
        let scale = T::one() + trace_s2.abs() + trace_r.abs();
        let cs_gap = m * trace_s2 - trace_s * trace_s;
        let cs_equality = cs_gap.abs() <= tol * (T::one() + m * trace_s2.abs());
        let h = trace_s / m;
        let dev = s.matrix() - DMatrix::identity(space.dim(), space.dim()) * h;
        let umbilic = dev.norm() <= tol.sqrt() * (T::one() + s.norm());
        let dh = trace_ds / m;
        samples.push(TraceSample {
            t,
            trace_s,
            trace_s2,
            trace_r,
            trace_ds,
            residual,
            scale,
            cs_gap,
            cs_equality,
            umbilic,
            mean_curvature: h,
            normalized_slack: dh - h * h - trace_r / m,
            trace_slack: trace_ds - trace_s * trace_s / m - trace_r,
            displayed_slack: dh - m * h * h - trace_r,
        });
    }
    let max_relative_residual = samples.iter().fold(T::zero(), |a, s| {
        let v = s.residual / s.scale;
        if v > a {
            v
        } else {
            a
        }
    });
    let max_residual = samples.iter().fold(T::zero(), |a, s| if s.residual > a { s.residual } else { a });
    let cs_holds = samples.iter().all(|s| s.cs_gap >= -tol * (T::one() + m * s.trace_s2.abs()));
    let cs_equality_times = samples.iter().filter(|s| s.cs_equality).map(|s| s.t).collect();
    let equality_matches_umbilic = samples.iter().all(|s| s.cs_equality == s.umbilic);
    Ok(TraceReport { samples, max_relative_residual, max_residual, cs_holds, cs_equality_times, equality_matches_umbilic })
}

// ---------------------------------------------------------------------------
// Tubes

/// Jacobi flow for a tube: `F(0) = P`, `F′(0) = −A P + P⊥`.
///
/// `P` and `P⊥` must be complementary projections, orthogonal for the
/// form; `A` must be self-adjoint and live on the range of `P`.
pub fn tube_jacobi<T: Real>(
    p: &Operator<T>,
    p_perp: &Operator<T>,
    a_tangent: &Operator<T>,
    profile: &CurvatureProfile<T>,
    t_end: T,
    controls: &Controls,
) -> Result<JacobiTrajectory<T>> {
    for op in [p, p_perp, a_tangent] {
        require_space(profile.space(), op)?;
    }
    let n = profile.dim();
    let eye = DMatrix::<T>::identity(n, n);
    let tol = T::tol(1e-10);
    let (pm, qm) = (p.matrix(), p_perp.matrix());
    let bad = |what: &str| Err(RiccatiError::Precondition(format!("non-complementary projections: {what}")));
    if (pm + qm - &eye).norm() > tol * lit::<T>(n as f64) {
        return bad("P + P⊥ ≠ I");
    }
    if (pm * pm - pm).norm() > tol * (T::one() + pm.norm()) || (qm * qm - qm).norm() > tol * (T::one() + qm.norm()) {
        return bad("not idempotent");
    }
    if !is_self_adjoint(p) {
        return bad("P is not orthogonal for the form");
    }
    require_self_adjoint(a_tangent)?;
    let am = a_tangent.matrix();
    if (am - pm * am * pm).norm() > tol * (T::one() + am.norm()) {
        return Err(RiccatiError::Precondition("A does not act on the range of P".into()));
    }
    let cutoff = if qm.norm() > tol { lit::<T>(TUBE_CUTOFF) } else { T::zero() };
    let f0_prime = -(am * pm) + qm;
    jacobi_with_cutoff(profile, pm.clone(), f0_prime, t_end, cutoff, controls)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionReport<T> {
    /// `⟨F(r)X, F(r)X⟩`.
    pub lhs: T,
    /// `r²⟨X, X⟩`.
    pub rhs_r2: T,
    /// `⟨X, X⟩ / r²`.
    pub rhs_inv_r2: T,
    /// Largest relative defect of `d/dt⟨FX,FX⟩ = −2⟨SFX, FX⟩` on the grid.
    pub derivative_residual: T,
    pub grid_points: usize,
}

/// Growth of `⟨F X, F X⟩` along a tube, with both candidate bounds.
pub fn tube_expansion_check<T: Real>(
    j: &JacobiTrajectory<T>,
    r: T,
    x: &nalgebra::DVector<T>,
) -> Result<ExpansionReport<T>> {
    let space = j.space().clone();
    if x.len() != space.dim() {
        return Err(LinalgError::DimensionMismatch { expected: space.dim(), got: x.len() }.into());
    }
    if r <= j.cutoff || r <= T::zero() || r > j.domain_end() {
        return Err(RiccatiError::Invalid(format!(
            "r = {r} must lie in ({}, {}]",
            j.cutoff,
            j.domain_end()
        )));
    }
    let quad = |t: T| {
        let (f, _) = j.at(t).expect("inside");
        let fx = f * x;
        space.inner(&fx, &fx)
    };
    let lhs = quad(r);
    let xx = space.inner(x, x);

    let lo = if j.cutoff > T::zero() { j.cutoff } else { lit::<T>(TUBE_CUTOFF) };
    let h0 = lit::<T>(1e-2);
    let span = r - lo;
    let h = if span / lit::<T>(8.0) < h0 { span / lit::<T>(8.0) } else { h0 };
    let top = if r + lit::<T>(2.0) * h <= j.domain_end() { r } else { j.domain_end() - lit::<T>(2.0) * h };
    let start = lo + lit::<T>(2.0) * h;
    let mut worst = T::zero();
    let mut used = 0;
    if top > start {
        let keep_out = lit::<T>(1e-3);
        for i in 0..64 {
            let t = start + (top - start) * lit::<T>(i as f64 / 63.0);
            if j.singular_times().iter().any(|s| (*s - t).abs() < keep_out + lit::<T>(2.0) * h) {
                continue;
            }
            let s = match shape_from_jacobi(j, t) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let fd = (quad(t - h - h) - lit::<T>(8.0) * quad(t - h) + lit::<T>(8.0) * quad(t + h) - quad(t + h + h))
                / (lit::<T>(12.0) * h);
            let (f, _) = j.at(t).expect("inside");
            let fx = f * x;
            let rhs = -lit::<T>(2.0) * s.form(&fx, &fx);
            let rel = (fd - rhs).abs() / (T::one() + rhs.abs());
            if rel > worst {
                worst = rel;
            }
            used += 1;
        }
    }
    Ok(ExpansionReport {
        lhs,
        rhs_r2: r * r * xx,
        rhs_inv_r2: xx / (r * r),
        derivative_residual: worst,
        grid_points: used,
    })
}

// ---------------------------------------------------------------------------
// Scalar model and generators

/// Closed-form solution of `u′ = u² + r`, `u(0) = a`, for constant `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRiccati<T> {
    pub r: T,
    pub a: T,
}

impl<T: Real> ScalarRiccati<T> {
    pub fn new(r: T, a: T) -> Self {
        Self { r, a }
    }

    pub fn u(&self, t: T) -> T {
        let (r, a) = (self.r, self.a);
        if r > T::zero() {
            let w = r.sqrt();
            w * (w * t + (a / w).atan()).tan()
        } else if r == T::zero() {
            a / (T::one() - a * t)
        } else {
            let w = (-r).sqrt();
            if a.abs() < w {
                -w * (w * t - (a / w).atanh()).tanh()
            } else if a.abs() == w {
                a
            } else {
                let c = (w / a).atanh();
                -w / (w * t - c).tanh()
            }
        }
    }

    /// First positive escape time, `None` when `u` exists for all `t ≥ 0`.
    pub fn escape_time(&self) -> Option<T> {
        let (r, a) = (self.r, self.a);
        let half_pi = T::frac_pi_2();
        if r > T::zero() {
            let w = r.sqrt();
            Some((half_pi - (a / w).atan()) / w)
        } else if r == T::zero() {
            (a > T::zero()).then(|| T::one() / a)
        } else {
            let w = (-r).sqrt();
            (a > w).then(|| (w / a).atanh() / w)
        }
    }
}

/// Two piecewise-constant profiles `R₁ ≤ R₂` on shared pieces (at most
/// `max_pieces`), with breaks uniform in `(0, t_end)`.
pub fn random_profile_pair<T: Real, R: Rng>(
    space: &Arc<InnerSpace<T>>,
    t_end: T,
    max_pieces: usize,
    base_scale: f64,
    increment_scale: f64,
    rng: &mut R,
) -> (CurvatureProfile<T>, CurvatureProfile<T>) {
    let pieces = rng.random_range(1..=max_pieces.max(1));
    let mut breaks: Vec<T> =
        (1..pieces).map(|_| t_end * lit::<T>(rng.random_range(0.05..0.95))).collect();
    sort_dedup(&mut breaks);
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for _ in 0..=breaks.len() {
        let (a, b) = monotone_pair_with(space, base_scale, increment_scale, rng);
        lo.push(a);
        hi.push(b);
    }
    (
        CurvatureProfile::piecewise(breaks.clone(), lo).expect("generated pieces are self-adjoint"),
        CurvatureProfile::piecewise(breaks, hi).expect("generated pieces are self-adjoint"),
    )
}

/// `base + G⁻¹Q` piecewise, `Q` PSD on each piece: a profile above `base`.
pub fn random_psd_shift<T: Real, R: Rng>(
    base: &CurvatureProfile<T>,
    t_end: T,
    max_pieces: usize,
    scale: f64,
    rng: &mut R,
) -> CurvatureProfile<T> {
    let space = base.space().clone();
    let pieces = rng.random_range(1..=max_pieces.max(1));
    let mut breaks: Vec<T> =
        (1..pieces).map(|_| t_end * lit::<T>(rng.random_range(0.05..0.95))).collect();
    sort_dedup(&mut breaks);
    let ops = (0..=breaks.len()).map(|_| random_psd_operator(&space, scale, rng)).collect();
    let shift = CurvatureProfile::piecewise(breaks, ops).expect("PSD pieces are self-adjoint");
    CurvatureProfile::sum(vec![base.clone(), shift]).expect("same space")
}

/// Sandwiched data `R₁ ≤ R₂ ≤ R₃`, `S₁ ≤ S₂ ≤ S₃` for the domain statement.
pub fn random_sandwich<T: Real, R: Rng>(
    space: &Arc<InnerSpace<T>>,
    t_end: T,
    rng: &mut R,
) -> ([CurvatureProfile<T>; 3], [Operator<T>; 3]) {
    let (r1, r2) = random_profile_pair(space, t_end, 4, 1.0, 1.0, rng);
    let r3 = random_psd_shift(&r2, t_end, 4, 1.0, rng);
    let (s1, s2) = monotone_pair_with(space, 0.5, 0.5, rng);
    let s3 = &s2 + &random_psd_operator(space, 0.5, rng);
    ([r1, r2, r3], [s1, s2, s3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector, DVector};
    use std::f64::consts::FRAC_PI_2;

    fn lorentz() -> Arc<InnerSpace<f64>> {
        Arc::new(InnerSpace::from_gram(dmatrix![1.0, 0.0; 0.0, -1.0]).unwrap())
    }

    fn diag(space: &Arc<InnerSpace<f64>>, d: &[f64]) -> Operator<f64> {
        Operator::diagonal(space.clone(), d).unwrap()
    }

    fn c() -> Controls {
        Controls::default()
    }

    #[test]
    fn counterexample_blows_up_at_quarter_turn() {
        let g = lorentz();
        let r = CurvatureProfile::constant(diag(&g, &[1.0, 0.0])).unwrap();
        let tr = integrate_riccati(&r, &Operator::zero(g.clone()), 10.0, &c()).unwrap();
        let bu = tr.blow_up().expect("blow-up");
        assert!((bu.t_star - FRAC_PI_2).abs() < 1e-6, "{bu:?}");
        assert!(bu.bracket_width <= 1e-6);
        for (t, s) in tr.samples() {
            if t < 1.4 {
                assert!((s.matrix()[(0, 0)] - t.tan()).abs() < 1e-8 * (1.0 + t.tan().powi(2)));
                assert!(s.matrix()[(1, 1)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_profile_stays_zero() {
        let g = lorentz();
        let tr = integrate_riccati(&CurvatureProfile::zero(g.clone()), &Operator::zero(g), 10.0, &c()).unwrap();
        assert!(tr.blow_up().is_none());
        assert!(tr.samples().iter().all(|(_, s)| s.norm() == 0.0));
    }

    #[test]
    fn euclidean_identity_profile_is_tangent() {
        let e = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let r = CurvatureProfile::constant(Operator::identity(e.clone())).unwrap();
        let tr = integrate_riccati(&r, &Operator::zero(e), FRAC_PI_2 - 0.1, &c()).unwrap();
        for k in 0..=100 {
            let t = (FRAC_PI_2 - 0.1) * k as f64 / 100.0;
            let s = tr.at(t).unwrap();
            assert!((s.matrix()[(0, 0)] - t.tan()).abs() < 1e-8);
            assert!((s.matrix()[(1, 1)] - t.tan()).abs() < 1e-8);
            assert!(s.matrix()[(0, 1)].abs() < 1e-12);
        }
    }

    #[test]
    fn non_self_adjoint_initial_rejected() {
        let g = lorentz();
        let bad = Operator::new(g.clone(), dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let r = integrate_riccati(&CurvatureProfile::zero(g), &bad, 1.0, &c());
        assert!(matches!(r, Err(RiccatiError::Linalg(LinalgError::NotSelfAdjoint(_)))));
    }

    #[test]
    fn jacobi_counterexample_and_shape() {
        let g = lorentz();
        let r = CurvatureProfile::constant(diag(&g, &[1.0, 0.0])).unwrap();
        let j = integrate_jacobi(&r, &Operator::identity(g.clone()), &Operator::zero(g.clone()), 3.0, &c()).unwrap();
        assert_eq!(j.singular_times().len(), 1);
        assert!((j.singular_times()[0] - FRAC_PI_2).abs() < 1e-8);
        let (f, _) = j.at(1.0).unwrap();
        assert!((f[(0, 0)] - 1f64.cos()).abs() < 1e-9 && (f[(1, 1)] - 1.0).abs() < 1e-12);
        let s = shape_from_jacobi(&j, 1.0).unwrap();
        assert!((s.matrix()[(0, 0)] - 1f64.tan()).abs() < 1e-8);
        assert!(matches!(shape_from_jacobi(&j, FRAC_PI_2 + 1e-7), Err(RiccatiError::NearSingular { .. })));
        assert!(j.wronskian_drift() < 1e-9);
    }

    #[test]
    fn even_multiplicity_zero_is_found() {
        let e = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let r = CurvatureProfile::constant(Operator::identity(e.clone())).unwrap();
        let j = integrate_jacobi(&r, &Operator::identity(e.clone()), &Operator::zero(e), 4.0, &c()).unwrap();
        assert_eq!(j.singular_times().len(), 1, "{:?}", j.singular_times());
        assert!((j.singular_times()[0] - FRAC_PI_2).abs() < 1e-8);
        let s = shape_from_jacobi(&j, 0.5).unwrap();
        assert!((s.matrix()[(0, 0)] - 0.5f64.tan()).abs() < 1e-6);
    }

    #[test]
    fn comparison_of_counterexample_pair() {
        let g = lorentz();
        let z = Operator::zero(g.clone());
        let r2 = CurvatureProfile::constant(diag(&g, &[1.0, 0.0])).unwrap();
        let b = FRAC_PI_2 - 0.1;
        let t1 = integrate_riccati(&CurvatureProfile::zero(g.clone()), &z, b, &c()).unwrap();
        let t2 = integrate_riccati(&r2, &z, b, &c()).unwrap();
        let cmp = compare_trajectories(&t1, &t2).unwrap();
        assert!(cmp.holds);
        assert!(cmp.min_gap_curve.len() >= COMPARISON_POINTS);
        let rep = rigidity_probe(&CurvatureProfile::zero(g.clone()), &r2, &z, &z, 1.0, &c()).unwrap();
        assert!(rep.distinct && rep.consistent && !rep.data_identical);
        assert!((rep.gap.matrix()[(0, 0)] - 1f64.tan()).abs() < 1e-8);
        let same = rigidity_probe(&r2, &r2, &z, &z, 1.0, &c()).unwrap();
        assert!(same.data_identical && same.gap_norm < 1e-9 && same.consistent);
    }

    #[test]
    fn windowed_increment_gives_gap() {
        let e = Arc::new(InnerSpace::<f64>::euclidean(3).unwrap());
        let q = Operator::from_quadratic(e.clone(), &dmatrix![1.0, 0.5, 0.0; 0.5, 1.0, 0.0; 0.0, 0.0, 0.2]).unwrap();
        let r1 = CurvatureProfile::zero(e.clone());
        let inc = CurvatureProfile::window(q.scaled(0.1), 0.2, 0.4).unwrap();
        let r2 = CurvatureProfile::sum(vec![r1.clone(), inc]).unwrap();
        let z = Operator::zero(e);
        let rep = rigidity_probe(&r1, &r2, &z, &z, 1.0, &c()).unwrap();
        assert!(rep.distinct && rep.strictly_positive && rep.consistent);
    }

    #[test]
    fn bracket_closed_form() {
        let e = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let i = Operator::identity(e.clone());
        let ps = [
            CurvatureProfile::constant(i.scaled(-1.0)).unwrap(),
            CurvatureProfile::zero(e.clone()),
            CurvatureProfile::constant(i).unwrap(),
        ];
        let z = Operator::zero(e);
        let rep = domain_bracket_check([&ps[0], &ps[1], &ps[2]], [&z, &z, &z], 1.0, &c()).unwrap();
        assert!(rep.holds && rep.reached == [true; 3]);
        let bad = domain_bracket_check([&ps[2], &ps[1], &ps[0]], [&z, &z, &z], 1.0, &c());
        assert!(matches!(bad, Err(RiccatiError::Precondition(_))));
    }

    #[test]
    fn trace_channel_umbilic_and_not() {
        let e = Arc::new(InnerSpace::<f64>::euclidean(3).unwrap());
        let i = Operator::identity(e.clone());
        let r = CurvatureProfile::constant(i.scaled(-4.0)).unwrap();
        let tr = integrate_riccati(&r, &i.scaled(2.0), 2.0, &c()).unwrap();
        let rep = trace_channel(&tr).unwrap();
        assert!(rep.samples.iter().all(|s| s.cs_equality && s.umbilic));
        assert!(rep.max_residual < 1e-8);

        let e2 = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let s0 = Operator::diagonal(e2.clone(), &[1.0, 2.0]).unwrap();
        let tr = integrate_riccati(&CurvatureProfile::zero(e2), &s0, 0.45, &c()).unwrap();
        let rep = trace_channel(&tr).unwrap();
        assert!(rep.cs_holds && rep.cs_equality_times.is_empty() && rep.equality_matches_umbilic);
        assert!(rep.samples.iter().all(|s| s.normalized_slack > 0.0));

        let g = lorentz();
        let tr = integrate_riccati(&CurvatureProfile::zero(g.clone()), &Operator::zero(g), 1.0, &c()).unwrap();
        assert_eq!(trace_channel(&tr).unwrap_err(), RiccatiError::IndefiniteSlice);
    }

    #[test]
    fn point_tubes() {
        let e = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let (z, i) = (Operator::zero(e.clone()), Operator::identity(e.clone()));
        let flat = tube_jacobi(&z, &i, &z, &CurvatureProfile::zero(e.clone()), 3.0, &c()).unwrap();
        assert!(flat.singular_times().is_empty());
        let (f, _) = flat.at(2.0).unwrap();
        assert!((f.clone() - DMatrix::identity(2, 2) * 2.0).norm() < 1e-12);
        let x: DVector<f64> = dvector![1.0, 0.0];
        let rep = tube_expansion_check(&flat, 2.0, &x).unwrap();
        assert!((rep.lhs - 4.0).abs() < 1e-10 && rep.rhs_r2 == 4.0 && rep.rhs_inv_r2 == 0.25);
        assert!(rep.derivative_residual < 1e-7 && rep.grid_points > 30);
        assert!(matches!(shape_from_jacobi(&flat, 1e-4), Err(RiccatiError::BelowCutoff { .. })));

        let hyp = CurvatureProfile::constant(i.scaled(-1.0)).unwrap();
        let tube = tube_jacobi(&z, &i, &z, &hyp, 2.0, &c()).unwrap();
        let rep = tube_expansion_check(&tube, 1.0, &x).unwrap();
        assert!((rep.lhs - 1f64.sinh().powi(2)).abs() < 1e-9);
        assert!(rep.derivative_residual < 1e-7);

        let bad = tube_jacobi(&i, &i, &z, &hyp, 1.0, &c());
        assert!(matches!(bad, Err(RiccatiError::Precondition(_))));
    }

    #[test]
    fn scalar_model_branches() {
        // Compare each closed form with a direct integration of u′ = u² + r.
        for (r, a) in [(1.0, 0.5), (0.0, 0.7), (-1.0, 0.3), (-1.0, -0.4), (-1.0, 2.0), (-4.0, 2.0)] {
            let m = ScalarRiccati::new(r, a);
            let e = Arc::new(InnerSpace::<f64>::euclidean(1).unwrap());
            let p = CurvatureProfile::constant(Operator::diagonal(e.clone(), &[r]).unwrap()).unwrap();
            let s0 = Operator::diagonal(e, &[a]).unwrap();
            let b = m.escape_time().map_or(3.0, |t| 0.9 * t);
            let tr = integrate_riccati(&p, &s0, b, &c()).unwrap();
            for k in 0..=20 {
                let t = b * k as f64 / 20.0;
                let num = tr.at(t).unwrap().matrix()[(0, 0)];
                assert!((num - m.u(t)).abs() < 1e-7 * (1.0 + num.abs()), "r={r} a={a} t={t}");
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let e = Arc::new(InnerSpace::<f32>::euclidean(2).unwrap());
        let r = CurvatureProfile::constant(Operator::identity(e.clone())).unwrap();
        let ctl = Controls { atol: 1e-5, rtol: 1e-5, ..Controls::default() };
        let tr = integrate_riccati(&r, &Operator::zero(e), 1.0f32, &ctl).unwrap();
        assert!((tr.at(1.0).unwrap().matrix()[(0, 0)] - 1f32.tan()).abs() < 1e-3);
    }
}
