//! Warped-product model spaces `w(t)²g + ε dt²` over a constant-curvature
//! fibre, product examples, and the curvature-bound predicate `R ≥ K₀`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::InnerSpace;
use crate::scalar::{finite, lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WarpError {
    #[error("t = {t} lies outside the warp interval ({lo}, {hi})")]
    OutsideInterval { t: f64, lo: f64, hi: f64 },
    #[error("supplied derivative {which} disagrees with finite differences at t = {t} (residual {residual:e})")]
    DerivativeMismatch { which: &'static str, t: f64, residual: f64 },
    #[error("warp is not positive at t = {0}")]
    NonPositive(f64),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("unknown model id `{0}`")]
    UnknownModel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type Result<T, E = WarpError> = std::result::Result<T, E>;

type Fn1<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// A warping function given as the triple `(w, w′, w″)` on an open interval.
#[derive(Clone)]
pub struct WarpFn<T: Real> {
    w: Fn1<T>,
    dw: Fn1<T>,
    d2w: Fn1<T>,
    lo: T,
    hi: T,
}

impl<T: Real> fmt::Debug for WarpFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WarpFn(({}, {}))", self.lo, self.hi)
    }
}

impl<T: Real> WarpFn<T> {
    /// Builds the triple and checks `w′`, `w″` against central differences
    /// of `w`, `w′` at 33 interior points.
    pub fn new(
        w: impl Fn(T) -> T + Send + Sync + 'static,
        dw: impl Fn(T) -> T + Send + Sync + 'static,
        d2w: impl Fn(T) -> T + Send + Sync + 'static,
        lo: T,
        hi: T,
    ) -> Result<Self> {
        let f = Self { w: Arc::new(w), dw: Arc::new(dw), d2w: Arc::new(d2w), lo, hi };
        f.check_derivatives()?;
        Ok(f)
    }

    pub fn constant(c: T) -> Result<Self> {
        Self::new(move |_| c, |_| T::zero(), |_| T::zero(), lit(f64::NEG_INFINITY), lit(f64::INFINITY))
    }

    pub fn interval(&self) -> (T, T) {
        (self.lo, self.hi)
    }

    /// A compact window of the interval used for sampling: the interval
    /// clipped to `[−2, 2]` and shrunk by 5% at finite ends.
    pub fn sample_window(&self) -> (T, T) {
        let two = lit::<T>(2.0);
        let a = if finite(self.lo) { self.lo } else { -two };
        let b = if finite(self.hi) { self.hi } else { two };
        let a = if a < -two { -two } else { a };
        let b = if b > two { two } else { b };
        let pad = (b - a) * lit::<T>(0.05);
        (if finite(self.lo) && self.lo >= -two { a + pad } else { a }, if finite(self.hi) && self.hi <= two { b - pad } else { b })
    }

    fn check_derivatives(&self) -> Result<()> {
        let (h, tol) = if T::machine_eps() < 1e-10 { (1e-6, 1e-6) } else { (1e-2, 5e-2) };
        let h = lit::<T>(h);
        let (a, b) = self.sample_window();
        for i in 0..33 {
            let t = a + (b - a) * lit::<T>(i as f64 / 32.0);
            let w = (self.w)(t);
            if !(w > T::zero()) {
                return Err(WarpError::NonPositive(t.to_f64()));
            }
            let fd1 = ((self.w)(t + h) - (self.w)(t - h)) / (h + h);
            let fd2 = ((self.dw)(t + h) - (self.dw)(t - h)) / (h + h);
            let d1 = (self.dw)(t);
            let d2 = (self.d2w)(t);
            let r1 = ((fd1 - d1).abs() / (T::one() + d1.abs())).to_f64();
            let r2 = ((fd2 - d2).abs() / (T::one() + d2.abs())).to_f64();
            if r1 > tol {
                return Err(WarpError::DerivativeMismatch { which: "w′", t: t.to_f64(), residual: r1 });
            }
            if r2 > tol {
                return Err(WarpError::DerivativeMismatch { which: "w″", t: t.to_f64(), residual: r2 });
            }
        }
        Ok(())
    }

    pub fn contains(&self, t: T) -> bool {
        t > self.lo && t < self.hi
    }

    /// `(w, w′, w″)` at `t`.
    pub fn eval(&self, t: T) -> Result<(T, T, T)> {
        if !self.contains(t) {
            return Err(WarpError::OutsideInterval { t: t.to_f64(), lo: self.lo.to_f64(), hi: self.hi.to_f64() });
        }
        let w = (self.w)(t);
        if !(w > T::zero()) {
            return Err(WarpError::NonPositive(t.to_f64()));
        }
        Ok((w, (self.dw)(t), (self.d2w)(t)))
    }
}

/// `ḡ = w(t)²g + ε dt²` on `F × I`, with `(F, g)` of constant curvature `K₀`.
#[derive(Debug, Clone)]
pub struct WarpedModel<T: Real> {
    pub fiber_dim: usize,
    pub fiber_index: usize,
    pub fiber_curvature: T,
    pub warp: WarpFn<T>,
    pub eps: i8,
    fiber: InnerSpace<T>,
}

impl<T: Real> WarpedModel<T> {
    pub fn new(fiber_dim: usize, fiber_index: usize, fiber_curvature: T, warp: WarpFn<T>, eps: i8) -> Result<Self> {
        if fiber_dim == 0 || fiber_index > fiber_dim {
            return Err(WarpError::Parameter(format!("fibre dimension {fiber_dim}, index {fiber_index}")));
        }
        if eps != 1 && eps != -1 {
            return Err(WarpError::Parameter(format!("ε must be ±1, got {eps}")));
        }
        let fiber = InnerSpace::standard(fiber_dim, fiber_index).map_err(|e| WarpError::Parameter(e.to_string()))?;
        Ok(Self { fiber_dim, fiber_index, fiber_curvature, warp, eps, fiber })
    }

    pub fn dim(&self) -> usize {
        self.fiber_dim + 1
    }

    pub fn ambient_index(&self) -> usize {
        self.fiber_index + usize::from(self.eps == -1)
    }

    fn eps_t(&self) -> T {
        lit(f64::from(self.eps))
    }

    /// Coefficient of the identity in the slice Weingarten map: `−w′/w`.
    pub fn slice_weingarten(&self, t: T) -> Result<T> {
        let (w, dw, _) = self.warp.eval(t)?;
        Ok(-dw / w)
    }

    /// Coefficient of `X ↦ R̄(X, ∂t)∂t` on slice vectors: `−w″/w`.
    pub fn normal_curvature_operator(&self, t: T) -> Result<T> {
        let (w, _, d2w) = self.warp.eval(t)?;
        Ok(-d2w / w)
    }

    /// Sectional value on slice-tangent planes: `(K₀ − ε w′²)/w²`.
    pub fn ambient_sectional(&self, t: T) -> Result<T> {
        let (w, dw, _) = self.warp.eval(t)?;
        Ok((self.fiber_curvature - self.eps_t() * dw * dw) / (w * w))
    }

    /// `Ric(∂t, ∂t) = −(n−1) w″/w`.
    pub fn ricci_normal(&self, t: T) -> Result<T> {
        Ok(lit::<T>(self.fiber_dim as f64) * self.normal_curvature_operator(t)?)
    }

    fn fiber_form(&self) -> &InnerSpace<T> {
        &self.fiber
    }

    fn check_fiber_vec(&self, v: &DVector<T>) -> Result<()> {
        if v.len() == self.fiber_dim {
            Ok(())
        } else {
            Err(WarpError::Dimension { expected: self.fiber_dim, got: v.len() })
        }
    }

    /// `ḡ(X, Y)` for `X = v + a∂t`, `Y = u + b∂t`.
    pub fn metric(&self, t: T, x: (&DVector<T>, T), y: (&DVector<T>, T)) -> Result<T> {
        self.check_fiber_vec(x.0)?;
        self.check_fiber_vec(y.0)?;
        let (w, _, _) = self.warp.eval(t)?;
        let g = self.fiber_form();
        Ok(w * w * g.inner(x.0, y.0) + self.eps_t() * x.1 * y.1)
    }

    /// `ḡ(R̄(X,Y)Y, X)` for `X = v + a∂t`, `Y = u + b∂t`:
    ///
    /// `−w w″ [a² g(u,u) − 2ab g(v,u) + b² g(v,v)] + w²(K₀ − ε w′²)(g(v,v)g(u,u) − g(v,u)²)`.
    pub fn curvature_quadratic(&self, t: T, x: (&DVector<T>, T), y: (&DVector<T>, T)) -> Result<T> {
        self.check_fiber_vec(x.0)?;
        self.check_fiber_vec(y.0)?;
        let (w, dw, d2w) = self.warp.eval(t)?;
        let g = self.fiber_form();
        let (v, a) = x;
        let (u, b) = y;
        let (vv, uu, vu) = (g.inner(v, v), g.inner(u, u), g.inner(v, u));
        let mixed = a * a * uu - lit::<T>(2.0) * a * b * vu + b * b * vv;
        let fib = vv * uu - vu * vu;
        Ok(-w * d2w * mixed + w * w * (self.fiber_curvature - self.eps_t() * dw * dw) * fib)
    }

    /// `ḡ(X,X)ḡ(Y,Y) − ḡ(X,Y)²`.
    pub fn metric_wedge(&self, t: T, x: (&DVector<T>, T), y: (&DVector<T>, T)) -> Result<T> {
        let xx = self.metric(t, x, x)?;
        let yy = self.metric(t, y, y)?;
        let xy = self.metric(t, x, y)?;
        Ok(xx * yy - xy * xy)
    }

    /// Defect of the Gauss equation for slice vectors `X`, `Y`: intrinsic
    /// slice curvature minus ambient curvature minus the second fundamental
    /// form term `ε(ḡ(SX,X)ḡ(SY,Y) − ḡ(SX,Y)²)`.
    pub fn gauss_equation_residual(&self, t: T, x: &DVector<T>, y: &DVector<T>) -> Result<T> {
        let z = T::zero();
        let (w, _, _) = self.warp.eval(t)?;
        let wedge = self.metric_wedge(t, (x, z), (y, z))?;
        // The slice w²g has constant curvature K₀/w².
        let intrinsic = self.fiber_curvature / (w * w) * wedge;
        let ambient = self.curvature_quadratic(t, (x, z), (y, z))?;
        let s = self.slice_weingarten(t)?;
        let (sx, sy) = (x * s, y * s);
        let h = self.metric(t, (&sx, z), (x, z))? * self.metric(t, (&sy, z), (y, z))?
            - self.metric(t, (&sx, z), (y, z))?.powi(2);
        Ok((intrinsic - ambient - self.eps_t() * h).abs())
    }
}

// ---------------------------------------------------------------------------
// Table 1

/// One row of the table of warped model spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row<T> {
    pub row_id: u8,
    pub alpha: Option<T>,
    pub k0: T,
    pub eps: i8,
    /// Constant curvature of the ambient model.
    pub ambient_curvature: T,
}

impl<T: Real> Table1Row<T> {
    /// Closed-form coefficient `s(t)` of `S_t = s(t)·I`.
    pub fn weingarten(&self, t: T) -> T {
        let a = self.alpha.unwrap_or(T::zero());
        match self.row_id {
            1 => T::one(),
            2 => -T::one(),
            3 | 6 => (t + a).tan(),
            _ => -(t + a).tanh(),
        }
    }

    /// Derivative of [`weingarten`](Self::weingarten).
    pub fn weingarten_derivative(&self, t: T) -> T {
        let a = self.alpha.unwrap_or(T::zero());
        match self.row_id {
            1 | 2 => T::zero(),
            3 | 6 => T::one() / (t + a).cos().powi(2),
            _ => -T::one() / (t + a).cosh().powi(2),
        }
    }

    /// `ε·K̄`, the constant Riccati curvature of the row.
    pub fn riccati_curvature(&self) -> T {
        lit::<T>(f64::from(self.eps)) * self.ambient_curvature
    }

    /// Index of the ambient model over a Riemannian fibre.
    pub fn ambient_index(&self) -> usize {
        usize::from(self.eps == -1)
    }
}

/// Default fibre curvature of each row.
pub fn table1_default_k0(row: u8) -> f64 {
    match row {
        1 | 2 => 0.0,
        3 | 5 => 1.0,
        _ => -1.0,
    }
}

/// Model space and closed forms of a table row over a Riemannian fibre of
/// dimension `fiber_dim`. Rows 2 and 6 use the maximal interval with `w > 0`.
pub fn table1_model<T: Real>(row: u8, k0: T, fiber_dim: usize) -> Result<(WarpedModel<T>, Table1Row<T>)> {
    let inf = lit::<T>(f64::INFINITY);
    let half_pi = T::frac_pi_2();
    let bad = |msg: &str| Err(WarpError::Parameter(format!("row {row}: {msg}, got K0 = {k0}")));
    let (warp, alpha, eps, ambient) = match row {
        1 | 2 => {
            if k0 != T::zero() {
                return bad("needs a flat fibre (K0 = 0)");
            }
            let s = if row == 1 { -T::one() } else { T::one() };
            let warp = WarpFn::new(move |t: T| (s * t).exp(), move |t: T| s * (s * t).exp(), move |t: T| (s * t).exp(), -inf, inf)?;
            (warp, None, if row == 1 { 1 } else { -1 }, if row == 1 { -T::one() } else { T::one() })
        }
        3 | 6 => {
            let ok = if row == 3 { k0 >= T::one() } else { k0 <= -T::one() };
            if !ok {
                return bad(if row == 3 { "needs K0 ≥ 1" } else { "needs K0 ≤ −1" });
            }
            let alpha = (T::one() / k0.abs().sqrt()).acos();
            let ca = alpha.cos();
            let warp = WarpFn::new(
                move |t: T| (t + alpha).cos() / ca,
                move |t: T| -(t + alpha).sin() / ca,
                move |t: T| -(t + alpha).cos() / ca,
                -half_pi - alpha,
                half_pi - alpha,
            )?;
            (warp, Some(alpha), if row == 3 { 1 } else { -1 }, if row == 3 { T::one() } else { -T::one() })
        }
        4 | 5 => {
            let ok = if row == 4 { k0 >= -T::one() && k0 < T::zero() } else { k0 > T::zero() && k0 <= T::one() };
            if !ok {
                return bad(if row == 4 { "needs −1 ≤ K0 < 0" } else { "needs 0 < K0 ≤ 1" });
            }
            let alpha = (T::one() / k0.abs().sqrt()).acosh();
            let ca = alpha.cosh();
            let warp = WarpFn::new(
                move |t: T| (t + alpha).cosh() / ca,
                move |t: T| (t + alpha).sinh() / ca,
                move |t: T| (t + alpha).cosh() / ca,
                -inf,
                inf,
            )?;
            (warp, Some(alpha), if row == 4 { 1 } else { -1 }, if row == 4 { -T::one() } else { T::one() })
        }
        _ => return Err(WarpError::Parameter(format!("no table row {row}"))),
    };
    let model = WarpedModel::new(fiber_dim, 0, k0, warp, eps)?;
    Ok((model, Table1Row { row_id: row, alpha, k0, eps, ambient_curvature: ambient }))
}

/// The half-space part of de Sitter space, `e^{2t}g₀ − dt²`.
pub fn halfspace_model<T: Real>(fiber_dim: usize) -> Result<WarpedModel<T>> {
    Ok(table1_model(2, T::zero(), fiber_dim)?.0)
}

/// The strip `cos²t·g − dt²` over hyperbolic space, part of anti-de Sitter space.
pub fn strip_model<T: Real>(fiber_dim: usize) -> Result<WarpedModel<T>> {
    Ok(table1_model(6, -T::one(), fiber_dim)?.0)
}

/// Length of the spacelike curve `c(t) = (sinh t, cosh t)` in the half-plane
/// metric `(dx² − dy²)/y²`, by composite Simpson quadrature of
/// `√|ḡ(c′, c′)|` on `[−12, 12]` plus the two tails in closed form. The
/// window keeps the cancellation in `dx² − dy²` below `10⁻¹¹`.
pub fn halfspace_witness_length<T: Real>(panels: usize) -> T {
    let l = lit::<T>(12.0);
    // c = (sinh t, cosh t), c′ = (cosh t, sinh t).
    let speed = |t: T| {
        let (dx, dy, y) = (t.cosh(), t.sinh(), t.cosh());
        ((dx * dx - dy * dy) / (y * y)).abs().sqrt()
    };
    let m = panels.max(2) & !1;
    let h = (l + l) / lit::<T>(m as f64);
    let mut acc = speed(-l) + speed(l);
    for i in 1..m {
        let t = -l + h * lit::<T>(i as f64);
        acc += speed(t) * lit::<T>(if i % 2 == 1 { 4.0 } else { 2.0 });
    }
    // ∫_L^∞ sech = π/2 − 2·atan(tanh(L/2)) on each side.
    let tail = T::frac_pi_2() - lit::<T>(2.0) * (l * lit::<T>(0.5)).tanh().atan();
    acc * h / lit::<T>(3.0) + tail + tail
}

// ---------------------------------------------------------------------------
// Product and warped examples

/// A block `(dimension, constant curvature, sign of the metric block)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block<T> {
    pub dim: usize,
    pub curvature: T,
    pub sign: i8,
}

/// `g = Σ sᵢ gᵢ` with each `gᵢ` Riemannian of constant curvature `cᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductExample<T> {
    blocks: Vec<Block<T>>,
}

impl<T: Real> ProductExample<T> {
    pub fn new(blocks: Vec<Block<T>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(WarpError::Parameter("a product needs at least one block".into()));
        }
        if blocks.iter().any(|b| (b.sign != 1 && b.sign != -1) || b.dim == 0) {
            return Err(WarpError::Parameter("block signs must be ±1 and dimensions positive".into()));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    pub fn index(&self) -> usize {
        self.blocks.iter().filter(|b| b.sign == -1).map(|b| b.dim).sum()
    }

    fn parts<'a>(&'a self, x: &'a DVector<T>) -> impl Iterator<Item = (&'a Block<T>, nalgebra::DVectorView<'a, T>)> {
        let mut off = 0;
        self.blocks.iter().map(move |b| {
            let v = x.rows(off, b.dim);
            off += b.dim;
            (b, v)
        })
    }

    pub fn metric(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        self.parts(x)
            .zip(self.parts(y))
            .fold(T::zero(), |acc, ((b, xi), (_, yi))| acc + lit::<T>(f64::from(b.sign)) * xi.dot(&yi))
    }

    /// `Σ sᵢcᵢ(|Xᵢ|²|Yᵢ|² − (Xᵢ·Yᵢ)²)`.
    pub fn curvature_quadratic(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        self.parts(x).zip(self.parts(y)).fold(T::zero(), |acc, ((b, xi), (_, yi))| {
            let w = xi.dot(&xi) * yi.dot(&yi) - xi.dot(&yi).powi(2);
            acc + lit::<T>(f64::from(b.sign)) * b.curvature * w
        })
    }
}

/// `cosh²(ρ)g_F − g_H` on `F × Hᵏ`, `ρ` the distance to a point of
/// hyperbolic space and `(F, g_F)` of constant curvature `K_F`.
///
/// Since `Hess cosh ρ = cosh ρ · g_H`, the curvature is
/// `wedge_H(x,y) − c²[|x|²|w|² − 2(x·y)(v·w) + |y|²|v|²] + c²(K_F + s²)·wedge_F(v,w)`
/// for `X = v + x`, `Y = w + y`, with `c = cosh ρ`, `s = sinh ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicWarp<T> {
    pub fiber_dim: usize,
    pub fiber_curvature: T,
    pub base_dim: usize,
}

impl<T: Real> HyperbolicWarp<T> {
    pub fn dim(&self) -> usize {
        self.fiber_dim + self.base_dim
    }

    fn split<'a>(&self, x: &'a DVector<T>) -> (nalgebra::DVectorView<'a, T>, nalgebra::DVectorView<'a, T>) {
        (x.rows(0, self.fiber_dim), x.rows(self.fiber_dim, self.base_dim))
    }

    pub fn metric(&self, rho: T, x: &DVector<T>, y: &DVector<T>) -> T {
        let c = rho.cosh();
        let ((v, xh), (w, yh)) = (self.split(x), self.split(y));
        c * c * v.dot(&w) - xh.dot(&yh)
    }

    pub fn curvature_quadratic(&self, rho: T, x: &DVector<T>, y: &DVector<T>) -> T {
        let (c, s) = (rho.cosh(), rho.sinh());
        let ((v, xh), (w, yh)) = (self.split(x), self.split(y));
        let wedge_h = xh.dot(&xh) * yh.dot(&yh) - xh.dot(&yh).powi(2);
        let wedge_f = v.dot(&v) * w.dot(&w) - v.dot(&w).powi(2);
        let mixed = xh.dot(&xh) * w.dot(&w) - lit::<T>(2.0) * xh.dot(&yh) * v.dot(&w) + yh.dot(&yh) * v.dot(&v);
        wedge_h - c * c * mixed + c * c * (self.fiber_curvature + s * s) * wedge_f
    }
}

/// Anything the curvature-bound predicate can be evaluated on.
#[derive(Debug, Clone)]
pub enum CurvatureSource<T: Real> {
    Product(ProductExample<T>),
    Warped(WarpedModel<T>),
    HyperbolicWarp(HyperbolicWarp<T>),
}

impl<T: Real> CurvatureSource<T> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Product(p) => p.dim(),
            Self::Warped(m) => m.dim(),
            Self::HyperbolicWarp(h) => h.dim(),
        }
    }

    /// Samples a base point and returns the metric and curvature there as closures' values.
    fn eval(&self, point: T, x: &DVector<T>, y: &DVector<T>) -> (T, T, T, T) {
        match self {
            Self::Product(p) => (p.metric(x, x), p.metric(y, y), p.metric(x, y), p.curvature_quadratic(x, y)),
            Self::Warped(m) => {
                let n = m.fiber_dim;
                let (v, a) = (x.rows(0, n).into_owned(), x[n]);
                let (u, b) = (y.rows(0, n).into_owned(), y[n]);
                let g = |p: (&DVector<T>, T), q: (&DVector<T>, T)| m.metric(point, p, q).expect("point in window");
                (
                    g((&v, a), (&v, a)),
                    g((&u, b), (&u, b)),
                    g((&v, a), (&u, b)),
                    m.curvature_quadratic(point, (&v, a), (&u, b)).expect("point in window"),
                )
            }
            Self::HyperbolicWarp(h) => {
                (h.metric(point, x, x), h.metric(point, y, y), h.metric(point, x, y), h.curvature_quadratic(point, x, y))
            }
        }
    }

    /// Index of the metric.
    pub fn index(&self) -> usize {
        match self {
            Self::Product(p) => p.index(),
            Self::Warped(m) => m.ambient_index(),
            Self::HyperbolicWarp(h) => h.base_dim,
        }
    }

    fn point_range(&self) -> (T, T) {
        match self {
            Self::Product(_) => (T::zero(), T::zero()),
            Self::Warped(m) => m.warp.sample_window(),
            Self::HyperbolicWarp(_) => (T::zero(), lit(3.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundDirection {
    /// `R ≥ K₀`.
    AtLeast,
    /// `R ≤ K₀`.
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSampler {
    pub pairs: usize,
    pub seed: u64,
    /// Relative tolerance on the bound.
    pub tol: f64,
}

impl Default for BoundSampler {
    fn default() -> Self {
        Self { pairs: 10_000, seed: 0, tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport<T: Real> {
    pub holds: bool,
    /// Least value of `±(⟨R(X,Y)Y,X⟩ − K₀·wedge)` (sign chosen by direction).
    pub worst: T,
    pub worst_point: T,
    pub evaluated: usize,
    /// Pairs evaluated per stratum: (spacelike, spacelike), (timelike, timelike), mixed.
    pub strata: [usize; 3],
}

fn random_vec<T: Real, R: Rng>(n: usize, rng: &mut R) -> DVector<T> {
    DVector::from_fn(n, |_, _| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
}

/// Checks `⟨R(X,Y)Y,X⟩ ≥ K₀(⟨X,X⟩⟨Y,Y⟩ − ⟨X,Y⟩²)` (or `≤`) on seeded pairs,
/// stratified by the causal character of `X` and `Y`.
pub fn curvature_bound_check<T: Real>(
    source: &CurvatureSource<T>,
    k0: T,
    direction: BoundDirection,
    sampler: &BoundSampler,
) -> Result<BoundReport<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let n = source.dim();
    let (lo, hi) = source.point_range();
    let sign = match direction {
        BoundDirection::AtLeast => T::one(),
        BoundDirection::AtMost => -T::one(),
    };
    let tol = T::tol(sampler.tol);
    let mut worst = lit::<T>(f64::INFINITY);
    let mut worst_point = lo;
    let mut holds = true;
    let mut strata = [0usize; 3];
    // Draw a vector whose squared norm has the requested sign, normalized to ±1.
    let draw = |want: i8, point: T, rng: &mut ChaCha8Rng| -> Option<DVector<T>> {
        for _ in 0..64 {
            let v = random_vec::<T, _>(n, rng);
            let (q, _, _, _) = source.eval(point, &v, &v);
            let ok = if want > 0 { q > T::zero() } else { q < T::zero() };
            if ok && q.abs() > T::tol(1e-8) {
                return Some(v / q.abs().sqrt());
            }
        }
        None
    };
    for i in 0..sampler.pairs {
        let point = lo + (hi - lo) * lit::<T>(rng.random::<f64>());
        let stratum = i % 3;
        let (sx, sy) = match stratum {
            0 => (1, 1),
            1 => (-1, -1),
            _ => (1, -1),
        };
        // Skip strata the signature cannot realize.
        let index = source.index();
        if (index == 0 && (sx < 0 || sy < 0)) || (index == n && (sx > 0 || sy > 0)) {
            continue;
        }
        let (x, y) = match (draw(sx, point, &mut rng), draw(sy, point, &mut rng)) {
            (Some(x), Some(y)) => (x, y),
            _ => continue,
        };
        let (xx, yy, xy, r) = source.eval(point, &x, &y);
        let wedge = xx * yy - xy * xy;
        let gap = sign * (r - k0 * wedge);
        let scale = T::one() + r.abs() + (k0 * wedge).abs();
        if gap < -tol * scale {
            holds = false;
        }
        if gap < worst {
            worst = gap;
            worst_point = point;
        }
        strata[stratum] += 1;
    }
    let evaluated = strata.iter().sum();
    if evaluated == 0 {
        return Err(WarpError::Inconclusive("no admissible sample pairs".into()));
    }
    Ok(BoundReport { holds, worst, worst_point, evaluated, strata })
}

// ---------------------------------------------------------------------------
// Modified warps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpBranch {
    /// `−w″/w < −1` and `−(w′/w)² < −1` beyond the blend.
    Sub,
    /// The reversed strict inequalities.
    Super,
}

/// Length of the blend interval after `t = 1`.
pub const BLEND_WIDTH: f64 = 0.25;

/// `w = exp(h)` with `h′ = 1 ± ½σ((t−1)/δ)`, `σ` the quintic smoothstep, so
/// `w = eᵗ` for `t ≤ 1` and `w′/w = 1 ± ½` for `t ≥ 1 + δ`.
///
/// The target inequalities are certified on a grid of step `10⁻³` over
/// `(1, 6]` before the model is returned; a failing grid panics, since it
/// would be a construction defect rather than a runtime condition.
pub fn modified_warp_example<T: Real>(branch: WarpBranch, fiber_dim: usize) -> WarpedModel<T> {
    let pm = lit::<T>(match branch {
        WarpBranch::Sub => 0.5,
        WarpBranch::Super => -0.5,
    });
    let delta = lit::<T>(BLEND_WIDTH);
    let one = T::one();
    let x_of = move |t: T| {
        let x = (t - one) / delta;
        if x < T::zero() {
            T::zero()
        } else if x > one {
            one
        } else {
            x
        }
    };
    let sigma = move |x: T| x * x * x * (lit::<T>(10.0) + x * (lit::<T>(-15.0) + lit::<T>(6.0) * x));
    let dsigma = move |x: T| lit::<T>(30.0) * x * x * (one - x) * (one - x);
    // ∫₀ˣ σ = x⁶ − 3x⁵ + 2.5x⁴.
    let isigma = move |x: T| x.powi(4) * (lit::<T>(2.5) + x * (lit::<T>(-3.0) + x));
    let h = move |t: T| {
        if t <= one {
            t
        } else {
            let x = (t - one) / delta;
            let extra = if x <= one { delta * isigma(x) } else { delta * isigma(one) + (t - one - delta) };
            t + pm * extra
        }
    };
    let dh = move |t: T| one + pm * sigma(x_of(t));
    let d2h = move |t: T| {
        let x = (t - one) / delta;
        if x <= T::zero() || x >= one {
            T::zero()
        } else {
            pm * dsigma(x) / delta
        }
    };
    let inf = lit::<T>(f64::INFINITY);
    let warp = WarpFn::new(
        move |t| h(t).exp(),
        move |t| dh(t) * h(t).exp(),
        move |t| (d2h(t) + dh(t) * dh(t)) * h(t).exp(),
        -inf,
        inf,
    )
    .expect("blend derivatives are exact");
    let model = WarpedModel::new(fiber_dim, 0, T::zero(), warp, 1).expect("valid parameters");
    let (ok, t_bad) = certify_modified(&model, branch);
    assert!(ok, "modified warp fails its inequalities at t = {t_bad}");
    model
}

/// Grid check of the branch inequalities on `(1, 6]` with step `10⁻³`.
pub fn certify_modified<T: Real>(model: &WarpedModel<T>, branch: WarpBranch) -> (bool, T) {
    for i in 1..=5000 {
        let t = T::one() + lit::<T>(i as f64 * 1e-3);
        let (w, dw, d2w) = model.warp.eval(t).expect("entire warp");
        let a = -d2w / w;
        let b = -(dw / w).powi(2);
        let ok = match branch {
            WarpBranch::Sub => a < -T::one() && b < -T::one(),
            WarpBranch::Super => a > -T::one() && b > -T::one(),
        };
        if !ok {
            return (false, t);
        }
    }
    (true, T::zero())
}

// ---------------------------------------------------------------------------
// Registry

/// A model addressable by string id.
#[derive(Debug, Clone)]
pub enum RegistryModel<T: Real> {
    Warped { model: WarpedModel<T>, row: Option<Table1Row<T>> },
    Product(ProductExample<T>),
    HyperbolicWarp(HyperbolicWarp<T>),
}

/// Registry ids with a one-line description each.
pub fn registry_ids() -> Vec<(&'static str, &'static str)> {
    vec![
        ("table1/row1", "e^{-t} warp over flat fibre, eps=+1: hyperbolic space"),
        ("table1/row2", "e^{t} warp over flat fibre, eps=-1: half of de Sitter space"),
        ("table1/row3", "cos warp, eps=+1, K0>=1: sphere"),
        ("table1/row4", "cosh warp, eps=+1, -1<=K0<0: hyperbolic space"),
        ("table1/row5", "cosh warp, eps=-1, 0<K0<=1: de Sitter space"),
        ("table1/row6", "cos warp, eps=-1, K0<=-1: strip in anti-de Sitter space"),
        ("halfspace", "e^{2t}g0 - dt^2, the incomplete half of de Sitter space"),
        ("strip", "cos^2(t)g - dt^2 over hyperbolic space"),
        ("product/S2xH2-", "unit sphere plus negated hyperbolic plane, R >= 0"),
        ("warp/coshS2-H2", "cosh^2(rho) g_S2 - g_H2, R >= 1"),
        ("modified/sub", "e^t warp bent upward after t=1, R <= -1"),
        ("modified/super", "e^t warp bent downward after t=1, R >= -1"),
    ]
}

/// Resolves ids such as `table1/row3?K0=2&n=4`, `halfspace`, `product/S2xH2-`.
/// `n` is the ambient dimension (default 3).
pub fn model_by_id<T: Real>(id: &str) -> Result<RegistryModel<T>> {
    let (path, query) = id.split_once('?').unwrap_or((id, ""));
    let mut k0: Option<f64> = None;
    let mut n = 3usize;
    for kv in query.split('&').filter(|s| !s.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| WarpError::UnknownModel(id.into()))?;
        match k {
            "K0" => k0 = Some(v.parse().map_err(|_| WarpError::Parameter(format!("bad K0 `{v}`")))?),
            "n" => n = v.parse().map_err(|_| WarpError::Parameter(format!("bad n `{v}`")))?,
            _ => return Err(WarpError::UnknownModel(id.into())),
        }
    }
    if n < 2 {
        return Err(WarpError::Parameter(format!("ambient dimension {n} < 2")));
    }
    let fd = n - 1;
    if let Some(r) = path.strip_prefix("table1/row") {
        let row: u8 = r.parse().map_err(|_| WarpError::UnknownModel(id.into()))?;
        let k = k0.unwrap_or_else(|| table1_default_k0(row));
        let (model, row) = table1_model(row, lit::<T>(k), fd)?;
        return Ok(RegistryModel::Warped { model, row: Some(row) });
    }
    if k0.is_some() {
        return Err(WarpError::UnknownModel(id.into()));
    }
    match path {
        "halfspace" => {
            let (model, row) = table1_model(2, T::zero(), fd)?;
            Ok(RegistryModel::Warped { model, row: Some(row) })
        }
        "strip" => {
            let (model, row) = table1_model(6, -T::one(), fd)?;
            Ok(RegistryModel::Warped { model, row: Some(row) })
        }
        "product/S2xH2-" => Ok(RegistryModel::Product(ProductExample::new(vec![
            Block { dim: 2, curvature: T::one(), sign: 1 },
            Block { dim: 2, curvature: -T::one(), sign: -1 },
        ])?)),
        "warp/coshS2-H2" => {
            Ok(RegistryModel::HyperbolicWarp(HyperbolicWarp { fiber_dim: 2, fiber_curvature: T::one(), base_dim: 2 }))
        }
        "modified/sub" => Ok(RegistryModel::Warped { model: modified_warp_example(WarpBranch::Sub, fd), row: None }),
        "modified/super" => {
            Ok(RegistryModel::Warped { model: modified_warp_example(WarpBranch::Super, fd), row: None })
        }
        _ => Err(WarpError::UnknownModel(id.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn row_closed_forms() {
        let (m, r) = table1_model::<f64>(1, 0.0, 3).unwrap();
        assert_eq!(r.weingarten(0.3), 1.0);
        assert!((m.slice_weingarten(0.7).unwrap() - 1.0).abs() < 1e-15);
        assert!((m.ambient_sectional(1.3).unwrap() + 1.0).abs() < 1e-14);
        assert!((m.normal_curvature_operator(0.2).unwrap() + 1.0).abs() < 1e-15);
        let (m, r) = table1_model::<f64>(3, 1.0, 2).unwrap();
        assert_eq!(r.alpha, Some(0.0));
        assert!((m.slice_weingarten(0.4).unwrap() - 0.4f64.tan()).abs() < 1e-15);
        assert_eq!(r.ambient_curvature, 1.0);
        let (m, r) = table1_model::<f64>(5, 1.0, 2).unwrap();
        assert_eq!((r.eps, r.ambient_curvature, m.ambient_index()), (-1, 1.0, 1));
        assert!(matches!(table1_model::<f64>(3, 0.5, 2), Err(WarpError::Parameter(_))));
        assert!(matches!(table1_model::<f64>(2, 1.0, 2), Err(WarpError::Parameter(_))));
    }

    #[test]
    fn scalar_quantities() {
        let flat = WarpedModel::new(3, 0, 0.0, WarpFn::constant(1.0).unwrap(), 1).unwrap();
        assert_eq!(flat.slice_weingarten(5.0).unwrap(), 0.0);
        assert_eq!(flat.ambient_sectional(5.0).unwrap(), 0.0);
        assert_eq!(flat.ricci_normal(5.0).unwrap(), 0.0);
        let cosh = WarpFn::new(|t: f64| t.cosh(), |t: f64| t.sinh(), |t: f64| t.cosh(), -10.0, 10.0).unwrap();
        let m = WarpedModel::new(2, 0, 0.0, cosh, 1).unwrap();
        assert!((m.slice_weingarten(1.0).unwrap() + 1f64.tanh()).abs() < 1e-15);
        let e = table1_model::<f64>(1, 0.0, 3).unwrap().0;
        assert!((e.ricci_normal(0.4).unwrap() + 3.0).abs() < 1e-14);
        let cos = WarpFn::new(|t: f64| t.cos(), |t: f64| -t.sin(), |t: f64| -t.cos(), -1.5, 1.5).unwrap();
        let m = WarpedModel::new(2, 0, 0.0, cos, 1).unwrap();
        assert_eq!(m.normal_curvature_operator(0.0).unwrap(), 1.0);
        assert_eq!(m.ricci_normal(0.0).unwrap(), 2.0);
        let strip = strip_model::<f64>(3).unwrap();
        assert_eq!(strip.ambient_sectional(0.0).unwrap(), -1.0);
        assert!(matches!(strip.slice_weingarten(2.0), Err(WarpError::OutsideInterval { .. })));
    }

    #[test]
    fn derivative_gate_catches_typos() {
        let bad = WarpFn::new(|t: f64| t.cosh(), |t: f64| t.cosh(), |t: f64| t.cosh(), -1.0, 1.0);
        assert!(matches!(bad, Err(WarpError::DerivativeMismatch { which: "w′", .. })));
    }

    #[test]
    fn gauss_residual_row4() {
        let (m, _) = table1_model::<f64>(4, -0.5, 3).unwrap();
        let (x, y) = (dvector![1.0, 0.0, 0.0], dvector![0.0, 1.0, 0.0]);
        assert!(m.gauss_equation_residual(0.7, &x, &y).unwrap() < 1e-10);
    }

    #[test]
    fn halfspace_length_is_pi() {
        assert!((halfspace_witness_length::<f64>(20_000) - std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn bound_examples() {
        let s = BoundSampler { pairs: 3000, ..Default::default() };
        let RegistryModel::Product(p) = model_by_id::<f64>("product/S2xH2-").unwrap() else { panic!() };
        let rep = curvature_bound_check(&CurvatureSource::Product(p), 0.0, BoundDirection::AtLeast, &s).unwrap();
        assert!(rep.holds && rep.strata.iter().all(|c| *c > 0));
        let flat = ProductExample::new(vec![Block { dim: 3, curvature: 0.0, sign: 1 }]).unwrap();
        for d in [BoundDirection::AtLeast, BoundDirection::AtMost] {
            let rep = curvature_bound_check(&CurvatureSource::Product(flat.clone()), 0.0, d, &s).unwrap();
            assert!(rep.holds && rep.worst == 0.0);
        }
        let hw = HyperbolicWarp { fiber_dim: 2, fiber_curvature: 1.0, base_dim: 2 };
        let rep = curvature_bound_check(&CurvatureSource::HyperbolicWarp(hw), 1.0, BoundDirection::AtLeast, &s).unwrap();
        assert!(rep.holds);
        let rep = curvature_bound_check(&CurvatureSource::HyperbolicWarp(hw), 1.1, BoundDirection::AtLeast, &s).unwrap();
        assert!(!rep.holds);
    }

    #[test]
    fn modified_warps() {
        let sub = modified_warp_example::<f64>(WarpBranch::Sub, 2);
        let sup = modified_warp_example::<f64>(WarpBranch::Super, 2);
        for m in [&sub, &sup] {
            let (w, dw, d2w) = m.warp.eval(0.5).unwrap();
            assert_eq!((w, dw, d2w), (0.5f64.exp(), 0.5f64.exp(), 0.5f64.exp()));
        }
        assert!(sub.normal_curvature_operator(2.0).unwrap() < -1.0);
        assert!(sup.normal_curvature_operator(3.0).unwrap() > -1.0);
        let s = BoundSampler { pairs: 3000, ..Default::default() };
        let rep = curvature_bound_check(&CurvatureSource::Warped(sub), -1.0, BoundDirection::AtMost, &s).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn registry_resolves() {
        for (id, _) in registry_ids() {
            model_by_id::<f64>(id).unwrap();
        }
        assert!(matches!(model_by_id::<f64>("table1/row3?K0=4"), Ok(RegistryModel::Warped { .. })));
        assert!(model_by_id::<f64>("table1/row3?K0=0.5").is_err());
        assert!(matches!(model_by_id::<f64>("nope"), Err(WarpError::UnknownModel(_))));
    }
}
