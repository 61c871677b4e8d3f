//! Two-dimensional machinery: Gaussian curvature of metrics in a few normal
//! forms, the Gauss–Bonnet flux identity `∫ K dA = ε₁ ∮ ω¹₂`, index-1 frame
//! extension, Calabi's ODE `y″ + k y = 0` and the Fermi-coordinate length
//! bound.
//!
//! Curvature follows the convention `K = ⟨R(X,Y)Y,X⟩` for an orthonormal
//! pair, i.e. `K = ε₁ε₂·K_sec`.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::func::ScalarFn;
use crate::ode::{integrate, Controls, Side, Solution, System, Termination};
use crate::scalar::{finite, lit, Real};
use crate::warped::WarpFn;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("metric is degenerate at ({x}, {y})")]
    Degenerate { x: f64, y: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("k = {k} lies outside [0, 1] at t = {t}")]
    KOutOfRange { t: f64, k: f64 },
    #[error("curvature {k} lies outside [0, 1] at (s, t) = ({s}, {t})")]
    CurvatureRange { s: f64, t: f64, k: f64 },
    #[error("unrealized by the warped ansatz: {0}")]
    Unrealized(String),
    #[error("curvature vanishes identically on the certification grid")]
    IdenticallyZero,
    #[error("curvature has the wrong sign: K = {k:e} at y = {y}")]
    SignViolation { y: f64, k: f64 },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = SurfaceError> = std::result::Result<T, E>;

/// Signs `(ε₁, ε₂)` of the standard flat metric `ε₁dx² + ε₂dy²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub i8, pub i8);

impl Signature {
    pub const RIEMANNIAN: Self = Self(1, 1);
    pub const ALL: [Self; 4] = [Self(1, 1), Self(-1, 1), Self(1, -1), Self(-1, -1)];

    pub fn new(e1: i8, e2: i8) -> Result<Self> {
        if e1.abs() != 1 || e2.abs() != 1 {
            return Err(SurfaceError::Invalid(format!("signs must be ±1, got ({e1}, {e2})")));
        }
        Ok(Self(e1, e2))
    }

    pub fn e1<T: Real>(self) -> T {
        lit(self.0 as f64)
    }

    pub fn e2<T: Real>(self) -> T {
        lit(self.1 as f64)
    }

    pub fn index(self) -> usize {
        (self.0 < 0) as usize + (self.1 < 0) as usize
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |e: i8| if e > 0 { '+' } else { '-' };
        write!(f, "({},{})", s(self.0), s(self.1))
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub x1: T,
    pub y0: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x0: T, x1: T, y0: T, y1: T) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn enlarged(&self, m: T) -> Self {
        Self::new(self.x0 - m, self.x1 + m, self.y0 - m, self.y1 + m)
    }

    /// `true` when `self` sits inside `outer` at distance more than `margin`.
    pub fn strictly_inside(&self, outer: &Self, margin: T) -> bool {
        self.x0 > outer.x0 + margin && self.x1 < outer.x1 - margin && self.y0 > outer.y0 + margin && self.y1 < outer.y1 - margin
    }

    pub fn union(&self, o: &Self) -> Self {
        Self::new(self.x0.min(o.x0), self.x1.max(o.x1), self.y0.min(o.y0), self.y1.max(o.y1))
    }
}

/// Value and derivatives up to second order of a function of `(x, y)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet<T> {
    pub v: T,
    pub x: T,
    pub y: T,
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Real> std::ops::Add for Jet<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, x: self.x + o.x, y: self.y + o.y, xx: self.xx + o.xx, xy: self.xy + o.xy, yy: self.yy + o.yy }
    }
}

impl<T: Real> Jet<T> {
    fn scaled(self, c: T) -> Self {
        Self { v: self.v * c, x: self.x * c, y: self.y * c, xx: self.xx * c, xy: self.xy * c, yy: self.yy * c }
    }
}

/// Smooth compactly supported bump `amp·exp(−1/(1−r²))`, `r = |p − c|/radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump<T> {
    pub cx: T,
    pub cy: T,
    pub radius: T,
    pub amp: T,
}

impl<T: Real> Bump<T> {
    pub fn new(cx: T, cy: T, radius: T, amp: T) -> Self {
        Self { cx, cy, radius, amp }
    }

    pub fn support(&self) -> Rect<T> {
        Rect::new(self.cx - self.radius, self.cx + self.radius, self.cy - self.radius, self.cy + self.radius)
    }

    pub fn jet(&self, x: T, y: T) -> Jet<T> {
        let r = self.radius;
        let dx = (x - self.cx) / r;
        let dy = (y - self.cy) / r;
        let rho = dx * dx + dy * dy;
        if rho >= T::one() {
            return Jet::default();
        }
        let two = lit::<T>(2.0);
        let q = T::one() / (T::one() - rho);
        let f = (-q).exp();
        let q2 = q * q;
        let f1 = -f * q2;
        let f2 = f * (q2 * q2 - two * q2 * q);
        let rx = two * dx / r;
        let ry = two * dy / r;
        let rxx = two / (r * r);
        Jet {
            v: f,
            x: f1 * rx,
            y: f1 * ry,
            xx: f2 * rx * rx + f1 * rxx,
            xy: f2 * rx * ry,
            yy: f2 * ry * ry + f1 * rxx,
        }
        .scaled(self.amp)
    }
}

fn sum_jets<T: Real>(bumps: &[Bump<T>], x: T, y: T) -> Jet<T> {
    bumps.iter().fold(Jet::default(), |acc, b| acc + b.jet(x, y))
}

fn support_of<T: Real>(bumps: impl Iterator<Item = Rect<T>>) -> Option<Rect<T>> {
    bumps.reduce(|a, b| a.union(&b))
}

/// Components `(E, F, G)` of a 2D metric and their derivatives.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricJet<T> {
    pub e: Jet<T>,
    pub f: Jet<T>,
    pub g: Jet<T>,
}

fn det3<T: Real>(m: [[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Curvature `⟨R(X,Y)Y,X⟩` of a general 2D metric from its second-order jet,
/// via the Brioschi formula (an algebraic identity valid in any signature).
pub fn brioschi_curvature<T: Real>(j: &MetricJet<T>) -> Option<T> {
    let (e, f, g) = (j.e.v, j.f.v, j.g.v);
    let det = e * g - f * f;
    if !(det.abs() > lit::<T>(1e3) * lit::<T>(T::machine_eps()) * (e.abs() + g.abs() + f.abs()).powi(2)) {
        return None;
    }
    let h = lit::<T>(0.5);
    let z = T::zero();
    let m1 = det3([
        [-h * j.e.yy + j.f.xy - h * j.g.xx, h * j.e.x, j.f.x - h * j.e.y],
        [j.f.y - h * j.g.x, e, f],
        [h * j.g.y, f, g],
    ]);
    let m2 = det3([[z, h * j.e.y, h * j.g.x], [h * j.e.y, e, f], [h * j.g.x, f, g]]);
    let k_sec = (m1 - m2) / (det * det);
    Some(if det > z { k_sec } else { -k_sec })
}

/// `(E, E_t, E_tt)` as a function of `(s, t)`.
pub type FermiFn<T> = Arc<dyn Fn(T, T) -> [T; 3] + Send + Sync>;

/// The normal forms supported by [`SurfaceMetric`].
#[derive(Clone)]
pub enum SurfaceForm<T: Real> {
    /// `e^{2φ}(ε₁dx² + ε₂dy²)` with `φ` a sum of bumps.
    Conformal { sig: Signature, bumps: Vec<Bump<T>> },
    /// `E(s,t)² ds² + dt²`, periodic in `s`; coordinates `(x, y) = (s, t)`.
    Fermi { e: FermiFn<T>, period: T },
    /// `ε₁w(y)²dx² + ε₂dy²`.
    Warped2d { sig: Signature, warp: WarpFn<T> },
    /// `ε₁dx² + ε₂dy² + Σ b_k(x,y)·(c₁₁dx² + 2c₁₂dx dy + c₂₂dy²)`.
    Perturbed { sig: Signature, terms: Vec<(Bump<T>, [T; 3])> },
}

impl<T: Real> fmt::Debug for SurfaceForm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Conformal { sig, bumps } => write!(f, "Conformal{sig} with {} bumps", bumps.len()),
            Self::Fermi { period, .. } => write!(f, "Fermi(L = {period})"),
            Self::Warped2d { sig, warp } => write!(f, "Warped2d{sig} {warp:?}"),
            Self::Perturbed { sig, terms } => write!(f, "Perturbed{sig} with {} terms", terms.len()),
        }
    }
}

/// A 2D metric in one of the normal forms, with the box outside which it is
/// exactly the standard flat metric (when there is one).
#[derive(Debug, Clone)]
pub struct SurfaceMetric<T: Real> {
    form: SurfaceForm<T>,
    support_box: Option<Rect<T>>,
}

impl<T: Real> SurfaceMetric<T> {
    pub fn standard(sig: Signature) -> Self {
        Self { form: SurfaceForm::Conformal { sig, bumps: Vec::new() }, support_box: None }
    }

    pub fn conformal(sig: Signature, bumps: Vec<Bump<T>>) -> Self {
        let support_box = support_of(bumps.iter().map(Bump::support));
        Self { form: SurfaceForm::Conformal { sig, bumps }, support_box }
    }

    /// Fermi coordinates about a closed geodesic of length `period`. Checks
    /// `E(s,0) = 1` and `E_t(s,0) = 0` at 64 sample points.
    pub fn fermi(e: impl Fn(T, T) -> [T; 3] + Send + Sync + 'static, period: T) -> Result<Self> {
        if !(period > T::zero()) || !finite(period) {
            return Err(SurfaceError::Invalid(format!("period must be positive, got {period}")));
        }
        let tol = T::tol(1e-12);
        for i in 0..64 {
            let s = period * lit::<T>(i as f64 / 64.0);
            let [e0, et, _] = e(s, T::zero());
            if (e0 - T::one()).abs() > tol || et.abs() > tol {
                return Err(SurfaceError::Invalid(format!(
                    "base curve is not a unit-speed geodesic: E = {e0}, E_t = {et} at s = {s}"
                )));
            }
        }
        Ok(Self { form: SurfaceForm::Fermi { e: Arc::new(e), period }, support_box: None })
    }

    pub fn warped2d(sig: Signature, warp: WarpFn<T>) -> Self {
        Self { form: SurfaceForm::Warped2d { sig, warp }, support_box: None }
    }

    pub fn perturbed(sig: Signature, terms: Vec<(Bump<T>, [T; 3])>) -> Self {
        let support_box = support_of(terms.iter().map(|(b, _)| b.support()));
        Self { form: SurfaceForm::Perturbed { sig, terms }, support_box }
    }

    pub fn form(&self) -> &SurfaceForm<T> {
        &self.form
    }

    /// Region outside which the metric is exactly standard; `None` means
    /// either everywhere standard (no bumps) or no such compact region.
    pub fn support_box(&self) -> Option<Rect<T>> {
        self.support_box
    }

    /// `true` when the metric equals the standard flat metric outside a
    /// compact set.
    pub fn standard_outside_compact(&self) -> bool {
        matches!(self.form, SurfaceForm::Conformal { .. } | SurfaceForm::Perturbed { .. })
    }

    pub fn signature(&self) -> Signature {
        match &self.form {
            SurfaceForm::Conformal { sig, .. } | SurfaceForm::Warped2d { sig, .. } | SurfaceForm::Perturbed { sig, .. } => *sig,
            SurfaceForm::Fermi { .. } => Signature::RIEMANNIAN,
        }
    }

    fn degenerate(x: T, y: T) -> SurfaceError {
        SurfaceError::Degenerate { x: x.to_f64(), y: y.to_f64() }
    }

    fn warp_at(warp: &WarpFn<T>, x: T, y: T) -> Result<(T, T, T)> {
        warp.eval(y).map_err(|_| Self::degenerate(x, y))
    }

    fn fermi_at(e: &FermiFn<T>, s: T, t: T) -> Result<[T; 3]> {
        let v = e(s, t);
        if !(v[0] > T::zero()) {
            return Err(Self::degenerate(s, t));
        }
        Ok(v)
    }

    /// Metric components `[g₁₁, g₁₂, g₂₂]` at `(x, y)`.
    pub fn metric_at(&self, x: T, y: T) -> Result<[T; 3]> {
        let z = T::zero();
        let g = match &self.form {
            SurfaceForm::Conformal { sig, bumps } => {
                let c = (lit::<T>(2.0) * sum_jets(bumps, x, y).v).exp();
                [sig.e1::<T>() * c, z, sig.e2::<T>() * c]
            }
            SurfaceForm::Fermi { e, .. } => {
                let [e, _, _] = Self::fermi_at(e, x, y)?;
                [e * e, z, T::one()]
            }
            SurfaceForm::Warped2d { sig, warp } => {
                let (w, _, _) = Self::warp_at(warp, x, y)?;
                [sig.e1::<T>() * w * w, z, sig.e2::<T>()]
            }
            SurfaceForm::Perturbed { sig, terms } => {
                let mut g = [sig.e1::<T>(), z, sig.e2::<T>()];
                for (b, c) in terms {
                    let v = b.jet(x, y).v;
                    for i in 0..3 {
                        g[i] += v * c[i];
                    }
                }
                g
            }
        };
        let det = g[0] * g[2] - g[1] * g[1];
        let sig = self.signature();
        let expected: T = lit((sig.0 * sig.1) as f64);
        if !(det * expected > T::zero()) {
            return Err(Self::degenerate(x, y));
        }
        Ok(g)
    }

    /// `√|det g|`, the density of `σ¹∧σ²` against `dx dy`.
    pub fn area_density(&self, x: T, y: T) -> Result<T> {
        let g = self.metric_at(x, y)?;
        Ok((g[0] * g[2] - g[1] * g[1]).abs().sqrt())
    }

    /// Gaussian curvature `⟨R(X,Y)Y,X⟩` from the closed form of the normal form.
    pub fn gaussian_curvature(&self, x: T, y: T) -> Result<T> {
        match &self.form {
            SurfaceForm::Conformal { sig, bumps } => {
                let p = sum_jets(bumps, x, y);
                let lap = sig.e2::<T>() * p.xx + sig.e1::<T>() * p.yy;
                Ok(-(lit::<T>(-2.0) * p.v).exp() * lap)
            }
            SurfaceForm::Fermi { e, .. } => {
                let [e, _, ett] = Self::fermi_at(e, x, y)?;
                Ok(-ett / e)
            }
            SurfaceForm::Warped2d { sig, warp } => {
                let (w, _, w2) = Self::warp_at(warp, x, y)?;
                Ok(-sig.e1::<T>() * w2 / w)
            }
            SurfaceForm::Perturbed { .. } => {
                let j = self.perturbed_jet(x, y);
                brioschi_curvature(&j).ok_or_else(|| Self::degenerate(x, y))
            }
        }
    }

    fn perturbed_jet(&self, x: T, y: T) -> MetricJet<T> {
        let SurfaceForm::Perturbed { sig, terms } = &self.form else { unreachable!() };
        let mut j = MetricJet::default();
        j.e.v = sig.e1();
        j.g.v = sig.e2();
        for (b, c) in terms {
            let bj = b.jet(x, y);
            j.e = j.e + bj.scaled(c[0]);
            j.f = j.f + bj.scaled(c[1]);
            j.g = j.g + bj.scaled(c[2]);
        }
        j
    }

    /// `ω¹₂ = ω_x dx + ω_y dy` of the canonical orthonormal frame of the
    /// normal form: `e^{−φ}(∂x, ∂y)`, `(∂x/w, ∂y)` or `(∂s/E, ∂t)`. For the
    /// perturbed form the frame of [`FrameField`] is used.
    pub fn connection_form(&self, x: T, y: T) -> Result<[T; 2]> {
        match &self.form {
            SurfaceForm::Conformal { sig, bumps } => {
                let p = sum_jets(bumps, x, y);
                let s: T = lit((sig.0 * sig.1) as f64);
                Ok([p.y, -s * p.x])
            }
            SurfaceForm::Fermi { e, .. } => {
                let [_, et, _] = Self::fermi_at(e, x, y)?;
                Ok([et, T::zero()])
            }
            SurfaceForm::Warped2d { warp, .. } => {
                let (_, w1, _) = Self::warp_at(warp, x, y)?;
                Ok([w1, T::zero()])
            }
            SurfaceForm::Perturbed { .. } => FrameField::new(self.clone()).connection_form(x, y),
        }
    }
}

/// A smooth `g`-orthonormal frame `(f₁, f₂)` with `g(fᵢ, fᵢ) = εᵢ`.
///
/// In index 1 the frame is built from the two null directions `ℓ± = ∂x + m±∂y`
/// of `g`: `f₁ = (ℓ₊ + ℓ₋)/√(2|⟨ℓ₊,ℓ₋⟩|)`, `f₂ = (ℓ₊ − ℓ₋)/√(2|⟨ℓ₊,ℓ₋⟩|)`.
/// This equals the Gram–Schmidt frame boosted by the angle that makes it
/// symmetric about the light cone, is smooth wherever `g₂₂ ≠ 0`, and
/// reproduces `(∂x, ∂y)` exactly where `g` is standard. In the definite case
/// it is plain Gram–Schmidt starting from `∂x`.
#[derive(Debug, Clone)]
pub struct FrameField<T: Real> {
    metric: SurfaceMetric<T>,
    enlarged: Option<Rect<T>>,
    fd_step: T,
}

impl<T: Real> FrameField<T> {
    pub fn new(metric: SurfaceMetric<T>) -> Self {
        let enlarged = metric.support_box().map(|b| {
            let w = (b.x1 - b.x0).max(b.y1 - b.y0);
            b.enlarged(w * lit::<T>(0.05) + lit::<T>(0.1))
        });
        let fd_step = lit(if T::machine_eps() < 1e-10 { 1e-4 } else { 1e-2 });
        Self { metric, enlarged, fd_step }
    }

    pub fn metric(&self) -> &SurfaceMetric<T> {
        &self.metric
    }

    /// Box outside which the frame is the standard frame.
    pub fn enlarged_box(&self) -> Option<Rect<T>> {
        self.enlarged
    }

    /// `[f₁, f₂]` in coordinate components.
    pub fn at(&self, x: T, y: T) -> Result<[[T; 2]; 2]> {
        let g = self.metric.metric_at(x, y)?;
        let sig = self.metric.signature();
        let two = lit::<T>(2.0);
        if sig.index() == 1 {
            let (g11, g12, g22) = (g[0], g[1], g[2]);
            if !(g22 * sig.e2::<T>() > T::zero()) {
                return Err(SurfaceMetric::<T>::degenerate(x, y));
            }
            let disc = (g12 * g12 - g11 * g22).sqrt();
            let center = -g12 / g22;
            let r = disc / g22.abs();
            let (mp, mm) = (center + r, center - r);
            let n = g11 + g12 * (mp + mm) + g22 * mp * mm;
            let s = (two * n.abs()).sqrt();
            Ok([[two / s, (mp + mm) / s], [T::zero(), (mp - mm) / s]])
        } else {
            let e1 = sig.e1::<T>();
            let a = T::one() / (g[0] * e1).sqrt();
            let f1 = [a, T::zero()];
            // ∂y minus its projection on f₁.
            let proj = g[1] * a * e1;
            let v = [-proj * a, T::one()];
            let nv = g[0] * v[0] * v[0] + two * g[1] * v[0] + g[2];
            let b = T::one() / nv.abs().sqrt();
            Ok([f1, [v[0] * b, v[1] * b]])
        }
    }

    /// `max |g(fᵢ, fⱼ) − εᵢδᵢⱼ|` at a point.
    pub fn orthonormality_defect(&self, x: T, y: T) -> Result<T> {
        let g = self.metric.metric_at(x, y)?;
        let [f1, f2] = self.at(x, y)?;
        let ip = |u: [T; 2], v: [T; 2]| g[0] * u[0] * v[0] + g[1] * (u[0] * v[1] + u[1] * v[0]) + g[2] * u[1] * v[1];
        let sig = self.metric.signature();
        let d1 = (ip(f1, f1) - sig.e1::<T>()).abs();
        let d2 = (ip(f2, f2) - sig.e2::<T>()).abs();
        let d3 = ip(f1, f2).abs();
        Ok(d1.max(d2).max(d3))
    }

    fn coframe(&self, x: T, y: T) -> Result<[[T; 2]; 2]> {
        let [f1, f2] = self.at(x, y)?;
        let det = f1[0] * f2[1] - f1[1] * f2[0];
        Ok([[f2[1] / det, -f2[0] / det], [-f1[1] / det, f1[0] / det]])
    }

    /// `ω¹₂` of this frame from the structure equations, with `dσⁱ` taken by
    /// central differences of the coframe.
    pub fn connection_form(&self, x: T, y: T) -> Result<[T; 2]> {
        let h = self.fd_step;
        let two = lit::<T>(2.0);
        let c = self.coframe(x, y)?;
        let cxp = self.coframe(x + h, y)?;
        let cxm = self.coframe(x - h, y)?;
        let cyp = self.coframe(x, y + h)?;
        let cym = self.coframe(x, y - h)?;
        let d = |i: usize| (cxp[i][1] - cxm[i][1]) / (two * h) - (cyp[i][0] - cym[i][0]) / (two * h);
        let vol = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let a = d(0) / vol;
        let b = d(1) / vol;
        let sig = self.metric.signature();
        let s: T = lit((sig.0 * sig.1) as f64);
        Ok([-a * c[0][0] - s * b * c[1][0], -a * c[0][1] - s * b * c[1][1]])
    }
}

/// Extends the standard index-1 frame across the compact region where `m`
/// differs from the standard metric.
pub fn frame_extension<T: Real>(m: &SurfaceMetric<T>) -> Result<FrameField<T>> {
    if m.signature().index() != 1 {
        return Err(SurfaceError::Precondition(format!("frame extension needs index 1, got {}", m.signature())));
    }
    if !m.standard_outside_compact() {
        return Err(SurfaceError::Precondition("metric is not standard outside a compact set".into()));
    }
    Ok(FrameField::new(m.clone()))
}

/// One Gauss–Bonnet evaluation on an `n × n` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussBonnet<T> {
    pub n: usize,
    pub interior: T,
    pub boundary: T,
    pub defect: T,
}

fn check_flat_near_boundary<T: Real>(m: &SurfaceMetric<T>, d: &Rect<T>, n: usize) -> Result<()> {
    let hx = (d.x1 - d.x0) / lit::<T>(n as f64);
    let hy = (d.y1 - d.y0) / lit::<T>(n as f64);
    if let Some(b) = m.support_box() {
        if !b.strictly_inside(d, hx.max(hy)) {
            return Err(SurfaceError::Precondition("metric support reaches the boundary band of the domain".into()));
        }
        return Ok(());
    }
    let tol = T::tol(1e-12);
    for ring in 0..2 {
        let r: T = lit(ring as f64);
        let (x0, x1, y0, y1) = (d.x0 + r * hx, d.x1 - r * hx, d.y0 + r * hy, d.y1 - r * hy);
        for i in 0..=n {
            let u = lit::<T>(i as f64 / n as f64);
            let pts = [
                (x0 + (x1 - x0) * u, y0),
                (x0 + (x1 - x0) * u, y1),
                (x0, y0 + (y1 - y0) * u),
                (x1, y0 + (y1 - y0) * u),
            ];
            for (x, y) in pts {
                let k = m.gaussian_curvature(x, y)?;
                if k.abs() > tol {
                    return Err(SurfaceError::Precondition(format!(
                        "metric is not flat near the boundary: K = {:e} at ({x}, {y})", k.to_f64()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `∫_D K dA` by the composite midpoint rule and `ε₁∮_{∂D} ω¹₂` (counter-
/// clockwise) by the midpoint rule on each edge. The connection form comes
/// from `frame` when given, else from the canonical frame of the normal form.
pub fn gauss_bonnet_defect<T: Real>(m: &SurfaceMetric<T>, d: &Rect<T>, n: usize, frame: Option<&FrameField<T>>) -> Result<GaussBonnet<T>> {
    if n == 0 || !(d.x1 > d.x0) || !(d.y1 > d.y0) {
        return Err(SurfaceError::Invalid("empty domain or grid".into()));
    }
    check_flat_near_boundary(m, d, n)?;
    let nn = lit::<T>(n as f64);
    let hx = (d.x1 - d.x0) / nn;
    let hy = (d.y1 - d.y0) / nn;
    let half = lit::<T>(0.5);
    let mut interior = T::zero();
    for j in 0..n {
        let y = d.y0 + (lit::<T>(j as f64) + half) * hy;
        let mut row = T::zero();
        for i in 0..n {
            let x = d.x0 + (lit::<T>(i as f64) + half) * hx;
            row += m.gaussian_curvature(x, y)? * m.area_density(x, y)?;
        }
        interior += row;
    }
    interior *= hx * hy;

    let omega = |x: T, y: T| -> Result<[T; 2]> {
        match frame {
            Some(f) => f.connection_form(x, y),
            None => m.connection_form(x, y),
        }
    };
    let mut flux = T::zero();
    for i in 0..n {
        let u = (lit::<T>(i as f64) + half) / nn;
        let x = d.x0 + (d.x1 - d.x0) * u;
        let y = d.y0 + (d.y1 - d.y0) * u;
        flux += omega(x, d.y0)?[0] * hx;
        flux += omega(d.x1, y)?[1] * hy;
        flux -= omega(x, d.y1)?[0] * hx;
        flux -= omega(d.x0, y)?[1] * hy;
    }
    let boundary = m.signature().e1::<T>() * flux;
    Ok(GaussBonnet { n, interior, boundary, defect: interior - boundary })
}

/// Gauss–Bonnet evaluations on a refinement sequence with the observed
/// convergence order of the defect.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussBonnetStudy<T> {
    pub runs: Vec<GaussBonnet<T>>,
    /// Fitted order over the levels whose defect exceeds the roundoff floor;
    /// `None` when fewer than two levels clear it.
    pub order: Option<f64>,
    pub floor: f64,
}

impl<T: Real> GaussBonnetStudy<T> {
    pub fn finest(&self) -> &GaussBonnet<T> {
        self.runs.last().expect("study has at least one level")
    }
}

pub fn gauss_bonnet_study<T: Real>(m: &SurfaceMetric<T>, d: &Rect<T>, levels: &[usize], frame: Option<&FrameField<T>>) -> Result<GaussBonnetStudy<T>> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SurfaceError::Invalid("levels must be a non-empty increasing list".into()));
    }
    let runs = levels.iter().map(|&n| gauss_bonnet_defect(m, d, n, frame)).collect::<Result<Vec<_>>>()?;
    let floor = (1e4 * T::machine_eps()).max(1e-12);
    // Least-squares slope of log|defect| against log n. The bump integrands
    // converge faster than any power with an oscillating sign, so a single
    // consecutive ratio is erratic.
    let pts: Vec<(f64, f64)> = runs
        .iter()
        .map(|r| (r.n as f64, r.defect.to_f64().abs()))
        .filter(|&(_, d)| d > floor)
        .map(|(n, d)| (n.ln(), d.ln()))
        .collect();
    let order = (pts.len() >= 2).then(|| {
        let k = pts.len() as f64;
        let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / k, b + p.1 / k));
        let cov: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        -cov / var
    });
    Ok(GaussBonnetStudy { runs, order, floor })
}

/// 1–3 bumps with centres in `[−1, 1] × [1, 3]`, radii in `[0.8, 1.4]` and
/// amplitudes in `[−0.5, 0.5]`, together with the domain `[−4, 4] × [−2, 6]`.
pub fn random_bumps<T: Real, R: Rng + ?Sized>(rng: &mut R) -> (Vec<Bump<T>>, Rect<T>) {
    let k = rng.random_range(1..=3);
    let bumps = (0..k)
        .map(|_| {
            Bump::new(
                lit(rng.random_range(-1.0..1.0)),
                lit(rng.random_range(1.0..3.0)),
                lit(rng.random_range(0.8..1.4)),
                lit(rng.random_range(-0.5..0.5)),
            )
        })
        .collect();
    (bumps, Rect::new(lit(-4.0), lit(4.0), lit(-2.0), lit(6.0)))
}

/// Perturbation terms of a random shear-and-stretch metric; amplitudes are
/// small enough that the signature is preserved.
pub fn random_perturbation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Vec<(Bump<T>, [T; 3])> {
    let (bumps, _) = random_bumps::<T, R>(rng);
    bumps
        .into_iter()
        .map(|b| {
            let c = [0; 3].map(|_| lit::<T>(rng.random_range(-0.8..0.8)));
            (b, c)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Flat outside a half-plane.

/// Evidence that a warped metric is standard on `{y ≤ 1}`, complete by the
/// sufficient criterion, and has one-signed, not identically zero curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfplaneCertificate {
    pub sign: i8,
    /// `min w` on the certification grid (must be positive).
    pub w_min: f64,
    /// `max |w′|` on the certification grid.
    pub dw_max: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub grid_points: usize,
}

/// Certifies a warped2d metric on the grid `y ∈ [−1, 6]`, spacing `1e−3`.
pub fn certify_flat_outside_halfplane<T: Real>(m: &SurfaceMetric<T>, sign: i8) -> Result<HalfplaneCertificate> {
    let SurfaceForm::Warped2d { sig, warp } = m.form() else {
        return Err(SurfaceError::Precondition("certification needs a warped2d metric".into()));
    };
    let tol = T::tol(1e-14);
    let n = 7000;
    let (mut w_min, mut dw_max, mut k_min, mut k_max) = (f64::INFINITY, 0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=n {
        let y = lit::<T>(-1.0 + 7.0 * i as f64 / n as f64);
        let (w, w1, w2) = warp.eval(y).map_err(|e| SurfaceError::Precondition(e.to_string()))?;
        if y <= T::one() && ((w - T::one()).abs() > tol || w1.abs() > tol || w2.abs() > tol) {
            return Err(SurfaceError::Precondition(format!("metric is not standard at y = {y}")));
        }
        let k = -sig.e1::<T>() * w2 / w;
        if lit::<T>(sign as f64) * k < -tol {
            return Err(SurfaceError::SignViolation { y: y.to_f64(), k: k.to_f64() });
        }
        w_min = w_min.min(w.to_f64());
        dw_max = dw_max.max(w1.to_f64().abs());
        k_min = k_min.min(k.to_f64());
        k_max = k_max.max(k.to_f64());
    }
    if k_min.abs().max(k_max.abs()) <= 1e-6 {
        return Err(SurfaceError::IdenticallyZero);
    }
    if !(w_min > 0.0) || !dw_max.is_finite() {
        return Err(SurfaceError::Precondition("warp fails the completeness criterion".into()));
    }
    Ok(HalfplaneCertificate { sign, w_min, dw_max, k_min, k_max, grid_points: n + 1 })
}

/// Convex warp `w ≡ 1` on `y ≤ 1`, `w′` rising from 0 to 1 on `[1, 2]` along
/// the quintic smoothstep and `w′ ≡ 1` afterwards.
pub fn convex_halfplane_warp<T: Real>() -> WarpFn<T> {
    let clamp = |y: T| (y - T::one()).max(T::zero()).min(T::one());
    let w = move |y: T| {
        let x = clamp(y);
        let tail = (y - lit::<T>(2.0)).max(T::zero());
        T::one() + x.powi(4) * (x * x - lit::<T>(3.0) * x + lit::<T>(2.5)) + tail
    };
    let dw = move |y: T| {
        let x = clamp(y);
        x.powi(3) * (lit::<T>(6.0) * x * x - lit::<T>(15.0) * x + lit::<T>(10.0))
    };
    let d2w = move |y: T| {
        let x = clamp(y);
        let u = T::one() - x;
        lit::<T>(30.0) * x * x * u * u
    };
    WarpFn::new(w, dw, d2w, lit(f64::NEG_INFINITY), lit(f64::INFINITY)).expect("analytic derivatives")
}

/// A warped2d metric equal to the standard `(ε₁, ε₂)` metric on `{y ≤ 1}`
/// with `K` of sign `sign` and not identically zero.
///
/// `K = −ε₁w″/w`, and a concave positive `w` that is constant on `y ≤ 1` is
/// constant, so only `sign = −ε₁` is realizable with a convex warp.
pub fn construct_flat_outside_halfplane<T: Real>(sign: i8, sig: Signature) -> Result<(SurfaceMetric<T>, HalfplaneCertificate)> {
    if sign.abs() != 1 {
        return Err(SurfaceError::Invalid(format!("sign must be ±1, got {sign}")));
    }
    if sign != -sig.0 {
        return Err(SurfaceError::Unrealized(format!(
            "K {} 0 in signature {sig} needs a concave warp, which cannot stay positive",
            if sign > 0 { "≥" } else { "≤" }
        )));
    }
    let m = SurfaceMetric::warped2d(sig, convex_halfplane_warp());
    let cert = certify_flat_outside_halfplane(&m, sign)?;
    Ok((m, cert))
}

// ---------------------------------------------------------------------------
// Calabi's ODE.

struct CalabiSystem<'a, T: Real> {
    k: &'a ScalarFn<T>,
}

impl<T: Real> System<T> for CalabiSystem<'_, T> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, t: T, y: &[T], dy: &mut [T], side: Side) {
        dy[0] = y[1];
        dy[1] = -self.k.eval_side(t, side) * y[0];
    }

    fn breakpoints(&self) -> Vec<T> {
        self.k.breakpoints()
    }
}

/// Solution of `y″ + k y = 0`, `y(0) = 1`, `y′(0) = 0`.
#[derive(Debug, Clone)]
pub struct CalabiSolution<T: Real> {
    k: ScalarFn<T>,
    solution: Solution<T>,
    beta: Option<T>,
    t_max: T,
}

/// Extremes of the Calabi invariants over `[0, β]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalabiInvariants {
    pub min_neg_dy: f64,
    pub max_neg_dy: f64,
    pub max_energy: f64,
    /// Largest increase of `y² + y′²` between consecutive samples.
    pub max_energy_increase: f64,
    pub samples: usize,
}

impl CalabiInvariants {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_neg_dy >= -tol && self.max_neg_dy <= 1.0 + tol && self.max_energy <= 1.0 + tol && self.max_energy_increase <= tol
    }
}

fn check_k_range<T: Real>(k: &ScalarFn<T>, t_max: T) -> Result<()> {
    let mut pts: Vec<(T, Side)> = (0..=4000).map(|i| (t_max * lit::<T>(i as f64 / 4000.0), Side::Right)).collect();
    for b in k.breakpoints() {
        pts.push((b, Side::Left));
        pts.push((b, Side::Right));
    }
    for (t, side) in pts {
        let v = k.eval_side(t, side);
        if !(v >= T::zero() && v <= T::one()) {
            return Err(SurfaceError::KOutOfRange { t: t.to_f64(), k: v.to_f64() });
        }
    }
    Ok(())
}

pub fn calabi_ode<T: Real>(k: ScalarFn<T>, t_max: T) -> Result<CalabiSolution<T>> {
    calabi_ode_with(k, t_max, &Controls::default())
}

/// Integrates to `t_max` and bisects the first positive zero of `y` on the
/// dense output. `beta` is `None` when `y` stays positive on `[0, t_max]`.
pub fn calabi_ode_with<T: Real>(k: ScalarFn<T>, t_max: T, controls: &Controls) -> Result<CalabiSolution<T>> {
    if !(t_max > T::zero()) {
        return Err(SurfaceError::Invalid(format!("t_max must be positive, got {t_max}")));
    }
    check_k_range(&k, t_max)?;
    let sys = CalabiSystem { k: &k };
    let solution = integrate(&sys, T::zero(), &[T::one(), T::zero()], t_max, controls);
    match solution.termination {
        Termination::Completed => {}
        t => return Err(SurfaceError::Integration(format!("{t:?}"))),
    }
    let mut beta = None;
    let mut prev = T::one();
    for step in &solution.steps {
        let y1 = step.y1[0];
        if prev > T::zero() && y1 <= T::zero() {
            let (mut lo, mut hi) = (step.t0, step.t1());
            let mut buf = [T::zero(); 2];
            for _ in 0..200 {
                if hi - lo <= T::tol(1e-14) * (T::one() + hi.abs()) {
                    break;
                }
                let mid = (lo + hi) * lit::<T>(0.5);
                step.eval(mid, &mut buf);
                if buf[0] > T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            beta = Some((lo + hi) * lit::<T>(0.5));
            break;
        }
        prev = y1;
    }
    Ok(CalabiSolution { k, solution, beta, t_max })
}

impl<T: Real> CalabiSolution<T> {
    pub fn k(&self) -> &ScalarFn<T> {
        &self.k
    }

    pub fn beta(&self) -> Option<T> {
        self.beta
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    pub fn solution(&self) -> &Solution<T> {
        &self.solution
    }

    /// `(y, y′)` at `t ∈ [0, t_max]`.
    pub fn at(&self, t: T) -> Option<(T, T)> {
        self.solution.eval(t).map(|v| (v[0], v[1]))
    }

    /// End of the interval the invariants refer to: `β`, or `t_max`.
    pub fn horizon(&self) -> T {
        self.beta.unwrap_or(self.t_max)
    }

    /// Dense samples of `(t, y, y′)` on `[0, horizon]`: eight per step.
    pub fn samples(&self) -> Vec<(T, T, T)> {
        let end = self.horizon();
        let mut out = vec![(T::zero(), T::one(), T::zero())];
        let mut buf = [T::zero(); 2];
        for step in &self.solution.steps {
            if step.t0 >= end {
                break;
            }
            for j in 1..=8 {
                let t = (step.t0 + step.h * lit::<T>(j as f64 / 8.0)).min(end);
                step.eval(t, &mut buf);
                out.push((t, buf[0], buf[1]));
                if t >= end {
                    break;
                }
            }
        }
        out
    }

    pub fn invariants(&self) -> CalabiInvariants {
        let s = self.samples();
        let mut inv = CalabiInvariants {
            min_neg_dy: f64::INFINITY,
            max_neg_dy: f64::NEG_INFINITY,
            max_energy: f64::NEG_INFINITY,
            max_energy_increase: 0.0,
            samples: s.len(),
        };
        let mut last = None;
        for &(_, y, dy) in &s {
            let e = (y * y + dy * dy).to_f64();
            inv.min_neg_dy = inv.min_neg_dy.min(-dy.to_f64());
            inv.max_neg_dy = inv.max_neg_dy.max(-dy.to_f64());
            inv.max_energy = inv.max_energy.max(e);
            if let Some(p) = last {
                inv.max_energy_increase = inv.max_energy_increase.max(e - p);
            }
            last = Some(e);
        }
        inv
    }
}

/// Outcome of [`calabi_rigidity_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct RigidityScan<T> {
    pub beta: T,
    /// `min y′` over `[0, β]`.
    pub min_dy: T,
    /// `min y′ = −1` within `1e−6`.
    pub rigid: bool,
    /// `β − π/2` when rigid.
    pub switch_point: Option<T>,
    /// `∫₀^β |k − step_{t₁}|` when rigid.
    pub l1_to_step: Option<T>,
    /// When rigid: `β ≥ π/2` and the `L¹` distance is below `1e−4`.
    pub step_verified: Option<bool>,
}

fn l1_to_step<T: Real>(k: &ScalarFn<T>, t1: T, beta: T) -> T {
    let mut cuts: Vec<T> = k.breakpoints().into_iter().filter(|&b| b > T::zero() && b < beta).collect();
    if t1 > T::zero() && t1 < beta {
        cuts.push(t1);
    }
    cuts.push(T::zero());
    cuts.push(beta);
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let panels = 2048;
    let mut total = T::zero();
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / lit::<T>(panels as f64);
        for i in 0..panels {
            let t = w[0] + h * (lit::<T>(i as f64) + lit::<T>(0.5));
            let step = if t < t1 { T::zero() } else { T::one() };
            total += (k.eval(t) - step).abs() * h;
        }
    }
    total
}

pub fn calabi_rigidity_scan<T: Real>(sol: &CalabiSolution<T>) -> Result<RigidityScan<T>> {
    let beta = sol.beta().ok_or_else(|| SurfaceError::Precondition("β is infinite on [0, t_max]".into()))?;
    let min_dy = sol.samples().iter().map(|s| s.2).fold(T::zero(), |a, b| a.min(b));
    let rigid = min_dy <= -T::one() + T::tol(1e-6);
    let (switch_point, l1, verified) = if rigid {
        let t1 = beta - T::frac_pi_2();
        let l1 = l1_to_step(sol.k(), t1, beta);
        let ok = beta >= T::frac_pi_2() - T::tol(1e-6) && l1 <= T::tol(1e-4);
        (Some(t1), Some(l1), Some(ok))
    } else {
        (None, None, None)
    };
    Ok(RigidityScan { beta, min_dy, rigid, switch_point, l1_to_step: l1, step_verified: verified })
}

/// A seeded profile for the Calabi suite and whether it is a `{0 then 1}` step.
#[derive(Debug, Clone)]
pub struct CalabiCase<T: Real> {
    pub k: ScalarFn<T>,
    pub is_step: bool,
    pub label: &'static str,
}

/// Draws one of: a step `{0 then 1}`; piecewise constant values strictly
/// inside `(0, 1)` after an optional flat start; a smooth oscillating
/// profile inside `[0.1, 0.9]`; a step with a dent of height `½` inside the
/// quarter wave. Every non-step kind keeps `1 − k ≥ 0.05` on a set where `yy′`
/// carries weight, so `y′(β)` stays away from `−1`.
pub fn random_calabi_case<T: Real, R: Rng + ?Sized>(rng: &mut R) -> CalabiCase<T> {
    match rng.random_range(0..4) {
        0 => {
            let c = rng.random_range(0.0..2.0);
            CalabiCase { k: ScalarFn::step(T::zero(), T::one(), lit(c)), is_step: true, label: "step" }
        }
        1 => {
            let pieces = rng.random_range(2..=5);
            let mut t = 0.0;
            let mut breaks = Vec::new();
            for _ in 1..pieces {
                t += rng.random_range(0.1..0.8);
                breaks.push(lit::<T>(t));
            }
            let mut values: Vec<T> = (0..pieces).map(|_| lit(rng.random_range(0.05..0.95))).collect();
            if rng.random_bool(0.5) {
                values[0] = T::zero();
            }
            CalabiCase { k: ScalarFn::piecewise(breaks, values), is_step: false, label: "piecewise" }
        }
        2 => {
            let a = rng.random_range(0.5..4.0);
            let p = rng.random_range(0.0..std::f64::consts::TAU);
            let k = ScalarFn::smooth(move |t: T| lit::<T>(0.5) + lit::<T>(0.4) * (lit::<T>(a) * t + lit::<T>(p)).sin());
            CalabiCase { k, is_step: false, label: "smooth" }
        }
        _ => {
            let c = rng.random_range(0.0..1.5);
            let start = c + rng.random_range(0.2..0.6);
            let len = rng.random_range(0.3..0.6);
            let k = ScalarFn::piecewise(
                vec![lit(c), lit(start), lit(start + len)],
                vec![T::zero(), T::one(), lit(0.5), T::one()],
            );
            CalabiCase { k, is_step: false, label: "dented step" }
        }
    }
}

// ---------------------------------------------------------------------------
// Fermi-coordinate length bound.

#[derive(Debug, Clone, PartialEq)]
pub struct LengthReport<T> {
    pub length: T,
    /// `∫₀ᴸ −E_t(s, β(s)) ds`.
    pub total_curvature: T,
    pub k_min: T,
    pub k_max: T,
    /// `total_curvature ≤ L` up to roundoff.
    pub bound_holds: bool,
}

/// Checks `0 ≤ K ≤ 1` on `{0 ≤ t < β(s)}` (256 × 256 midpoint samples) and
/// evaluates the boundary-normal flux by the periodic midpoint rule.
pub fn geodesic_length_bound<T: Real>(m: &SurfaceMetric<T>, beta: &dyn Fn(T) -> T, panels: usize) -> Result<LengthReport<T>> {
    let SurfaceForm::Fermi { e, period } = m.form() else {
        return Err(SurfaceError::Precondition("length bound needs a Fermi metric".into()));
    };
    let l = *period;
    let n = 256;
    let tol = T::tol(1e-9);
    let half = lit::<T>(0.5);
    let (mut k_min, mut k_max) = (T::max_value().unwrap(), T::min_value().unwrap());
    for i in 0..n {
        let s = l * (lit::<T>(i as f64) + half) / lit::<T>(n as f64);
        let b = beta(s);
        for j in 0..n {
            let t = b * (lit::<T>(j as f64) + half) / lit::<T>(n as f64);
            let k = m.gaussian_curvature(s, t)?;
            if k < -tol || k > T::one() + tol {
                return Err(SurfaceError::CurvatureRange { s: s.to_f64(), t: t.to_f64(), k: k.to_f64() });
            }
            k_min = k_min.min(k);
            k_max = k_max.max(k);
        }
    }
    let h = l / lit::<T>(panels as f64);
    let mut total = T::zero();
    for i in 0..panels {
        let s = (lit::<T>(i as f64) + half) * h;
        total -= e(s, beta(s))[1] * h;
    }
    Ok(LengthReport { length: l, total_curvature: total, k_min, k_max, bound_holds: total <= l * (T::one() + T::tol(1e-12)) })
}

/// Round sphere about the equator: `E = cos t`, `β ≡ π/2`, `L = 2π`.
pub fn round_sphere_fermi<T: Real>() -> (SurfaceMetric<T>, T) {
    let m = SurfaceMetric::fermi(|_s: T, t: T| [t.cos(), -t.sin(), -t.cos()], T::two_pi()).expect("geodesic base");
    (m, T::frac_pi_2())
}

/// Cylinder of height `2(β − π/2)` capped by unit hemispheres.
pub fn capped_cylinder_fermi<T: Real>(beta: T) -> Result<(SurfaceMetric<T>, T)> {
    let c = beta - T::frac_pi_2();
    if c < T::zero() {
        return Err(SurfaceError::Invalid(format!("β = {beta} is below π/2")));
    }
    let m = SurfaceMetric::fermi(
        move |_s: T, t: T| {
            if t < c {
                [T::one(), T::zero(), T::zero()]
            } else {
                let u = t - c;
                [u.cos(), -u.sin(), -u.cos()]
            }
        },
        T::two_pi(),
    )?;
    Ok((m, beta))
}

/// `E = cos(κt)`, `κ = 2π/(2π + 0.3)`: constant curvature `κ² < 1` on a
/// geodesic of length `2π + 0.3`, with `β = π/(2κ)` where `E` vanishes.
pub fn subcritical_fermi<T: Real>() -> (SurfaceMetric<T>, T) {
    let l = T::two_pi() + lit::<T>(0.3);
    let kappa = T::two_pi() / l;
    let m = SurfaceMetric::fermi(
        move |_s: T, t: T| {
            let a = kappa * t;
            [a.cos(), -kappa * a.sin(), -kappa * kappa * a.cos()]
        },
        l,
    )
    .expect("geodesic base");
    (m, T::frac_pi_2() / kappa)
}

// ---------------------------------------------------------------------------
// Grid fields.

/// Values on a uniform grid, row-major with `nx` values per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    pub nx: usize,
    pub ny: usize,
    pub x0: T,
    pub y0: T,
    pub dx: T,
    pub dy: T,
    pub values: Vec<T>,
}

impl<T: Real> GridField<T> {
    pub fn sample(nx: usize, ny: usize, x0: T, y0: T, dx: T, dy: T, f: impl Fn(T, T) -> Result<T>) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = y0 + dy * lit::<T>(j as f64);
            for i in 0..nx {
                values.push(f(x0 + dx * lit::<T>(i as f64), y)?);
            }
        }
        Ok(Self { nx, ny, x0, y0, dx, dy, values })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[j * self.nx + i]
    }

    /// Comma-delimited text: a header line `nx,ny,x0,y0,dx,dy`, its values,
    /// then one line per grid row.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "nx,ny,x0,y0,dx,dy")?;
        let f = |v: T| format!("{:.16e}", v.to_f64());
        writeln!(w, "{},{},{},{},{},{}", self.nx, self.ny, f(self.x0), f(self.y0), f(self.dx), f(self.dy))?;
        for row in self.values.chunks(self.nx.max(1)) {
            let line: Vec<String> = row.iter().map(|&v| f(v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let perr = |line: usize, msg: String| SurfaceError::Parse { line, msg };
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(s))) => Ok((i + 1, s)),
                Some((_, Err(e))) => Err(SurfaceError::Io(e.to_string())),
                None => Err(perr(0, format!("missing {what}"))),
            }
        };
        let (ln, head) = next("header")?;
        if head.trim() != "nx,ny,x0,y0,dx,dy" {
            return Err(perr(ln, format!("unexpected header `{head}`")));
        }
        let (ln, meta) = next("grid parameters")?;
        let parts: Vec<&str> = meta.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(perr(ln, format!("expected 6 grid parameters, found {}", parts.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| perr(ln, format!("`{s}`: {e}")));
        let real = |s: &str| s.parse::<f64>().map(lit::<T>).map_err(|e| perr(ln, format!("`{s}`: {e}")));
        let (nx, ny) = (int(parts[0])?, int(parts[1])?);
        let (x0, y0, dx, dy) = (real(parts[2])?, real(parts[3])?, real(parts[4])?, real(parts[5])?);
        let mut values = Vec::with_capacity(nx * ny);
        for _ in 0..ny {
            let (ln, row) = next("grid row")?;
            let before = values.len();
            for s in row.split(',') {
                let s = s.trim();
                values.push(s.parse::<f64>().map(lit::<T>).map_err(|e| perr(ln, format!("`{s}`: {e}")))?);
            }
            if values.len() - before != nx {
                return Err(perr(ln, format!("expected {nx} values, found {}", values.len() - before)));
            }
        }
        Ok(Self { nx, ny, x0, y0, dx, dy, values })
    }
}

/// `K` sampled on the cell centres of an `nx × ny` grid over `d`.
pub fn curvature_grid<T: Real>(m: &SurfaceMetric<T>, d: &Rect<T>, nx: usize, ny: usize) -> Result<GridField<T>> {
    let dx = (d.x1 - d.x0) / lit::<T>(nx as f64);
    let dy = (d.y1 - d.y0) / lit::<T>(ny as f64);
    let half = lit::<T>(0.5);
    GridField::sample(nx, ny, d.x0 + half * dx, d.y0 + half * dy, dx, dy, |x, y| m.gaussian_curvature(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    #[test]
    fn closed_forms() {
        let (sphere, _) = round_sphere_fermi::<f64>();
        assert!((sphere.gaussian_curvature(0.3, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let flat = SurfaceMetric::warped2d(Signature::RIEMANNIAN, WarpFn::constant(1.0).unwrap());
        assert_eq!(flat.gaussian_curvature(0.1, 5.0).unwrap(), 0.0);
        // de Sitter strip `dx²cosh²y − dy²` has ⟨R(X,Y)Y,X⟩ = −1.
        let ds = WarpFn::new(f64::cosh, f64::sinh, f64::cosh, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let m = SurfaceMetric::warped2d(Signature(1, -1), ds);
        assert!((m.gaussian_curvature(0.0, 0.7).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn standard_frame_is_reproduced() {
        for sig in [Signature(-1, 1), Signature(1, -1)] {
            let m = SurfaceMetric::<f64>::standard(sig);
            let f = frame_extension(&m).unwrap();
            assert_eq!(f.at(0.3, -2.0).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
            assert_eq!(f.connection_form(0.3, -2.0).unwrap(), [0.0, 0.0]);
        }
        assert!(frame_extension(&SurfaceMetric::<f64>::standard(Signature::RIEMANNIAN)).is_err());
    }

    #[test]
    fn flat_metric_has_zero_flux() {
        let m = SurfaceMetric::<f64>::standard(Signature(-1, 1));
        let d = Rect::new(-1.0, 1.0, -1.0, 1.0);
        let gb = gauss_bonnet_defect(&m, &d, 16, None).unwrap();
        assert_eq!((gb.interior, gb.boundary, gb.defect), (0.0, 0.0, 0.0));
    }

    #[test]
    fn bump_flux_and_precondition() {
        let m = SurfaceMetric::conformal(Signature::RIEMANNIAN, vec![Bump::new(0.0f64, 0.0, 1.0, 0.3)]);
        let d = Rect::new(-2.0, 2.0, -2.0, 2.0);
        let gb = gauss_bonnet_defect(&m, &d, 256, None).unwrap();
        assert!(gb.defect.abs() < 1e-5, "{gb:?}");
        let small = Rect::new(-0.5, 0.5, -2.0, 2.0);
        assert!(matches!(gauss_bonnet_defect(&m, &small, 32, None), Err(SurfaceError::Precondition(_))));
    }

    #[test]
    fn halfplane_realizability() {
        let (_, c) = construct_flat_outside_halfplane::<f64>(-1, Signature(1, 1)).unwrap();
        assert!(c.k_max <= 0.0 && c.k_min < -0.1);
        let (_, c) = construct_flat_outside_halfplane::<f64>(1, Signature(-1, 1)).unwrap();
        assert!(c.k_min >= 0.0);
        assert!(matches!(construct_flat_outside_halfplane::<f64>(1, Signature(1, 1)), Err(SurfaceError::Unrealized(_))));
        assert!(matches!(construct_flat_outside_halfplane::<f64>(1, Signature(1, -1)), Err(SurfaceError::Unrealized(_))));
        let flat = SurfaceMetric::warped2d(Signature(1, 1), WarpFn::constant(1.0).unwrap());
        assert_eq!(certify_flat_outside_halfplane(&flat, -1), Err(SurfaceError::IdenticallyZero));
    }

    #[test]
    fn calabi_closed_forms() {
        let s = calabi_ode(ScalarFn::Const(1.0), 10.0).unwrap();
        let b = s.beta().unwrap();
        assert!((b - FRAC_PI_2).abs() < 1e-9);
        assert!((s.at(b).unwrap().1 + 1.0).abs() < 1e-9);
        let r = calabi_rigidity_scan(&s).unwrap();
        assert!(r.rigid && r.step_verified == Some(true));
        assert!(r.switch_point.unwrap().abs() < 1e-8);

        let z = calabi_ode(ScalarFn::Const(0.0), 10.0).unwrap();
        assert_eq!(z.beta(), None);
        assert!(calabi_rigidity_scan(&z).is_err());

        let st = calabi_ode(ScalarFn::step(0.0, 1.0, 0.8), 10.0).unwrap();
        let b = st.beta().unwrap();
        assert!((b - 0.8 - FRAC_PI_2).abs() < 1e-6);
        assert!((st.at(b).unwrap().1 + 1.0).abs() < 1e-6);
        let r = calabi_rigidity_scan(&st).unwrap();
        assert!(r.rigid && r.step_verified == Some(true), "{r:?}");
        assert!((r.switch_point.unwrap() - 0.8).abs() < 1e-6);

        assert!(matches!(calabi_ode(ScalarFn::Const(1.5), 1.0), Err(SurfaceError::KOutOfRange { .. })));
    }

    #[test]
    fn calabi_random_cases_keep_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let case = random_calabi_case::<f64, _>(&mut rng);
            let s = calabi_ode(case.k.clone(), 40.0).unwrap();
            assert!(s.invariants().holds(1e-9), "{:?}", s.invariants());
            let r = calabi_rigidity_scan(&s).unwrap();
            assert_eq!(r.rigid, case.is_step, "{} {r:?}", case.label);
        }
    }

    #[test]
    fn length_identity() {
        let (m, b) = round_sphere_fermi::<f64>();
        let r = geodesic_length_bound(&m, &|_| b, 512).unwrap();
        assert!((r.total_curvature - TAU).abs() < 1e-12);
        let (m, b) = capped_cylinder_fermi::<f64>(2.0).unwrap();
        let r = geodesic_length_bound(&m, &|_| b, 512).unwrap();
        assert!((r.total_curvature - TAU).abs() < 1e-12 && r.bound_holds);
        let (m, b) = subcritical_fermi::<f64>();
        let r = geodesic_length_bound(&m, &|_| b, 512).unwrap();
        assert!((r.total_curvature - TAU).abs() < 1e-12 && r.length > r.total_curvature + 0.29);
        assert!(r.k_max < 1.0);
        let bad = SurfaceMetric::fermi(|_s: f64, t: f64| [(2.0 * t).cos(), -2.0 * (2.0 * t).sin(), -4.0 * (2.0 * t).cos()], TAU).unwrap();
        assert!(matches!(geodesic_length_bound(&bad, &|_| PI / 4.0, 64), Err(SurfaceError::CurvatureRange { .. })));
    }

    #[test]
    fn grid_round_trip() {
        let m = SurfaceMetric::conformal(Signature(-1, 1), vec![Bump::new(0.0, 0.0, 1.0, 0.2)]);
        let g = curvature_grid(&m, &Rect::new(-1.0, 1.0, -1.0, 1.0), 7, 5).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let back = GridField::<f64>::read_from(&buf[..]).unwrap();
        assert_eq!(back, g);
        let err = GridField::<f64>::read_from("nx,ny,x0,y0,dx,dy\n2,1,0,0,1,1\n1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SurfaceError::Parse { line: 3, .. }));
    }
}
