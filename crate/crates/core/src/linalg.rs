//! Linear algebra on a real inner-product space of arbitrary index.
//!
//! An [`InnerSpace`] carries the Gram matrix `G` of a nondegenerate symmetric
//! bilinear form. An [`Operator`] is a linear map on that space stored as a
//! plain matrix; it is self-adjoint when `G·A` is symmetric. Positivity is
//! always taken with respect to the form: `A ⪰ 0` iff `⟨Ax,x⟩ ≥ 0` for all
//! `x`, i.e. iff the symmetric matrix `G·A` is positive semidefinite. This
//! is *not* the same as `A` having non-negative eigenvalues once the form is
//! indefinite.

use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::scalar::{finite, lit, Real};

/// Relative tolerance for the self-adjointness test.
pub const SELF_ADJOINT_RTOL: f64 = 1e-12;
/// Relative tolerance in the PSD test: `λ_min(G·A) ≥ −tol·(1 + ‖G·A‖)`.
pub const PSD_RTOL: f64 = 1e-9;
/// Minimum `|det G|` accepted for a Gram matrix.
pub const DEGENERACY_TOL: f64 = 1e-12;
/// Singular values below this fraction of `σ_max` count as zero.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gram matrix is not symmetric (defect {0:e})")]
    NotSymmetric(f64),
    #[error("gram matrix is degenerate (|det| = {0:e})")]
    Degenerate(f64),
    #[error("requested index {requested} but the gram matrix has {actual} negative eigenvalues")]
    IndexMismatch { requested: usize, actual: usize },
    #[error("operator is not self-adjoint (relative defect {0:e})")]
    NotSelfAdjoint(f64),
    #[error("operators live on different inner-product spaces")]
    SpaceMismatch,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical rank is {0}, not 1")]
    Rank(usize),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type Result<T, E = LinalgError> = std::result::Result<T, E>;

/// `ℝⁿ` with a symmetric nondegenerate bilinear form of index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSpace<T: Real> {
    dim: usize,
    index: usize,
    gram: DMatrix<T>,
    gram_inv: DMatrix<T>,
}

impl<T: Real> InnerSpace<T> {
    /// The standard form `diag(−1 ×k, +1 ×(n−k))`.
    pub fn standard(dim: usize, index: usize) -> Result<Self> {
        if dim == 0 {
            return Err(LinalgError::DimensionMismatch { expected: 1, got: 0 });
        }
        if index > dim {
            return Err(LinalgError::IndexMismatch { requested: index, actual: dim });
        }
        let gram = DMatrix::from_fn(dim, dim, |i, j| {
            if i != j {
                T::zero()
            } else if i < index {
                -T::one()
            } else {
                T::one()
            }
        });
        Ok(Self { dim, index, gram_inv: gram.clone(), gram })
    }

    /// Positive definite Euclidean space.
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::standard(dim, 0)
    }

    /// Builds a space from an explicit Gram matrix; the index is computed.
    pub fn from_gram(gram: DMatrix<T>) -> Result<Self> {
        let dim = gram.nrows();
        if dim == 0 || gram.ncols() != dim {
            return Err(LinalgError::DimensionMismatch { expected: dim.max(1), got: gram.ncols() });
        }
        let scale = gram.norm().to_f64().max(1.0);
        let asym = (&gram - gram.transpose()).norm().to_f64();
        if asym > SELF_ADJOINT_RTOL * scale {
            return Err(LinalgError::NotSymmetric(asym));
        }
        let det = gram.determinant().to_f64();
        if !(det.abs() >= DEGENERACY_TOL) {
            return Err(LinalgError::Degenerate(det.abs()));
        }
        let sym = (&gram + gram.transpose()) * lit::<T>(0.5);
        let eig = SymmetricEigen::new(sym.clone());
        let index = eig.eigenvalues.iter().filter(|v| **v < T::zero()).count();
        let gram_inv = sym
            .clone()
            .try_inverse()
            .ok_or(LinalgError::Degenerate(det.abs()))?;
        Ok(Self { dim, index, gram: sym, gram_inv })
    }

    /// Like [`from_gram`](Self::from_gram) but also checks the index.
    pub fn with_index(gram: DMatrix<T>, index: usize) -> Result<Self> {
        let space = Self::from_gram(gram)?;
        if space.index != index {
            return Err(LinalgError::IndexMismatch { requested: index, actual: space.index });
        }
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn gram_inv(&self) -> &DMatrix<T> {
        &self.gram_inv
    }

    /// `true` for index 0 or index n.
    pub fn is_definite(&self) -> bool {
        self.index == 0 || self.index == self.dim
    }

    pub fn inner(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        x.dot(&(&self.gram * y))
    }

    pub fn norm_sq(&self, x: &DVector<T>) -> T {
        self.inner(x, x)
    }

    /// `⟨x,x⟩⟨y,y⟩ − ⟨x,y⟩²`, the form induced on decomposable bivectors.
    pub fn wedge_norm_sq(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        let xy = self.inner(x, y);
        self.norm_sq(x) * self.norm_sq(y) - xy * xy
    }

    /// Adjoint of a matrix with respect to the form: `G⁻¹ Mᵀ G`.
    pub fn adjoint(&self, m: &DMatrix<T>) -> DMatrix<T> {
        &self.gram_inv * m.transpose() * &self.gram
    }

    fn check_vec(&self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.dim {
            return Err(LinalgError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }
}

/// A linear map on an [`InnerSpace`].
#[derive(Debug, Clone)]
pub struct Operator<T: Real> {
    space: Arc<InnerSpace<T>>,
    mat: DMatrix<T>,
}

impl<T: Real> PartialEq for Operator<T> {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat && same_space(&self.space, &other.space)
    }
}

pub(crate) fn same_space<T: Real>(a: &Arc<InnerSpace<T>>, b: &Arc<InnerSpace<T>>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl<T: Real> Operator<T> {
    pub fn new(space: Arc<InnerSpace<T>>, mat: DMatrix<T>) -> Result<Self> {
        if mat.nrows() != space.dim || mat.ncols() != space.dim {
            return Err(LinalgError::DimensionMismatch { expected: space.dim, got: mat.nrows().max(mat.ncols()) });
        }
        Ok(Self { space, mat })
    }

    pub fn zero(space: Arc<InnerSpace<T>>) -> Self {
        let n = space.dim;
        Self { space, mat: DMatrix::zeros(n, n) }
    }

    pub fn identity(space: Arc<InnerSpace<T>>) -> Self {
        let n = space.dim;
        Self { space, mat: DMatrix::identity(n, n) }
    }

    pub fn diagonal(space: Arc<InnerSpace<T>>, diag: &[T]) -> Result<Self> {
        if diag.len() != space.dim {
            return Err(LinalgError::DimensionMismatch { expected: space.dim, got: diag.len() });
        }
        let mat = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        Ok(Self { space, mat })
    }

    /// The operator whose quadratic form is `q`, i.e. `G⁻¹·q`. Self-adjoint
    /// whenever `q` is symmetric.
    pub fn from_quadratic(space: Arc<InnerSpace<T>>, q: &DMatrix<T>) -> Result<Self> {
        let mat = space.gram_inv() * q;
        Self::new(space, mat)
    }

    pub fn space(&self) -> &Arc<InnerSpace<T>> {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    /// Matrix of the bilinear form `(x, y) ↦ ⟨x, Ay⟩`, i.e. `G·A`.
    pub fn quadratic(&self) -> DMatrix<T> {
        self.space.gram() * &self.mat
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.mat * x
    }

    /// `⟨Ax, y⟩`.
    pub fn form(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        self.space.inner(&(&self.mat * x), y)
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space.clone(), mat: self.space.adjoint(&self.mat) }
    }

    /// `‖G·A − (G·A)ᵀ‖ / ‖G·A‖` (Frobenius), zero for the zero map.
    pub fn adjoint_defect(&self) -> T {
        let q = self.quadratic();
        let skew = (&q - q.transpose()).norm();
        let scale = q.norm();
        if scale == T::zero() {
            skew
        } else {
            skew / scale
        }
    }

    /// The self-adjoint part `½(A + A*)`.
    pub fn self_adjoint_part(&self) -> Self {
        let mat = (&self.mat + self.space.adjoint(&self.mat)) * lit::<T>(0.5);
        Self { space: self.space.clone(), mat }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { space: self.space.clone(), mat: &self.mat * c }
    }

    pub fn trace(&self) -> T {
        self.mat.trace()
    }

    pub fn norm(&self) -> T {
        self.mat.norm()
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self> {
        if !same_space(&self.space, &rhs.space) {
            return Err(LinalgError::SpaceMismatch);
        }
        Ok(Self { space: self.space.clone(), mat: &self.mat - &rhs.mat })
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self> {
        if !same_space(&self.space, &rhs.space) {
            return Err(LinalgError::SpaceMismatch);
        }
        Ok(Self { space: self.space.clone(), mat: &self.mat + &rhs.mat })
    }

    pub fn same_space(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space)
    }
}

impl<'a, T: Real> Add<&'a Operator<T>> for &'a Operator<T> {
    type Output = Operator<T>;
    fn add(self, rhs: &'a Operator<T>) -> Operator<T> {
        Operator { space: self.space.clone(), mat: &self.mat + &rhs.mat }
    }
}

impl<'a, T: Real> Sub<&'a Operator<T>> for &'a Operator<T> {
    type Output = Operator<T>;
    fn sub(self, rhs: &'a Operator<T>) -> Operator<T> {
        Operator { space: self.space.clone(), mat: &self.mat - &rhs.mat }
    }
}

impl<'a, T: Real> Mul<&'a Operator<T>> for &'a Operator<T> {
    type Output = Operator<T>;
    fn mul(self, rhs: &'a Operator<T>) -> Operator<T> {
        Operator { space: self.space.clone(), mat: &self.mat * &rhs.mat }
    }
}

/// `true` iff `G·A` is symmetric within [`SELF_ADJOINT_RTOL`].
pub fn is_self_adjoint<T: Real>(a: &Operator<T>) -> bool {
    a.adjoint_defect() <= T::tol(SELF_ADJOINT_RTOL)
}

fn require_self_adjoint<T: Real>(a: &Operator<T>) -> Result<()> {
    if is_self_adjoint(a) {
        Ok(())
    } else {
        Err(LinalgError::NotSelfAdjoint(a.adjoint_defect().to_f64()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport<T> {
    pub psd: bool,
    /// Least eigenvalue of the symmetric matrix `G·A`.
    pub min_quadratic_eigenvalue: T,
    /// Largest absolute eigenvalue of `G·A`.
    pub scale: T,
}

fn quadratic_spectrum<T: Real>(a: &Operator<T>) -> (T, T) {
    let q = a.quadratic();
    let sym = (&q + q.transpose()) * lit::<T>(0.5);
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let min = eig.iter().copied().fold(T::max_value().unwrap(), |m, v| if v < m { v } else { m });
    let scale = eig.iter().fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
    (min, scale)
}

/// Positive semidefiniteness with respect to the form.
pub fn psd_check<T: Real>(a: &Operator<T>) -> Result<PsdReport<T>> {
    require_self_adjoint(a)?;
    let (min, scale) = quadratic_spectrum(a);
    let psd = min >= -T::tol(PSD_RTOL) * (T::one() + scale);
    Ok(PsdReport { psd, min_quadratic_eigenvalue: min, scale })
}

/// `A ≤ B` iff `B − A` is positive semidefinite.
pub fn order_leq<T: Real>(a: &Operator<T>, b: &Operator<T>) -> Result<bool> {
    require_self_adjoint(a)?;
    require_self_adjoint(b)?;
    let diff = b.checked_sub(a)?;
    // Differences of self-adjoint maps are self-adjoint up to rounding.
    let diff = diff.self_adjoint_part();
    Ok(psd_check(&diff)?.psd)
}

/// For `A ⪰ 0` and `⟨Ax₀,x₀⟩ = 0` returns `A·x₀`, which must vanish.
pub fn kernel_lemma_witness<T: Real>(a: &Operator<T>, x0: &DVector<T>) -> Result<DVector<T>> {
    a.space.check_vec(x0)?;
    let report = psd_check(a)?;
    if !report.psd {
        return Err(LinalgError::Precondition(format!(
            "operator is not positive semidefinite (λ_min = {:e})",
            report.min_quadratic_eigenvalue.to_f64()
        )));
    }
    let value = a.form(x0, x0);
    let bound = T::tol(PSD_RTOL) * (T::one() + report.scale) * x0.norm_squared();
    if value.abs() > bound {
        return Err(LinalgError::Precondition(format!(
            "⟨Ax₀,x₀⟩ = {:e} is not zero",
            value.to_f64()
        )));
    }
    Ok(a.apply(x0))
}

/// `⟨Ax,x⟩⟨Ay,y⟩ − ⟨Ax,y⟩²`.
pub fn wedge_value<T: Real>(a: &Operator<T>, x: &DVector<T>, y: &DVector<T>) -> Result<T> {
    a.space.check_vec(x)?;
    a.space.check_vec(y)?;
    Ok(wedge_unchecked(&a.quadratic(), x, y))
}

fn wedge_unchecked<T: Real>(q: &DMatrix<T>, x: &DVector<T>, y: &DVector<T>) -> T {
    let qx = q * x;
    let xx = x.dot(&qx);
    let xy = y.dot(&qx);
    let yy = y.dot(&(q * y));
    xx * yy - xy * xy
}

/// Budget and tolerance of the decomposable-pair search in [`wedge_leq`].
#[derive(Debug, Clone, PartialEq)]
pub struct WedgeSampler {
    /// Number of low-discrepancy pairs evaluated.
    pub samples: usize,
    /// Coordinate-descent sweeps per step size during refinement.
    pub refine_sweeps: usize,
    /// Relative tolerance; the gap must be ≥ `−tol·(1 + s²)` where `s` is
    /// the largest spectral scale of the two quadratic forms.
    pub tol: f64,
    /// Skip this many leading points of the Halton sequence.
    pub offset: usize,
}

impl Default for WedgeSampler {
    fn default() -> Self {
        Self { samples: 2000, refine_sweeps: 40, tol: 1e-9, offset: 17 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WedgeReport<T: Real> {
    pub holds: bool,
    /// Minimum over the explored pairs of `Λ²(B) − Λ²(A)` on unit pairs.
    pub worst_gap: T,
    pub worst_pair: (DVector<T>, DVector<T>),
    /// Number of usable (linearly independent) sampled pairs.
    pub evaluated: usize,
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Point `i` of the Halton sequence in `dim ≤ 16` dimensions, mapped to `[−1,1]^dim`.
pub fn halton_point(i: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton_point supports at most 16 dimensions");
    (0..dim).map(|d| 2.0 * radical_inverse(i, PRIMES[d]) - 1.0).collect()
}

fn split_pair<T: Real>(z: &[T], n: usize) -> Option<(DVector<T>, DVector<T>)> {
    let x = DVector::from_column_slice(&z[..n]);
    let y = DVector::from_column_slice(&z[n..]);
    let (nx, ny) = (x.norm(), y.norm());
    let small = lit::<T>(1e-3);
    if nx < small || ny < small {
        return None;
    }
    let x = x / nx;
    let y = y / ny;
    let c = x.dot(&y);
    if T::one() - c * c < lit::<T>(1e-6) {
        return None;
    }
    Some((x, y))
}

/// Checks `Λ²(A) ⪯ Λ²(B)` on decomposable pairs by deterministic sampling
/// followed by coordinate-descent refinement from the worst sample.
pub fn wedge_leq<T: Real>(
    a: &Operator<T>,
    b: &Operator<T>,
    sampler: &WedgeSampler,
) -> Result<WedgeReport<T>> {
    require_self_adjoint(a)?;
    require_self_adjoint(b)?;
    if !a.same_space(b) {
        return Err(LinalgError::SpaceMismatch);
    }
    let n = a.dim();
    if 2 * n > PRIMES.len() {
        return Err(LinalgError::Precondition(format!("wedge sampling supports n ≤ 8, got {n}")));
    }
    let qa = a.quadratic();
    let qb = b.quadratic();
    let gap = |x: &DVector<T>, y: &DVector<T>| wedge_unchecked(&qb, x, y) - wedge_unchecked(&qa, x, y);

    let mut best: Option<(T, Vec<T>)> = None;
    let mut evaluated = 0usize;
    for i in 0..sampler.samples {
        let z: Vec<T> = halton_point((sampler.offset + i) as u64, 2 * n).into_iter().map(lit).collect();
        let Some((x, y)) = split_pair(&z, n) else { continue };
        let g = gap(&x, &y);
        if !finite(g) {
            return Err(LinalgError::Inconclusive("non-finite wedge value".into()));
        }
        evaluated += 1;
        if best.as_ref().map_or(true, |(v, _)| g < *v) {
            let mut zz: Vec<T> = x.iter().copied().collect();
            zz.extend(y.iter().copied());
            best = Some((g, zz));
        }
    }
    let Some((mut worst, mut z)) = best else {
        return Err(LinalgError::Inconclusive("sampler produced no usable pairs".into()));
    };
    if evaluated * 2 < sampler.samples || n < 2 {
        return Err(LinalgError::Inconclusive(format!(
            "only {evaluated} of {} sampled pairs were usable",
            sampler.samples
        )));
    }

    // Coordinate descent on the unnormalized 2n-vector.
    let mut step = 0.25;
    while step > 1e-8 {
        for _ in 0..sampler.refine_sweeps {
            let mut improved = false;
            for k in 0..2 * n {
                for sign in [1.0, -1.0] {
                    let mut cand = z.clone();
                    cand[k] += lit::<T>(sign * step);
                    if let Some((x, y)) = split_pair(&cand, n) {
                        let g = gap(&x, &y);
                        if finite(g) && g < worst {
                            worst = g;
                            let mut zz: Vec<T> = x.iter().copied().collect();
                            zz.extend(y.iter().copied());
                            z = zz;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        step *= 0.5;
    }

    let (x, y) = split_pair(&z, n).expect("refined pair stays independent");
    // Certify by re-evaluating through the public path.
    let certified = wedge_value(b, &x, &y)? - wedge_value(a, &x, &y)?;
    let (_, sa) = quadratic_spectrum(a);
    let (_, sb) = quadratic_spectrum(b);
    let s = if sa > sb { sa } else { sb };
    let holds = certified >= -T::tol(sampler.tol) * (T::one() + s * s);
    Ok(WedgeReport { holds, worst_gap: certified, worst_pair: (x, y), evaluated })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOne<T: Real> {
    /// `+1` or `−1`.
    pub sign: i8,
    pub e: DVector<T>,
}

/// Writes a rank-one self-adjoint map as `x ↦ σ⟨x,e⟩e`.
pub fn rank_one_decompose<T: Real>(s: &Operator<T>) -> Result<RankOne<T>> {
    require_self_adjoint(s)?;
    let sv = s.mat.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(T::zero(), |m, v| if *v > m { *v } else { m });
    let rank = if smax == T::zero() {
        0
    } else {
        sv.iter().filter(|v| **v > T::tol(RANK_RTOL) * smax).count()
    };
    if rank != 1 {
        return Err(LinalgError::Rank(rank));
    }
    // S·G⁻¹ = σ e eᵀ.
    let m = &s.mat * s.space.gram_inv();
    let m = (&m + m.transpose()) * lit::<T>(0.5);
    let (j, mjj) = (0..m.nrows())
        .map(|j| (j, m[(j, j)]))
        .fold((0, T::zero()), |acc, (j, v)| if v.abs() > acc.1.abs() { (j, v) } else { acc });
    let sign: i8 = if mjj >= T::zero() { 1 } else { -1 };
    let mut e = m.column(j).into_owned() / mjj.abs().sqrt();
    let lead = e.iter().copied().fold(T::zero(), |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if lead < T::zero() {
        e = -e;
    }
    let sigma: T = lit(sign as f64);
    let rebuilt = &e * e.transpose() * s.space.gram() * sigma;
    let err = (&rebuilt - &s.mat).norm();
    if err > T::tol(RANK_RTOL) * s.mat.norm() {
        return Err(LinalgError::Precondition(format!(
            "rank-one reconstruction error {:e}",
            err.to_f64()
        )));
    }
    Ok(RankOne { sign, e })
}

/// Random symmetric matrix with standard normal entries, times `scale`.
pub fn random_symmetric<T: Real, R: Rng>(n: usize, scale: f64, rng: &mut R) -> DMatrix<T> {
    let mut m = DMatrix::<T>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample(StandardNormal);
            let v = lit::<T>(v * scale);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Random symmetric PSD matrix `C·Cᵀ` with `C` of shape `n × rank`.
pub fn random_psd<T: Real, R: Rng>(n: usize, rank: usize, scale: f64, rng: &mut R) -> DMatrix<T> {
    let c = DMatrix::<T>::from_fn(n, rank, |_, _| {
        let v: f64 = rng.sample(StandardNormal);
        lit(v * scale / (rank.max(1) as f64).sqrt())
    });
    &c * c.transpose()
}

/// Random self-adjoint operator: `G⁻¹·M` for a random symmetric `M`.
pub fn random_self_adjoint<T: Real, R: Rng>(space: &Arc<InnerSpace<T>>, scale: f64, rng: &mut R) -> Operator<T> {
    let m = random_symmetric(space.dim(), scale, rng);
    Operator::from_quadratic(space.clone(), &m).expect("dimensions agree")
}

/// Random PSD increment `G⁻¹·Q` with `Q` symmetric PSD.
pub fn random_psd_operator<T: Real, R: Rng>(space: &Arc<InnerSpace<T>>, scale: f64, rng: &mut R) -> Operator<T> {
    let n = space.dim();
    let rank = rng.random_range(1..=n);
    let q = random_psd(n, rank, scale, rng);
    Operator::from_quadratic(space.clone(), &q).expect("dimensions agree")
}

/// A pair `A ≤ B` with `B = A + G⁻¹·Q`; `increment_scale = 0` gives `A = B`.
pub fn monotone_pair_with<T: Real, R: Rng>(
    space: &Arc<InnerSpace<T>>,
    base_scale: f64,
    increment_scale: f64,
    rng: &mut R,
) -> (Operator<T>, Operator<T>) {
    let a = random_self_adjoint(space, base_scale, rng);
    let inc = random_psd_operator(space, increment_scale, rng);
    let b = &a + &inc;
    (a, b)
}

/// Seeded generator of ordered pairs used by the randomized suites.
pub fn random_monotone_pair<T: Real>(space: &Arc<InnerSpace<T>>, seed: u64) -> (Operator<T>, Operator<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    monotone_pair_with(space, 1.0, 1.0, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn lorentz() -> Arc<InnerSpace<f64>> {
        Arc::new(InnerSpace::from_gram(dmatrix![1.0, 0.0; 0.0, -1.0]).unwrap())
    }

    fn op(space: &Arc<InnerSpace<f64>>, m: DMatrix<f64>) -> Operator<f64> {
        Operator::new(space.clone(), m).unwrap()
    }

    #[test]
    fn standard_space_has_requested_index() {
        let s = InnerSpace::<f64>::standard(4, 1).unwrap();
        assert_eq!(s.index(), 1);
        assert_eq!(s.gram()[(0, 0)], -1.0);
        assert_eq!(InnerSpace::from_gram(s.gram().clone()).unwrap().index(), 1);
        assert!(InnerSpace::<f64>::standard(2, 3).is_err());
    }

    #[test]
    fn degenerate_and_asymmetric_grams_rejected() {
        let deg = InnerSpace::<f64>::from_gram(dmatrix![1.0, 1.0; 1.0, 1.0]);
        assert!(matches!(deg, Err(LinalgError::Degenerate(_))));
        let asym = InnerSpace::<f64>::from_gram(dmatrix![1.0, 0.5; 0.0, 1.0]);
        assert!(matches!(asym, Err(LinalgError::NotSymmetric(_))));
        let idx = InnerSpace::<f64>::with_index(dmatrix![1.0, 0.0; 0.0, -1.0], 0);
        assert!(matches!(idx, Err(LinalgError::IndexMismatch { requested: 0, actual: 1 })));
    }

    #[test]
    fn rotation_generator_is_self_adjoint_for_lorentz_form() {
        let g = lorentz();
        // Complex eigenvalues ±i, yet self-adjoint.
        assert!(is_self_adjoint(&op(&g, dmatrix![0.0, 1.0; -1.0, 0.0])));
        assert!(is_self_adjoint(&Operator::identity(g.clone())));
        assert!(!is_self_adjoint(&op(&g, dmatrix![0.0, 1.0; 1.0, 0.0])));
    }

    #[test]
    fn identity_is_not_psd_in_indefinite_signature() {
        let g = lorentz();
        let r = psd_check(&Operator::identity(g.clone())).unwrap();
        assert!(!r.psd);
        assert_eq!(r.min_quadratic_eigenvalue, -1.0);

        let z = psd_check(&Operator::zero(g.clone())).unwrap();
        assert!(z.psd);
        assert_eq!(z.min_quadratic_eigenvalue, 0.0);

        // diag(1,−1) is positive definite and has exactly one negative eigenvalue.
        let a = op(&g, dmatrix![1.0, 0.0; 0.0, -1.0]);
        let r = psd_check(&a).unwrap();
        assert!(r.psd && r.min_quadratic_eigenvalue > 0.0);
        let negatives = a.matrix().clone().symmetric_eigenvalues().iter().filter(|v| **v < 0.0).count();
        assert_eq!(negatives, 1);
    }

    #[test]
    fn psd_rejects_non_self_adjoint() {
        let g = lorentz();
        let err = psd_check(&op(&g, dmatrix![0.0, 1.0; 1.0, 0.0])).unwrap_err();
        assert!(matches!(err, LinalgError::NotSelfAdjoint(_)));
    }

    #[test]
    fn order_examples() {
        let g = lorentz();
        let a = random_self_adjoint(&g, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(order_leq(&a, &a).unwrap());
        let b = Operator::from_quadratic(g.clone(), &DMatrix::identity(2, 2)).unwrap();
        assert!(order_leq(&Operator::zero(g.clone()), &b).unwrap());
        assert!(!order_leq(&Operator::zero(g.clone()), &Operator::identity(g.clone())).unwrap());

        let other = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let err = order_leq(&Operator::zero(g), &Operator::zero(other)).unwrap_err();
        assert_eq!(err, LinalgError::SpaceMismatch);
    }

    #[test]
    fn kernel_lemma_examples() {
        let e = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let a = op(&e, dmatrix![1.0, 0.0; 0.0, 0.0]);
        let w = kernel_lemma_witness(&a, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(w.norm(), 0.0);

        let g = lorentz();
        let a = Operator::from_quadratic(g.clone(), &dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(a.form(&x0, &x0), 0.0);
        assert!(kernel_lemma_witness(&a, &x0).unwrap().norm() < 1e-15);

        let w = kernel_lemma_witness(&Operator::zero(g.clone()), &DVector::from_vec(vec![3.0, -7.0])).unwrap();
        assert_eq!(w.norm(), 0.0);

        // Precondition violations.
        let bad = kernel_lemma_witness(&a, &DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(bad, Err(LinalgError::Precondition(_))));
        let not_psd = kernel_lemma_witness(&Operator::identity(g), &DVector::from_vec(vec![1.0, 1.0]));
        assert!(matches!(not_psd, Err(LinalgError::Precondition(_))));
    }

    #[test]
    fn wedge_value_examples() {
        let g = lorentz();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(wedge_value(&Operator::identity(g.clone()), &e1, &e2).unwrap(), -1.0);
        assert_eq!(wedge_value(&Operator::zero(g.clone()), &e1, &e2).unwrap(), 0.0);
        let e = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let a = Operator::diagonal(e, &[2.0, 3.0]).unwrap();
        assert_eq!(wedge_value(&a, &e1, &e2).unwrap(), 6.0);
        let bad = wedge_value(&a, &DVector::from_vec(vec![1.0]), &e2);
        assert!(matches!(bad, Err(LinalgError::DimensionMismatch { .. })));
    }

    #[test]
    fn wedge_leq_examples() {
        let g = lorentz();
        let s = WedgeSampler::default();
        let a = random_self_adjoint(&g, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let r = wedge_leq(&a, &a, &s).unwrap();
        assert!(r.holds);
        assert_eq!(r.worst_gap, 0.0);

        let e = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let a = Operator::diagonal(e.clone(), &[1.0, 1.0]).unwrap();
        let b = Operator::diagonal(e, &[2.0, 2.0]).unwrap();
        assert!(wedge_leq(&a, &b, &s).unwrap().holds);
        // Reverse direction fails: gap is 1 − 4 = −3 on orthonormal pairs.
        let rev = wedge_leq(&b, &a, &s).unwrap();
        assert!(!rev.holds);
        assert!((rev.worst_gap + 3.0).abs() < 1e-9);

        let b = random_psd_operator(&g, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        assert!(wedge_leq(&Operator::zero(g.clone()), &b, &s).unwrap().holds);
    }

    #[test]
    fn wedge_leq_reports_exhausted_sampler() {
        let g = lorentz();
        let s = WedgeSampler { samples: 0, ..Default::default() };
        let r = wedge_leq(&Operator::zero(g.clone()), &Operator::zero(g), &s);
        assert!(matches!(r, Err(LinalgError::Inconclusive(_))));
    }

    #[test]
    fn rank_one_examples() {
        let e = Arc::new(InnerSpace::<f64>::euclidean(2).unwrap());
        let s = op(&e, dmatrix![1.0, 0.0; 0.0, 0.0]);
        let r = rank_one_decompose(&s).unwrap();
        assert_eq!(r.sign, 1);
        assert!((r.e.clone() - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-14);

        let g = lorentz();
        // x ↦ −⟨x,e⟩e, e = (1,2): matrix −e eᵀ G.
        let ev = DVector::from_vec(vec![1.0, 2.0]);
        let m = -(&ev * ev.transpose()) * g.gram();
        let r = rank_one_decompose(&op(&g, m.clone())).unwrap();
        assert_eq!(r.sign, -1);
        assert!((r.e.clone() - ev.clone()).norm() < 1e-12 || (r.e.clone() + ev).norm() < 1e-12);
        let rebuilt = -(&r.e * r.e.transpose()) * g.gram();
        assert!((rebuilt - m).norm() < 1e-12);

        let err = rank_one_decompose(&Operator::diagonal(e.clone(), &[1.0, 1.0]).unwrap()).unwrap_err();
        assert_eq!(err, LinalgError::Rank(2));
        assert_eq!(rank_one_decompose(&Operator::zero(e)).unwrap_err(), LinalgError::Rank(0));
    }

    #[test]
    fn monotone_pairs_are_ordered() {
        let g = lorentz();
        let (a, b) = random_monotone_pair(&g, 1);
        assert!(is_self_adjoint(&a) && is_self_adjoint(&b));
        assert!(order_leq(&a, &b).unwrap());

        let e = Arc::new(InnerSpace::<f64>::euclidean(3).unwrap());
        let (a, b) = random_monotone_pair(&e, 2);
        assert!(order_leq(&a, &b).unwrap());

        let (a, b) = monotone_pair_with(&g, 1.0, 0.0, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn halton_points_are_in_the_cube() {
        for i in 1..200 {
            for v in halton_point(i, 8) {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
        assert_eq!(halton_point(1, 2), vec![0.0, 2.0 / 3.0 - 1.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let g = Arc::new(InnerSpace::<f32>::standard(2, 1).unwrap());
        assert!(!psd_check(&Operator::identity(g.clone())).unwrap().psd);
        let (a, b) = random_monotone_pair(&g, 11);
        assert!(order_leq(&a, &b).unwrap());
    }
}
