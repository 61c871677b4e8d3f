//! Comparison theory for matrix Riccati equations in indefinite signature,
//! warped-product model spaces and two-dimensional rigidity, with the
//! numerical checks that exercise them.
//!
//! Everything numeric is generic over [`scalar::Real`] (`f32` or `f64`); the
//! crate-root aliases fix `f64`.

pub mod func;
pub mod linalg;
pub mod ode;
pub mod riccati;
pub mod scalar;
pub mod suites;
pub mod surface;
pub mod warped;

pub use scalar::Real;

pub type InnerSpace = linalg::InnerSpace<f64>;
pub type Operator = linalg::Operator<f64>;
pub type CurvatureProfile = riccati::CurvatureProfile<f64>;
pub type RiccatiTrajectory = riccati::RiccatiTrajectory<f64>;
pub type JacobiTrajectory = riccati::JacobiTrajectory<f64>;
pub type WarpedModel = warped::WarpedModel<f64>;
pub type SurfaceMetric = surface::SurfaceMetric<f64>;
pub type CalabiSolution = surface::CalabiSolution<f64>;

/// `f32` instantiations.
pub mod f32 {
    pub type InnerSpace = crate::linalg::InnerSpace<f32>;
    pub type Operator = crate::linalg::Operator<f32>;
    pub type CurvatureProfile = crate::riccati::CurvatureProfile<f32>;
    pub type RiccatiTrajectory = crate::riccati::RiccatiTrajectory<f32>;
    pub type JacobiTrajectory = crate::riccati::JacobiTrajectory<f32>;
    pub type WarpedModel = crate::warped::WarpedModel<f32>;
    pub type SurfaceMetric = crate::surface::SurfaceMetric<f32>;
    pub type CalabiSolution = crate::surface::CalabiSolution<f32>;
}
