//! Desk-scale 2D computed tomography: simulation, reconstruction, and
//! metal-artifact analysis.
//!
//! The crate simulates polychromatic X-ray projections of analytic phantoms,
//! reconstructs them with filtered backprojection and a sinh-based metal
//! beam-hardening corrector, and provides a coordinate-MLP reconstruction that
//! jointly fits an attenuation image and a beam-hardening-factor image against
//! the measured sinogram. Supporting modules cover scan geometry, energy
//! dependent material data, sinogram consistency analysis, and a small
//! bichromatic 3x3 system that demonstrates how a single inconsistent
//! measurement corrupts a least-squares reconstruction.
//!
//! All numeric kernels are generic over the scalar type via [`Real`];
//! concrete `f64` aliases for the main data types live at the crate root.

pub mod config;
pub mod error;
pub mod fbp;
pub mod geometry;
pub mod inr;
pub mod io;
pub mod math;
pub mod mbhc;
pub mod metrics;
pub mod phantom;
pub mod physics;
pub mod pipeline;
pub mod projector;
pub mod toy;

pub(crate) mod rng;

pub use error::{Error, Result};

/// Floating-point scalar the core math is generic over: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::Signed
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::default::Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion from `f64` literals.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant not representable")
    }
}

impl<T> Real for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + num_traits::ToPrimitive
        + num_traits::Signed
        + std::iter::Sum
        + std::ops::AddAssign
        + std::ops::SubAssign
        + std::ops::MulAssign
        + std::ops::DivAssign
        + std::fmt::Debug
        + std::fmt::Display
        + std::default::Default
        + Send
        + Sync
        + 'static
{
}

pub type GridSpecF64 = geometry::GridSpec<f64>;
pub type ScanGeometryF64 = geometry::ScanGeometry<f64>;
pub type RayF64 = geometry::Ray<f64>;
pub type SpectrumF64 = physics::Spectrum<f64>;
pub type MaterialF64 = physics::Material<f64>;
pub type PhantomSpecF64 = phantom::PhantomSpec<f64>;
pub type ImageF64 = phantom::Image<f64>;
pub type SinogramF64 = projector::Sinogram<f64>;
pub type RayMaskF64 = projector::RayMask<f64>;
pub type MetalMaskF64 = mbhc::MetalMask<f64>;
pub type MlpParamsF64 = inr::MlpParams<f64>;
pub type TrainConfigF64 = inr::TrainConfig<f64>;

pub type GridSpecF32 = geometry::GridSpec<f32>;
pub type ImageF32 = phantom::Image<f32>;
pub type SinogramF32 = projector::Sinogram<f32>;
