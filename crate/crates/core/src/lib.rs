//! Numerical reconstruction of the tentacle geometry of the bifocal
//! equilibrium of `x'''' = -x + eta3 x'' + x^2`, written as a first-order
//! system in `(x1, x2, x3, x4)`.

pub mod cascade;
pub mod cli;
pub mod flow;
pub mod geometry;
pub mod homoclinics;
pub mod io;
pub mod linalg;
pub mod local_manifold;
pub mod scalar;
pub mod section_geometry;
pub mod selftest;
pub mod system;

pub use scalar::Real;

pub type State = system::State4<f64>;
pub type Parameters = system::Params<f64>;
pub type Coefficients = local_manifold::SeriesCoefficients<f64>;
pub type Domain = local_manifold::FundamentalDomain<f64>;
pub type Options = flow::IntegratorOptions<f64>;
pub type Crossing = flow::CrossingEvent<f64>;
