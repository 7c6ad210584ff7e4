//! Simulation laboratory for design-based inference with multi-way
//! clustered sampling and assignment.
//!
//! The numeric core ([`population`], [`mechanisms`], [`estimator`],
//! [`variance`], [`oracle`]) is generic over [`Scalar`], so the same code
//! evaluates in `f64` for simulation and in exact rationals for
//! verification. The aliases below fix the two scalar choices used in
//! practice.

pub mod config;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod kernels;
pub mod mechanisms;
pub mod oracle;
pub mod population;
pub mod report;
pub mod scalar;
pub mod variance;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;

pub type Population = population::Population<f64>;
pub type SamplingSpec = mechanisms::SamplingSpec<f64>;
pub type AssignmentSpec = mechanisms::AssignmentSpec<f64>;
pub type Fit = estimator::Fit<f64>;
pub type VarianceSet = variance::VarianceSet<f64>;
pub type TheoreticalVariances = variance::TheoreticalVariances<f64>;

pub type ExactPopulation = population::Population<Rational>;
pub type ExactSamplingSpec = mechanisms::SamplingSpec<Rational>;
pub type ExactAssignmentSpec = mechanisms::AssignmentSpec<Rational>;
pub type ExactTheoreticalVariances = variance::TheoreticalVariances<Rational>;
