//! Estimation of k-monotone densities and the spline machinery behind it.
//!
//! * [`poly`] and [`mixture`]: piecewise polynomials and the Beta(1, k)
//!   scale mixtures that represent every integrable k-monotone function.
//! * [`interp`] and [`conjecture`]: odd-degree Hermite and complete spline
//!   interpolation, error monosplines, perfect splines, and a randomised
//!   search for large Hermite interpolation errors.
//! * [`estimate`]: least squares and maximum likelihood estimators with
//!   optimality certificates, the Grenander estimator, and inversion to the
//!   mixing distribution.
//! * [`limit`]: simulation of the limiting Gaussian process, its discrete
//!   invelope, scaling constants, and Monte Carlo rate experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bspline;
pub mod conjecture;
pub mod error;
pub mod estimate;
mod extended;
pub mod interp;
pub mod limit;
pub mod mixture;
pub mod nnqp;
pub mod par;
pub mod poly;
pub mod process;
pub mod sample;
pub mod stats;
pub mod truth;

pub use error::{Error, Result};
pub use estimate::{fit_lse, fit_mle, Estimator, FitOptions, FitResult};
pub use mixture::{beta_kernel, mixture_density, mixture_to_piecewise, MassConstraint, MixingMeasure};
pub use par::ExecPolicy;
pub use poly::PiecewisePoly;
pub use sample::Sample;
