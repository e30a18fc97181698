//! Numerical verification kernels for an elliptic beta integral on the G2
//! root system: the special functions it is built from, the Weyl-group
//! combinatorics of the double torus it lives on, the integrand family and
//! its interpolation bases, torus quadrature, and a check suite that pits
//! the integral against its closed product form and the difference
//! equations both sides satisfy.

pub mod error;
pub mod g2_structure;
pub mod integrand;
pub mod quadrature;
pub mod special_functions;
pub mod verifier;

pub use error::{Error, Result};
pub use g2_structure::{Axis, LogPoint, MonomialExp, WeylElement};
pub use integrand::{ParameterSet, QuasiThetaFn};
pub use quadrature::{IntegralResult, QuadSpec};
pub use special_functions::Nome;
pub use verifier::{
    default_tolerance, run_check, run_suite, Domain, ParamSampler, Report, SuiteConfig, CHECK_IDS,
};
