//! M-functionals of multivariate scatter and location.

// Negated comparisons such as `!(x > 0.0)` are used so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod distribution;
mod error;
pub mod location;
mod par;
pub mod rho;
pub mod samplers;
pub mod solver;
pub mod symmat;

pub use distribution::MatrixDistribution;
pub use error::{Error, Result};
pub use rho::{CaseTag, RhoFunction};
pub use symmat::{PsdAtom, SpdMatrix, SymMatrix};
