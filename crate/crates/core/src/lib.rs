//! Discrete Dirichlet-to-Neumann maps on triangulated surfaces with boundary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// dense kernels index several arrays by the same mode number
#![allow(clippy::needless_range_loop)]

pub mod dn;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod identities;
pub mod linalg;
pub mod probe;
pub mod runge;
pub mod sobolev;

pub use error::{LabError, Result};
