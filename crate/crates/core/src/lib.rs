//! Numerical verification of matrix extremal entropy inequalities.
//!
//! - [`linalg`]: symmetric and PSD matrices, Loewner order, log-determinants.
//! - [`info`]: entropy, Fisher information and MMSE of Gaussian mixtures, and
//!   checkers for the identities that link them.
//! - [`path`]: monotone interpolation paths, their derivatives and certification.
//! - [`solvers`]: the log-det programs behind each inequality and their KKT certificates.

pub mod error;
pub mod info;
pub mod linalg;
pub mod mc;
pub mod path;
pub mod random;
pub mod solvers;

pub use error::{Error, Result};
