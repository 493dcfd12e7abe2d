//! Numerical lab for complex Hessian equations on flat Hermitian tori.

pub mod background;
pub mod cone;
pub mod config;
pub mod ddc;
pub mod error;
pub mod estimate;
pub mod expr;
pub mod fft;
pub mod field;
pub mod harness;
pub mod herm;
pub mod ledger;
pub mod regularize;
pub mod solver;
pub mod study;

pub use error::{LabError, Result};
