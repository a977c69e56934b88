//! Bayesian cubature on fully symmetric point sets.
//!
//! Standard Bayesian cubature ([`bc`]), Bayes-Sard cubature ([`bayes_sard`])
//! and multi-output Bayesian cubature ([`mobc`]) each come with a naive solver
//! on arbitrary points and a fast solver for unions of fully symmetric sets
//! ([`fss`]). [`bench`] holds the experiment drivers used by the `symcub`
//! binary.

pub mod bayes_sard;
pub mod bc;
pub mod bench;
pub mod error;
pub mod fss;
pub mod io;
pub mod kernel;
pub mod measure;
pub mod mobc;
pub mod numeric;

pub use error::{Error, Result};
