//! Experiment drivers behind the command-line verbs. Each returns plain rows;
//! [`csv`] turns them into deterministic text.

pub mod com;
pub mod csv;
pub mod illumination;
pub mod selftest;
pub mod sparse_grid;
pub mod zcb;
