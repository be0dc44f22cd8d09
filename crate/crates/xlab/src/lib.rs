//! Experiment runner for the dyadic harmonic analysis laboratory: reproduces
//! the counterexample ladders and verifies the inequality suites at desk
//! scale, emitting machine-readable reports.

pub mod report;
pub mod runs;

pub use report::{Check, ExperimentReport};
pub use runs::MeasureArg;
