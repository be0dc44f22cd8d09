//! Numerical dyadic harmonic analysis over general balanced measures.
//!
//! The crate provides the rooted dyadic grid, lazily refinable measures,
//! dyadic step functions, the measure-adapted Haar system, Haar shift
//! operators, a two-function Calderon-Zygmund decomposition, sparse families
//! with their bilinear forms, complexity-dependent maximal operators, and the
//! matching weight characteristics.
//!
//! The measure/function layer is generic over [`scalar::Scalar`], so it runs
//! both in `f64` and in exact rational arithmetic. Operators that need square
//! roots (shifts, sparse forms, maximal variants, weights) work over `f64`.

pub mod czd;
pub mod dyadic;
pub mod error;
pub mod haar;
pub mod maximal;
pub mod measure;
pub mod rng;
pub mod scalar;
pub mod shift;
pub mod sparse;
pub mod stepfn;
pub mod weights;

pub use dyadic::{dyadic_distance, neighbors_within, DyadicInterval};
pub use error::{Error, Result};
pub use measure::MeasureTree;
pub use scalar::{Rat, Scalar};
pub use stepfn::{DyadicStepFunction, Weight};
