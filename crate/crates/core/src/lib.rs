//! Numerical toolkit for dilatation structures on metric spaces.

pub mod algebra;
pub mod curves;
pub mod dilation;
pub mod error;
pub mod gh;
pub mod limit;
pub mod metric;
pub mod point;
pub mod profiles;
pub mod rng;
pub mod tolerances;
pub mod variational;

pub use error::{Error, Result};
pub use point::{Norm, Point};
