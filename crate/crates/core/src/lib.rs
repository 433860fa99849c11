//! Analysis of Dirichlet polynomial symbols of composition operators on the
//! Hardy space of Dirichlet series.

pub mod approx;
pub mod carleson;
pub mod classify;
pub mod error;
pub mod factor;
pub mod flat;
pub mod genset;
pub mod keylemma;
pub mod lift;
pub mod report;
pub mod scalar;
pub mod series;
pub mod symbol;
pub mod zeta;

pub use error::{Error, Result};
pub use factor::{factorize, ExponentVector};
pub use series::TruncatedSeries;
