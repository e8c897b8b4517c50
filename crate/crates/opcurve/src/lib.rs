//! Risk-adjusted assessment of surgical learning curves.
//!
//! The crate models operative time with a Weibull regression whose rate
//! depends on patient risk factors, fits it by recency-weighted estimating
//! equations with a robust sandwich covariance, and turns the fits into
//! sequential proficiency decisions: probability-of-agreement and
//! probability-of-noninferiority metrics with confidence intervals, a
//! CUSUM-style detector, and a Monte-Carlo engine for operating
//! characteristics.
//!
//! Start with [`model::WeibullRegParams`] and [`wee::fit_wee`], or read the
//! guide in `book/` for a walkthrough.

pub mod cpm;
pub mod error;
pub mod lccusum;
pub mod model;
pub mod sim;
pub mod slca;
pub mod specialmath;
pub mod wee;

pub use error::{Error, Result};

// Re-exported so downstream code can name the matrix types in signatures
// without pinning its own nalgebra version.
pub use nalgebra;

// The book chapters double as doc-tests; every fenced Rust block in them is
// compiled and run by `cargo test`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/intro.md")]
    pub struct IntroChapter;
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct ModelChapter;
    #[doc = include_str!("../../../book/src/weights.md")]
    pub struct WeightsChapter;
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    pub struct UncertaintyChapter;
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct MetricsChapter;
    #[doc = include_str!("../../../book/src/sequential.md")]
    pub struct SequentialChapter;
    #[doc = include_str!("../../../book/src/cusum.md")]
    pub struct CusumChapter;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct SimulationChapter;
}
