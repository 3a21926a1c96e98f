//! Forecast pooling for day-ahead electricity prices.
//!
//! A pool of ARX forecasts, one per calibration window length, is computed
//! for every day and combined with simple or information-weighted averages,
//! LASSO regressions or principal components of the pool.

pub mod arx;
pub mod combine;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod lasso;
pub mod ols;
pub mod pca;
pub mod pool;
pub mod vst;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/vst.md")]
    mod vst {}
    #[doc = include_str!("../../../book/src/pool.md")]
    mod pool {}
    #[doc = include_str!("../../../book/src/combining.md")]
    mod combining {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
