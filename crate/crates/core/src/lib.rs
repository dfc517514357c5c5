//! Estimation of large covariance, correlation and precision matrices from
//! multivariate time series whose cross-correlations decay polynomially in
//! the time lag, possibly with long memory.
//!
//! - [`threshold`]: generalized thresholding of sample covariance/correlation.
//! - [`clime`]: constrained ℓ1 precision estimation.
//! - [`spice`]: ℓ1-penalized likelihood on the correlation scale.
//! - [`crossval`]: gap-block cross-validation for the tuning parameters.
//! - [`pdd_rates`]: rate expressions, block sizes and dependence diagnostics.
//! - [`simulate`]: long-memory Gaussian panels from AR(1) mixtures.
//! - [`bench`]: replication harness and evaluation metrics.
//! - [`io`]: CSV matrices, panels and result tables.

pub mod error;
pub mod linalg;
pub mod moments;
pub mod threshold;
pub mod clime;
pub mod spice;
pub mod pdd_rates;
pub mod simulate;
pub mod crossval;
pub mod bench;
pub mod io;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, NormKind, SymmetricMatrix};
pub use moments::TimeSeriesPanel;
