//! CP-structured factor models for tensor-valued time series.

// `!(x > 0.0)` style checks are kept because they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod moments;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
pub use estimators::{FitConfig, FitResult, Method};
pub use model::CpFactorModel;
pub use moments::TensorTimeSeries;
pub use tensor::{DenseTensor, Matrix};
