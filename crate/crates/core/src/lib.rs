//! Change point detection for high-dimensional Gaussian graphical models
//! with missing values.
//!
//! A segment's dependence structure is summarized by a sparse precision
//! matrix fitted with the graphical lasso on a covariance estimate that
//! tolerates missing entries. Change points are located by maximizing a
//! likelihood gain over candidate splits, and each split is accepted only
//! when cross-validation says the two halves predict held-out rows better
//! than the parent segment.
//!
//! Rows are indexed from zero in storage. A segment `(u, v]` covers storage
//! rows `u..v`, and a change point `s` is the last row of its left segment
//! in one-based numbering.

pub mod covariance;
pub mod data;
pub mod error;
pub mod gain;
pub mod glasso;
pub mod matrix;
pub mod metrics;
pub mod search;
pub mod selection;
pub mod simulation;

pub use covariance::{CovMethod, CovarianceEstimate};
pub use data::{DataMatrix, Segment, VariableSubset};
pub use error::{Error, Result};
pub use glasso::{GlassoConfig, PrecisionFit};
pub use matrix::SymMatrix;
pub use search::{SearchConfig, Segmentation, SegmentationResult};
pub use selection::SelectionConfig;
