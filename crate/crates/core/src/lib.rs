//! Correlation-based stock networks and statistical multi-factor models.
//!
//! The pipeline runs price ingestion, log returns, the correlation matrix and
//! its metric distance, a Kruskal minimum spanning tree, principal-component
//! factor extraction with varimax rotation, per-stock factor regressions, and
//! finally relates each stock's tree degree to its coefficient of
//! determination.

pub mod error;
pub mod factors;
pub mod format;
pub mod ingest;
pub mod marketstats;
pub mod network;
pub mod numerics;
pub mod regression;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use numerics::Matrix;
