//! On-line micro-clustering of functional boxplots for multiple streaming
//! time series, with off-line weighted k-means summaries of arbitrary time
//! slots.

pub mod cli;
pub mod depth;
pub mod domain;
pub mod error;
pub mod fboxplot;
pub mod ingest;
pub mod macrocluster;
pub mod smoothing;
pub mod snapshot;
pub mod stream;
pub mod svg;

pub use error::{Error, Result};
