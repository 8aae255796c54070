//! Leakage-safe firm-quarter outcome prediction.
//!
//! The pipeline turns dated funding, patent and exit events into a quarterly
//! panel, fits all preprocessing on the development window only, trains a small
//! zoo of classifiers under two imbalance treatments, selects winners by
//! average precision and scores the most recent fully observable cohort.

pub mod cli;
pub mod dates;
pub mod error;
pub mod eval;
pub mod explain;
pub mod ingest;
pub mod learn;
pub mod matrix;
pub mod panel;
pub mod neighbors;
pub mod preprocess;
pub mod resample;
pub mod rng;
pub mod screen;
pub mod synth;
pub mod zoo;

pub use error::{Error, Result};
