//! Sleep-stage HRV features and Bayesian ridge regression for predicting
//! fasting glucose.
//!
//! The crate goes from raw ECG or RR recordings to a cross-validated model:
//! [`ingest`] loads the cohort, [`signal`] detects beats, cleans RR series and
//! splits them by sleep stage, [`features`] builds the subject-by-feature
//! matrix, [`stats`] ranks and selects features, [`model`] fits the regressor
//! and [`experiment`] runs cross-validation and ablations. [`pipeline`] ties
//! these together behind a TOML run configuration.

pub mod error;
pub mod experiment;
pub mod features;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod signal;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
