//! Accident-severity modelling toolkit.
//!
//! The pipeline runs: schema-driven ingestion ([`dataset`]), Cramér's V
//! feature screening ([`association`]), one-hot/standardised feature
//! assembly with stratified splits ([`preprocess`]), a from-scratch dense
//! network engine ([`neural`]), the autoencoder and class-weighted classifier
//! built on it ([`models`]), and balanced-error-rate evaluation with
//! cross-validation and grid search ([`evaluation`]).

pub mod artifact;
pub mod association;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod neural;
pub mod preprocess;
mod rounding;
pub mod seed;

pub use error::{Error, ErrorCategory, Result};
