//! Predicting caregiver-reported agitation episodes from ambient
//! environmental time series (light, temperature, humidity, pressure,
//! acoustic noise) recorded by room-level sensing nodes.
//!
//! The pipeline runs ingestion → median filtering and normalization →
//! pre-event windowing → per-window features → gradient boosted trees or an
//! LSTM → the split/cross-validation protocol and importance analysis. A
//! seeded simulator produces deployments with planted triggers.

pub mod cli;
pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gbt;
pub mod lstm;
pub mod seeds;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
