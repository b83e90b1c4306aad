//! Affect-aware pain-level recognition from EDA, ECG and EMG windows.
//!
//! The crate covers the whole pipeline: raw-trace preprocessing into
//! normalized feature vectors ([`signal`]), corpus curation and storage
//! ([`dataset`]), a seeded synthetic cohort generator ([`synthgen`]), three
//! classifiers ([`learners`]), the case-study protocols and evaluation schemes
//! ([`protocol`]), and F1-macro scoring ([`metrics`]).

pub mod dataset;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod protocol;
pub mod seed;
pub mod signal;
pub mod synthgen;

pub use error::{Error, Result};
