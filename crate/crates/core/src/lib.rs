//! Struggling-search-session detection pipeline: log ingestion and session
//! segmentation, effort-feature extraction, topic-taxonomy state assignment,
//! motivational feature modulation, ANOVA/MANOVA hypothesis tests, and
//! cross-validated classifiers, plus a synthetic session generator for
//! desk-scale validation.

pub mod error;
pub mod features;
pub mod ingest;
pub mod learn;
pub mod model;
pub mod modulation;
pub mod stats;
pub mod synth;
pub mod taxonomy;
pub mod text;

pub use error::{Error, Result};
