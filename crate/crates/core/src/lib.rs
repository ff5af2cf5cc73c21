//! Toolkit for synthesizing labeled group-emotion scenes, scheduling
//! training frames from real videos, and evaluating video-level predictions.
//!
//! Every random choice is driven by a [`Seed`] derived from a root seed and a
//! path of indices, so generation is reproducible regardless of how many
//! worker threads run it.

pub mod augment;
pub mod compose;
pub mod config;
pub mod error;
pub mod evalmetrics;
pub mod ingest;
pub mod label;
pub mod raster;
pub mod sample;
pub mod seed;

pub use config::Config;
pub use error::{Error, Result};
pub use label::{Emotion, GroupClass, LabelHistogram, LabelRule, SurprisePolicy};
pub use seed::Seed;
