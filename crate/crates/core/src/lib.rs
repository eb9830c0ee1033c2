//! Multi-community user trajectory analysis.

pub mod community;
pub mod error;
pub mod feedback;
pub mod framework;
pub mod ingest;
pub mod labeling;
pub mod language;
pub mod metrics;
pub mod par;
pub mod prediction;
pub mod stats;
pub mod style;
pub mod synth;

pub use error::{Error, Result};
