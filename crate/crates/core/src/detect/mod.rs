//! Per-peer anomaly detectors.
//!
//! Each detector is a pure function from pre-grouped capture data
//! (connections, peer lists) to a list of findings. A finding is keyed
//! by (ip, category); evidence aggregates across everything that peer
//! did. Detectors never look at each other's output; overlap analysis
//! happens in the report layer.

pub mod behavior;
pub mod config;
pub mod content;
pub mod findings;
pub mod syntax;

pub use config::DetectorConfig;
pub use findings::{AnomalyFinding, Category, Evidence};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DetectError {
    /// The capture carries none of the data the detector keys on, so
    /// "no findings" would be indistinguishable from "could not look".
    #[error("input carries no {0}, detector cannot run")]
    NotAssessable(&'static str),
    /// Similarity of two empty sets is undefined.
    #[error("jaccard of two empty sets is undefined")]
    BothEmpty,
}
