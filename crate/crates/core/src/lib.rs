//! Offline examination toolkit for Monero P2P traffic captures.
//!
//! The crate decodes Levin-framed protocol messages (either from raw
//! reassembled TCP payload streams or from a normalized JSONL record
//! format), groups them into connections, and runs a set of per-peer
//! anomaly detectors covering syntactic violations, peer-list content
//! inconsistencies, behavioral timing deviations, identity correlation,
//! and network-structure concentration. Results aggregate into per-peer
//! profiles, exposure metrics, and an exportable ban list.
//!
//! Heavy inner loops (pairwise peer-list similarity, batch connection
//! statistics) run data-parallel on rayon when the `parallel` feature is
//! enabled (default); every parallel path has a sequential twin that
//! produces identical output, used as fallback and for benchmarking.

pub mod connection;
pub mod detect;
pub mod identity;
pub mod ingest;
pub mod levin;
pub mod netstruct;
pub mod pipeline;
pub mod report;
pub mod synth;

mod par;

pub use detect::config::DetectorConfig;
pub use detect::findings::{AnomalyFinding, Category};
