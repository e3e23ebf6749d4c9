//! Detector thresholds and run parameters, loadable from TOML.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config read failed")]
    Io(#[from] std::io::Error),
    #[error("config parse failed")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Every tunable threshold in one place. Field names double as the
/// TOML keys. Defaults encode the comparison lines the detectors were
/// calibrated to; each comparison's strictness (< vs ≤) is pinned by
/// tests, so changing a default here never silently moves a boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Full peer lists with unique-/24 ratio strictly below this are
    /// low-diversity. 0.04 is 10 subnets per 250 entries; exactly 10
    /// does not flag.
    pub diversity_threshold: f64,
    /// Cross-source list pairs with subnet-reduced Jaccard strictly
    /// above this count as suspicious repeats.
    pub similarity_threshold: f64,
    /// A source is flagged once it appears in at least this many
    /// suspicious pairs.
    pub similarity_min_repeats: usize,
    /// Upper duration bound (seconds) for a short-lived connection.
    pub short_lived_max: f64,
    /// Flag an ip once its short-lived handshake-completed connection
    /// count strictly exceeds this.
    pub short_lived_peer_min: usize,
    /// Mean remote Timed-Sync interval (seconds) strictly above this
    /// marks a connection throttled.
    pub throttle_threshold: f64,
    /// Only connections at least this long (seconds) are assessed for
    /// throttling.
    pub throttle_min_duration: f64,
    /// Minimum remote Ping requests on one incoming connection for the
    /// flood rule.
    pub ping_flood_min_pings: usize,
    /// Mean gap (seconds) between those Pings must be strictly below
    /// this.
    pub ping_flood_max_mean_gap: f64,
    /// Entry count that makes a peer list "full"; content analyses
    /// only compare full lists.
    pub full_list_size: usize,
    /// Expected Timed-Sync cadence (seconds) for synthetic baselines
    /// and timing comparisons.
    pub timed_sync_interval: f64,
    /// Allowed deviation (seconds) around the standard cadence before
    /// timing is considered off-baseline.
    pub timing_tolerance: f64,
    /// Silence (seconds) that splits one 5-tuple into two sessions
    /// when no stream id is present; mirrors the protocol's own
    /// inactivity drop.
    pub session_gap: f64,
    /// Unique-ip count at which a /24 counts as saturated; every
    /// member ip is then flagged.
    pub saturation_threshold: usize,
    /// Decoder cap on one frame's payload size in octets.
    pub max_payload: u64,
    /// Decoder cap on storage nesting depth.
    pub max_depth: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            diversity_threshold: 0.04,
            similarity_threshold: 0.3,
            similarity_min_repeats: 2,
            short_lived_max: 1.0,
            short_lived_peer_min: 10,
            throttle_threshold: 90.0,
            throttle_min_duration: 600.0,
            ping_flood_min_pings: 20,
            ping_flood_max_mean_gap: 5.0,
            full_list_size: 250,
            timed_sync_interval: 60.0,
            timing_tolerance: 30.0,
            session_gap: 120.0,
            saturation_threshold: 100,
            max_payload: crate::levin::consts::DEFAULT_MAX_PAYLOAD,
            max_depth: crate::levin::consts::DEFAULT_MAX_DEPTH,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("diversity_threshold", self.diversity_threshold),
            ("similarity_threshold", self.similarity_threshold),
            ("short_lived_max", self.short_lived_max),
            ("throttle_threshold", self.throttle_threshold),
            ("throttle_min_duration", self.throttle_min_duration),
            ("ping_flood_max_mean_gap", self.ping_flood_max_mean_gap),
            ("timed_sync_interval", self.timed_sync_interval),
            ("timing_tolerance", self.timing_tolerance),
            ("session_gap", self.session_gap),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("diversity_threshold", self.diversity_threshold),
            ("similarity_threshold", self.similarity_threshold),
        ] {
            if v > 1.0 {
                return Err(ConfigError::Invalid(format!("{name} must be ≤ 1, got {v}")));
            }
        }
        for (name, v) in [
            ("similarity_min_repeats", self.similarity_min_repeats),
            ("ping_flood_min_pings", self.ping_flood_min_pings),
            ("full_list_size", self.full_list_size),
            ("saturation_threshold", self.saturation_threshold),
            ("max_depth", self.max_depth),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be ≥ 1")));
            }
        }
        if self.max_payload == 0 {
            return Err(ConfigError::Invalid("max_payload must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: DetectorConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical serialized form; the report embeds its digest so a
    /// run is reproducible from report + capture alone.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_toml_string().as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Commented defaults document for `config --defaults`.
    pub fn defaults_document() -> String {
        let mut s = String::new();
        s.push_str("# peer-sentinel detector configuration (defaults)\n");
        s.push_str("# All comparisons are strict; boundary values do not flag.\n\n");
        s.push_str("# Unique-/24 ratio below which a full peer list is low-diversity.\n");
        s.push_str("# 0.04 means fewer than 10 distinct subnets across 250 entries.\n");
        s.push_str("diversity_threshold = 0.04\n\n");
        s.push_str("# Subnet-reduced Jaccard similarity above which a cross-source list\n");
        s.push_str("# pair counts as a suspicious repeat.\n");
        s.push_str("similarity_threshold = 0.3\n\n");
        s.push_str("# Suspicious pairs a source must appear in before it is flagged.\n");
        s.push_str("similarity_min_repeats = 2\n\n");
        s.push_str("# A connection shorter than this many seconds is short-lived.\n");
        s.push_str("short_lived_max = 1.0\n\n");
        s.push_str("# Flag an ip once it has MORE than this many short-lived\n");
        s.push_str("# handshake-completed connections (10 stays clean, 11 flags).\n");
        s.push_str("short_lived_peer_min = 10\n\n");
        s.push_str("# Mean seconds between remote Timed Sync requests above which a\n");
        s.push_str("# connection is throttled (standard cadence is 60s).\n");
        s.push_str("throttle_threshold = 90.0\n\n");
        s.push_str("# Throttling is only assessed on connections at least this long.\n");
        s.push_str("throttle_min_duration = 600.0\n\n");
        s.push_str("# Ping-flood rule: at least this many remote Pings on one incoming\n");
        s.push_str("# connection, with mean gap below ping_flood_max_mean_gap seconds.\n");
        s.push_str("ping_flood_min_pings = 20\n");
        s.push_str("ping_flood_max_mean_gap = 5.0\n\n");
        s.push_str("# Entry count that makes a peer list full; only full lists enter\n");
        s.push_str("# diversity and similarity analysis.\n");
        s.push_str("full_list_size = 250\n\n");
        s.push_str("# Standard Timed Sync cadence and allowed deviation, seconds.\n");
        s.push_str("timed_sync_interval = 60.0\n");
        s.push_str("timing_tolerance = 30.0\n\n");
        s.push_str("# Silence that splits one 5-tuple into two sessions when the\n");
        s.push_str("# capture has no stream ids (the protocol drops idle peers here).\n");
        s.push_str("session_gap = 120.0\n\n");
        s.push_str("# Unique ips in one /24 at which the subnet counts as saturated.\n");
        s.push_str("saturation_threshold = 100\n\n");
        s.push_str("# Decoder hardening: per-frame payload cap (octets) and storage\n");
        s.push_str("# nesting depth cap.\n");
        s.push_str("max_payload = 104857600\n");
        s.push_str("max_depth = 16\n");
        s
    }
}
