//! Finding records shared by every detector.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

/// Anomaly categories a peer can be flagged under. One finding per
/// (ip, category) per run; repeated observations widen the evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SupportFlagsOmission,
    DeprecatedLastSeen,
    SignatureOnlyFragment,
    LowDiversityPeerList,
    HighSimilarityPeerList,
    ShortLivedFlooding,
    ThrottledTimedSync,
    PingFlooding,
    SequenceViolation,
    PeerIdTemporal,
    PeerIdCluster,
    SaturatedSubnetMember,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::SupportFlagsOmission,
        Category::DeprecatedLastSeen,
        Category::SignatureOnlyFragment,
        Category::LowDiversityPeerList,
        Category::HighSimilarityPeerList,
        Category::ShortLivedFlooding,
        Category::ThrottledTimedSync,
        Category::PingFlooding,
        Category::SequenceViolation,
        Category::PeerIdTemporal,
        Category::PeerIdCluster,
        Category::SaturatedSubnetMember,
    ];

    /// Stable text name, identical to the serialized form. Used in
    /// label files and the human summary.
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::SupportFlagsOmission => "support_flags_omission",
            Category::DeprecatedLastSeen => "deprecated_last_seen",
            Category::SignatureOnlyFragment => "signature_only_fragment",
            Category::LowDiversityPeerList => "low_diversity_peer_list",
            Category::HighSimilarityPeerList => "high_similarity_peer_list",
            Category::ShortLivedFlooding => "short_lived_flooding",
            Category::ThrottledTimedSync => "throttled_timed_sync",
            Category::PingFlooding => "ping_flooding",
            Category::SequenceViolation => "sequence_violation",
            Category::PeerIdTemporal => "peer_id_temporal",
            Category::PeerIdCluster => "peer_id_cluster",
            Category::SaturatedSubnetMember => "saturated_subnet_member",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.iter().copied().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Category-specific measurements backing a finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    SupportFlagsOmission {
        /// Handshake requests with the field absent.
        omitted_count: usize,
        /// Handshake requests with the field present but zero.
        explicit_zero_count: usize,
        /// Support-Flags exchanges the omission forced onto the wire.
        induced_exchanges: usize,
    },
    DeprecatedLastSeen {
        entry_count: usize,
        list_count: usize,
        distinct_values: usize,
    },
    SignatureOnlyFragment {
        multi_segment_messages: usize,
        signature_first_count: usize,
        ratio: f64,
    },
    LowDiversityPeerList {
        min_diversity: f64,
        full_list_count: usize,
        flagged_list_count: usize,
    },
    HighSimilarityPeerList {
        max_subnet_similarity: f64,
        max_raw_similarity: f64,
        pair_count: usize,
        partner_ips: Vec<Ipv4Addr>,
    },
    ShortLivedFlooding {
        connection_count: usize,
        mean_duration: f64,
    },
    ThrottledTimedSync {
        flagged_connection_means: Vec<f64>,
        assessed_connections: usize,
    },
    PingFlooding {
        connection_count: usize,
        max_ping_count: usize,
        min_mean_gap: f64,
        timed_sync_unanswered: bool,
    },
    SequenceViolation {
        /// Violation kind -> occurrence count across connections.
        kinds: BTreeMap<String, usize>,
        connection_count: usize,
    },
    PeerIdTemporal {
        flip_count: usize,
        ids: Vec<u64>,
    },
    PeerIdCluster {
        cluster_ips: Vec<Ipv4Addr>,
        cluster_ids: Vec<u64>,
        edge_count: usize,
        /// Distinct ASNs across the cluster, when an ASN db was loaded.
        /// A single shared AS weakens the multi-host reading (VPN exit).
        as_count: Option<usize>,
    },
    SaturatedSubnetMember {
        subnet: String,
        unique_ip_count: usize,
    },
}

impl Evidence {
    pub fn category(&self) -> Category {
        match self {
            Evidence::SupportFlagsOmission { .. } => Category::SupportFlagsOmission,
            Evidence::DeprecatedLastSeen { .. } => Category::DeprecatedLastSeen,
            Evidence::SignatureOnlyFragment { .. } => Category::SignatureOnlyFragment,
            Evidence::LowDiversityPeerList { .. } => Category::LowDiversityPeerList,
            Evidence::HighSimilarityPeerList { .. } => Category::HighSimilarityPeerList,
            Evidence::ShortLivedFlooding { .. } => Category::ShortLivedFlooding,
            Evidence::ThrottledTimedSync { .. } => Category::ThrottledTimedSync,
            Evidence::PingFlooding { .. } => Category::PingFlooding,
            Evidence::SequenceViolation { .. } => Category::SequenceViolation,
            Evidence::PeerIdTemporal { .. } => Category::PeerIdTemporal,
            Evidence::PeerIdCluster { .. } => Category::PeerIdCluster,
            Evidence::SaturatedSubnetMember { .. } => Category::SaturatedSubnetMember,
        }
    }
}

/// One flagged (ip, category) with its evidence and observation span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyFinding {
    pub ip: Ipv4Addr,
    pub category: Category,
    pub evidence: Evidence,
    pub first_seen: f64,
    pub last_seen: f64,
}

impl AnomalyFinding {
    pub fn new(ip: Ipv4Addr, evidence: Evidence, first_seen: f64, last_seen: f64) -> Self {
        AnomalyFinding { ip, category: evidence.category(), evidence, first_seen, last_seen }
    }
}

/// Deterministic output order: by ip, then category.
pub fn sort_findings(findings: &mut [AnomalyFinding]) {
    findings.sort_by(|a, b| a.ip.cmp(&b.ip).then(a.category.cmp(&b.category)));
}
