//! Aggregation layer: findings plus grouped capture data become
//! per-peer profiles, category overlap matrices, exposure measurements,
//! a machine-readable report document, and a ban list.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::connection::{Connection, Direction};
use crate::detect::{AnomalyFinding, Category};
use crate::identity::{IdMultiplicity, IdObservation};
use crate::ingest::PeerList;
use crate::netstruct::{subnet24, subnet24_cidr, AsnCount, AsnDatabase, InDegreeStats, SubnetSaturation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BanParseError {
    #[error("ban list line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Everything the run learned about one address.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerProfile {
    pub ip: Ipv4Addr,
    pub subnet: String,
    pub asn: u32,
    pub org: String,
    /// Anomaly categories this ip was flagged for; evidence lives in
    /// the findings section under the same (ip, category).
    pub categories: Vec<Category>,
    pub flagged: bool,
    /// Did we ever hold a connection with this address (vs. only seeing
    /// it promoted in someone's list)?
    pub connected: bool,
    pub promoted: bool,
    pub connection_count: usize,
    pub incoming_count: usize,
    pub outgoing_count: usize,
    pub total_duration: f64,
    pub mean_duration: Option<f64>,
    pub ids_announced: Vec<u64>,
}

/// One profile per address that ever connected, got promoted, or drew a
/// finding. Sorted by ip.
pub fn build_profiles(
    findings: &[AnomalyFinding],
    conns: &[Connection],
    id_obs: &[IdObservation],
    peer_lists: &[PeerList],
    db: Option<&AsnDatabase>,
) -> Vec<PeerProfile> {
    let mut ips: BTreeSet<Ipv4Addr> = BTreeSet::new();
    ips.extend(conns.iter().map(|c| c.remote_ip));
    let promoted: BTreeSet<Ipv4Addr> = peer_lists
        .iter()
        .flat_map(|l| l.entries.iter().filter_map(|e| e.ip.as_v4()))
        .collect();
    ips.extend(&promoted);
    ips.extend(findings.iter().map(|f| f.ip));

    let mut categories: BTreeMap<Ipv4Addr, BTreeSet<Category>> = BTreeMap::new();
    for f in findings {
        categories.entry(f.ip).or_default().insert(f.category);
    }
    let mut announced: BTreeMap<Ipv4Addr, BTreeSet<u64>> = BTreeMap::new();
    for obs in id_obs.iter().filter(|o| o.source.first_party()) {
        announced.entry(obs.ip).or_default().insert(obs.peer_id);
    }

    ips.into_iter()
        .map(|ip| {
            let mine: Vec<&Connection> = conns.iter().filter(|c| c.remote_ip == ip).collect();
            let cats: Vec<Category> =
                categories.get(&ip).map(|s| s.iter().copied().collect()).unwrap_or_default();
            let (asn, org) = match db {
                Some(db) => {
                    let (asn, org) = db.lookup(ip);
                    (asn, org.to_string())
                }
                None => (0, "unknown".to_string()),
            };
            let total: f64 = mine.iter().map(|c| c.duration()).sum();
            PeerProfile {
                ip,
                subnet: subnet24_cidr(subnet24(ip)),
                asn,
                org,
                flagged: !cats.is_empty(),
                categories: cats,
                connected: !mine.is_empty(),
                promoted: promoted.contains(&ip),
                connection_count: mine.len(),
                incoming_count: mine.iter().filter(|c| c.direction == Direction::Incoming).count(),
                outgoing_count: mine.iter().filter(|c| c.direction == Direction::Outgoing).count(),
                total_duration: total,
                mean_duration: if mine.is_empty() { None } else { Some(total / mine.len() as f64) },
                ids_announced: announced.get(&ip).map(|s| s.iter().copied().collect()).unwrap_or_default(),
            }
        })
        .collect()
}

/// Share of connected addresses that drew at least one finding.
/// Promoted-only addresses stay out of the denominator: a peer we never
/// talked to cannot be behaviorally assessed.
pub fn flagged_connected_fraction(profiles: &[PeerProfile]) -> Option<f64> {
    let connected = profiles.iter().filter(|p| p.connected).count();
    if connected == 0 {
        return None;
    }
    let flagged = profiles.iter().filter(|p| p.connected && p.flagged).count();
    Some(flagged as f64 / connected as f64)
}

/// Pairwise co-occurrence of categories over flagged addresses, plus
/// the same matrix over the owning ASes when a prefix database was
/// loaded. An external ban list, when supplied, joins as an extra
/// column so the report can say how much of it the run rediscovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub labels: Vec<String>,
    /// ip_counts[i][j] = |addresses in category i ∩ category j|.
    pub ip_counts: Vec<Vec<usize>>,
    /// Same cells over distinct ASNs; absent without a database.
    pub as_counts: Option<Vec<Vec<usize>>>,
}

pub const EXTERNAL_BANLIST_LABEL: &str = "external_banlist";

pub fn overlap_matrix(
    profiles: &[PeerProfile],
    external: Option<&BanList>,
    db: Option<&AsnDatabase>,
) -> OverlapMatrix {
    let mut labels: Vec<String> = Category::ALL.iter().map(|c| c.as_str().to_string()).collect();
    let mut sets: Vec<BTreeSet<Ipv4Addr>> = Category::ALL
        .iter()
        .map(|cat| {
            profiles
                .iter()
                .filter(|p| p.categories.contains(cat))
                .map(|p| p.ip)
                .collect()
        })
        .collect();
    if let Some(list) = external {
        labels.push(EXTERNAL_BANLIST_LABEL.to_string());
        sets.push(profiles.iter().map(|p| p.ip).filter(|ip| list.covers(*ip)).collect());
    }

    let n = sets.len();
    let mut ip_counts = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in i..n {
            let cell = sets[i].intersection(&sets[j]).count();
            ip_counts[i][j] = cell;
            ip_counts[j][i] = cell;
        }
    }

    let as_counts = db.map(|db| {
        let as_sets: Vec<BTreeSet<u32>> = sets
            .iter()
            .map(|s| s.iter().map(|ip| db.lookup(*ip).0).collect())
            .collect();
        let mut m = vec![vec![0usize; n]; n];
        for i in 0..n {
            for j in i..n {
                let cell = as_sets[i].intersection(&as_sets[j]).count();
                m[i][j] = cell;
                m[j][i] = cell;
            }
        }
        m
    });

    OverlapMatrix { labels, ip_counts, as_counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureBucket {
    /// Bucket start time.
    pub t: f64,
    pub incoming_active: usize,
    pub outgoing_active: usize,
    /// Null when nothing was active in the bucket: 0/0 is not 0.
    pub incoming_fraction: Option<f64>,
    pub outgoing_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureTimeline {
    pub bucket_seconds: f64,
    pub buckets: Vec<ExposureBucket>,
    /// Mean over buckets that had active connections.
    pub incoming_average: Option<f64>,
    pub outgoing_average: Option<f64>,
}

/// How much of the connection pool belonged to flagged addresses over
/// time. A connection is active in a bucket when its lifetime overlaps
/// the bucket's half-open window [t, t+bucket).
pub fn exposure_timeline(
    conns: &[Connection],
    flagged: &BTreeSet<Ipv4Addr>,
    bucket_seconds: f64,
) -> ExposureTimeline {
    let empty = ExposureTimeline {
        bucket_seconds,
        buckets: Vec::new(),
        incoming_average: None,
        outgoing_average: None,
    };
    if conns.is_empty() || bucket_seconds <= 0.0 {
        return empty;
    }
    let start = conns.iter().map(|c| c.start_ts).fold(f64::INFINITY, f64::min);
    let end = conns.iter().map(|c| c.end_ts).fold(f64::NEG_INFINITY, f64::max);
    let first_bucket = (start / bucket_seconds).floor() * bucket_seconds;

    let mut buckets = Vec::new();
    let mut t = first_bucket;
    while t <= end {
        let mut active = [0usize; 2]; // [incoming, outgoing]
        let mut hit = [0usize; 2];
        for c in conns {
            if c.start_ts >= t + bucket_seconds || c.end_ts < t {
                continue;
            }
            let lane = match c.direction {
                Direction::Incoming => 0,
                Direction::Outgoing => 1,
                Direction::Unknown => continue,
            };
            active[lane] += 1;
            if flagged.contains(&c.remote_ip) {
                hit[lane] += 1;
            }
        }
        let frac = |lane: usize| {
            if active[lane] == 0 { None } else { Some(hit[lane] as f64 / active[lane] as f64) }
        };
        buckets.push(ExposureBucket {
            t,
            incoming_active: active[0],
            outgoing_active: active[1],
            incoming_fraction: frac(0),
            outgoing_fraction: frac(1),
        });
        t += bucket_seconds;
    }

    let avg = |pick: fn(&ExposureBucket) -> Option<f64>| {
        let vals: Vec<f64> = buckets.iter().filter_map(pick).collect();
        if vals.is_empty() { None } else { Some(vals.iter().sum::<f64>() / vals.len() as f64) }
    };
    let incoming_average = avg(|b| b.incoming_fraction);
    let outgoing_average = avg(|b| b.outgoing_fraction);
    ExposureTimeline { bucket_seconds, buckets, incoming_average, outgoing_average }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListExposure {
    pub source_ip: Ipv4Addr,
    pub ts: f64,
    pub flagged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerListExposure {
    pub list_count: usize,
    pub per_list: Vec<ListExposure>,
    pub mean_fraction: Option<f64>,
    pub min_fraction: Option<f64>,
    /// True when every assessed list carried at least one flagged
    /// entry.
    pub all_lists_contaminated: bool,
}

/// How much of each received *full* peer list pointed at flagged
/// addresses.
pub fn peer_list_exposure(
    peer_lists: &[PeerList],
    flagged: &BTreeSet<Ipv4Addr>,
    full_list_size: usize,
) -> PeerListExposure {
    let mut per_list = Vec::new();
    for list in peer_lists.iter().filter(|l| l.is_full(full_list_size)) {
        let hits = list
            .entries
            .iter()
            .filter_map(|e| e.ip.as_v4())
            .filter(|ip| flagged.contains(ip))
            .count();
        per_list.push(ListExposure {
            source_ip: list.source_ip,
            ts: list.ts,
            flagged_fraction: hits as f64 / list.entries.len() as f64,
        });
    }
    let fractions: Vec<f64> = per_list.iter().map(|l| l.flagged_fraction).collect();
    let mean = if fractions.is_empty() {
        None
    } else {
        Some(fractions.iter().sum::<f64>() / fractions.len() as f64)
    };
    let min = fractions.iter().copied().reduce(f64::min);
    PeerListExposure {
        list_count: per_list.len(),
        per_list,
        mean_fraction: mean,
        min_fraction: min,
        all_lists_contaminated: min.map(|m| m > 0.0).unwrap_or(false),
    }
}

/// Single addresses plus whole /24 networks. Normalized form never
/// lists an address a listed subnet already covers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BanList {
    pub ips: BTreeSet<Ipv4Addr>,
    /// /24 network addresses (host octet zero) as big-endian u32.
    pub subnets: BTreeSet<u32>,
}

impl BanList {
    pub fn covers(&self, ip: Ipv4Addr) -> bool {
        self.ips.contains(&ip) || self.subnets.contains(&subnet24(ip))
    }

    /// Drop single addresses that a listed subnet already covers.
    pub fn normalize(&mut self) {
        let subnets = &self.subnets;
        self.ips.retain(|ip| !subnets.contains(&subnet24(*ip)));
    }

    /// One entry per line: dotted quad or `a.b.c.0/24`, addresses
    /// first. Stable bytes for identical content.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ip in &self.ips {
            out.push_str(&ip.to_string());
            out.push('\n');
        }
        for net in &self.subnets {
            out.push_str(&subnet24_cidr(*net));
            out.push('\n');
        }
        out
    }

    /// Accepts the emitted format plus `#` comments and blank lines.
    /// Only /24 masks are meaningful here; anything else errors with
    /// its line number.
    pub fn parse(text: &str) -> Result<BanList, BanParseError> {
        let mut list = BanList::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((addr, mask)) = line.split_once('/') {
                if mask != "24" {
                    return Err(BanParseError::Parse {
                        line: line_no,
                        reason: format!("unsupported mask /{mask}, only /24"),
                    });
                }
                let ip: Ipv4Addr = addr.parse().map_err(|_| BanParseError::Parse {
                    line: line_no,
                    reason: format!("bad network address {addr:?}"),
                })?;
                list.subnets.insert(subnet24(ip));
            } else {
                let ip: Ipv4Addr = line.parse().map_err(|_| BanParseError::Parse {
                    line: line_no,
                    reason: format!("bad address {line:?}"),
                })?;
                list.ips.insert(ip);
            }
        }
        Ok(list)
    }

    /// Every covered address, with each /24 contributing its 254 usable
    /// hosts (.1 through .254; network and broadcast excluded).
    pub fn expand(&self) -> BTreeSet<Ipv4Addr> {
        let mut out = self.ips.clone();
        for net in &self.subnets {
            for host in 1..=254u32 {
                out.insert(Ipv4Addr::from(net | host));
            }
        }
        out
    }
}

/// Flagged addresses plus saturated subnets, normalized.
pub fn emit_banlist(profiles: &[PeerProfile], saturation: &[SubnetSaturation]) -> BanList {
    let mut list = BanList {
        ips: profiles.iter().filter(|p| p.flagged).map(|p| p.ip).collect(),
        subnets: saturation
            .iter()
            .filter(|s| s.saturated)
            .filter_map(|s| {
                let cidr = s.subnet.strip_suffix("/24")?;
                cidr.parse::<Ipv4Addr>().ok().map(subnet24)
            })
            .collect(),
    };
    list.normalize();
    list
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BanDiff {
    pub expanded_a: usize,
    pub expanded_b: usize,
    pub only_a: BTreeSet<Ipv4Addr>,
    pub only_b: BTreeSet<Ipv4Addr>,
    pub both: BTreeSet<Ipv4Addr>,
}

/// Compare two ban lists at host granularity.
pub fn expand_and_diff(a: &BanList, b: &BanList) -> BanDiff {
    let ea = a.expand();
    let eb = b.expand();
    BanDiff {
        expanded_a: ea.len(),
        expanded_b: eb.len(),
        only_a: ea.difference(&eb).copied().collect(),
        only_b: eb.difference(&ea).copied().collect(),
        both: ea.intersection(&eb).copied().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub config_digest: String,
    pub inputs: Vec<String>,
    pub local_ip: Option<Ipv4Addr>,
    pub record_count: usize,
    pub connection_count: usize,
    pub dropped_connections: usize,
    /// Wall-clock stamp supplied by the caller; everything else in the
    /// document is a pure function of inputs and config.
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSection {
    pub flagged_connected_fraction: Option<f64>,
    pub timeline: ExposureTimeline,
    pub peer_list: PeerListExposure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionSection {
    pub edge_total: u64,
    pub self_edge_total: u64,
    pub in_degree: Option<InDegreeStats>,
    pub id_multiplicity: Option<IdMultiplicity>,
    pub asn_rollup: Option<Vec<AsnCount>>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub run_meta: RunMeta,
    pub profiles: Vec<PeerProfile>,
    pub findings: Vec<AnomalyFinding>,
    pub overlap: OverlapMatrix,
    pub exposure: ExposureSection,
    pub promotion_stats: PromotionSection,
    pub saturation: Vec<SubnetSaturation>,
}

impl Report {
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One finding per line, already sorted by (ip, category).
    pub fn findings_jsonl(&self) -> String {
        let mut out = String::new();
        for f in &self.findings {
            out.push_str(&serde_json::to_string(f).expect("finding serializes"));
            out.push('\n');
        }
        out
    }

    /// Short human-readable digest of the run.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let connected = self.profiles.iter().filter(|p| p.connected).count();
        let flagged = self.profiles.iter().filter(|p| p.flagged).count();
        out.push_str(&format!(
            "peers: {} profiled, {} connected, {} flagged\n",
            self.profiles.len(),
            connected,
            flagged
        ));
        if let Some(f) = self.exposure.flagged_connected_fraction {
            out.push_str(&format!("flagged share of connected peers: {:.1}%\n", f * 100.0));
        }
        let mut per_category: BTreeMap<Category, usize> = BTreeMap::new();
        for f in &self.findings {
            *per_category.entry(f.category).or_insert(0) += 1;
        }
        for (cat, n) in &per_category {
            out.push_str(&format!("  {}: {} peer(s)\n", cat.as_str(), n));
        }
        if let Some(avg) = self.exposure.timeline.incoming_average {
            out.push_str(&format!("incoming pool exposure (run average): {:.1}%\n", avg * 100.0));
        }
        if let Some(avg) = self.exposure.timeline.outgoing_average {
            out.push_str(&format!("outgoing pool exposure (run average): {:.1}%\n", avg * 100.0));
        }
        if let Some(mean) = self.exposure.peer_list.mean_fraction {
            out.push_str(&format!(
                "peer-list contamination: mean {:.1}% over {} full lists{}\n",
                mean * 100.0,
                self.exposure.peer_list.list_count,
                if self.exposure.peer_list.all_lists_contaminated {
                    " (every list affected)"
                } else {
                    ""
                }
            ));
        }
        let saturated = self.saturation.iter().filter(|s| s.saturated).count();
        if saturated > 0 {
            out.push_str(&format!("saturated /24 subnets: {saturated}\n"));
        }
        out
    }
}
