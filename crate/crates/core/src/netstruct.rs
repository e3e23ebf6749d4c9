//! Network-wide structural analytics: the promotion graph built from
//! exchanged peer lists, /24 saturation counts, and ASN rollups from an
//! offline prefix database.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PeerList;
use crate::par;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("promotion graph has no nodes")]
    EmptyGraph,
    #[error("asn database line {line}: {reason}")]
    Db { line: usize, reason: String },
}

/// Network part of an address under a /24 mask, as a big-endian u32.
pub fn subnet24(ip: Ipv4Addr) -> u32 {
    u32::from(ip) & 0xffff_ff00
}

/// Render a /24 network in CIDR text form.
pub fn subnet24_cidr(net: u32) -> String {
    let o = net.to_be_bytes();
    format!("{}.{}.{}.0/24", o[0], o[1], o[2])
}

/// Directed promoter → promoted topology with edge multiplicities.
/// Self-promotions are tallied apart so degree statistics never see
/// them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromotionGraph {
    pub nodes: BTreeSet<Ipv4Addr>,
    pub edges: BTreeMap<(Ipv4Addr, Ipv4Addr), u64>,
    pub self_edges: BTreeMap<Ipv4Addr, u64>,
}

impl PromotionGraph {
    pub fn edge_total(&self) -> u64 {
        self.edges.values().sum()
    }
}

/// One edge-bag per list; merged deterministically afterwards.
fn list_edges(list: &PeerList) -> Vec<(Ipv4Addr, Ipv4Addr)> {
    list.entries
        .iter()
        .filter(|e| e.is_valid_unicast())
        .filter_map(|e| e.ip.as_v4())
        .map(|promoted| (list.source_ip, promoted))
        .collect()
}

/// Accumulate every list's promotions into one graph. Entries that are
/// not valid unicast IPv4 are ignored (they cannot be dialed and never
/// reach the connection pool).
pub fn build_promotion_graph(peer_lists: &[PeerList]) -> PromotionGraph {
    merge_edge_bags(peer_lists, par::map_collect(peer_lists, list_edges))
}

/// Sequential twin of [`build_promotion_graph`]; identical output.
pub fn build_promotion_graph_seq(peer_lists: &[PeerList]) -> PromotionGraph {
    merge_edge_bags(peer_lists, par::map_collect_seq(peer_lists, list_edges))
}

fn merge_edge_bags(peer_lists: &[PeerList], bags: Vec<Vec<(Ipv4Addr, Ipv4Addr)>>) -> PromotionGraph {
    let mut g = PromotionGraph::default();
    // A source that promoted nobody is still part of the topology.
    g.nodes.extend(peer_lists.iter().map(|l| l.source_ip));
    for (promoter, promoted) in bags.into_iter().flatten() {
        g.nodes.insert(promoter);
        g.nodes.insert(promoted);
        if promoter == promoted {
            *g.self_edges.entry(promoter).or_insert(0) += 1;
        } else {
            *g.edges.entry((promoter, promoted)).or_insert(0) += 1;
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InDegreeStats {
    pub node_count: usize,
    pub mean: f64,
    /// Median over all nodes; even-sized populations average the two
    /// middle values.
    pub median: f64,
    pub top: Vec<(Ipv4Addr, usize)>,
}

/// In-degree = number of distinct promoters per node (multiplicity
/// collapsed), averaged over every node in the graph.
pub fn in_degree_stats(g: &PromotionGraph, top_k: usize) -> Result<InDegreeStats, NetError> {
    if g.nodes.is_empty() {
        return Err(NetError::EmptyGraph);
    }
    let mut in_degree: BTreeMap<Ipv4Addr, usize> = g.nodes.iter().map(|ip| (*ip, 0)).collect();
    for (_, promoted) in g.edges.keys() {
        *in_degree.get_mut(promoted).expect("edge endpoint in nodes") += 1;
    }
    let mut degrees: Vec<usize> = in_degree.values().copied().collect();
    degrees.sort_unstable();
    let n = degrees.len();
    let mean = degrees.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        degrees[n / 2] as f64
    } else {
        (degrees[n / 2 - 1] + degrees[n / 2]) as f64 / 2.0
    };
    let mut ranked: Vec<(Ipv4Addr, usize)> = in_degree.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    Ok(InDegreeStats { node_count: n, mean, median, top: ranked })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubnetSaturation {
    pub subnet: String,
    pub unique_ips: usize,
    pub saturated: bool,
    pub asn: u32,
    pub org: String,
    pub members: Vec<Ipv4Addr>,
}

/// Count distinct observed addresses per /24, most saturated first.
/// Feed it the promoted (peer-list) addresses: saturation is a claim
/// about what peers advertise, not about who happened to connect.
pub fn subnet_saturation(
    all_ips: &BTreeSet<Ipv4Addr>,
    threshold: usize,
    db: Option<&AsnDatabase>,
) -> Vec<SubnetSaturation> {
    let mut by_subnet: BTreeMap<u32, Vec<Ipv4Addr>> = BTreeMap::new();
    for ip in all_ips {
        by_subnet.entry(subnet24(*ip)).or_default().push(*ip);
    }
    let mut out: Vec<SubnetSaturation> = by_subnet
        .into_iter()
        .map(|(net, members)| {
            let (asn, org) = match db {
                Some(db) => {
                    let (asn, org) = db.lookup(members[0]);
                    (asn, org.to_string())
                }
                None => (0, "unknown".to_string()),
            };
            SubnetSaturation {
                subnet: subnet24_cidr(net),
                unique_ips: members.len(),
                saturated: members.len() >= threshold,
                asn,
                org,
                members,
            }
        })
        .collect();
    out.sort_by(|a, b| b.unique_ips.cmp(&a.unique_ips).then(a.subnet.cmp(&b.subnet)));
    out
}

/// Offline prefix → ASN map with longest-prefix-match lookups.
#[derive(Debug, Clone, Default)]
pub struct AsnDatabase {
    /// Index = prefix length; key = network address under that mask.
    by_len: Vec<HashMap<u32, (u32, String)>>,
}

impl AsnDatabase {
    pub fn is_empty(&self) -> bool {
        self.by_len.iter().all(HashMap::is_empty)
    }

    /// Parse the CSV shape `prefix,asn,org` (header required; org may
    /// contain commas).
    pub fn parse(text: &str) -> Result<Self, NetError> {
        let mut db = AsnDatabase { by_len: vec![HashMap::new(); 33] };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "prefix,asn,org" => {}
            _ => {
                return Err(NetError::Db { line: 1, reason: "expected header `prefix,asn,org`".into() })
            }
        }
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let prefix = parts.next().unwrap_or_default().trim();
            let asn = parts
                .next()
                .and_then(|s| s.trim().parse::<u32>().ok())
                .ok_or_else(|| NetError::Db { line: line_no, reason: "bad asn".into() })?;
            let org = parts.next().unwrap_or("").trim().to_string();
            let (addr, len) = prefix
                .split_once('/')
                .ok_or_else(|| NetError::Db { line: line_no, reason: "prefix missing /len".into() })?;
            let ip: Ipv4Addr = addr
                .parse()
                .map_err(|_| NetError::Db { line: line_no, reason: "bad prefix address".into() })?;
            let len: u8 = len
                .parse()
                .ok()
                .filter(|l| *l <= 32)
                .ok_or_else(|| NetError::Db { line: line_no, reason: "bad prefix length".into() })?;
            let key = u32::from(ip) & mask(len);
            db.by_len[len as usize].insert(key, (asn, org));
        }
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path).map_err(|e| NetError::Db {
            line: 0,
            reason: format!("read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Longest-prefix match; addresses outside every prefix map to
    /// ASN 0 "unknown".
    pub fn lookup(&self, ip: Ipv4Addr) -> (u32, &str) {
        let v = u32::from(ip);
        for len in (0..=32usize).rev() {
            if self.by_len[len].is_empty() {
                continue;
            }
            if let Some((asn, org)) = self.by_len[len].get(&(v & mask(len as u8))) {
                return (*asn, org);
            }
        }
        (0, "unknown")
    }
}

fn mask(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - len as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsnCount {
    pub asn: u32,
    pub org: String,
    pub count: usize,
}

/// Group addresses by owning ASN, most populous first.
pub fn asn_rollup<I: IntoIterator<Item = Ipv4Addr>>(ips: I, db: &AsnDatabase) -> Vec<AsnCount> {
    let mut counts: BTreeMap<u32, AsnCount> = BTreeMap::new();
    for ip in ips {
        let (asn, org) = db.lookup(ip);
        counts
            .entry(asn)
            .or_insert_with(|| AsnCount { asn, org: org.to_string(), count: 0 })
            .count += 1;
    }
    let mut out: Vec<AsnCount> = counts.into_values().collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then(a.asn.cmp(&b.asn)));
    out
}
