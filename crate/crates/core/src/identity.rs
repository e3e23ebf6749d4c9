//! Peer identifier analysis. Every node invents a random 64-bit ID at
//! startup and announces it in handshakes and pongs; peer-list entries
//! relay IDs third-hand. Stable software shows one ID per address until
//! a restart mints a fresh one, so an ID *returning* after a different
//! one was announced, or many addresses sharing a pool of IDs, points
//! at coordinated tooling.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::connection::{Connection, Sender};
use crate::detect::{AnomalyFinding, DetectError, Evidence};
use crate::ingest::{PacketRecord, PeerList};
use crate::levin::consts::{CMD_HANDSHAKE, CMD_PING};
use crate::levin::MessageKind;
use crate::netstruct::AsnDatabase;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdSource {
    /// The peer named itself in its handshake body.
    Handshake,
    /// The peer named itself answering a reachability ping.
    Pong,
    /// Somebody else's list asserted this (ip, id) pairing.
    PeerListEntry,
}

impl IdSource {
    /// List-sourced pairings are third-party assertions; a poisoned
    /// list could fabricate arbitrary ones, so they never drive
    /// flagging on their own.
    pub fn first_party(self) -> bool {
        matches!(self, IdSource::Handshake | IdSource::Pong)
    }
}

/// One sighting of an (ip, id) pairing. A wire ID of zero means "not
/// set" and never becomes an observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdObservation {
    pub ts: f64,
    pub ip: Ipv4Addr,
    pub peer_id: u64,
    pub source: IdSource,
}

/// Wire path of the self-announced ID inside a handshake body.
const HANDSHAKE_ID_PATH: &str = "node_data.peer_id";
/// Field name of the self-announced ID inside a pong body.
const PONG_ID_FIELD: &str = "peer_id";

/// Pull every ID sighting out of a grouped capture, time-sorted.
/// Handshakes and pongs from the remote name the remote itself;
/// peer-list entries name the listed address.
pub fn extract_id_observations(
    conns: &[Connection],
    records: &[PacketRecord],
    peer_lists: &[PeerList],
) -> Vec<IdObservation> {
    let mut out = Vec::new();
    for conn in conns {
        for msg in &conn.messages {
            if msg.sender != Sender::Remote {
                continue;
            }
            let field = match (msg.command, msg.kind) {
                (CMD_HANDSHAKE, _) => HANDSHAKE_ID_PATH,
                (CMD_PING, MessageKind::Response) => PONG_ID_FIELD,
                _ => continue,
            };
            let source = if msg.command == CMD_HANDSHAKE { IdSource::Handshake } else { IdSource::Pong };
            let Some(id) = records[msg.record_index].fields.get(field).and_then(|v| v.as_u64())
            else {
                continue;
            };
            if id == 0 {
                continue;
            }
            out.push(IdObservation { ts: msg.ts, ip: conn.remote_ip, peer_id: id, source });
        }
    }
    for list in peer_lists {
        for entry in &list.entries {
            let (Some(ip), Some(id)) = (entry.ip.as_v4(), entry.peer_id) else { continue };
            if id == 0 {
                continue;
            }
            out.push(IdObservation { ts: list.ts, ip, peer_id: id, source: IdSource::PeerListEntry });
        }
    }
    out.sort_by(|a, b| {
        a.ts.total_cmp(&b.ts).then(a.ip.cmp(&b.ip)).then(a.peer_id.cmp(&b.peer_id))
    });
    out
}

/// Flag addresses whose announced ID comes *back* after a different one
/// was seen in between (A…B…A). A restart mints a fresh random ID, so
/// a 64-bit value recurring across changes is not chance, it is two
/// processes answering for one address or an operator rotating a pool.
pub fn detect_temporal_id_anomaly(observations: &[IdObservation]) -> Vec<AnomalyFinding> {
    let mut per_ip: BTreeMap<Ipv4Addr, Vec<(f64, u64)>> = BTreeMap::new();
    for obs in observations.iter().filter(|o| o.source.first_party()) {
        per_ip.entry(obs.ip).or_default().push((obs.ts, obs.peer_id));
    }
    let groups: Vec<(Ipv4Addr, Vec<(f64, u64)>)> = per_ip.into_iter().collect();
    let findings = par::map_collect(&groups, |(ip, seq)| {
        // Collapse same-ID runs, then catch any ID already retired.
        let mut retired: BTreeSet<u64> = BTreeSet::new();
        let mut current: Option<u64> = None;
        let mut flips = 0usize;
        let mut span: Option<(f64, f64)> = None;
        for (ts, id) in seq {
            if current == Some(*id) {
                continue;
            }
            if let Some(prev) = current {
                retired.insert(prev);
            }
            if retired.contains(id) {
                flips += 1;
                let (first, last) = span.get_or_insert((*ts, *ts));
                *first = first.min(*ts);
                *last = last.max(*ts);
            }
            current = Some(*id);
        }
        let (first, last) = span?;
        let mut ids: BTreeSet<u64> = retired;
        ids.extend(current);
        Some(AnomalyFinding::new(
            *ip,
            Evidence::PeerIdTemporal { flip_count: flips, ids: ids.into_iter().collect() },
            first,
            last,
        ))
    });
    findings.into_iter().flatten().collect()
}

/// A connected component of the bipartite address–identifier graph with
/// at least two of each: several addresses drawing from a shared ID
/// pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdCluster {
    pub ips: BTreeSet<Ipv4Addr>,
    pub ids: BTreeSet<u64>,
    /// Distinct (ip, id) pairings inside the component.
    pub edge_count: usize,
}

/// Union-find over ip-nodes and id-nodes; only first-party sightings
/// create edges.
pub fn build_id_clusters(observations: &[IdObservation]) -> Vec<IdCluster> {
    let edges: BTreeSet<(Ipv4Addr, u64)> = observations
        .iter()
        .filter(|o| o.source.first_party())
        .map(|o| (o.ip, o.peer_id))
        .collect();
    let ips: BTreeMap<Ipv4Addr, usize> =
        edges.iter().map(|(ip, _)| *ip).collect::<BTreeSet<_>>().into_iter().zip(0..).collect();
    let ids: BTreeMap<u64, usize> = edges
        .iter()
        .map(|(_, id)| *id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .zip(ips.len()..)
        .collect();

    let mut dsu = Dsu::new(ips.len() + ids.len());
    for (ip, id) in &edges {
        dsu.union(ips[ip], ids[id]);
    }

    let mut clusters: BTreeMap<usize, IdCluster> = BTreeMap::new();
    for (ip, id) in &edges {
        let root = dsu.find(ips[ip]);
        let c = clusters
            .entry(root)
            .or_insert_with(|| IdCluster { ips: BTreeSet::new(), ids: BTreeSet::new(), edge_count: 0 });
        c.ips.insert(*ip);
        c.ids.insert(*id);
        c.edge_count += 1;
    }
    let mut out: Vec<IdCluster> = clusters
        .into_values()
        .filter(|c| c.ips.len() >= 2 && c.ids.len() >= 2)
        .collect();
    out.sort_by(|a, b| a.ips.iter().next().cmp(&b.ips.iter().next()));
    out
}

/// One finding per member address. With an ASN database the evidence
/// also says how many distinct ASes the cluster spans; one shared AS is
/// compatible with a VPN exit rather than many hosts.
pub fn cluster_findings(
    clusters: &[IdCluster],
    observations: &[IdObservation],
    db: Option<&AsnDatabase>,
) -> Vec<AnomalyFinding> {
    // Span per ip over its first-party sightings.
    let mut spans: BTreeMap<Ipv4Addr, (f64, f64)> = BTreeMap::new();
    for obs in observations.iter().filter(|o| o.source.first_party()) {
        let e = spans.entry(obs.ip).or_insert((obs.ts, obs.ts));
        e.0 = e.0.min(obs.ts);
        e.1 = e.1.max(obs.ts);
    }
    let mut out = Vec::new();
    for cluster in clusters {
        let as_count = db.map(|db| {
            cluster.ips.iter().map(|ip| db.lookup(*ip).0).collect::<BTreeSet<u32>>().len()
        });
        for ip in &cluster.ips {
            let (first, last) = spans.get(ip).copied().unwrap_or((0.0, 0.0));
            out.push(AnomalyFinding::new(
                *ip,
                Evidence::PeerIdCluster {
                    cluster_ips: cluster.ips.iter().copied().collect(),
                    cluster_ids: cluster.ids.iter().copied().collect(),
                    edge_count: cluster.edge_count,
                    as_count,
                },
                first,
                last,
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdMultiplicity {
    pub peer_count: usize,
    /// Share of addresses that announced exactly one identifier.
    pub fraction_single_id: f64,
    /// distinct-ID count → how many addresses had that count.
    pub histogram: BTreeMap<usize, usize>,
}

/// Distribution of distinct announced IDs per address, first-party
/// sightings only.
pub fn id_multiplicity_stats(observations: &[IdObservation]) -> Result<IdMultiplicity, DetectError> {
    let mut per_ip: BTreeMap<Ipv4Addr, BTreeSet<u64>> = BTreeMap::new();
    for obs in observations.iter().filter(|o| o.source.first_party()) {
        per_ip.entry(obs.ip).or_default().insert(obs.peer_id);
    }
    if per_ip.is_empty() {
        return Err(DetectError::NotAssessable("first-party id observations"));
    }
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for ids in per_ip.values() {
        *histogram.entry(ids.len()).or_insert(0) += 1;
    }
    let single = histogram.get(&1).copied().unwrap_or(0);
    Ok(IdMultiplicity {
        peer_count: per_ip.len(),
        fraction_single_id: single as f64 / per_ip.len() as f64,
        histogram,
    })
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }
    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}
