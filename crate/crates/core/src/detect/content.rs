//! Content detectors: what a peer *says* in its shared peer lists,
//! independent of when or how fast it says it.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use crate::detect::{AnomalyFinding, DetectError, DetectorConfig, Evidence};
use crate::ingest::PeerList;
use crate::netstruct::subnet24;
use crate::par;

/// |A ∩ B| / |A ∪ B|. Two empty sets have no defined similarity.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64, DetectError> {
    if a.is_empty() && b.is_empty() {
        return Err(DetectError::BothEmpty);
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// Distinct /24 networks among a list's IPv4 entries, over the total
/// entry count. A benign node's view of the network is spread thin;
/// a curated list recycles a handful of subnets. Only full lists are
/// measurable: the concentration of a 3-entry list says nothing.
pub fn peer_list_diversity(list: &PeerList, full_list_size: usize) -> Result<f64, DetectError> {
    if !list.is_full(full_list_size) {
        return Err(DetectError::NotAssessable("full peer list"));
    }
    let nets: BTreeSet<u32> = list
        .entries
        .iter()
        .filter_map(|e| e.ip.as_v4())
        .map(subnet24)
        .collect();
    Ok(nets.len() as f64 / list.entries.len() as f64)
}

/// Flag sources whose *full* lists concentrate into too few /24s.
/// Partial lists are skipped: diversity of a 3-entry list says nothing.
pub fn detect_low_diversity(peer_lists: &[PeerList], config: &DetectorConfig) -> Vec<AnomalyFinding> {
    let mut by_source: BTreeMap<Ipv4Addr, Vec<&PeerList>> = BTreeMap::new();
    for list in peer_lists.iter().filter(|l| l.is_full(config.full_list_size)) {
        by_source.entry(list.source_ip).or_default().push(list);
    }
    let mut findings = Vec::new();
    for (ip, lists) in by_source {
        let mut min_diversity = f64::INFINITY;
        let mut flagged: Vec<&PeerList> = Vec::new();
        for list in &lists {
            let d = peer_list_diversity(list, config.full_list_size).expect("list is full");
            min_diversity = min_diversity.min(d);
            if d < config.diversity_threshold {
                flagged.push(list);
            }
        }
        if flagged.is_empty() {
            continue;
        }
        let first = flagged.iter().map(|l| l.ts).fold(f64::INFINITY, f64::min);
        let last = flagged.iter().map(|l| l.ts).fold(f64::NEG_INFINITY, f64::max);
        findings.push(AnomalyFinding::new(
            ip,
            Evidence::LowDiversityPeerList {
                min_diversity,
                full_list_count: lists.len(),
                flagged_list_count: flagged.len(),
            },
            first,
            last,
        ));
    }
    findings
}

/// One full-list instance, reduced to the sets similarity works on.
struct ListInstance {
    source_ip: Ipv4Addr,
    ts: f64,
    subnets: BTreeSet<u32>,
    raw: BTreeSet<Ipv4Addr>,
}

/// Flag sources that repeatedly share near-identical lists with other
/// sources. Similarity is measured on /24s so per-host rotation inside
/// a subnet does not hide reuse; the raw-address similarity rides along
/// as evidence. Comparisons are cross-source only: one operator
/// resending its own list is expected behavior.
pub fn detect_similar_lists(peer_lists: &[PeerList], config: &DetectorConfig) -> Vec<AnomalyFinding> {
    similar_lists_impl(peer_lists, config, true)
}

/// Sequential twin of [`detect_similar_lists`]; identical output.
pub fn detect_similar_lists_seq(peer_lists: &[PeerList], config: &DetectorConfig) -> Vec<AnomalyFinding> {
    similar_lists_impl(peer_lists, config, false)
}

fn similar_lists_impl(
    peer_lists: &[PeerList],
    config: &DetectorConfig,
    parallel: bool,
) -> Vec<AnomalyFinding> {
    let instances: Vec<ListInstance> = peer_lists
        .iter()
        .filter(|l| l.is_full(config.full_list_size))
        .map(|l| {
            let raw: BTreeSet<Ipv4Addr> = l.entries.iter().filter_map(|e| e.ip.as_v4()).collect();
            ListInstance {
                source_ip: l.source_ip,
                ts: l.ts,
                subnets: raw.iter().copied().map(subnet24).collect(),
                raw,
            }
        })
        .collect();

    // Any pair above the threshold shares at least one subnet, so an
    // inverted index over subnets yields every pair that could matter
    // without the quadratic sweep over unrelated sources.
    let mut buckets: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        for net in &inst.subnets {
            buckets.entry(*net).or_default().push(i);
        }
    }
    let mut candidates: BTreeSet<(usize, usize)> = BTreeSet::new();
    for members in buckets.values() {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                if instances[i].source_ip != instances[j].source_ip {
                    candidates.insert((i, j));
                }
            }
        }
    }
    let candidates: Vec<(usize, usize)> = candidates.into_iter().collect();

    // (i, j, subnet similarity, raw similarity) for pairs over the bar.
    let score = |&(i, j): &(usize, usize)| -> Option<(usize, usize, f64, f64)> {
        let a = &instances[i];
        let b = &instances[j];
        let sub = jaccard(&a.subnets, &b.subnets).expect("candidates share a subnet");
        if sub <= config.similarity_threshold {
            return None;
        }
        let raw = jaccard(&a.raw, &b.raw).expect("candidates share a subnet");
        Some((i, j, sub, raw))
    };
    let scored: Vec<Option<(usize, usize, f64, f64)>> = if parallel {
        par::map_collect(&candidates, score)
    } else {
        par::map_collect_seq(&candidates, score)
    };

    struct Acc {
        pair_count: usize,
        max_subnet: f64,
        max_raw: f64,
        partners: BTreeSet<Ipv4Addr>,
        first: f64,
        last: f64,
    }
    let mut per_source: BTreeMap<Ipv4Addr, Acc> = BTreeMap::new();
    for (i, j, sub, raw) in scored.into_iter().flatten() {
        for (this, other) in [(i, j), (j, i)] {
            let inst = &instances[this];
            let acc = per_source.entry(inst.source_ip).or_insert(Acc {
                pair_count: 0,
                max_subnet: 0.0,
                max_raw: 0.0,
                partners: BTreeSet::new(),
                first: f64::INFINITY,
                last: f64::NEG_INFINITY,
            });
            acc.pair_count += 1;
            acc.max_subnet = acc.max_subnet.max(sub);
            acc.max_raw = acc.max_raw.max(raw);
            acc.partners.insert(instances[other].source_ip);
            acc.first = acc.first.min(inst.ts);
            acc.last = acc.last.max(inst.ts);
        }
    }

    per_source
        .into_iter()
        .filter(|(_, acc)| acc.pair_count >= config.similarity_min_repeats)
        .map(|(ip, acc)| {
            AnomalyFinding::new(
                ip,
                Evidence::HighSimilarityPeerList {
                    max_subnet_similarity: acc.max_subnet,
                    max_raw_similarity: acc.max_raw,
                    pair_count: acc.pair_count,
                    partner_ips: acc.partners.into_iter().collect(),
                },
                acc.first,
                acc.last,
            )
        })
        .collect()
}

/// Flag sources still populating the retired wall-clock gossip field in
/// peer list entries. Current relays zero it out on the wire; a peer
/// that fills it is running modified or ancient code, and identical
/// values across entries betray bulk fabrication.
pub fn detect_deprecated_last_seen(peer_lists: &[PeerList]) -> Vec<AnomalyFinding> {
    struct Acc {
        entry_count: usize,
        list_count: usize,
        values: BTreeSet<i64>,
        first: f64,
        last: f64,
    }
    let mut by_source: BTreeMap<Ipv4Addr, Acc> = BTreeMap::new();
    for list in peer_lists {
        let stamped: Vec<i64> = list.entries.iter().filter_map(|e| e.last_seen).collect();
        if stamped.is_empty() {
            continue;
        }
        let acc = by_source.entry(list.source_ip).or_insert(Acc {
            entry_count: 0,
            list_count: 0,
            values: BTreeSet::new(),
            first: f64::INFINITY,
            last: f64::NEG_INFINITY,
        });
        acc.entry_count += stamped.len();
        acc.list_count += 1;
        acc.values.extend(stamped);
        acc.first = acc.first.min(list.ts);
        acc.last = acc.last.max(list.ts);
    }
    by_source
        .into_iter()
        .map(|(ip, acc)| {
            AnomalyFinding::new(
                ip,
                Evidence::DeprecatedLastSeen {
                    entry_count: acc.entry_count,
                    list_count: acc.list_count,
                    distinct_values: acc.values.len(),
                },
                acc.first,
                acc.last,
            )
        })
        .collect()
}
