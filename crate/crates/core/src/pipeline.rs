//! End-to-end analysis: captured records in, report and ban list out.
//!
//! The pipeline is a pure function of its inputs and configuration.
//! The only wall-clock value in the output, `run_meta.generated_at`,
//! is supplied by the caller; leaving it unset makes two runs over the
//! same capture byte-identical, which is what the regression suite
//! pins.
//!
//! Raw-stream mode reconstructs message order from per-direction files
//! with a causality zipper: a response is emitted only once the other
//! side's matching request is outstanding, requests prefer the
//! initiator side. Conformant conversations reassemble without false
//! sequence deviations; genuinely ambiguous streams degrade to file
//! order. Timing in this mode is synthetic and spaced so connections
//! never blur together; duration-based detectors read it accordingly.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv4Addr;
use std::path::Path;

use thiserror::Error;

use crate::connection::{filter_incomplete, group_connections, ConnError, Connection};
use crate::detect::behavior::{
    detect_ping_flooding, detect_sequence_violations, detect_short_lived,
    detect_signature_only_fragments, detect_support_flags_omission, detect_throttled_timed_sync,
};
use crate::detect::content::{
    detect_deprecated_last_seen, detect_low_diversity, detect_similar_lists,
};
use crate::detect::findings::{sort_findings, AnomalyFinding, Evidence};
use crate::identity::{
    build_id_clusters, cluster_findings, detect_temporal_id_anomaly, extract_id_observations,
    id_multiplicity_stats,
};
use crate::ingest::{
    extract_peer_lists, parse_stream_file_name, read_jsonl, IngestError, PacketRecord, PeerList,
};
use crate::levin::consts::CMD_HANDSHAKE;
use crate::levin::MessageKind;
use crate::netstruct::{asn_rollup, build_promotion_graph, in_degree_stats, subnet_saturation, AsnDatabase};
use crate::report::{
    build_profiles, emit_banlist, exposure_timeline, flagged_connected_fraction, overlap_matrix,
    peer_list_exposure, BanList, ExposureSection, PromotionSection, Report, RunMeta,
    REPORT_SCHEMA_VERSION,
};
use crate::DetectorConfig;

/// Exposure timeline granularity, seconds.
pub const EXPOSURE_BUCKET_SECONDS: f64 = 60.0;
/// Promoted addresses listed in the in-degree ranking.
const TOP_PROMOTED: usize = 10;
/// Raw mode: synthetic seconds between messages and between streams.
const RAW_TS_STEP: f64 = 0.1;
const RAW_STREAM_STRIDE: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("capture holds no records")]
    EmptyCapture,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Conn(#[from] ConnError),
    #[error("raw stream {0}: {1}")]
    RawStream(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Records plus the ingest bookkeeping the report wants.
#[derive(Debug, Default)]
pub struct LoadedCapture {
    pub records: Vec<PacketRecord>,
    /// Input paths, for run provenance.
    pub inputs: Vec<String>,
    /// Frame decode failures per stream id (raw mode).
    pub stream_errors: BTreeMap<u64, usize>,
    /// Input lines or files that could not be used.
    pub skipped: usize,
}

impl LoadedCapture {
    pub fn from_records(records: Vec<PacketRecord>) -> Self {
        LoadedCapture { records, ..Default::default() }
    }
}

pub fn load_jsonl(path: &Path) -> Result<LoadedCapture, PipelineError> {
    let (records, stats) = read_jsonl(path)?;
    Ok(LoadedCapture {
        records,
        inputs: vec![path.display().to_string()],
        stream_errors: BTreeMap::new(),
        skipped: stats.lines_skipped,
    })
}

/// Read every `stream-*.levin` file in a directory and reassemble each
/// stream's two directions into one record sequence.
pub fn load_raw_dir(dir: &Path, max_payload: u64) -> Result<LoadedCapture, PipelineError> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();

    type DirKey = (Ipv4Addr, u16, Ipv4Addr, u16);
    let mut streams: BTreeMap<u64, BTreeMap<DirKey, Vec<PacketRecord>>> = BTreeMap::new();
    let mut stream_errors: BTreeMap<u64, usize> = BTreeMap::new();
    let mut skipped = 0usize;

    for name in &names {
        let Some(meta) = parse_stream_file_name(name) else {
            skipped += 1;
            continue;
        };
        let stream_id = meta.stream_id.unwrap_or(0);
        let bytes = std::fs::read(dir.join(name))?;
        let report = crate::ingest::decode_stream(&bytes, &meta, max_payload);
        *stream_errors.entry(stream_id).or_insert(0) += report.errors.len();
        let key = (meta.src_ip, meta.src_port, meta.dst_ip, meta.dst_port);
        streams.entry(stream_id).or_default().entry(key).or_default().extend(report.records);
    }

    let mut records = Vec::new();
    for (stream_id, directions) in streams {
        if directions.len() > 2 {
            return Err(PipelineError::RawStream(
                format!("stream {stream_id}"),
                format!("{} distinct endpoint pairs, expected at most 2", directions.len()),
            ));
        }
        let dirs: Vec<Vec<PacketRecord>> = directions.into_values().collect();
        let mut zipped = zip_directions(dirs);
        let base = stream_id as f64 * RAW_STREAM_STRIDE;
        for (i, r) in zipped.iter_mut().enumerate() {
            r.ts = base + i as f64 * RAW_TS_STEP;
        }
        records.extend(zipped);
    }
    stream_errors.retain(|_, n| *n > 0);

    Ok(LoadedCapture {
        records,
        inputs: vec![dir.display().to_string()],
        stream_errors,
        skipped,
    })
}

/// Interleave the two directions of one stream so that requests come
/// before the responses that answer them. Preference order: a response
/// matching the opposite side's oldest outstanding request, then an
/// initiator request, then a responder request, then whatever is left.
fn zip_directions(mut dirs: Vec<Vec<PacketRecord>>) -> Vec<PacketRecord> {
    match dirs.len() {
        0 => return Vec::new(),
        1 => return dirs.pop().unwrap(),
        _ => {}
    }
    // The initiator side opens with a handshake request.
    let leads_with_handshake = |d: &[PacketRecord]| {
        d.first().is_some_and(|r| r.command == CMD_HANDSHAKE && r.kind == MessageKind::Request)
    };
    if !leads_with_handshake(&dirs[0]) && leads_with_handshake(&dirs[1]) {
        dirs.swap(0, 1);
    }
    let mut b: VecDeque<PacketRecord> = dirs.pop().unwrap().into();
    let mut a: VecDeque<PacketRecord> = dirs.pop().unwrap().into();

    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut outstanding_a: VecDeque<u32> = VecDeque::new();
    let mut outstanding_b: VecDeque<u32> = VecDeque::new();
    loop {
        let answers = |q: &VecDeque<PacketRecord>, outstanding: &VecDeque<u32>| {
            q.front().is_some_and(|r| {
                r.kind == MessageKind::Response && outstanding.front() == Some(&r.command)
            })
        };
        if answers(&b, &outstanding_a) {
            outstanding_a.pop_front();
            out.push(b.pop_front().unwrap());
        } else if answers(&a, &outstanding_b) {
            outstanding_b.pop_front();
            out.push(a.pop_front().unwrap());
        } else if a.front().is_some_and(|r| r.kind == MessageKind::Request) {
            outstanding_a.push_back(a.front().unwrap().command);
            out.push(a.pop_front().unwrap());
        } else if b.front().is_some_and(|r| r.kind == MessageKind::Request) {
            outstanding_b.push_back(b.front().unwrap().command);
            out.push(b.pop_front().unwrap());
        } else if let Some(r) = a.pop_front() {
            out.push(r); // unmatched response; keep file order
        } else if let Some(r) = b.pop_front() {
            out.push(r);
        } else {
            break;
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct AnalyzeRequest<'a> {
    pub local_ip: Option<Ipv4Addr>,
    pub asn_db: Option<&'a AsnDatabase>,
    pub external_banlist: Option<&'a BanList>,
    /// Wall-clock stamp for `run_meta.generated_at`; `None` keeps the
    /// whole document input-determined.
    pub generated_at: Option<String>,
}

#[derive(Debug)]
pub struct Analysis {
    pub report: Report,
    pub banlist: BanList,
}

pub fn analyze(
    capture: &LoadedCapture,
    config: &DetectorConfig,
    req: &AnalyzeRequest,
) -> Result<Analysis, PipelineError> {
    let records = &capture.records;
    if records.is_empty() {
        return Err(PipelineError::EmptyCapture);
    }

    let mut conns = group_connections(records, req.local_ip, config.session_gap)?;
    let local_ip = conns.first().map(|c| c.local_ip).or(req.local_ip);
    if !capture.stream_errors.is_empty() {
        mark_decode_errors(&mut conns, records, &capture.stream_errors);
    }
    let (conns, dropped) = filter_incomplete(conns);

    // The local node's own announcements describe the measurement
    // vantage, not peer behavior; content analyses skip them.
    let peer_lists: Vec<PeerList> = extract_peer_lists(records)
        .into_iter()
        .filter(|l| Some(l.source_ip) != local_ip)
        .collect();

    let db = req.asn_db;
    let mut findings: Vec<AnomalyFinding> = Vec::new();
    findings.extend(detect_support_flags_omission(&conns, records));
    // Raw streams carry no segmentation view; the fragment-shape
    // detector simply reports nothing it can assess.
    findings.extend(detect_signature_only_fragments(&conns, records).unwrap_or_default());
    findings.extend(detect_short_lived(&conns, config));
    findings.extend(detect_throttled_timed_sync(&conns, config));
    findings.extend(detect_ping_flooding(&conns, config));
    findings.extend(detect_sequence_violations(&conns));
    findings.extend(detect_low_diversity(&peer_lists, config));
    findings.extend(detect_similar_lists(&peer_lists, config));
    findings.extend(detect_deprecated_last_seen(&peer_lists));

    let observations = extract_id_observations(&conns, records, &peer_lists);
    findings.extend(detect_temporal_id_anomaly(&observations));
    let clusters = build_id_clusters(&observations);
    findings.extend(cluster_findings(&clusters, &observations, db));

    let promoted: BTreeSet<Ipv4Addr> = peer_lists
        .iter()
        .flat_map(|l| l.entries.iter())
        .filter(|e| e.is_valid_unicast())
        .filter_map(|e| e.ip.as_v4())
        .collect();
    let saturation = subnet_saturation(&promoted, config.saturation_threshold, db);
    let capture_start = records.iter().map(|r| r.ts).fold(f64::INFINITY, f64::min);
    let capture_end = records.iter().map(|r| r.ts).fold(f64::NEG_INFINITY, f64::max);
    for s in &saturation {
        if !s.saturated {
            continue;
        }
        for ip in &s.members {
            findings.push(AnomalyFinding::new(
                *ip,
                Evidence::SaturatedSubnetMember {
                    subnet: s.subnet.clone(),
                    unique_ip_count: s.unique_ips,
                },
                capture_start,
                capture_end,
            ));
        }
    }

    sort_findings(&mut findings);

    let profiles = build_profiles(&findings, &conns, &observations, &peer_lists, db);
    let flagged: BTreeSet<Ipv4Addr> = findings.iter().map(|f| f.ip).collect();

    let exposure = ExposureSection {
        flagged_connected_fraction: flagged_connected_fraction(&profiles),
        timeline: exposure_timeline(&conns, &flagged, EXPOSURE_BUCKET_SECONDS),
        peer_list: peer_list_exposure(&peer_lists, &flagged, config.full_list_size),
    };

    let graph = build_promotion_graph(&peer_lists);
    let promotion_stats = PromotionSection {
        edge_total: graph.edge_total(),
        self_edge_total: graph.self_edges.values().sum(),
        in_degree: in_degree_stats(&graph, TOP_PROMOTED).ok(),
        id_multiplicity: id_multiplicity_stats(&observations).ok(),
        asn_rollup: db.map(|db| asn_rollup(promoted.iter().copied(), db)),
    };

    let run_meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: config.digest(),
        inputs: capture.inputs.clone(),
        local_ip,
        record_count: records.len(),
        connection_count: conns.len(),
        dropped_connections: dropped,
        generated_at: req.generated_at.clone(),
    };

    let overlap = overlap_matrix(&profiles, req.external_banlist, db);
    let banlist = emit_banlist(&profiles, &saturation);

    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        run_meta,
        profiles,
        findings,
        overlap,
        exposure,
        promotion_stats,
        saturation,
    };
    Ok(Analysis { report, banlist })
}

/// Raw streams can end mid-frame; the affected connection keeps its
/// decoded prefix but is dropped from analysis as untrustworthy.
fn mark_decode_errors(
    conns: &mut [Connection],
    records: &[PacketRecord],
    stream_errors: &BTreeMap<u64, usize>,
) {
    for conn in conns.iter_mut() {
        let ids: BTreeSet<u64> = conn
            .messages
            .iter()
            .filter_map(|m| records[m.record_index].stream_id)
            .collect();
        conn.decode_errors = ids.iter().filter_map(|id| stream_errors.get(id)).sum();
    }
}
