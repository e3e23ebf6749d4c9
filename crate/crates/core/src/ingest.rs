//! Capture ingestion: normalize either JSONL record files or raw
//! per-direction Levin payload streams into `PacketRecord`s.
//!
//! The JSONL shape is the interchange format: one object per line,
//! timestamps as decimal seconds, IPs dotted-quad, message fields keyed
//! by flattened path, peer lists as arrays of entry objects. Raw-stream
//! mode decodes wire octets through the codec and converts payloads to
//! the same shape, so everything downstream sees one record type.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::levin::consts::*;
use crate::levin::{decode_frame, decode_payload_lenient, CodecError, EpeeValue, MessageKind};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("capture read failed")]
    Io(#[from] std::io::Error),
    #[error("{malformed} of {total} lines malformed (>1%); wrong input file?")]
    SchemaViolation { malformed: usize, total: usize },
}

/// One normalized protocol message observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub ts: f64,
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_id: Option<u64>,
    pub command: u32,
    pub kind: MessageKind,
    #[serde(default)]
    pub fields: BTreeMap<String, Value>,
    /// TCP segment sizes composing this reassembled message, in order.
    /// Absent in raw-stream mode (single source, no segmentation view).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_lengths: Option<Vec<u64>>,
}

/// Peer-list entry address: IPv4 drives all analytics; anything else is
/// carried as opaque text and excluded from subnet math.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PeerAddr {
    V4(Ipv4Addr),
    Opaque(String),
}

impl PeerAddr {
    pub fn as_v4(&self) -> Option<Ipv4Addr> {
        match self {
            PeerAddr::V4(ip) => Some(*ip),
            PeerAddr::Opaque(_) => None,
        }
    }
}

impl fmt::Display for PeerAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeerAddr::V4(ip) => write!(f, "{ip}"),
            PeerAddr::Opaque(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerListEntry {
    pub ip: PeerAddr,
    pub port: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer_id: Option<u64>,
    /// Deprecated on the wire; presence is detector input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_seen: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruning_seed: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpc_port: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpc_credits_per_hash: Option<u32>,
    /// Entry fields outside the known set, preserved verbatim.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl PeerListEntry {
    /// Routable-unicast check; failures are recorded but marked
    /// invalid and excluded from subnet analytics.
    pub fn is_valid_unicast(&self) -> bool {
        match self.ip {
            PeerAddr::V4(ip) => {
                !ip.is_loopback()
                    && !ip.is_multicast()
                    && !ip.is_broadcast()
                    && !ip.is_unspecified()
                    && ip.octets()[0] != 0
            }
            PeerAddr::Opaque(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Carrier {
    HandshakeResponse,
    TimedSyncResponse,
}

/// One peer list as exchanged on the wire, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerList {
    pub source_ip: Ipv4Addr,
    pub ts: f64,
    pub carrier: Carrier,
    pub entries: Vec<PeerListEntry>,
    /// Entries whose address failed the unicast check (or was opaque).
    pub invalid_count: usize,
}

impl PeerList {
    pub fn is_full(&self, full_list_size: usize) -> bool {
        self.entries.len() == full_list_size
    }
}

/// Lossless accounting for one JSONL read: every input line is either
/// emitted or counted skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IngestStats {
    pub lines_total: usize,
    pub records_emitted: usize,
    pub lines_skipped: usize,
}

/// Read a JSONL capture. Malformed lines are skipped and counted; more
/// than 1% malformed fails the whole read, since that signals a wrong
/// or truncated input file rather than stray noise.
pub fn read_jsonl(path: &Path) -> Result<(Vec<PacketRecord>, IngestStats), IngestError> {
    let file = std::fs::File::open(path)?;
    read_jsonl_from(std::io::BufReader::new(file))
}

pub fn read_jsonl_from<R: BufRead>(reader: R) -> Result<(Vec<PacketRecord>, IngestStats), IngestError> {
    let mut records = Vec::new();
    let mut stats = IngestStats::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines_total += 1;
        match serde_json::from_str::<PacketRecord>(&line) {
            Ok(r) => {
                records.push(r);
                stats.records_emitted += 1;
            }
            Err(_) => stats.lines_skipped += 1,
        }
    }
    if stats.lines_skipped * 100 > stats.lines_total {
        return Err(IngestError::SchemaViolation {
            malformed: stats.lines_skipped,
            total: stats.lines_total,
        });
    }
    Ok((records, stats))
}

/// Endpoint and timing context for one raw single-direction stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamMeta {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub stream_id: Option<u64>,
    pub ts_base: f64,
}

/// Raw-stream file name convention:
/// `stream-<id>-<src_ip>-<src_port>-<dst_ip>-<dst_port>.levin`.
pub fn stream_file_name(meta: &StreamMeta) -> String {
    format!(
        "stream-{}-{}-{}-{}-{}.levin",
        meta.stream_id.unwrap_or(0),
        meta.src_ip,
        meta.src_port,
        meta.dst_ip,
        meta.dst_port
    )
}

pub fn parse_stream_file_name(name: &str) -> Option<StreamMeta> {
    let stem = name.strip_suffix(".levin")?;
    let mut parts = stem.split('-');
    if parts.next()? != "stream" {
        return None;
    }
    let stream_id = parts.next()?.parse::<u64>().ok()?;
    let src_ip = parts.next()?.parse().ok()?;
    let src_port = parts.next()?.parse().ok()?;
    let dst_ip = parts.next()?.parse().ok()?;
    let dst_port = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some(StreamMeta { src_ip, src_port, dst_ip, dst_port, stream_id: Some(stream_id), ts_base: 0.0 })
}

/// Outcome of decoding one raw stream: records plus any frame/storage
/// errors encountered. Storage-level errors skip just that frame (its
/// boundary is known from the header); framing errors end the stream.
#[derive(Debug, Default)]
pub struct DecodeReport {
    pub records: Vec<PacketRecord>,
    pub errors: Vec<CodecError>,
}

/// Decode one direction of one connection from raw octets.
///
/// Frames get synthetic strictly-increasing timestamps from
/// `meta.ts_base` (microsecond steps): raw streams carry no timing, and
/// downstream only needs per-stream order here.
pub fn decode_stream(payload: &[u8], meta: &StreamMeta, max_payload: u64) -> DecodeReport {
    let mut report = DecodeReport::default();
    let mut rest = payload;
    let mut index = 0u64;
    while !rest.is_empty() {
        let (frame, used) = match decode_frame(rest, max_payload) {
            Ok(ok) => ok,
            Err(e) => {
                report.errors.push(e);
                break;
            }
        };
        rest = &rest[used..];
        match decode_payload_lenient(&frame) {
            Ok(msg) => {
                report.records.push(PacketRecord {
                    ts: meta.ts_base + index as f64 * 1e-6,
                    src_ip: meta.src_ip,
                    src_port: meta.src_port,
                    dst_ip: meta.dst_ip,
                    dst_port: meta.dst_port,
                    stream_id: meta.stream_id,
                    command: msg.command,
                    kind: msg.kind,
                    fields: fields_to_json(&msg.fields),
                    segment_lengths: None,
                });
                index += 1;
            }
            Err(e) => report.errors.push(e),
        }
    }
    report
}

// ---------------------------------------------------------------------
// Storage-value -> JSON conversion
// ---------------------------------------------------------------------

fn bytes_to_json(bytes: &[u8]) -> Value {
    match std::str::from_utf8(bytes) {
        // Control characters would round-trip badly through text tools.
        Ok(s) if !s.chars().any(|c| c.is_control()) => Value::String(s.to_string()),
        _ => {
            let mut s = String::with_capacity(4 + bytes.len() * 2);
            s.push_str("hex:");
            for b in bytes {
                s.push_str(&format!("{b:02x}"));
            }
            Value::String(s)
        }
    }
}

/// Convert one storage value to its JSON representation.
pub fn epee_to_json(value: &EpeeValue) -> Value {
    match value {
        EpeeValue::I64(v) => Value::from(*v),
        EpeeValue::I32(v) => Value::from(*v),
        EpeeValue::I16(v) => Value::from(*v),
        EpeeValue::I8(v) => Value::from(*v),
        EpeeValue::U64(v) => Value::from(*v),
        EpeeValue::U32(v) => Value::from(*v),
        EpeeValue::U16(v) => Value::from(*v),
        EpeeValue::U8(v) => Value::from(*v),
        EpeeValue::F64(v) => serde_json::Number::from_f64(*v)
            .map(Value::Number)
            .unwrap_or_else(|| Value::String(format!("{v}"))),
        EpeeValue::Bool(v) => Value::Bool(*v),
        EpeeValue::Bytes(b) => bytes_to_json(b),
        EpeeValue::Section(s) => {
            let mut map = serde_json::Map::new();
            for (name, v) in &s.entries {
                map.insert(name.clone(), epee_to_json(v));
            }
            Value::Object(map)
        }
        EpeeValue::Array(a) => Value::Array(a.values.iter().map(epee_to_json).collect()),
    }
}

/// Convert flattened message fields to the JSONL shape. The peer list
/// is normalized from its wire shape to entry objects; everything else
/// converts generically.
pub fn fields_to_json(fields: &BTreeMap<String, EpeeValue>) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for (path, value) in fields {
        if path == PEERLIST_PATH {
            if let EpeeValue::Array(list) = value {
                let entries: Vec<Value> = list
                    .values
                    .iter()
                    .map(|v| match v {
                        EpeeValue::Section(entry) => {
                            serde_json::to_value(wire_entry_to_record(entry)).expect("entry serializes")
                        }
                        other => epee_to_json(other),
                    })
                    .collect();
                out.insert(path.clone(), Value::Array(entries));
                continue;
            }
        }
        out.insert(path.clone(), epee_to_json(value));
    }
    out
}

/// Interpret one wire peer-list entry section. Address type 1 is IPv4
/// with the four dotted-quad octets stored little-endian in `m_ip`;
/// anything else becomes an opaque address string.
pub fn wire_entry_to_record(entry: &crate::levin::EpeeSection) -> PeerListEntry {
    let flat = crate::levin::payload::flatten_section(entry).unwrap_or_default();
    let mut out = PeerListEntry {
        ip: PeerAddr::Opaque(String::new()),
        port: 0,
        peer_id: None,
        last_seen: None,
        pruning_seed: None,
        rpc_port: None,
        rpc_credits_per_hash: None,
        extra: BTreeMap::new(),
    };
    let addr_type = flat.get("adr.type").and_then(|v| v.as_u64()).unwrap_or(1);
    let mut opaque_bits: Vec<String> = Vec::new();
    for (path, value) in &flat {
        match (path.as_str(), addr_type) {
            ("adr.type", _) => {}
            ("adr.addr.m_ip", 1) => {
                if let Some(v) = value.as_u64() {
                    out.ip = PeerAddr::V4(Ipv4Addr::from((v as u32).to_le_bytes()));
                }
            }
            ("adr.addr.m_port", _) => {
                out.port = value.as_u64().unwrap_or(0) as u16;
            }
            ("id", _) => out.peer_id = value.as_u64().filter(|v| *v != 0),
            ("last_seen", _) => out.last_seen = value.as_i64(),
            ("pruning_seed", _) => out.pruning_seed = value.as_u64().map(|v| v as u32),
            ("rpc_port", _) => out.rpc_port = value.as_u64().map(|v| v as u16),
            ("rpc_credits_per_hash", _) => {
                out.rpc_credits_per_hash = value.as_u64().map(|v| v as u32)
            }
            (p, t) if t != 1 && p.starts_with("adr.addr.") => {
                opaque_bits.push(format!("{}={}", &p["adr.addr.".len()..], epee_to_json(value)));
            }
            (p, _) => {
                out.extra.insert(p.to_string(), epee_to_json(value));
            }
        }
    }
    if addr_type != 1 {
        opaque_bits.sort();
        out.ip = PeerAddr::Opaque(format!("type{addr_type}({})", opaque_bits.join(",")));
    }
    out
}

/// Pull every peer list out of a record stream. One list per record
/// whose fields carry the peer-list path; entries that fail to parse as
/// objects are dropped from the list but counted invalid.
pub fn extract_peer_lists(records: &[PacketRecord]) -> Vec<PeerList> {
    let mut lists = Vec::new();
    for record in records {
        let Some(value) = record.fields.get(PEERLIST_PATH) else {
            continue;
        };
        let carrier = if record.command == CMD_HANDSHAKE {
            Carrier::HandshakeResponse
        } else {
            Carrier::TimedSyncResponse
        };
        let mut entries = Vec::new();
        let mut invalid = 0usize;
        if let Value::Array(items) = value {
            for item in items {
                match serde_json::from_value::<PeerListEntry>(item.clone()) {
                    Ok(e) => {
                        if !e.is_valid_unicast() {
                            invalid += 1;
                        }
                        entries.push(e);
                    }
                    Err(_) => invalid += 1,
                }
            }
        }
        lists.push(PeerList {
            source_ip: record.src_ip,
            ts: record.ts,
            carrier,
            entries,
            invalid_count: invalid,
        });
    }
    lists
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levin::epee::{EpeeArray, EpeeSection};
    use crate::levin::{encode_frame, encode_payload, LevinFrame, ParsedMessage};

    fn jsonl_line(ts: f64, command: u32, kind: &str) -> String {
        format!(
            r#"{{"ts":{ts},"src_ip":"10.0.0.2","src_port":41000,"dst_ip":"10.0.0.1","dst_port":18080,"stream_id":7,"command":{command},"kind":"{kind}","fields":{{}}}}"#
        )
    }

    #[test]
    fn jsonl_reads_in_order_with_accounting() {
        let text = format!(
            "{}\n{}\n{}\n",
            jsonl_line(1.0, CMD_HANDSHAKE, "request"),
            jsonl_line(2.0, CMD_HANDSHAKE, "response"),
            jsonl_line(3.5, CMD_TIMED_SYNC, "request"),
        );
        let (records, stats) = read_jsonl_from(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].ts, 3.5);
        assert_eq!(stats, IngestStats { lines_total: 3, records_emitted: 3, lines_skipped: 0 });
    }

    #[test]
    fn malformed_minority_skipped_majority_fails() {
        let good: Vec<String> = (0..150).map(|i| jsonl_line(i as f64, CMD_PING, "request")).collect();
        let mut text = good.join("\n");
        text.push_str("\n{\"no_ts\":true}\n");
        let (records, stats) = read_jsonl_from(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 150);
        assert_eq!(stats.lines_skipped, 1);
        assert_eq!(stats.lines_total, stats.records_emitted + stats.lines_skipped);

        let mostly_bad = "not json\nstill not\n{\"ts\":1}\n";
        assert!(matches!(
            read_jsonl_from(mostly_bad.as_bytes()),
            Err(IngestError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let (records, stats) = read_jsonl_from(&b""[..]).unwrap();
        assert!(records.is_empty());
        assert_eq!(stats.lines_total, 0);
    }

    #[test]
    fn record_serialization_round_trips() {
        let mut fields = BTreeMap::new();
        fields.insert("node_data.peer_id".to_string(), Value::from(42u64));
        let record = PacketRecord {
            ts: 12.25,
            src_ip: Ipv4Addr::new(10, 0, 0, 2),
            src_port: 41000,
            dst_ip: Ipv4Addr::new(10, 0, 0, 1),
            dst_port: 18080,
            stream_id: Some(3),
            command: CMD_HANDSHAKE,
            kind: MessageKind::Request,
            fields,
            segment_lengths: Some(vec![8, 25, 300]),
        };
        let line = serde_json::to_string(&record).unwrap();
        assert_eq!(serde_json::from_str::<PacketRecord>(&line).unwrap(), record);
    }

    fn meta() -> StreamMeta {
        StreamMeta {
            src_ip: Ipv4Addr::new(10, 0, 0, 2),
            src_port: 41000,
            dst_ip: Ipv4Addr::new(10, 0, 0, 1),
            dst_port: 18080,
            stream_id: Some(1),
            ts_base: 100.0,
        }
    }

    #[test]
    fn decode_stream_emits_one_record_per_frame() {
        let ping = encode_frame(&LevinFrame::request(
            CMD_PING,
            encode_payload(&ParsedMessage::request(CMD_PING)).unwrap(),
        ));
        let mut wire = ping.clone();
        wire.extend_from_slice(&ping);
        let report = decode_stream(&wire, &meta(), DEFAULT_MAX_PAYLOAD);
        assert_eq!(report.records.len(), 2);
        assert!(report.errors.is_empty());
        assert!(report.records[0].ts < report.records[1].ts);
        assert_eq!(report.records[0].segment_lengths, None);
    }

    #[test]
    fn decode_stream_reports_trailing_garbage() {
        let mut wire = encode_frame(&LevinFrame::request(
            CMD_PING,
            encode_payload(&ParsedMessage::request(CMD_PING)).unwrap(),
        ));
        wire.extend_from_slice(&[0xde, 0xad, 0xbe, 0xef, 0, 0, 0, 0, 1]);
        let report = decode_stream(&wire, &meta(), DEFAULT_MAX_PAYLOAD);
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.errors.len(), 1);
    }

    #[test]
    fn decode_stream_empty_payload_is_empty() {
        let report = decode_stream(&[], &meta(), DEFAULT_MAX_PAYLOAD);
        assert!(report.records.is_empty() && report.errors.is_empty());
    }

    #[test]
    fn decode_stream_skips_bad_storage_but_keeps_framing() {
        let good = encode_frame(&LevinFrame::request(
            CMD_PING,
            encode_payload(&ParsedMessage::request(CMD_PING)).unwrap(),
        ));
        // Middle frame has a valid Levin header but corrupt storage.
        let bad = encode_frame(&LevinFrame::request(CMD_PING, vec![0xff; 12]));
        let mut wire = good.clone();
        wire.extend_from_slice(&bad);
        wire.extend_from_slice(&good);
        let report = decode_stream(&wire, &meta(), DEFAULT_MAX_PAYLOAD);
        assert_eq!(report.records.len(), 2);
        assert_eq!(report.errors.len(), 1);
    }

    fn wire_list_entry(ip: [u8; 4], id: u64, last_seen: Option<i64>) -> EpeeSection {
        let mut addr = EpeeSection::new();
        addr.push("m_ip", EpeeValue::U32(u32::from_le_bytes(ip)));
        addr.push("m_port", EpeeValue::U16(18080));
        let mut adr = EpeeSection::new();
        adr.push("type", EpeeValue::U8(1));
        adr.push("addr", EpeeValue::Section(addr));
        let mut entry = EpeeSection::new();
        entry.push("adr", EpeeValue::Section(adr));
        entry.push("id", EpeeValue::U64(id));
        if let Some(v) = last_seen {
            entry.push("last_seen", EpeeValue::I64(v));
        }
        entry
    }

    #[test]
    fn wire_entries_normalize_to_dotted_quads() {
        let entry = wire_entry_to_record(&wire_list_entry([93, 184, 216, 34], 77, Some(1_700_000_000)));
        assert_eq!(entry.ip, PeerAddr::V4(Ipv4Addr::new(93, 184, 216, 34)));
        assert_eq!(entry.port, 18080);
        assert_eq!(entry.peer_id, Some(77));
        assert_eq!(entry.last_seen, Some(1_700_000_000));
        assert!(entry.is_valid_unicast());
    }

    #[test]
    fn non_ipv4_entries_become_opaque_and_invalid() {
        let mut addr = EpeeSection::new();
        addr.push("addr", EpeeValue::Bytes(vec![0xab; 16]));
        addr.push("m_port", EpeeValue::U16(18080));
        let mut adr = EpeeSection::new();
        adr.push("type", EpeeValue::U8(2));
        adr.push("addr", EpeeValue::Section(addr));
        let mut entry = EpeeSection::new();
        entry.push("adr", EpeeValue::Section(adr));
        let parsed = wire_entry_to_record(&entry);
        assert!(matches!(parsed.ip, PeerAddr::Opaque(_)));
        assert!(!parsed.is_valid_unicast());
    }

    #[test]
    fn peer_lists_extracted_with_carrier_and_validity() {
        let entries = vec![
            wire_list_entry([8, 8, 8, 8], 1, None),
            wire_list_entry([127, 0, 0, 1], 2, None), // loopback: recorded, invalid
        ];
        let msg = ParsedMessage::response(CMD_TIMED_SYNC).with_field(
            PEERLIST_PATH,
            EpeeValue::Array(EpeeArray::of_sections(entries)),
        );
        let frame = LevinFrame::response(CMD_TIMED_SYNC, encode_payload(&msg).unwrap());
        let report = decode_stream(&encode_frame(&frame), &meta(), DEFAULT_MAX_PAYLOAD);
        let lists = extract_peer_lists(&report.records);
        assert_eq!(lists.len(), 1);
        let list = &lists[0];
        assert_eq!(list.carrier, Carrier::TimedSyncResponse);
        assert_eq!(list.source_ip, Ipv4Addr::new(10, 0, 0, 2));
        assert_eq!(list.entries.len(), 2);
        assert_eq!(list.invalid_count, 1);
        assert!(!list.is_full(250));

        // Records without the path produce nothing.
        let ping = decode_stream(
            &encode_frame(&LevinFrame::request(
                CMD_PING,
                encode_payload(&ParsedMessage::request(CMD_PING)).unwrap(),
            )),
            &meta(),
            DEFAULT_MAX_PAYLOAD,
        );
        assert!(extract_peer_lists(&ping.records).is_empty());
    }

    #[test]
    fn stream_file_names_round_trip() {
        let m = meta();
        let name = stream_file_name(&m);
        assert_eq!(name, "stream-1-10.0.0.2-41000-10.0.0.1-18080.levin");
        let parsed = parse_stream_file_name(&name).unwrap();
        assert_eq!(parsed.src_ip, m.src_ip);
        assert_eq!(parsed.dst_port, m.dst_port);
        assert_eq!(parsed.stream_id, Some(1));
        assert!(parse_stream_file_name("stream-x.levin").is_none());
    }

    #[test]
    fn byte_values_render_as_text_or_hex() {
        assert_eq!(bytes_to_json(b"OK"), Value::String("OK".into()));
        assert_eq!(bytes_to_json(&[0x01, 0xff]), Value::String("hex:01ff".into()));
    }
}
