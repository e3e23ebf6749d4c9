//! Group records into connections with direction, lifetime, and
//! timing statistics.
//!
//! A capture-provided stream id is authoritative. Without one, records
//! sharing a 5-tuple are split into sessions wherever silence exceeds
//! the configured gap, matching the protocol's own idle-drop horizon.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PacketRecord;
use crate::levin::consts::*;
use crate::levin::MessageKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConnError {
    #[error("cannot infer local ip: no single endpoint appears in every record")]
    AmbiguousLocalIp,
    #[error("not enough remote Timed Sync requests to assess timing")]
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Incoming,
    Outgoing,
    /// No handshake request observed; filtered before analysis.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sender {
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnMessage {
    pub ts: f64,
    pub command: u32,
    pub kind: MessageKind,
    pub sender: Sender,
    /// Index into the record slice the connection was grouped from;
    /// detectors use it to reach message fields and segment sizes.
    pub record_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub id: String,
    pub local_ip: Ipv4Addr,
    pub remote_ip: Ipv4Addr,
    pub remote_port: u16,
    pub direction: Direction,
    pub start_ts: f64,
    pub end_ts: f64,
    pub messages: Vec<ConnMessage>,
    /// Handshake request answered by a handshake response from the
    /// other side.
    pub handshake_completed: bool,
    /// Capture saw both ends: opened with a handshake request and went
    /// silent at least one session gap before the capture ended.
    pub complete: bool,
    /// Record-level decode errors attributed to this connection's
    /// stream (raw-stream mode); any error disqualifies it.
    pub decode_errors: usize,
    /// Indices into `messages` of records carrying a peer list.
    pub peer_list_messages: Vec<usize>,
}

impl Connection {
    pub fn duration(&self) -> f64 {
        self.end_ts - self.start_ts
    }
}

/// Per-connection Timed Sync request cadence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimedSyncStats {
    pub request_intervals_local: Vec<f64>,
    pub request_intervals_remote: Vec<f64>,
    pub mean_remote_interval: f64,
    pub count_remote_requests: usize,
}

fn infer_local_ip(records: &[PacketRecord]) -> Result<Ipv4Addr, ConnError> {
    let first = records.first().ok_or(ConnError::AmbiguousLocalIp)?;
    let mut candidates = vec![first.src_ip, first.dst_ip];
    for r in records {
        candidates.retain(|ip| *ip == r.src_ip || *ip == r.dst_ip);
        if candidates.is_empty() {
            return Err(ConnError::AmbiguousLocalIp);
        }
    }
    candidates.dedup();
    if candidates.len() == 1 {
        Ok(candidates[0])
    } else {
        Err(ConnError::AmbiguousLocalIp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum GroupKey {
    Stream(u64),
    Tuple(Ipv4Addr, u16, Ipv4Addr, u16),
}

fn tuple_key(r: &PacketRecord) -> GroupKey {
    // Direction-agnostic canonical order so both directions of one
    // connection share a key.
    let a = (r.src_ip, r.src_port);
    let b = (r.dst_ip, r.dst_port);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    GroupKey::Tuple(lo.0, lo.1, hi.0, hi.1)
}

fn build_connection(
    id: String,
    local_ip: Ipv4Addr,
    records: &[(usize, &PacketRecord)],
    capture_end: f64,
    session_gap: f64,
) -> Connection {
    let first = records[0].1;
    let (remote_ip, remote_port) = if first.src_ip == local_ip {
        (first.dst_ip, first.dst_port)
    } else {
        (first.src_ip, first.src_port)
    };
    let mut messages = Vec::with_capacity(records.len());
    let mut peer_list_messages = Vec::new();
    for (index, r) in records {
        let sender = if r.src_ip == local_ip { Sender::Local } else { Sender::Remote };
        if r.fields.contains_key(PEERLIST_PATH) {
            peer_list_messages.push(messages.len());
        }
        messages.push(ConnMessage {
            ts: r.ts,
            command: r.command,
            kind: r.kind,
            sender,
            record_index: *index,
        });
    }

    let first_handshake_req = messages
        .iter()
        .find(|m| m.command == CMD_HANDSHAKE && m.kind == MessageKind::Request);
    let direction = match first_handshake_req {
        Some(m) if m.sender == Sender::Remote => Direction::Incoming,
        Some(_) => Direction::Outgoing,
        None => Direction::Unknown,
    };
    let handshake_completed = match first_handshake_req {
        Some(req) => messages.iter().any(|m| {
            m.command == CMD_HANDSHAKE
                && m.kind == MessageKind::Response
                && m.sender != req.sender
                && m.ts >= req.ts
        }),
        None => false,
    };
    let start_ts = messages.first().map(|m| m.ts).unwrap_or(0.0);
    let end_ts = messages.last().map(|m| m.ts).unwrap_or(start_ts);
    let opened_on_handshake = messages
        .first()
        .map(|m| m.command == CMD_HANDSHAKE && m.kind == MessageKind::Request)
        .unwrap_or(false);
    let complete = opened_on_handshake && capture_end - end_ts > session_gap;

    Connection {
        id,
        local_ip,
        remote_ip,
        remote_port,
        direction,
        start_ts,
        end_ts,
        messages,
        handshake_completed,
        complete,
        decode_errors: 0,
        peer_list_messages,
    }
}

/// Group a record stream into connections.
///
/// `local_ip = None` infers the measurement node as the one endpoint
/// present in every record; pass it explicitly for captures where that
/// is ambiguous (e.g. a single-connection capture).
pub fn group_connections(
    records: &[PacketRecord],
    local_ip: Option<Ipv4Addr>,
    session_gap: f64,
) -> Result<Vec<Connection>, ConnError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let local_ip = match local_ip {
        Some(ip) => ip,
        None => infer_local_ip(records)?,
    };
    let capture_end = records.iter().map(|r| r.ts).fold(f64::NEG_INFINITY, f64::max);

    let mut groups: BTreeMap<GroupKey, Vec<(usize, &PacketRecord)>> = BTreeMap::new();
    for (index, r) in records.iter().enumerate() {
        let key = match r.stream_id {
            Some(id) => GroupKey::Stream(id),
            None => tuple_key(r),
        };
        groups.entry(key).or_default().push((index, r));
    }

    let mut connections = Vec::new();
    for (key, mut group) in groups {
        group.sort_by(|a, b| a.1.ts.total_cmp(&b.1.ts).then(a.0.cmp(&b.0)));
        match key {
            GroupKey::Stream(id) => {
                connections.push(build_connection(
                    format!("s{id}"),
                    local_ip,
                    &group,
                    capture_end,
                    session_gap,
                ));
            }
            GroupKey::Tuple(..) => {
                // Split one 5-tuple into sessions at silence gaps.
                let mut session: Vec<(usize, &PacketRecord)> = Vec::new();
                let mut epoch = 0usize;
                let flush = |session: &mut Vec<(usize, &PacketRecord)>,
                             epoch: &mut usize,
                             out: &mut Vec<Connection>| {
                    if session.is_empty() {
                        return;
                    }
                    let first = session[0].1;
                    let (rip, rport) = if first.src_ip == local_ip {
                        (first.dst_ip, first.dst_port)
                    } else {
                        (first.src_ip, first.src_port)
                    };
                    out.push(build_connection(
                        format!("{rip}:{rport}/{epoch}"),
                        local_ip,
                        session,
                        capture_end,
                        session_gap,
                    ));
                    session.clear();
                    *epoch += 1;
                };
                for (index, r) in group {
                    if let Some((_, last)) = session.last() {
                        if r.ts - last.ts > session_gap {
                            flush(&mut session, &mut epoch, &mut connections);
                        }
                    }
                    session.push((index, r));
                }
                flush(&mut session, &mut epoch, &mut connections);
            }
        }
    }
    connections.sort_by(|a, b| {
        a.start_ts
            .total_cmp(&b.start_ts)
            .then(a.remote_ip.cmp(&b.remote_ip))
            .then(a.id.cmp(&b.id))
    });
    Ok(connections)
}

/// Drop connections unusable for behavioral analysis: no decodable
/// handshake request (missed start) or any attributed decode error.
pub fn filter_incomplete(conns: Vec<Connection>) -> (Vec<Connection>, usize) {
    let before = conns.len();
    let kept: Vec<Connection> = conns
        .into_iter()
        .filter(|c| c.direction != Direction::Unknown && c.decode_errors == 0)
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Timed Sync request cadence for one connection. Needs at least two
/// remote requests for a mean interval to exist.
pub fn timed_sync_stats(conn: &Connection) -> Result<TimedSyncStats, ConnError> {
    let ts_requests = |sender: Sender| -> Vec<f64> {
        conn.messages
            .iter()
            .filter(|m| m.command == CMD_TIMED_SYNC && m.kind == MessageKind::Request && m.sender == sender)
            .map(|m| m.ts)
            .collect()
    };
    let local = ts_requests(Sender::Local);
    let remote = ts_requests(Sender::Remote);
    let intervals = |ts: &[f64]| -> Vec<f64> { ts.windows(2).map(|w| w[1] - w[0]).collect() };
    let request_intervals_remote = intervals(&remote);
    if request_intervals_remote.is_empty() {
        return Err(ConnError::InsufficientData);
    }
    let mean_remote_interval =
        request_intervals_remote.iter().sum::<f64>() / request_intervals_remote.len() as f64;
    Ok(TimedSyncStats {
        request_intervals_local: intervals(&local),
        request_intervals_remote,
        mean_remote_interval,
        count_remote_requests: remote.len(),
    })
}

/// Projection of the message list used by sequence checks.
pub fn command_sequence(conn: &Connection) -> Vec<(u32, MessageKind, Sender)> {
    conn.messages.iter().map(|m| (m.command, m.kind, m.sender)).collect()
}
