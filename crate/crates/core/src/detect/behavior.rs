//! Behavioral detectors: how a peer acts over a connection's lifetime.
//! All of them consume connections produced by the grouping stage; the
//! two that need message bodies or segmentation also take the record
//! slice the connections were grouped from.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use crate::connection::{timed_sync_stats, Connection, Sender};
use crate::detect::{AnomalyFinding, DetectError, DetectorConfig, Evidence};
use crate::ingest::PacketRecord;
use crate::levin::consts::{CMD_HANDSHAKE, CMD_PING, CMD_SUPPORT_FLAGS, CMD_TIMED_SYNC};
use crate::levin::MessageKind;
use crate::par;

/// Wire path of the capability bitfield inside a handshake body.
pub const SUPPORT_FLAGS_PATH: &str = "node_data.support_flags";

/// Fragment-shape thresholds are structural, not tunable: the reference
/// client writes header and body with a single send, so a run of
/// messages leading with a bare 8-octet segment is another
/// implementation regardless of how anyone configures this tool.
pub const SIG_FRAG_MIN_SAMPLES: usize = 5;
pub const SIG_FRAG_RATIO: f64 = 0.9;

struct Span {
    first: f64,
    last: f64,
}

impl Span {
    fn new() -> Self {
        Span { first: f64::INFINITY, last: f64::NEG_INFINITY }
    }
    fn add(&mut self, ts: f64) {
        self.first = self.first.min(ts);
        self.last = self.last.max(ts);
    }
    fn add_range(&mut self, start: f64, end: f64) {
        self.first = self.first.min(start);
        self.last = self.last.max(end);
    }
}

/// Flag remotes whose handshake request left out the capability
/// bitfield, or pinned it to zero. Stock nodes always advertise their
/// capabilities up front; leaving the field out forces an extra
/// Support-Flags round trip, which the evidence counts.
pub fn detect_support_flags_omission(
    conns: &[Connection],
    records: &[PacketRecord],
) -> Vec<AnomalyFinding> {
    struct Acc {
        omitted: usize,
        explicit_zero: usize,
        induced: usize,
        span: Span,
    }
    let mut by_ip: BTreeMap<Ipv4Addr, Acc> = BTreeMap::new();
    for conn in conns {
        let mut conn_hits = 0usize;
        for msg in &conn.messages {
            if msg.sender != Sender::Remote
                || msg.command != CMD_HANDSHAKE
                || msg.kind != MessageKind::Request
            {
                continue;
            }
            let fields = &records[msg.record_index].fields;
            let hit = match fields.get(SUPPORT_FLAGS_PATH) {
                None => Some(false),
                Some(v) if v.as_u64() == Some(0) || v.as_i64() == Some(0) => Some(true),
                Some(_) => None,
            };
            let Some(explicit) = hit else { continue };
            conn_hits += 1;
            let acc = by_ip.entry(conn.remote_ip).or_insert(Acc {
                omitted: 0,
                explicit_zero: 0,
                induced: 0,
                span: Span::new(),
            });
            if explicit {
                acc.explicit_zero += 1;
            } else {
                acc.omitted += 1;
            }
            acc.span.add(msg.ts);
        }
        if conn_hits == 0 {
            continue;
        }
        // Completed Support-Flags exchanges the omission forced: local
        // asks, remote answers.
        let asked = conn
            .messages
            .iter()
            .filter(|m| {
                m.sender == Sender::Local
                    && m.command == CMD_SUPPORT_FLAGS
                    && m.kind == MessageKind::Request
            })
            .count();
        let answered = conn
            .messages
            .iter()
            .filter(|m| {
                m.sender == Sender::Remote
                    && m.command == CMD_SUPPORT_FLAGS
                    && m.kind == MessageKind::Response
            })
            .count();
        by_ip.get_mut(&conn.remote_ip).expect("inserted above").induced += asked.min(answered);
    }
    by_ip
        .into_iter()
        .map(|(ip, acc)| {
            AnomalyFinding::new(
                ip,
                Evidence::SupportFlagsOmission {
                    omitted_count: acc.omitted,
                    explicit_zero_count: acc.explicit_zero,
                    induced_exchanges: acc.induced,
                },
                acc.span.first,
                acc.span.last,
            )
        })
        .collect()
}

/// Flag remotes that consistently split messages so the first TCP
/// segment carries exactly the 8-octet protocol signature and nothing
/// else. Needs the capture to have recorded segment sizes at all;
/// raw-stream input has no segmentation view.
pub fn detect_signature_only_fragments(
    conns: &[Connection],
    records: &[PacketRecord],
) -> Result<Vec<AnomalyFinding>, DetectError> {
    if records.iter().all(|r| r.segment_lengths.is_none()) {
        return Err(DetectError::NotAssessable("segment sizes"));
    }
    struct Acc {
        multi: usize,
        sig_first: usize,
        span: Span,
    }
    let mut by_ip: BTreeMap<Ipv4Addr, Acc> = BTreeMap::new();
    for conn in conns {
        for msg in &conn.messages {
            if msg.sender != Sender::Remote {
                continue;
            }
            let Some(segs) = records[msg.record_index].segment_lengths.as_deref() else {
                continue;
            };
            if segs.len() < 2 {
                continue;
            }
            let acc = by_ip
                .entry(conn.remote_ip)
                .or_insert(Acc { multi: 0, sig_first: 0, span: Span::new() });
            acc.multi += 1;
            if segs[0] == 8 {
                acc.sig_first += 1;
                acc.span.add(msg.ts);
            }
        }
    }
    Ok(by_ip
        .into_iter()
        .filter_map(|(ip, acc)| {
            let ratio = acc.sig_first as f64 / acc.multi as f64;
            if acc.multi < SIG_FRAG_MIN_SAMPLES || ratio < SIG_FRAG_RATIO {
                return None;
            }
            Some(AnomalyFinding::new(
                ip,
                Evidence::SignatureOnlyFragment {
                    multi_segment_messages: acc.multi,
                    signature_first_count: acc.sig_first,
                    ratio,
                },
                acc.span.first,
                acc.span.last,
            ))
        })
        .collect())
}

/// Flag remotes that open, handshake, and vanish over and over.
/// Only connections with an observed start and end count; the strict
/// `>` keeps the configured value meaning "more than".
pub fn detect_short_lived(conns: &[Connection], config: &DetectorConfig) -> Vec<AnomalyFinding> {
    struct Acc {
        count: usize,
        total_duration: f64,
        span: Span,
    }
    let mut by_ip: BTreeMap<Ipv4Addr, Acc> = BTreeMap::new();
    for conn in conns {
        if !(conn.complete && conn.handshake_completed) {
            continue;
        }
        let d = conn.duration();
        if d >= config.short_lived_max {
            continue;
        }
        let acc = by_ip
            .entry(conn.remote_ip)
            .or_insert(Acc { count: 0, total_duration: 0.0, span: Span::new() });
        acc.count += 1;
        acc.total_duration += d;
        acc.span.add_range(conn.start_ts, conn.end_ts);
    }
    by_ip
        .into_iter()
        .filter(|(_, acc)| acc.count > config.short_lived_peer_min)
        .map(|(ip, acc)| {
            AnomalyFinding::new(
                ip,
                Evidence::ShortLivedFlooding {
                    connection_count: acc.count,
                    mean_duration: acc.total_duration / acc.count as f64,
                },
                acc.span.first,
                acc.span.last,
            )
        })
        .collect()
}

/// Per-connection throttle assessment; `None` when the duration gate or
/// the two-request minimum keeps the connection out of scope.
fn throttle_outcome(conn: &Connection, config: &DetectorConfig) -> Option<(Ipv4Addr, f64, f64, f64)> {
    if conn.duration() < config.throttle_min_duration {
        return None;
    }
    let stats = timed_sync_stats(conn).ok()?;
    Some((conn.remote_ip, stats.mean_remote_interval, conn.start_ts, conn.end_ts))
}

/// Flag remotes that keep connections alive but stretch their clock
/// sync requests far beyond the standard cadence. Short connections are
/// skipped: a mean over a couple of minutes says nothing.
pub fn detect_throttled_timed_sync(
    conns: &[Connection],
    config: &DetectorConfig,
) -> Vec<AnomalyFinding> {
    throttle_aggregate(par::map_collect(conns, |c| throttle_outcome(c, config)), config)
}

/// Sequential twin of [`detect_throttled_timed_sync`]; identical output.
pub fn detect_throttled_timed_sync_seq(
    conns: &[Connection],
    config: &DetectorConfig,
) -> Vec<AnomalyFinding> {
    throttle_aggregate(par::map_collect_seq(conns, |c| throttle_outcome(c, config)), config)
}

fn throttle_aggregate(
    outcomes: Vec<Option<(Ipv4Addr, f64, f64, f64)>>,
    config: &DetectorConfig,
) -> Vec<AnomalyFinding> {
    struct Acc {
        assessed: usize,
        flagged_means: Vec<f64>,
        span: Span,
    }
    let mut by_ip: BTreeMap<Ipv4Addr, Acc> = BTreeMap::new();
    for (ip, mean, start, end) in outcomes.into_iter().flatten() {
        let acc = by_ip
            .entry(ip)
            .or_insert(Acc { assessed: 0, flagged_means: Vec::new(), span: Span::new() });
        acc.assessed += 1;
        if mean > config.throttle_threshold {
            acc.flagged_means.push(mean);
            acc.span.add_range(start, end);
        }
    }
    by_ip
        .into_iter()
        .filter(|(_, acc)| !acc.flagged_means.is_empty())
        .map(|(ip, acc)| {
            AnomalyFinding::new(
                ip,
                Evidence::ThrottledTimedSync {
                    flagged_connection_means: acc.flagged_means,
                    assessed_connections: acc.assessed,
                },
                acc.span.first,
                acc.span.last,
            )
        })
        .collect()
}

/// Flag remotes that spray Ping requests over connections they opened.
/// A stock node sends Pings only as the accepting side's reachability
/// check, so the detector never looks at outgoing connections.
pub fn detect_ping_flooding(conns: &[Connection], config: &DetectorConfig) -> Vec<AnomalyFinding> {
    use crate::connection::Direction;
    struct Acc {
        flagged: usize,
        max_pings: usize,
        min_gap: f64,
        ts_unanswered: bool,
        span: Span,
    }
    let mut by_ip: BTreeMap<Ipv4Addr, Acc> = BTreeMap::new();
    for conn in conns {
        if conn.direction != Direction::Incoming {
            continue;
        }
        let pings: Vec<f64> = conn
            .messages
            .iter()
            .filter(|m| {
                m.sender == Sender::Remote
                    && m.command == CMD_PING
                    && m.kind == MessageKind::Request
            })
            .map(|m| m.ts)
            .collect();
        if pings.len() < config.ping_flood_min_pings {
            continue;
        }
        let mean_gap = (pings[pings.len() - 1] - pings[0]) / (pings.len() - 1) as f64;
        if mean_gap >= config.ping_flood_max_mean_gap {
            continue;
        }
        // Does the flooder even answer our first clock sync request?
        let first_local_ts_req = conn.messages.iter().find(|m| {
            m.sender == Sender::Local
                && m.command == CMD_TIMED_SYNC
                && m.kind == MessageKind::Request
        });
        let unanswered = match first_local_ts_req {
            Some(req) => !conn.messages.iter().any(|m| {
                m.sender == Sender::Remote
                    && m.command == CMD_TIMED_SYNC
                    && m.kind == MessageKind::Response
                    && m.ts >= req.ts
            }),
            None => false,
        };
        let acc = by_ip.entry(conn.remote_ip).or_insert(Acc {
            flagged: 0,
            max_pings: 0,
            min_gap: f64::INFINITY,
            ts_unanswered: false,
            span: Span::new(),
        });
        acc.flagged += 1;
        acc.max_pings = acc.max_pings.max(pings.len());
        acc.min_gap = acc.min_gap.min(mean_gap);
        acc.ts_unanswered |= unanswered;
        acc.span.add_range(conn.start_ts, conn.end_ts);
    }
    by_ip
        .into_iter()
        .map(|(ip, acc)| {
            AnomalyFinding::new(
                ip,
                Evidence::PingFlooding {
                    connection_count: acc.flagged,
                    max_ping_count: acc.max_pings,
                    min_mean_gap: acc.min_gap,
                    timed_sync_unanswered: acc.ts_unanswered,
                },
                acc.span.first,
                acc.span.last,
            )
        })
        .collect()
}

/// The post-handshake session template, verified per connection:
/// handshake pair first, at most one Ping exchange from the accepting
/// side, at most one Support-Flags request per side, clock syncs paired
/// with their responses. Remote-sent deviations are named and counted;
/// our own node's traffic never generates evidence against the peer.
pub fn detect_sequence_violations(conns: &[Connection]) -> Vec<AnomalyFinding> {
    use crate::connection::Direction;
    struct Acc {
        kinds: BTreeMap<String, usize>,
        connections: usize,
        span: Span,
    }
    let mut by_ip: BTreeMap<Ipv4Addr, Acc> = BTreeMap::new();
    for conn in conns {
        if !conn.handshake_completed {
            continue;
        }
        let initiator = match conn.direction {
            Direction::Incoming => Sender::Remote,
            Direction::Outgoing => Sender::Local,
            Direction::Unknown => continue,
        };
        let acceptor = opposite(initiator);
        let mut violations: Vec<(&'static str, f64)> = Vec::new();
        let mut record = |kind: &'static str, sender: Sender, ts: f64| {
            if sender == Sender::Remote {
                violations.push((kind, ts));
            }
        };
        let mut handshake_done = false;
        let mut saw_handshake_request = false;
        let mut acceptor_pings = 0usize;
        let mut support_flag_requests: BTreeMap<Sender, usize> = BTreeMap::new();
        // Outstanding requests by (command, requester); responses must
        // consume one from the opposite side, in FIFO spirit.
        let mut outstanding: BTreeMap<(u32, Sender), usize> = BTreeMap::new();
        for msg in &conn.messages {
            let base = matches!(
                msg.command,
                CMD_HANDSHAKE | CMD_TIMED_SYNC | CMD_PING | CMD_SUPPORT_FLAGS
            );
            if !base {
                continue; // data-plane commands are outside the template
            }
            match (msg.command, msg.kind) {
                (CMD_HANDSHAKE, MessageKind::Request) => {
                    if saw_handshake_request {
                        record("repeated_handshake", msg.sender, msg.ts);
                    } else {
                        saw_handshake_request = true;
                        if msg.sender != initiator {
                            record("handshake_from_acceptor", msg.sender, msg.ts);
                        }
                        *outstanding.entry((CMD_HANDSHAKE, msg.sender)).or_insert(0) += 1;
                    }
                }
                (CMD_HANDSHAKE, MessageKind::Response) => {
                    if consume(&mut outstanding, CMD_HANDSHAKE, opposite(msg.sender)) {
                        handshake_done = true;
                    } else {
                        record("unsolicited_response", msg.sender, msg.ts);
                    }
                }
                (cmd, MessageKind::Request) => {
                    if !handshake_done {
                        record("pre_handshake_traffic", msg.sender, msg.ts);
                    }
                    match cmd {
                        CMD_PING => {
                            if msg.sender == acceptor {
                                acceptor_pings += 1;
                                if acceptor_pings > 1 {
                                    record("repeated_ping", msg.sender, msg.ts);
                                }
                            } else {
                                record("ping_from_initiator", msg.sender, msg.ts);
                            }
                        }
                        CMD_SUPPORT_FLAGS => {
                            let n = support_flag_requests.entry(msg.sender).or_insert(0);
                            *n += 1;
                            if *n > 1 {
                                record("repeated_support_flags", msg.sender, msg.ts);
                            }
                        }
                        _ => {} // clock sync requests repeat by design
                    }
                    *outstanding.entry((cmd, msg.sender)).or_insert(0) += 1;
                }
                (cmd, MessageKind::Response) => {
                    if !handshake_done {
                        record("pre_handshake_traffic", msg.sender, msg.ts);
                    }
                    if !consume(&mut outstanding, cmd, opposite(msg.sender)) {
                        record("unsolicited_response", msg.sender, msg.ts);
                    }
                }
            }
        }
        // Trailing unanswered requests are expected: captures cut mid-
        // exchange. Only affirmative deviations count.
        if violations.is_empty() {
            continue;
        }
        let acc = by_ip.entry(conn.remote_ip).or_insert(Acc {
            kinds: BTreeMap::new(),
            connections: 0,
            span: Span::new(),
        });
        acc.connections += 1;
        for (kind, ts) in violations {
            *acc.kinds.entry(kind.to_string()).or_insert(0) += 1;
            acc.span.add(ts);
        }
    }
    by_ip
        .into_iter()
        .map(|(ip, acc)| {
            AnomalyFinding::new(
                ip,
                Evidence::SequenceViolation { kinds: acc.kinds, connection_count: acc.connections },
                acc.span.first,
                acc.span.last,
            )
        })
        .collect()
}

fn opposite(s: Sender) -> Sender {
    match s {
        Sender::Local => Sender::Remote,
        Sender::Remote => Sender::Local,
    }
}

fn consume(outstanding: &mut BTreeMap<(u32, Sender), usize>, cmd: u32, requester: Sender) -> bool {
    match outstanding.get_mut(&(cmd, requester)) {
        Some(n) if *n > 0 => {
            *n -= 1;
            true
        }
        _ => false,
    }
}
