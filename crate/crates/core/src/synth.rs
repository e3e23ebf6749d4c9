//! Scenario-driven capture synthesis with ground-truth labels.
//!
//! A scenario assigns each simulated peer one behavior profile. The
//! generator expands profiles into timed Levin conversations against a
//! single local node and renders them either as JSONL records or as raw
//! per-direction stream files. Alongside the traffic it emits the label
//! set the default detector configuration is expected to reproduce.
//!
//! Labels are not copied from the profile names. After generation a
//! label pass applies the default-configuration flagging rules to the
//! traffic that actually got produced, uniformly over every peer. A
//! profile whose run was too short to cross a threshold therefore stays
//! unlabeled, and a profile that accidentally trips a second rule gets
//! that second label too: generated labels and detectable behavior
//! cannot drift apart.
//!
//! Address layout keeps negatives provably negative: the peer at index
//! `k` draws every address it promotes from the private band
//! `10.(k+1).0.0/16`, so peer lists from different sources never share
//! a /24 unless a profile (list cloning) makes them. Saturation targets
//! live in `172.20.<n>.0/24`. Scenario peers themselves must sit
//! outside both pools.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::detect::behavior::{SIG_FRAG_MIN_SAMPLES, SIG_FRAG_RATIO, SUPPORT_FLAGS_PATH};
use crate::detect::findings::Category;
use crate::ingest::{fields_to_json, stream_file_name, wire_entry_to_record, PacketRecord, StreamMeta};
use crate::levin::consts::{
    CMD_HANDSHAKE, CMD_PING, CMD_SUPPORT_FLAGS, CMD_TIMED_SYNC, LEVIN_HEADER_LEN,
    MAINNET_NETWORK_ID, PEERLIST_PATH,
};
use crate::levin::payload::encode_payload;
use crate::levin::{
    encode_frame, CodecError, EpeeArray, EpeeSection, EpeeValue, LevinFrame, MessageKind,
    ParsedMessage,
};
use crate::netstruct::subnet24;
use crate::DetectorConfig;

/// Listen port of the simulated local node and of every promoted entry.
const LOCAL_PORT: u16 = 18080;
const LOCAL_PEER_ID: u64 = 0x10CA_1000_0000_0001;
/// First connection opens at this offset; later peers stagger by
/// `PEER_SPACING` so connection starts never collide.
const FIRST_CONN_TS: f64 = 5.0;
const PEER_SPACING: f64 = 1.3;
/// Identity shared by flipper and cluster-member profiles; reusing one
/// id across hosts is what welds them into one cluster.
const POOL_ID: u64 = 0xA110_7000_0000_0001;
/// Remote Timed-Sync cadence of the throttler profile.
const THROTTLER_INTERVAL: f64 = 600.0;
/// Ping-flood shape: count, offset from connection start, grid step.
const FLOOD_PINGS: usize = 30;
const FLOOD_OFFSET: f64 = 20.0;
const FLOOD_GAP: f64 = 2.0;
/// Entries both members of a cloner pair share, out of a full list.
const CLONE_SHARED: usize = 130;
/// Saturation-target hosts rotated into each list instance.
const SATURATION_WINDOW: usize = 43;
/// TCP payload bytes per segment when splitting reassembled sizes.
const MSS: u64 = 1448;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scenario rejected: {0}")]
    InvalidScenario(String),
    #[error("scenario parse failed")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorProfile {
    Standard,
    SupportFlagsOmitter,
    LastSeenSender,
    SigOnlyFragmenter,
    LowDiversityPromoter,
    ListCloner,
    ShortLivedFlooder,
    Throttler,
    PingFlooder,
    IdFlipper,
    IdClusterMember,
    SaturatedSubnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionChoice {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerSpec {
    pub ip: Ipv4Addr,
    pub profile: BehaviorProfile,
    /// Overrides the profile default (standard peers alternate by
    /// index, every other profile connects inbound).
    #[serde(default)]
    pub direction: Option<DirectionChoice>,
}

fn default_local_ip() -> Ipv4Addr {
    Ipv4Addr::new(10, 0, 0, 1)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Capture horizon in seconds; no event is emitted past it.
    pub duration: f64,
    #[serde(default = "default_local_ip")]
    pub local_ip: Ipv4Addr,
    #[serde(default)]
    pub peers: Vec<PeerSpec>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidScenario(msg));
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return fail(format!("duration must be positive, got {}", self.duration));
        }
        if self.peers.len() > 199 {
            return fail(format!("at most 199 peers fit the address bands, got {}", self.peers.len()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.peers {
            if p.ip == self.local_ip {
                return fail(format!("peer {} collides with the local node", p.ip));
            }
            if !seen.insert(p.ip) {
                return fail(format!("duplicate peer ip {}", p.ip));
            }
            let o = p.ip.octets();
            if o[0] == 10 || (o[0] == 172 && (16..=31).contains(&o[1])) {
                return fail(format!(
                    "peer {} sits inside the generator's promoted-address pools (10.0.0.0/8, 172.16.0.0/12)",
                    p.ip
                ));
            }
            if matches!(p.profile, BehaviorProfile::SupportFlagsOmitter | BehaviorProfile::PingFlooder)
                && p.direction == Some(DirectionChoice::Outgoing)
            {
                return fail(format!(
                    "peer {}: the {:?} profile only shows on inbound connections",
                    p.ip, p.profile
                ));
            }
        }
        let count = |profile: BehaviorProfile| {
            self.peers.iter().filter(|p| p.profile == profile).count()
        };
        let cloners = count(BehaviorProfile::ListCloner);
        if cloners % 2 != 0 {
            return fail(format!("list cloners pair up; got an odd count of {cloners}"));
        }
        let members = count(BehaviorProfile::IdClusterMember);
        let flippers = count(BehaviorProfile::IdFlipper);
        if members == 1 && flippers == 0 {
            return fail("a single cluster member has nobody to share an id with; add a second member or an id flipper".into());
        }
        Ok(())
    }
}

/// One promoted address. Entry ids derive from the address so the same
/// ip always announces the same id, list after list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    ip: Ipv4Addr,
    id: u64,
}

impl Entry {
    fn at(ip: Ipv4Addr) -> Self {
        Entry { ip, id: (1 << 60) | u64::from(u32::from(ip)) }
    }
}

fn entry_section(e: &Entry, last_seen: Option<i64>) -> EpeeSection {
    let mut addr = EpeeSection::new();
    addr.push("m_ip", EpeeValue::U32(u32::from_le_bytes(e.ip.octets())));
    addr.push("m_port", EpeeValue::U16(LOCAL_PORT));
    let mut adr = EpeeSection::new();
    adr.push("type", EpeeValue::U8(1));
    adr.push("addr", EpeeValue::Section(addr));
    let mut entry = EpeeSection::new();
    entry.push("adr", EpeeValue::Section(adr));
    entry.push("id", EpeeValue::U64(e.id));
    if let Some(ls) = last_seen {
        entry.push("last_seen", EpeeValue::I64(ls));
    }
    entry
}

fn list_value(entries: &[Entry], last_seen: Option<i64>) -> EpeeValue {
    EpeeValue::Array(EpeeArray::of_sections(
        entries.iter().map(|e| entry_section(e, last_seen)).collect(),
    ))
}

/// Band of peer index `k`: all its promoted addresses live in
/// `10.(k+1).0.0/16`. Index 0 maps to 10.1 so the default local ip
/// (10.0.0.1) can never be promoted.
fn band_of(index: usize) -> u8 {
    (index + 1) as u8
}

/// One address in each of `n` distinct /24s: maximal diversity.
fn standard_entries(band: u8, n: usize) -> Vec<Entry> {
    (0..n).map(|j| Entry::at(Ipv4Addr::new(10, band, j as u8, 1))).collect()
}

/// `n` addresses folded into `subnets` /24s: diversity `subnets / n`.
fn low_diversity_entries(band: u8, n: usize, subnets: usize) -> Vec<Entry> {
    (0..n)
        .map(|j| Entry::at(Ipv4Addr::new(10, band, (j % subnets) as u8, (j / subnets + 1) as u8)))
        .collect()
}

/// Follower half of a cloner pair: the lead's first `CLONE_SHARED`
/// entries plus filler from the follower's own band. The lead simply
/// promotes its standard band list.
fn clone_follower_entries(lead_band: u8, own_band: u8, n: usize) -> Vec<Entry> {
    let mut v: Vec<Entry> =
        (0..CLONE_SHARED).map(|j| Entry::at(Ipv4Addr::new(10, lead_band, j as u8, 1))).collect();
    v.extend((0..n - CLONE_SHARED).map(|j| Entry::at(Ipv4Addr::new(10, own_band, j as u8, 1))));
    v
}

/// List instance `i` of a saturating promoter: a sliding window of
/// `SATURATION_WINDOW` hosts inside one target /24 (so unique targets
/// accumulate across instances and cap at 254) plus constant band
/// filler that keeps the list full and diverse.
fn saturating_entries(band: u8, target_subnet: u8, instance: usize, n: usize) -> Vec<Entry> {
    let mut v: Vec<Entry> = (0..SATURATION_WINDOW)
        .map(|j| {
            let host = ((instance * SATURATION_WINDOW + j) % 254 + 1) as u8;
            Entry::at(Ipv4Addr::new(172, 20, target_subnet, host))
        })
        .collect();
    v.extend((0..n - SATURATION_WINDOW).map(|j| Entry::at(Ipv4Addr::new(10, band, j as u8, 1))));
    v
}

#[derive(Debug, Clone)]
enum ListPlan {
    None,
    Fixed(Vec<Entry>),
    FixedLastSeen(Vec<Entry>, i64),
    Saturating { band: u8, target_subnet: u8 },
}

impl ListPlan {
    fn instance(&self, index: usize, full: usize) -> Option<EpeeValue> {
        match self {
            ListPlan::None => None,
            ListPlan::Fixed(entries) => Some(list_value(entries, None)),
            ListPlan::FixedLastSeen(entries, ls) => Some(list_value(entries, Some(*ls))),
            ListPlan::Saturating { band, target_subnet } => {
                Some(list_value(&saturating_entries(*band, *target_subnet, index, full), None))
            }
        }
    }
}

/// Everything one connection needs to unroll into timed messages.
#[derive(Debug, Clone)]
struct ConnPlan {
    start: f64,
    end: f64,
    incoming: bool,
    peer_id: u64,
    omit_support_flags: bool,
    sf_exchange: bool,
    acceptor_ping: bool,
    list: ListPlan,
    local_ts: bool,
    remote_ts_interval: Option<f64>,
    ping_flood: bool,
    lone_local_ts_request: bool,
    sig_first: bool,
}

impl ConnPlan {
    fn base(start: f64, end: f64, incoming: bool, peer_id: u64, list: ListPlan, cadence: f64) -> Self {
        ConnPlan {
            start,
            end,
            incoming,
            peer_id,
            omit_support_flags: false,
            sf_exchange: false,
            acceptor_ping: incoming,
            list,
            local_ts: true,
            remote_ts_interval: Some(cadence),
            ping_flood: false,
            lone_local_ts_request: false,
            sig_first: false,
        }
    }
}

struct MsgDraft {
    ts: f64,
    from_remote: bool,
    sig_first: bool,
    msg: ParsedMessage,
}

fn core_sync_fields(msg: &mut ParsedMessage, ts: f64) {
    // Two-minute block cadence keeps the advertised height moving.
    let height = 3_200_000 + (ts / 120.0) as u64;
    let mut top_id = Vec::with_capacity(32);
    for i in 0..4 {
        top_id.extend_from_slice(&(height ^ (0x9E37_79B9_7F4A_7C15u64.rotate_left(i * 16))).to_le_bytes());
    }
    msg.fields.insert("payload_data.current_height".into(), EpeeValue::U64(height));
    msg.fields
        .insert("payload_data.cumulative_difficulty".into(), EpeeValue::U64((413 << 40) + height * 997));
    msg.fields.insert("payload_data.top_id".into(), EpeeValue::Bytes(top_id));
    msg.fields.insert("payload_data.top_version".into(), EpeeValue::U8(16));
}

fn node_data_fields(msg: &mut ParsedMessage, peer_id: u64, support_flags: Option<u32>) {
    msg.fields
        .insert("node_data.network_id".into(), EpeeValue::Bytes(MAINNET_NETWORK_ID.to_vec()));
    msg.fields.insert("node_data.peer_id".into(), EpeeValue::U64(peer_id));
    msg.fields.insert("node_data.my_port".into(), EpeeValue::U32(LOCAL_PORT as u32));
    if let Some(flags) = support_flags {
        msg.fields.insert(SUPPORT_FLAGS_PATH.into(), EpeeValue::U32(flags));
    }
}

fn handshake_request(peer_id: u64, support_flags: Option<u32>, ts: f64) -> ParsedMessage {
    let mut m = ParsedMessage::request(CMD_HANDSHAKE);
    node_data_fields(&mut m, peer_id, support_flags);
    core_sync_fields(&mut m, ts);
    m
}

fn handshake_response(peer_id: u64, ts: f64, list: Option<EpeeValue>) -> ParsedMessage {
    let mut m = ParsedMessage::response(CMD_HANDSHAKE);
    node_data_fields(&mut m, peer_id, Some(1));
    core_sync_fields(&mut m, ts);
    if let Some(list) = list {
        m.fields.insert(PEERLIST_PATH.into(), list);
    }
    m
}

fn timed_sync_request(ts: f64) -> ParsedMessage {
    let mut m = ParsedMessage::request(CMD_TIMED_SYNC);
    core_sync_fields(&mut m, ts);
    m
}

fn timed_sync_response(ts: f64, list: Option<EpeeValue>) -> ParsedMessage {
    let mut m = ParsedMessage::response(CMD_TIMED_SYNC);
    core_sync_fields(&mut m, ts);
    m.fields.insert("local_time".into(), EpeeValue::U64(1_700_000_000 + ts as u64));
    if let Some(list) = list {
        m.fields.insert(PEERLIST_PATH.into(), list);
    }
    m
}

fn ping_request() -> ParsedMessage {
    ParsedMessage::request(CMD_PING)
}

fn ping_response(peer_id: u64) -> ParsedMessage {
    ParsedMessage::response(CMD_PING)
        .with_field("status", EpeeValue::Bytes(b"OK".to_vec()))
        .with_field("peer_id", EpeeValue::U64(peer_id))
}

fn support_flags_request() -> ParsedMessage {
    ParsedMessage::request(CMD_SUPPORT_FLAGS)
}

fn support_flags_response() -> ParsedMessage {
    ParsedMessage::response(CMD_SUPPORT_FLAGS).with_field("support_flags", EpeeValue::U32(1))
}

/// Unroll one planned connection. Draw order is fixed by construction
/// order, never by timestamp, so one seed reproduces one byte stream.
fn build_conn(plan: &ConnPlan, cadence: f64, rng: &mut ChaCha8Rng) -> Vec<MsgDraft> {
    let mut out: Vec<MsgDraft> = Vec::new();
    let push = |ts: f64, from_remote: bool, msg: ParsedMessage, out: &mut Vec<MsgDraft>| {
        out.push(MsgDraft { ts, from_remote, sig_first: plan.sig_first && from_remote, msg });
    };
    let mut list_index = 0usize;
    let full = plan_full_size();

    // Handshake pair; the initiator side depends on direction.
    let hs_reply_ts = plan.start + rng.gen_range(0.02..0.12);
    if plan.incoming {
        let flags = if plan.omit_support_flags { None } else { Some(1) };
        push(plan.start, true, handshake_request(plan.peer_id, flags, plan.start), &mut out);
        push(hs_reply_ts, false, handshake_response(LOCAL_PEER_ID, hs_reply_ts, None), &mut out);
    } else {
        push(plan.start, false, handshake_request(LOCAL_PEER_ID, Some(1), plan.start), &mut out);
        let list = plan.list.instance(list_index, full);
        if list.is_some() {
            list_index += 1;
        }
        push(hs_reply_ts, true, handshake_response(plan.peer_id, hs_reply_ts, list), &mut out);
    }

    // Acceptor-side reachability ping, once, right after the handshake.
    if plan.acceptor_ping && plan.incoming {
        let t = hs_reply_ts + rng.gen_range(0.5..2.0);
        if t + 0.2 < plan.end {
            let d = rng.gen_range(0.02..0.12);
            push(t, false, ping_request(), &mut out);
            push(t + d, true, ping_response(plan.peer_id), &mut out);
        }
    }

    // Capability probe forced by a handshake that said nothing.
    if plan.sf_exchange {
        let t = hs_reply_ts + rng.gen_range(0.2..0.5);
        let d = rng.gen_range(0.02..0.12);
        push(t, false, support_flags_request(), &mut out);
        push(t + d, true, support_flags_response(), &mut out);
    }

    if plan.ping_flood {
        for i in 0..FLOOD_PINGS {
            let t = plan.start + FLOOD_OFFSET + i as f64 * FLOOD_GAP + rng.gen_range(-0.5..0.5);
            if t + 0.2 > plan.end {
                break;
            }
            let d = rng.gen_range(0.02..0.12);
            push(t, true, ping_request(), &mut out);
            push(t + d, false, ping_response(LOCAL_PEER_ID), &mut out);
        }
    }

    // A clock-sync question the peer never answers.
    if plan.lone_local_ts_request {
        let t = plan.start + 10.0;
        if t < plan.end {
            push(t, false, timed_sync_request(t), &mut out);
        }
    }

    if plan.local_ts {
        let mut n = 1u32;
        loop {
            let t = plan.start + f64::from(n) * cadence + rng.gen_range(-2.0..2.0);
            if t + 0.2 > plan.end {
                break;
            }
            let d = rng.gen_range(0.02..0.12);
            push(t, false, timed_sync_request(t), &mut out);
            let list = plan.list.instance(list_index, full);
            if list.is_some() {
                list_index += 1;
            }
            push(t + d, true, timed_sync_response(t + d, list), &mut out);
            n += 1;
        }
    }

    if let Some(interval) = plan.remote_ts_interval {
        let mut n = 1u32;
        loop {
            // Offset against the local loop so grids never collide.
            let t = plan.start + 1.7 + f64::from(n) * interval + rng.gen_range(-2.0..2.0);
            if t + 0.2 > plan.end {
                break;
            }
            let d = rng.gen_range(0.02..0.12);
            push(t, true, timed_sync_request(t), &mut out);
            push(t + d, false, timed_sync_response(t + d, None), &mut out);
            n += 1;
        }
    }

    out
}

fn plan_full_size() -> usize {
    DetectorConfig::default().full_list_size
}

fn segmentize(total: u64, sig_first: bool) -> Vec<u64> {
    let mut out = Vec::new();
    let mut rest = total;
    if sig_first && total > 8 {
        out.push(8);
        rest -= 8;
    }
    while rest > 0 {
        let take = rest.min(MSS);
        out.push(take);
        rest -= take;
    }
    out
}

/// One generated message with everything both renderers need.
#[derive(Debug, Clone)]
pub struct SynthMessage {
    pub seq: u64,
    pub conn: usize,
    pub ts: f64,
    pub from_remote: bool,
    pub command: u32,
    pub kind: MessageKind,
    pub fields: BTreeMap<String, EpeeValue>,
    pub wire_payload: Vec<u8>,
    pub segments: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct SynthConnInfo {
    pub remote_ip: Ipv4Addr,
    pub remote_port: u16,
    pub local_port: u16,
    pub incoming: bool,
}

#[derive(Debug)]
pub struct GeneratedCapture {
    pub local_ip: Ipv4Addr,
    pub conns: Vec<SynthConnInfo>,
    /// All messages, capture order (timestamp, then emission order).
    pub msgs: Vec<SynthMessage>,
    /// Ground truth under the default detector configuration.
    pub labels: BTreeMap<Ipv4Addr, BTreeSet<Category>>,
}

impl GeneratedCapture {
    pub fn records(&self) -> Vec<PacketRecord> {
        self.msgs
            .iter()
            .map(|m| {
                let c = &self.conns[m.conn];
                let (src_ip, src_port, dst_ip, dst_port) = if m.from_remote {
                    (c.remote_ip, c.remote_port, self.local_ip, c.local_port)
                } else {
                    (self.local_ip, c.local_port, c.remote_ip, c.remote_port)
                };
                PacketRecord {
                    ts: m.ts,
                    src_ip,
                    src_port,
                    dst_ip,
                    dst_port,
                    stream_id: Some(m.conn as u64),
                    command: m.command,
                    kind: m.kind,
                    fields: fields_to_json(&m.fields),
                    segment_lengths: Some(m.segments.clone()),
                }
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in self.records() {
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Raw per-direction stream files, initiator direction first for
    /// each connection. Timing does not survive this format.
    pub fn raw_streams(&self) -> Vec<(String, Vec<u8>)> {
        let mut remote_buf: Vec<Vec<u8>> = vec![Vec::new(); self.conns.len()];
        let mut local_buf: Vec<Vec<u8>> = vec![Vec::new(); self.conns.len()];
        for m in &self.msgs {
            let frame = match m.kind {
                MessageKind::Request => LevinFrame::request(m.command, m.wire_payload.clone()),
                MessageKind::Response => LevinFrame::response(m.command, m.wire_payload.clone()),
            };
            let buf = if m.from_remote { &mut remote_buf[m.conn] } else { &mut local_buf[m.conn] };
            buf.extend_from_slice(&encode_frame(&frame));
        }
        let mut out = Vec::new();
        for (ci, c) in self.conns.iter().enumerate() {
            let remote_meta = StreamMeta {
                src_ip: c.remote_ip,
                src_port: c.remote_port,
                dst_ip: self.local_ip,
                dst_port: c.local_port,
                stream_id: Some(ci as u64),
                ts_base: 0.0,
            };
            let local_meta = StreamMeta {
                src_ip: self.local_ip,
                src_port: c.local_port,
                dst_ip: c.remote_ip,
                dst_port: c.remote_port,
                stream_id: Some(ci as u64),
                ts_base: 0.0,
            };
            let remote = (stream_file_name(&remote_meta), std::mem::take(&mut remote_buf[ci]));
            let local = (stream_file_name(&local_meta), std::mem::take(&mut local_buf[ci]));
            let ordered = if c.incoming { [remote, local] } else { [local, remote] };
            for (name, bytes) in ordered {
                if !bytes.is_empty() {
                    out.push((name, bytes));
                }
            }
        }
        out
    }

    /// One `<ip> <category>` line per label, sorted.
    pub fn labels_text(&self) -> String {
        let mut out = String::new();
        for (ip, cats) in &self.labels {
            for c in cats {
                out.push_str(&format!("{ip} {}\n", c.as_str()));
            }
        }
        out
    }
}

pub fn generate(scenario: &Scenario) -> Result<GeneratedCapture, SynthError> {
    scenario.validate()?;
    let cfg = DetectorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let full = cfg.full_list_size;
    let duration = scenario.duration;

    // Pair cloners in declaration order; precompute both lists so lead
    // and follower agree on the shared block.
    let cloner_indices: Vec<usize> = scenario
        .peers
        .iter()
        .enumerate()
        .filter(|(_, p)| p.profile == BehaviorProfile::ListCloner)
        .map(|(i, _)| i)
        .collect();
    let mut cloner_lists: BTreeMap<usize, Vec<Entry>> = BTreeMap::new();
    for pair in cloner_indices.chunks(2) {
        if let [lead, follower] = *pair {
            cloner_lists.insert(lead, standard_entries(band_of(lead), full));
            cloner_lists.insert(follower, clone_follower_entries(band_of(lead), band_of(follower), full));
        }
    }

    let mut sat_ordinal = 0u8;
    let mut infos: Vec<SynthConnInfo> = Vec::new();
    let mut msgs: Vec<SynthMessage> = Vec::new();

    for (k, spec) in scenario.peers.iter().enumerate() {
        let base = FIRST_CONN_TS + k as f64 * PEER_SPACING;
        let incoming = match spec.direction {
            Some(DirectionChoice::Incoming) => true,
            Some(DirectionChoice::Outgoing) => false,
            None => match spec.profile {
                BehaviorProfile::Standard => k % 2 == 0,
                _ => true,
            },
        };
        let peer_id = 0x5EED_0000_0000_0000 | (k as u64 + 1);
        let band = band_of(k);
        let standard_list = || ListPlan::Fixed(standard_entries(band, full));
        let cadence = cfg.timed_sync_interval;

        let plans: Vec<ConnPlan> = match spec.profile {
            BehaviorProfile::Standard => {
                vec![ConnPlan::base(base, duration, incoming, peer_id, standard_list(), cadence)]
            }
            BehaviorProfile::SupportFlagsOmitter => {
                let mut p = ConnPlan::base(base, duration, incoming, peer_id, standard_list(), cadence);
                p.omit_support_flags = true;
                p.sf_exchange = true;
                vec![p]
            }
            BehaviorProfile::LastSeenSender => {
                let list = ListPlan::FixedLastSeen(standard_entries(band, 50), 1_600_000_000);
                vec![ConnPlan::base(base, duration, incoming, peer_id, list, cadence)]
            }
            BehaviorProfile::SigOnlyFragmenter => {
                let mut p = ConnPlan::base(base, duration, incoming, peer_id, standard_list(), cadence);
                p.sig_first = true;
                vec![p]
            }
            BehaviorProfile::LowDiversityPromoter => {
                let list = ListPlan::Fixed(low_diversity_entries(band, full, 7));
                vec![ConnPlan::base(base, duration, incoming, peer_id, list, cadence)]
            }
            BehaviorProfile::ListCloner => {
                let list = ListPlan::Fixed(cloner_lists[&k].clone());
                vec![ConnPlan::base(base, duration, incoming, peer_id, list, cadence)]
            }
            BehaviorProfile::ShortLivedFlooder => (0..12)
                .map(|j| {
                    let start = base + 20.0 * j as f64;
                    let mut p = ConnPlan::base(start, start + 0.5, incoming, peer_id, ListPlan::None, cadence);
                    p.acceptor_ping = false;
                    p.local_ts = false;
                    p.remote_ts_interval = None;
                    p
                })
                .collect(),
            BehaviorProfile::Throttler => {
                let mut p = ConnPlan::base(base, duration, incoming, peer_id, standard_list(), cadence);
                p.remote_ts_interval = Some(THROTTLER_INTERVAL);
                vec![p]
            }
            BehaviorProfile::PingFlooder => {
                let mut p = ConnPlan::base(
                    base,
                    (base + 80.0).min(duration),
                    incoming,
                    peer_id,
                    ListPlan::None,
                    cadence,
                );
                p.local_ts = false;
                p.remote_ts_interval = None;
                p.ping_flood = true;
                p.lone_local_ts_request = true;
                vec![p]
            }
            BehaviorProfile::IdFlipper => {
                let third = (duration - base) / 3.0;
                let ids = [POOL_ID, 0xF11B_0000_0000_0000 | (k as u64 + 1), POOL_ID];
                (0..3)
                    .map(|i| {
                        let start = base + i as f64 * third;
                        let end = (start + third - 5.0).max(start + 1.0);
                        ConnPlan::base(start, end.min(duration), incoming, ids[i], standard_list(), cadence)
                    })
                    .collect()
            }
            BehaviorProfile::IdClusterMember => {
                let half = (duration - base) / 2.0;
                let ids = [POOL_ID, 0x517E_0000_0000_0000 | (k as u64 + 1)];
                (0..2)
                    .map(|i| {
                        let start = base + i as f64 * half;
                        let end = (start + half - 5.0).max(start + 1.0);
                        ConnPlan::base(start, end.min(duration), incoming, ids[i], standard_list(), cadence)
                    })
                    .collect()
            }
            BehaviorProfile::SaturatedSubnet => {
                let list = ListPlan::Saturating { band, target_subnet: sat_ordinal };
                sat_ordinal += 1;
                vec![ConnPlan::base(base, duration, incoming, peer_id, list, cadence)]
            }
        };

        for plan in plans {
            let ci = infos.len();
            let ephemeral = 41000 + ci as u16;
            infos.push(SynthConnInfo {
                remote_ip: spec.ip,
                remote_port: if plan.incoming { ephemeral } else { LOCAL_PORT },
                local_port: if plan.incoming { LOCAL_PORT } else { ephemeral },
                incoming: plan.incoming,
            });
            for draft in build_conn(&plan, cadence, &mut rng) {
                let wire_payload = encode_payload(&draft.msg)?;
                let total = (LEVIN_HEADER_LEN + wire_payload.len()) as u64;
                let segments = segmentize(total, draft.sig_first);
                msgs.push(SynthMessage {
                    seq: msgs.len() as u64,
                    conn: ci,
                    ts: draft.ts,
                    from_remote: draft.from_remote,
                    command: draft.msg.command,
                    kind: draft.msg.kind,
                    fields: draft.msg.fields,
                    wire_payload,
                    segments,
                });
            }
        }
    }

    msgs.sort_by(|a, b| a.ts.total_cmp(&b.ts).then(a.seq.cmp(&b.seq)));
    let labels = compute_labels(&infos, &msgs, &cfg);
    Ok(GeneratedCapture { local_ip: scenario.local_ip, conns: infos, msgs, labels })
}

/// Per-peer tallies the label rules read.
#[derive(Default)]
struct PeerTally {
    omitted_flags: bool,
    last_seen_entries: bool,
    multi_segment: usize,
    sig_first: usize,
    short_lived: usize,
    throttled: bool,
    ping_flood: bool,
    initiator_pings: bool,
    low_diversity: bool,
    /// Distinct full-list /24 sets with their instance counts.
    full_subnet_sets: Vec<(BTreeSet<u32>, usize)>,
    /// First-party announced ids, capture order.
    id_seq: Vec<u64>,
}

/// Apply the default-configuration flagging rules to the generated
/// traffic, uniformly over every peer. Rules mirror the detectors on
/// the shapes this generator can emit; anything below a threshold
/// simply earns no label.
fn compute_labels(
    conns: &[SynthConnInfo],
    msgs: &[SynthMessage],
    cfg: &DetectorConfig,
) -> BTreeMap<Ipv4Addr, BTreeSet<Category>> {
    let capture_end = msgs.iter().map(|m| m.ts).fold(f64::NEG_INFINITY, f64::max);
    let mut per_conn: Vec<Vec<&SynthMessage>> = vec![Vec::new(); conns.len()];
    for m in msgs {
        per_conn[m.conn].push(m);
    }

    let mut tallies: BTreeMap<Ipv4Addr, PeerTally> = BTreeMap::new();
    let mut promoted: BTreeMap<u32, BTreeSet<Ipv4Addr>> = BTreeMap::new();

    for (ci, ms) in per_conn.iter().enumerate() {
        if ms.is_empty() {
            continue;
        }
        let info = &conns[ci];
        let tally = tallies.entry(info.remote_ip).or_default();
        let start = ms[0].ts;
        let end = ms.last().map(|m| m.ts).unwrap_or(start);

        let hs_req =
            ms.iter().find(|m| m.command == CMD_HANDSHAKE && m.kind == MessageKind::Request);
        let completed = hs_req.is_some_and(|req| {
            ms.iter().any(|m| {
                m.command == CMD_HANDSHAKE
                    && m.kind == MessageKind::Response
                    && m.from_remote != req.from_remote
                    && m.ts >= req.ts
            })
        });
        let opened_on_handshake =
            ms[0].command == CMD_HANDSHAKE && ms[0].kind == MessageKind::Request;
        let complete = opened_on_handshake && capture_end - end > cfg.session_gap;

        if completed && complete && end - start < cfg.short_lived_max {
            tally.short_lived += 1;
        }

        let remote_ts_requests: Vec<f64> = ms
            .iter()
            .filter(|m| m.from_remote && m.command == CMD_TIMED_SYNC && m.kind == MessageKind::Request)
            .map(|m| m.ts)
            .collect();
        if end - start >= cfg.throttle_min_duration && remote_ts_requests.len() >= 2 {
            let n = remote_ts_requests.len();
            let mean = (remote_ts_requests[n - 1] - remote_ts_requests[0]) / (n - 1) as f64;
            if mean > cfg.throttle_threshold {
                tally.throttled = true;
            }
        }

        if info.incoming {
            let pings: Vec<f64> = ms
                .iter()
                .filter(|m| m.from_remote && m.command == CMD_PING && m.kind == MessageKind::Request)
                .map(|m| m.ts)
                .collect();
            if pings.len() >= cfg.ping_flood_min_pings {
                let mean_gap = (pings[pings.len() - 1] - pings[0]) / (pings.len() - 1) as f64;
                if mean_gap < cfg.ping_flood_max_mean_gap {
                    tally.ping_flood = true;
                }
            }
            if completed && !pings.is_empty() {
                tally.initiator_pings = true;
            }
        }

        for m in ms {
            if !m.from_remote {
                continue;
            }
            if m.segments.len() >= 2 {
                tally.multi_segment += 1;
                if m.segments[0] == 8 {
                    tally.sig_first += 1;
                }
            }
            if m.command == CMD_HANDSHAKE
                && m.kind == MessageKind::Request
                && !m.fields.contains_key(SUPPORT_FLAGS_PATH)
            {
                tally.omitted_flags = true;
            }
            if m.command == CMD_HANDSHAKE {
                if let Some(id) = m.fields.get("node_data.peer_id").and_then(|v| v.as_u64()) {
                    if id != 0 {
                        tally.id_seq.push(id);
                    }
                }
            }
            if m.command == CMD_PING && m.kind == MessageKind::Response {
                if let Some(id) = m.fields.get("peer_id").and_then(|v| v.as_u64()) {
                    if id != 0 {
                        tally.id_seq.push(id);
                    }
                }
            }
            if let Some(EpeeValue::Array(arr)) = m.fields.get(PEERLIST_PATH) {
                let entries: Vec<_> = arr
                    .values
                    .iter()
                    .filter_map(|v| match v {
                        EpeeValue::Section(s) => Some(wire_entry_to_record(s)),
                        _ => None,
                    })
                    .collect();
                if entries.iter().any(|e| e.last_seen.is_some()) {
                    tally.last_seen_entries = true;
                }
                let mut subnets: BTreeSet<u32> = BTreeSet::new();
                for e in &entries {
                    if let Some(ip) = e.ip.as_v4() {
                        if e.is_valid_unicast() {
                            promoted.entry(subnet24(ip)).or_default().insert(ip);
                        }
                        subnets.insert(subnet24(ip));
                    }
                }
                if entries.len() == cfg.full_list_size {
                    let diversity = subnets.len() as f64 / entries.len() as f64;
                    if diversity < cfg.diversity_threshold {
                        tally.low_diversity = true;
                    }
                    match tally.full_subnet_sets.iter_mut().find(|(s, _)| *s == subnets) {
                        Some((_, count)) => *count += 1,
                        None => tally.full_subnet_sets.push((subnets, 1)),
                    }
                }
            }
        }
    }

    let mut labels: BTreeMap<Ipv4Addr, BTreeSet<Category>> = BTreeMap::new();
    let add = |labels: &mut BTreeMap<Ipv4Addr, BTreeSet<Category>>, ip: Ipv4Addr, c: Category| {
        labels.entry(ip).or_default().insert(c);
    };

    for (ip, tally) in &tallies {
        if tally.omitted_flags {
            add(&mut labels, *ip, Category::SupportFlagsOmission);
        }
        if tally.last_seen_entries {
            add(&mut labels, *ip, Category::DeprecatedLastSeen);
        }
        if tally.multi_segment >= SIG_FRAG_MIN_SAMPLES
            && tally.sig_first as f64 / tally.multi_segment as f64 >= SIG_FRAG_RATIO
        {
            add(&mut labels, *ip, Category::SignatureOnlyFragment);
        }
        if tally.short_lived > cfg.short_lived_peer_min {
            add(&mut labels, *ip, Category::ShortLivedFlooding);
        }
        if tally.throttled {
            add(&mut labels, *ip, Category::ThrottledTimedSync);
        }
        if tally.ping_flood {
            add(&mut labels, *ip, Category::PingFlooding);
        }
        if tally.initiator_pings {
            add(&mut labels, *ip, Category::SequenceViolation);
        }
        if tally.low_diversity {
            add(&mut labels, *ip, Category::LowDiversityPeerList);
        }
        // Returning to an id retired by an intermediate change is the
        // temporal contradiction; a single clean change is not.
        let mut deduped: Vec<u64> = Vec::new();
        for id in &tally.id_seq {
            if deduped.last() != Some(id) {
                deduped.push(*id);
            }
        }
        let mut retired: BTreeSet<u64> = BTreeSet::new();
        let mut flipped = false;
        for pair in deduped.windows(2) {
            retired.insert(pair[0]);
            if retired.contains(&pair[1]) {
                flipped = true;
            }
        }
        if flipped {
            add(&mut labels, *ip, Category::PeerIdTemporal);
        }
    }

    // Cross-source list similarity over distinct /24 sets, instance
    // counts multiplied back in.
    for (a_ip, a) in &tallies {
        let mut pair_count = 0usize;
        for (b_ip, b) in &tallies {
            if a_ip == b_ip {
                continue;
            }
            for (sa, ca) in &a.full_subnet_sets {
                for (sb, cb) in &b.full_subnet_sets {
                    let inter = sa.intersection(sb).count();
                    let union = sa.len() + sb.len() - inter;
                    if union > 0 && inter as f64 / union as f64 > cfg.similarity_threshold {
                        pair_count += ca * cb;
                    }
                }
            }
        }
        if pair_count >= cfg.similarity_min_repeats {
            add(&mut labels, *a_ip, Category::HighSimilarityPeerList);
        }
    }

    // Identity clusters: merge (ip, id-set) groups that share any id;
    // components spanning two ips and two ids get flagged whole.
    let mut components: Vec<(BTreeSet<Ipv4Addr>, BTreeSet<u64>)> = Vec::new();
    for (ip, tally) in &tallies {
        if tally.id_seq.is_empty() {
            continue;
        }
        let ids: BTreeSet<u64> = tally.id_seq.iter().copied().collect();
        let mut merged: (BTreeSet<Ipv4Addr>, BTreeSet<u64>) =
            (BTreeSet::from([*ip]), ids);
        let mut rest = Vec::new();
        for comp in components {
            if comp.1.intersection(&merged.1).next().is_some() {
                merged.0.extend(comp.0);
                merged.1.extend(comp.1);
            } else {
                rest.push(comp);
            }
        }
        rest.push(merged);
        components = rest;
    }
    for (ips, ids) in &components {
        if ips.len() >= 2 && ids.len() >= 2 {
            for ip in ips {
                add(&mut labels, *ip, Category::PeerIdCluster);
            }
        }
    }

    for members in promoted.values() {
        if members.len() >= cfg.saturation_threshold {
            for ip in members {
                add(&mut labels, *ip, Category::SaturatedSubnetMember);
            }
        }
    }

    labels
}
