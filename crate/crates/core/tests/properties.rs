//! Property tests for the invariants the rest of the system leans on:
//! codec round-trips, similarity algebra, diversity arithmetic,
//! connection partitioning, and ban-list expansion.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

use peer_sentinel_core::connection::group_connections;
use peer_sentinel_core::detect::content::{jaccard, peer_list_diversity};
use peer_sentinel_core::detect::findings::{sort_findings, AnomalyFinding, Evidence};
use peer_sentinel_core::ingest::{Carrier, PeerAddr, PeerList, PeerListEntry, PacketRecord};
use peer_sentinel_core::levin::consts::{
    CMD_HANDSHAKE, CMD_PING, CMD_SUPPORT_FLAGS, CMD_TIMED_SYNC, DEFAULT_MAX_DEPTH,
    DEFAULT_MAX_PAYLOAD, TAG_BOOL, TAG_SECTION, TAG_STRING, TAG_U64,
};
use peer_sentinel_core::levin::epee::{
    decode_storage, encode_storage, EpeeArray, EpeeSection, EpeeValue,
};
use peer_sentinel_core::levin::frame::{decode_frame, encode_frame, LevinFrame};
use peer_sentinel_core::levin::MessageKind;
use peer_sentinel_core::report::BanList;

// --------------------------------------------------------- codec ----

fn leaf_value() -> impl Strategy<Value = EpeeValue> {
    prop_oneof![
        any::<i64>().prop_map(EpeeValue::I64),
        any::<i32>().prop_map(EpeeValue::I32),
        any::<i16>().prop_map(EpeeValue::I16),
        any::<i8>().prop_map(EpeeValue::I8),
        any::<u64>().prop_map(EpeeValue::U64),
        any::<u32>().prop_map(EpeeValue::U32),
        any::<u16>().prop_map(EpeeValue::U16),
        any::<u8>().prop_map(EpeeValue::U8),
        // Finite floats only: the codec moves bits, equality on NaN is
        // a float problem, not a codec problem.
        any::<i32>().prop_map(|n| EpeeValue::F64(n as f64 * 0.5)),
        any::<bool>().prop_map(EpeeValue::Bool),
        vec(any::<u8>(), 0..32).prop_map(EpeeValue::Bytes),
    ]
}

fn epee_value() -> impl Strategy<Value = EpeeValue> {
    leaf_value().prop_recursive(3, 48, 6, |inner| {
        let section = section_of(inner.clone()).prop_map(EpeeValue::Section);
        let array = prop_oneof![
            vec(any::<u64>(), 0..5).prop_map(|v| EpeeArray {
                elem_tag: TAG_U64,
                values: v.into_iter().map(EpeeValue::U64).collect(),
            }),
            vec(any::<bool>(), 0..5).prop_map(|v| EpeeArray {
                elem_tag: TAG_BOOL,
                values: v.into_iter().map(EpeeValue::Bool).collect(),
            }),
            vec(vec(any::<u8>(), 0..16), 0..4).prop_map(|v| EpeeArray {
                elem_tag: TAG_STRING,
                values: v.into_iter().map(EpeeValue::Bytes).collect(),
            }),
            vec(section_of(inner), 0..3).prop_map(|v| EpeeArray {
                elem_tag: TAG_SECTION,
                values: v.into_iter().map(EpeeValue::Section).collect(),
            }),
        ]
        .prop_map(EpeeValue::Array);
        prop_oneof![section, array]
    })
}

fn section_of(value: impl Strategy<Value = EpeeValue> + 'static) -> BoxedStrategy<EpeeSection> {
    vec(value, 0..6)
        .prop_map(|values| {
            let mut s = EpeeSection::new();
            for (i, v) in values.into_iter().enumerate() {
                s.push(format!("k{i}"), v);
            }
            s
        })
        .boxed()
}

fn epee_section() -> impl Strategy<Value = EpeeSection> {
    section_of(epee_value())
}

proptest! {
    #[test]
    fn storage_encoding_round_trips(root in epee_section()) {
        let bytes = encode_storage(&root).expect("generated body encodes");
        let back = decode_storage(&bytes, DEFAULT_MAX_DEPTH).expect("own encoding decodes");
        prop_assert_eq!(back, root);
    }

    #[test]
    fn frame_encoding_round_trips(
        command in prop_oneof![
            Just(CMD_HANDSHAKE), Just(CMD_TIMED_SYNC), Just(CMD_PING),
            Just(CMD_SUPPORT_FLAGS), 1u32..5000,
        ],
        payload in vec(any::<u8>(), 0..256),
        request in any::<bool>(),
    ) {
        let frame = if request {
            LevinFrame::request(command, payload)
        } else {
            LevinFrame::response(command, payload)
        };
        let wire = encode_frame(&frame);
        let (back, consumed) = decode_frame(&wire, DEFAULT_MAX_PAYLOAD).expect("frame decodes");
        prop_assert_eq!(consumed, wire.len());
        prop_assert_eq!(back, frame);
    }

    #[test]
    fn hostile_bytes_never_panic(bytes in vec(any::<u8>(), 0..128)) {
        let _ = decode_storage(&bytes, DEFAULT_MAX_DEPTH);
        let _ = decode_frame(&bytes, DEFAULT_MAX_PAYLOAD);
    }
}

// ---------------------------------------------------- similarity ----

proptest! {
    #[test]
    fn jaccard_is_symmetric_and_bounded(
        a in btree_set(0u32..60, 0..30),
        b in btree_set(0u32..60, 1..30),
    ) {
        let ab = jaccard(&a, &b).expect("b is nonempty");
        let ba = jaccard(&b, &a).expect("b is nonempty");
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        if a == b {
            prop_assert_eq!(ab, 1.0);
        }
        if a.is_disjoint(&b) {
            prop_assert_eq!(ab, 0.0);
        }
    }

    #[test]
    fn jaccard_of_a_set_with_itself_is_one(a in btree_set(0u32..60, 1..30)) {
        prop_assert_eq!(jaccard(&a, &a).expect("nonempty"), 1.0);
    }

    #[test]
    fn sharing_a_fresh_element_never_lowers_similarity(
        a in btree_set(0u32..60, 1..20),
        b in btree_set(0u32..60, 1..20),
        fresh in 100u32..200,
    ) {
        let before = jaccard(&a, &b).expect("nonempty");
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.insert(fresh);
        b2.insert(fresh);
        let after = jaccard(&a2, &b2).expect("nonempty");
        prop_assert!(after >= before, "shared element lowered {before} to {after}");
    }
}

// ------------------------------------------------------ diversity ----

fn full_list_strategy() -> impl Strategy<Value = PeerList> {
    // 250 entries over up to 40 subnets; hosts collide freely.
    vec((0u8..40, 1u8..255), 250).prop_map(|picks| {
        let entries = picks
            .into_iter()
            .map(|(net, host)| PeerListEntry {
                ip: PeerAddr::V4(Ipv4Addr::new(51, 60, net, host)),
                port: 18080,
                peer_id: None,
                last_seen: None,
                pruning_seed: None,
                rpc_port: None,
                rpc_credits_per_hash: None,
                extra: Default::default(),
            })
            .collect();
        PeerList {
            source_ip: Ipv4Addr::new(203, 0, 113, 9),
            ts: 0.0,
            carrier: Carrier::TimedSyncResponse,
            entries,
            invalid_count: 0,
        }
    })
}

proptest! {
    #[test]
    fn diversity_equals_naive_subnet_count(list in full_list_strategy()) {
        let naive: BTreeSet<[u8; 3]> = list
            .entries
            .iter()
            .filter_map(|e| e.ip.as_v4())
            .map(|ip| {
                let o = ip.octets();
                [o[0], o[1], o[2]]
            })
            .collect();
        let got = peer_list_diversity(&list, 250).expect("list is full");
        prop_assert_eq!(got, naive.len() as f64 / 250.0);
    }
}

// ----------------------------------------------------- grouping ----

#[derive(Debug, Clone)]
struct RecSpec {
    remote: u8,
    gap: f64,
    outbound: bool,
    command_pick: u8,
    response: bool,
}

fn rec_specs() -> impl Strategy<Value = Vec<RecSpec>> {
    vec(
        (0u8..4, 0.0f64..200.0, any::<bool>(), 0u8..4, any::<bool>()).prop_map(
            |(remote, gap, outbound, command_pick, response)| RecSpec {
                remote,
                gap,
                outbound,
                command_pick,
                response,
            },
        ),
        1..60,
    )
}

/// Build records on a fixed local endpoint. Remotes 0 and 1 carry a
/// stream id (socket-accurate capture); remotes 2 and 3 rely on the
/// five-tuple plus the inactivity gap.
fn build_records(specs: &[RecSpec]) -> Vec<PacketRecord> {
    let local = Ipv4Addr::new(10, 0, 0, 1);
    let commands = [CMD_HANDSHAKE, CMD_TIMED_SYNC, CMD_PING, CMD_SUPPORT_FLAGS];
    let mut ts = 0.0;
    specs
        .iter()
        .map(|s| {
            ts += s.gap;
            let remote = Ipv4Addr::new(203, 0, 113, 10 + s.remote);
            let rport = 41000 + s.remote as u16;
            let (src_ip, src_port, dst_ip, dst_port) = if s.outbound {
                (local, 18080, remote, rport)
            } else {
                (remote, rport, local, 18080)
            };
            PacketRecord {
                ts,
                src_ip,
                src_port,
                dst_ip,
                dst_port,
                stream_id: (s.remote < 2).then_some(s.remote as u64),
                command: commands[s.command_pick as usize],
                kind: if s.response { MessageKind::Response } else { MessageKind::Request },
                fields: Default::default(),
                segment_lengths: None,
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn grouping_partitions_the_capture(specs in rec_specs()) {
        let records = build_records(&specs);
        let gap = 120.0;
        let conns = group_connections(&records, Some(Ipv4Addr::new(10, 0, 0, 1)), gap)
            .expect("local ip is pinned");

        // Partition: every record index is used exactly once.
        let mut seen: Vec<usize> = conns
            .iter()
            .flat_map(|c| c.messages.iter().map(|m| m.record_index))
            .collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..records.len()).collect::<Vec<_>>());

        for conn in &conns {
            // Homogeneous endpoint and ordered timeline.
            for m in &conn.messages {
                let r = &records[m.record_index];
                let remote = if r.src_ip == conn.local_ip { r.dst_ip } else { r.src_ip };
                prop_assert_eq!(remote, conn.remote_ip);
            }
            for w in conn.messages.windows(2) {
                prop_assert!(w[0].ts <= w[1].ts);
            }
            prop_assert_eq!(conn.start_ts, conn.messages.first().unwrap().ts);
            prop_assert_eq!(conn.end_ts, conn.messages.last().unwrap().ts);
        }

        // Stream-keyed connections never split: one per stream id.
        for id in 0u64..2 {
            let with_id = conns
                .iter()
                .filter(|c| {
                    c.messages.iter().any(|m| records[m.record_index].stream_id == Some(id))
                })
                .count();
            let expected = usize::from(records.iter().any(|r| r.stream_id == Some(id)));
            prop_assert_eq!(with_id, expected);
        }

        // Tuple-keyed connections split at silences strictly over the gap.
        for conn in conns.iter().filter(|c| {
            c.messages.iter().all(|m| records[m.record_index].stream_id.is_none())
        }) {
            for w in conn.messages.windows(2) {
                prop_assert!(w[1].ts - w[0].ts <= gap, "a silence survived inside a session");
            }
        }
    }
}

// ------------------------------------------------------ ban list ----

proptest! {
    #[test]
    fn banlist_expansion_matches_naive_union(
        ips in btree_set((1u8..224, any::<u8>(), any::<u8>(), any::<u8>()), 0..50),
        subnets in btree_set((1u8..224, any::<u8>(), any::<u8>()), 0..5),
    ) {
        let mut list = BanList::default();
        for (a, b, c, d) in &ips {
            list.ips.insert(Ipv4Addr::new(*a, *b, *c, *d));
        }
        for (a, b, c) in &subnets {
            list.subnets.insert(u32::from(Ipv4Addr::new(*a, *b, *c, 0)));
        }

        let mut naive: BTreeSet<Ipv4Addr> = list.ips.clone();
        for (a, b, c) in &subnets {
            for host in 1..=254u8 {
                naive.insert(Ipv4Addr::new(*a, *b, *c, host));
            }
        }
        prop_assert_eq!(list.expand(), naive);
    }
}

// ------------------------------------------------------ findings ----

proptest! {
    #[test]
    fn sorting_orders_keys_and_loses_nothing(
        picks in vec((any::<u8>(), 0.0f64..100.0), 0..30),
    ) {
        let mut findings: Vec<AnomalyFinding> = picks
            .iter()
            .map(|(ip, ts)| {
                AnomalyFinding::new(
                    Ipv4Addr::new(203, 0, 113, *ip),
                    Evidence::DeprecatedLastSeen {
                        entry_count: 250,
                        list_count: 1,
                        distinct_values: 1,
                    },
                    *ts,
                    *ts + 1.0,
                )
            })
            .collect();
        let before: Vec<(Ipv4Addr, u64)> =
            findings.iter().map(|f| (f.ip, f.first_seen.to_bits())).collect();
        sort_findings(&mut findings);

        for w in findings.windows(2) {
            prop_assert!((w[0].ip, w[0].category) <= (w[1].ip, w[1].category));
        }
        let mut after: Vec<(Ipv4Addr, u64)> =
            findings.iter().map(|f| (f.ip, f.first_seen.to_bits())).collect();
        let mut want = before;
        want.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(after, want);
    }
}
