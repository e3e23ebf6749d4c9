//! Required/optional field-set conformance for base-protocol messages.
//!
//! A message violates syntax when a required field is absent or a field
//! outside the required+optional union is present. The rule tables
//! describe what the current reference client emits; everything else is
//! reportable deviation, including fields old clients still send.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::levin::consts::*;
use crate::levin::{CodecError, EpeeValue, MessageKind, ParsedMessage};

/// Required and optional field paths for one message shape.
#[derive(Debug, Clone, Default)]
pub struct FieldRule {
    pub required: BTreeSet<String>,
    pub optional: BTreeSet<String>,
}

impl FieldRule {
    fn new(required: &[&str], optional: &[&str]) -> Self {
        let rule = FieldRule {
            required: required.iter().map(|s| s.to_string()).collect(),
            optional: optional.iter().map(|s| s.to_string()).collect(),
        };
        debug_assert!(rule.required.is_disjoint(&rule.optional));
        rule
    }

    /// Field sets present-but-shouldn't and absent-but-should.
    pub fn check(&self, present: &BTreeSet<String>) -> Option<SyntaxViolation> {
        let missing: BTreeSet<String> =
            self.required.difference(present).cloned().collect();
        let unexpected: BTreeSet<String> = present
            .iter()
            .filter(|p| !self.required.contains(*p) && !self.optional.contains(*p))
            .cloned()
            .collect();
        if missing.is_empty() && unexpected.is_empty() {
            None
        } else {
            Some(SyntaxViolation { missing, unexpected })
        }
    }
}

/// Per-message-shape rules plus the peer-list entry rule.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    by_message: BTreeMap<(u32, MessageKind), FieldRule>,
    pub entry_rule: FieldRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SyntaxViolation {
    pub missing: BTreeSet<String>,
    pub unexpected: BTreeSet<String>,
}

impl SyntaxViolation {
    fn merge(&mut self, other: SyntaxViolation) {
        self.missing.extend(other.missing);
        self.unexpected.extend(other.unexpected);
    }

    fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty()
    }
}

impl fmt::Display for SyntaxViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let missing: Vec<_> = self.missing.iter().map(String::as_str).collect();
        let unexpected: Vec<_> = self.unexpected.iter().map(String::as_str).collect();
        write!(f, "missing [{}], unexpected [{}]", missing.join(", "), unexpected.join(", "))
    }
}

const CORE_SYNC_REQUIRED: [&str; 4] = [
    "payload_data.current_height",
    "payload_data.cumulative_difficulty",
    "payload_data.top_id",
    "payload_data.top_version",
];
const CORE_SYNC_OPTIONAL: [&str; 2] = [
    "payload_data.cumulative_difficulty_top64",
    "payload_data.pruning_seed",
];

impl FieldSpec {
    /// Rule tables for the current reference client's base commands.
    pub fn standard() -> Self {
        let node_data_required = [
            "node_data.network_id",
            "node_data.peer_id",
            "node_data.my_port",
            "node_data.support_flags",
        ];
        let node_data_optional = ["node_data.rpc_port", "node_data.rpc_credits_per_hash"];

        let mut by_message = BTreeMap::new();
        by_message.insert(
            (CMD_HANDSHAKE, MessageKind::Request),
            FieldRule::new(
                &[&node_data_required[..], &CORE_SYNC_REQUIRED[..]].concat(),
                &[&node_data_optional[..], &CORE_SYNC_OPTIONAL[..]].concat(),
            ),
        );
        by_message.insert(
            (CMD_HANDSHAKE, MessageKind::Response),
            FieldRule::new(
                &[&node_data_required[..], &CORE_SYNC_REQUIRED[..]].concat(),
                &[
                    &node_data_optional[..],
                    &CORE_SYNC_OPTIONAL[..],
                    &[PEERLIST_PATH][..],
                ]
                .concat(),
            ),
        );
        by_message.insert(
            (CMD_TIMED_SYNC, MessageKind::Request),
            FieldRule::new(&CORE_SYNC_REQUIRED, &CORE_SYNC_OPTIONAL),
        );
        by_message.insert(
            (CMD_TIMED_SYNC, MessageKind::Response),
            FieldRule::new(
                &CORE_SYNC_REQUIRED,
                &[&CORE_SYNC_OPTIONAL[..], &["local_time", PEERLIST_PATH][..]].concat(),
            ),
        );
        by_message.insert((CMD_PING, MessageKind::Request), FieldRule::new(&[], &[]));
        by_message.insert(
            (CMD_PING, MessageKind::Response),
            FieldRule::new(&["status", "peer_id"], &[]),
        );
        by_message.insert((CMD_SUPPORT_FLAGS, MessageKind::Request), FieldRule::new(&[], &[]));
        by_message.insert(
            (CMD_SUPPORT_FLAGS, MessageKind::Response),
            FieldRule::new(&["support_flags"], &[]),
        );

        FieldSpec {
            by_message,
            // Logical entry names; last_seen is deliberately in neither
            // set, so sending it is an unexpected-field violation.
            entry_rule: FieldRule::new(
                &["ip", "port"],
                &["addr_type", "id", "pruning_seed", "rpc_port", "rpc_credits_per_hash"],
            ),
        }
    }

    pub fn rule(&self, command: u32, kind: MessageKind) -> Option<&FieldRule> {
        self.by_message.get(&(command, kind))
    }
}

/// Map one wire-shape entry path to the logical name the entry rule
/// uses. Unknown paths pass through verbatim.
pub fn entry_wire_path_to_name(path: &str) -> &str {
    match path {
        "adr.addr.m_ip" => "ip",
        "adr.addr.m_port" => "port",
        "adr.type" => "addr_type",
        other => other,
    }
}

/// Check one message against the rule tables.
///
/// Returns `Ok(None)` for a conformant message, the combined violation
/// otherwise. Entries of a wire-shaped peer list at the standard path
/// are each checked against the entry rule; their names merge into the
/// message-level sets.
pub fn check_syntax(
    msg: &ParsedMessage,
    spec: &FieldSpec,
) -> Result<Option<SyntaxViolation>, CodecError> {
    let rule = spec
        .rule(msg.command, msg.kind)
        .ok_or(CodecError::UnknownCommand(msg.command))?;
    let present: BTreeSet<String> = msg.fields.keys().cloned().collect();
    let mut violation = rule.check(&present).unwrap_or_default();

    if let Some(EpeeValue::Array(list)) = msg.fields.get(PEERLIST_PATH) {
        for value in &list.values {
            if let EpeeValue::Section(entry) = value {
                let flattened = crate::levin::payload::flatten_section(entry)?;
                let names: BTreeSet<String> = flattened
                    .keys()
                    .map(|p| entry_wire_path_to_name(p).to_string())
                    .collect();
                if let Some(v) = spec.entry_rule.check(&names) {
                    violation.merge(v);
                }
            }
        }
    }

    Ok(if violation.is_empty() { None } else { Some(violation) })
}
