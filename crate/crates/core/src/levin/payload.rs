//! Payload semantics: storage bodies flattened to dot-separated field
//! paths, and the inverse for message construction.
//!
//! Nested sections flatten recursively ("node_data.peer_id"); arrays
//! stay whole at their path, so a peer list is one value at
//! "local_peerlist_new" holding an array of sections. Unknown fields
//! and unknown commands are preserved verbatim: downstream checks need
//! to see exactly what a peer sent, including what it should not have.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::consts::*;
use super::epee::{decode_storage, encode_storage, EpeeSection, EpeeValue};
use super::frame::LevinFrame;
use super::CodecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Request,
    Response,
}

/// A decoded message: command, direction kind, and its fields keyed by
/// flattened path. Paths are unique per message.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMessage {
    pub command: u32,
    pub kind: MessageKind,
    pub fields: BTreeMap<String, EpeeValue>,
}

impl ParsedMessage {
    pub fn new(command: u32, kind: MessageKind) -> Self {
        ParsedMessage { command, kind, fields: BTreeMap::new() }
    }

    pub fn request(command: u32) -> Self {
        Self::new(command, MessageKind::Request)
    }

    pub fn response(command: u32) -> Self {
        Self::new(command, MessageKind::Response)
    }

    pub fn with_field(mut self, path: impl Into<String>, value: EpeeValue) -> Self {
        self.fields.insert(path.into(), value);
        self
    }
}

fn flatten_into(
    prefix: &str,
    section: &EpeeSection,
    out: &mut BTreeMap<String, EpeeValue>,
) -> Result<(), CodecError> {
    for (name, value) in &section.entries {
        let path = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
        match value {
            EpeeValue::Section(inner) => flatten_into(&path, inner, out)?,
            other => {
                if out.insert(path.clone(), other.clone()).is_some() {
                    return Err(CodecError::MalformedStorage(format!(
                        "field path {path:?} produced twice"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Flatten a decoded root section to field paths.
pub fn flatten_section(root: &EpeeSection) -> Result<BTreeMap<String, EpeeValue>, CodecError> {
    let mut out = BTreeMap::new();
    flatten_into("", root, &mut out)?;
    Ok(out)
}

enum Node {
    Leaf(EpeeValue),
    Branch(BTreeMap<String, Node>),
}

fn insert_path(tree: &mut BTreeMap<String, Node>, path: &str, value: &EpeeValue) -> Result<(), CodecError> {
    let mut segments = path.split('.').peekable();
    let mut current = tree;
    loop {
        let seg = segments.next().ok_or_else(|| {
            CodecError::UnsupportedValue(format!("empty field path {path:?}"))
        })?;
        if seg.is_empty() {
            return Err(CodecError::UnsupportedValue(format!(
                "empty segment in field path {path:?}"
            )));
        }
        if segments.peek().is_none() {
            match current.insert(seg.to_string(), Node::Leaf(value.clone())) {
                None => return Ok(()),
                Some(_) => {
                    return Err(CodecError::UnsupportedValue(format!(
                        "field path {path:?} collides with another path"
                    )))
                }
            }
        }
        current = match current
            .entry(seg.to_string())
            .or_insert_with(|| Node::Branch(BTreeMap::new()))
        {
            Node::Branch(children) => children,
            Node::Leaf(_) => {
                return Err(CodecError::UnsupportedValue(format!(
                    "field path {path:?} collides with another path"
                )))
            }
        };
    }
}

fn tree_to_section(tree: BTreeMap<String, Node>) -> EpeeSection {
    let mut section = EpeeSection::new();
    for (name, node) in tree {
        let value = match node {
            Node::Leaf(v) => v,
            Node::Branch(children) => EpeeValue::Section(tree_to_section(children)),
        };
        section.push(name, value);
    }
    section
}

/// Rebuild a nested root section from flattened paths.
pub fn unflatten_fields(fields: &BTreeMap<String, EpeeValue>) -> Result<EpeeSection, CodecError> {
    let mut tree = BTreeMap::new();
    for (path, value) in fields {
        insert_path(&mut tree, path, value)?;
    }
    Ok(tree_to_section(tree))
}

fn kind_of(frame: &LevinFrame) -> MessageKind {
    if frame.is_response() {
        MessageKind::Response
    } else {
        MessageKind::Request
    }
}

/// Decode the payload of a base-protocol frame.
///
/// Commands outside the base set fail with `UnknownCommand`; callers
/// that must keep going (capture ingest does) use
/// [`decode_payload_lenient`], which decodes any storage body the same
/// way without the command check.
pub fn decode_payload(frame: &LevinFrame) -> Result<ParsedMessage, CodecError> {
    if !KNOWN_COMMANDS.contains(&frame.command) {
        return Err(CodecError::UnknownCommand(frame.command));
    }
    decode_payload_lenient(frame)
}

/// Decode any frame's payload without interpreting the command.
pub fn decode_payload_lenient(frame: &LevinFrame) -> Result<ParsedMessage, CodecError> {
    let root = decode_storage(&frame.payload, DEFAULT_MAX_DEPTH)?;
    Ok(ParsedMessage {
        command: frame.command,
        kind: kind_of(frame),
        fields: flatten_section(&root)?,
    })
}

/// Encode a message's fields back into a storage body. An empty field
/// map yields just the 9-octet storage header.
pub fn encode_payload(msg: &ParsedMessage) -> Result<Vec<u8>, CodecError> {
    encode_storage(&unflatten_fields(&msg.fields)?)
}
