//! Levin protocol framing and epee portable-storage payload codec.
//!
//! Levin is the custom framing protocol Monero nodes speak on their P2P
//! port. Every message is a fixed 33-octet header followed by a payload
//! serialized in the epee "portable storage" binary key-value format.
//! This module is a bit-exact encoder/decoder for both layers, built for
//! forensic use: unknown commands and unknown payload fields are
//! preserved, never dropped, and the decoder tolerates arbitrary input
//! without panicking or unbounded allocation.

pub mod consts;
pub mod epee;
pub mod frame;
pub mod payload;

pub use epee::{decode_storage, encode_storage, EpeeArray, EpeeSection, EpeeValue};
pub use frame::{decode_all, decode_frame, encode_frame, LevinFrame};
pub use payload::{decode_payload, decode_payload_lenient, encode_payload, MessageKind, ParsedMessage};

use thiserror::Error;

/// Errors produced by the frame and payload codecs.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    /// The first eight octets are not the Levin magic.
    #[error("malformed signature: input does not start with the Levin magic")]
    MalformedSignature,
    /// More input is needed before the next frame can be decoded.
    #[error("incomplete frame: {needed} more octet(s) required")]
    Incomplete { needed: u64 },
    /// Header advertises a payload larger than the configured cap.
    #[error("oversized payload: {size} octets exceeds cap of {cap}")]
    OversizedPayload { size: u64, cap: u64 },
    /// The portable-storage body is corrupt or truncated.
    #[error("malformed storage: {0}")]
    MalformedStorage(String),
    /// Section nesting exceeded the configured depth limit.
    #[error("storage nesting depth exceeded")]
    DepthExceeded,
    /// Command code outside the known base-command set.
    #[error("unknown command code {0}")]
    UnknownCommand(u32),
    /// A value cannot be represented in portable storage.
    #[error("unsupported value: {0}")]
    UnsupportedValue(String),
}
