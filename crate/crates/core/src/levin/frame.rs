//! Levin bucket framing: the 33-octet header and payload extraction.

use super::consts::*;
use super::CodecError;

/// One Levin bucket as it appears on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevinFrame {
    pub command: u32,
    pub expect_response: bool,
    pub return_code: i32,
    pub flags: u32,
    pub protocol_version: u32,
    pub payload: Vec<u8>,
}

impl LevinFrame {
    pub fn request(command: u32, payload: Vec<u8>) -> Self {
        LevinFrame {
            command,
            expect_response: true,
            return_code: 0,
            flags: LEVIN_FLAG_REQUEST,
            protocol_version: LEVIN_PROTOCOL_VERSION,
            payload,
        }
    }

    pub fn response(command: u32, payload: Vec<u8>) -> Self {
        LevinFrame {
            command,
            expect_response: false,
            return_code: 1,
            flags: LEVIN_FLAG_RESPONSE,
            protocol_version: LEVIN_PROTOCOL_VERSION,
            payload,
        }
    }

    pub fn is_request(&self) -> bool {
        self.flags & LEVIN_FLAG_REQUEST != 0
    }

    pub fn is_response(&self) -> bool {
        self.flags & LEVIN_FLAG_RESPONSE != 0
    }

    /// Total size on the wire, header included.
    pub fn wire_len(&self) -> usize {
        LEVIN_HEADER_LEN + self.payload.len()
    }
}

/// Decode one frame from the front of `bytes`.
///
/// Returns the frame and the number of octets consumed. A buffer that
/// holds a valid prefix of a frame yields `Incomplete { needed }` with
/// the exact octet count still missing, so stream readers can resume
/// after exactly that many more arrive.
pub fn decode_frame(bytes: &[u8], max_payload: u64) -> Result<(LevinFrame, usize), CodecError> {
    if bytes.len() < LEVIN_HEADER_LEN {
        // Reject a wrong signature as soon as the first 8 octets are in.
        if bytes.len() >= 8 {
            let sig = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
            if sig != LEVIN_SIGNATURE {
                return Err(CodecError::MalformedSignature);
            }
        }
        return Err(CodecError::Incomplete {
            needed: (LEVIN_HEADER_LEN - bytes.len()) as u64,
        });
    }
    let sig = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    if sig != LEVIN_SIGNATURE {
        return Err(CodecError::MalformedSignature);
    }
    let payload_size = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if payload_size > max_payload {
        return Err(CodecError::OversizedPayload { size: payload_size, cap: max_payload });
    }
    let expect_response = bytes[16] != 0;
    let command = u32::from_le_bytes(bytes[17..21].try_into().unwrap());
    let return_code = i32::from_le_bytes(bytes[21..25].try_into().unwrap());
    let flags = u32::from_le_bytes(bytes[25..29].try_into().unwrap());
    let protocol_version = u32::from_le_bytes(bytes[29..33].try_into().unwrap());

    let total = LEVIN_HEADER_LEN as u64 + payload_size;
    if (bytes.len() as u64) < total {
        return Err(CodecError::Incomplete { needed: total - bytes.len() as u64 });
    }
    let payload = bytes[LEVIN_HEADER_LEN..total as usize].to_vec();
    Ok((
        LevinFrame { command, expect_response, return_code, flags, protocol_version, payload },
        total as usize,
    ))
}

/// Encode a frame to wire octets.
pub fn encode_frame(frame: &LevinFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.wire_len());
    out.extend_from_slice(&LEVIN_SIGNATURE.to_le_bytes());
    out.extend_from_slice(&(frame.payload.len() as u64).to_le_bytes());
    out.push(frame.expect_response as u8);
    out.extend_from_slice(&frame.command.to_le_bytes());
    out.extend_from_slice(&frame.return_code.to_le_bytes());
    out.extend_from_slice(&frame.flags.to_le_bytes());
    out.extend_from_slice(&frame.protocol_version.to_le_bytes());
    out.extend_from_slice(&frame.payload);
    out
}

/// Decode every frame in a contiguous stream.
///
/// Consumes frames until the buffer is exhausted. A clean end returns
/// all frames; a trailing partial frame returns `Incomplete`, and any
/// malformed frame fails the whole stream with its offset unknown to
/// the caller (record-level recovery happens upstream, where capture
/// segments carry their own boundaries).
pub fn decode_all(mut bytes: &[u8], max_payload: u64) -> Result<Vec<LevinFrame>, CodecError> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (frame, used) = decode_frame(bytes, max_payload)?;
        bytes = &bytes[used..];
        frames.push(frame);
    }
    Ok(frames)
}
