//! Wire constants of the Levin protocol and the epee portable-storage
//! serialization, taken from the Monero reference implementation:
//!
//! - `contrib/epee/include/net/levin_base.h` (signature, flags, header)
//! - `contrib/epee/include/storages/portable_storage_base.h` (storage
//!   signatures, type tags, array flag)
//! - `src/p2p/p2p_protocol_defs.h` (P2P command codes)
//!
//! All multi-octet integers are little-endian on the wire. The hex
//! values below are documented in `docs/wire-format.md` together with
//! the exact octet layouts.

/// Levin frame magic. Serialized little-endian, so the first eight wire
/// octets of every frame are `01 21 01 01 01 01 01 01`.
pub const LEVIN_SIGNATURE: u64 = 0x0101_0101_0101_2101;

/// Fixed header length: signature(8) + payload_size(8) +
/// expect_response(1) + command(4) + return_code(4) + flags(4) +
/// protocol_version(4).
pub const LEVIN_HEADER_LEN: usize = 33;

/// Current Levin protocol version emitted by the reference client.
pub const LEVIN_PROTOCOL_VERSION: u32 = 1;

/// Frame flag bits. Base commands carry exactly one of REQUEST/RESPONSE.
pub const LEVIN_FLAG_REQUEST: u32 = 0x0000_0001;
pub const LEVIN_FLAG_RESPONSE: u32 = 0x0000_0002;
pub const LEVIN_FLAG_BEGIN_FRAGMENT: u32 = 0x0000_0004;
pub const LEVIN_FLAG_END_FRAGMENT: u32 = 0x0000_0008;

/// P2P base commands (pool base 1000).
pub const CMD_HANDSHAKE: u32 = 1001;
pub const CMD_TIMED_SYNC: u32 = 1002;
pub const CMD_PING: u32 = 1003;
pub const CMD_SUPPORT_FLAGS: u32 = 1007;

/// The base commands whose payload schema this crate knows.
pub const KNOWN_COMMANDS: [u32; 4] = [CMD_HANDSHAKE, CMD_TIMED_SYNC, CMD_PING, CMD_SUPPORT_FLAGS];

/// Portable-storage header: two 4-octet signatures then a 1-octet
/// format version, 9 octets total.
pub const STORAGE_SIGNATURE_A: u32 = 0x0101_1101;
pub const STORAGE_SIGNATURE_B: u32 = 0x0102_0101;
pub const STORAGE_FORMAT_VERSION: u8 = 1;
pub const STORAGE_HEADER_LEN: usize = 9;

/// Entry type tags used in portable storage.
pub const TAG_I64: u8 = 1;
pub const TAG_I32: u8 = 2;
pub const TAG_I16: u8 = 3;
pub const TAG_I8: u8 = 4;
pub const TAG_U64: u8 = 5;
pub const TAG_U32: u8 = 6;
pub const TAG_U16: u8 = 7;
pub const TAG_U8: u8 = 8;
pub const TAG_F64: u8 = 9;
pub const TAG_STRING: u8 = 10;
pub const TAG_BOOL: u8 = 11;
pub const TAG_SECTION: u8 = 12;
pub const TAG_ARRAY: u8 = 13;
/// OR-ed onto a type tag to mark a homogeneous array of that type.
pub const FLAG_ARRAY: u8 = 0x80;

/// Payload size cap. Guards against allocation bombs from hostile
/// headers; configurable at the decode call sites.
pub const DEFAULT_MAX_PAYLOAD: u64 = 100 * 1024 * 1024;

/// Default section nesting limit for storage decode.
pub const DEFAULT_MAX_DEPTH: usize = 16;

/// Field path under which exchanged peer lists appear in handshake and
/// timed-sync responses.
pub const PEERLIST_PATH: &str = "local_peerlist_new";

/// Mainnet network id (16 octets), sent as a binary string in
/// `node_data.network_id`.
pub const MAINNET_NETWORK_ID: [u8; 16] = [
    0x12, 0x30, 0xF1, 0x71, 0x61, 0x04, 0x41, 0x61, 0x17, 0x31, 0x00, 0x82, 0x16, 0xA1, 0xA1, 0x10,
];

/// Human-readable name for a known command code.
pub fn command_name(command: u32) -> Option<&'static str> {
    match command {
        CMD_HANDSHAKE => Some("handshake"),
        CMD_TIMED_SYNC => Some("timed_sync"),
        CMD_PING => Some("ping"),
        CMD_SUPPORT_FLAGS => Some("support_flags"),
        _ => None,
    }
}
