//! Epee portable-storage values and their binary codec.
//!
//! A storage body is a root section. A section is a varint entry count
//! followed by entries; each entry is a length-prefixed name (1-octet
//! length, max 255) and a tagged value. Arrays are the element tag with
//! the high bit (`FLAG_ARRAY`) set, then a varint count and the packed
//! elements. Varints pack the value shifted left two bits, with the low
//! two bits selecting total width: 0 = 1 octet, 1 = 2, 2 = 4, 3 = 8.
//!
//! Decode is hardened for hostile input: every claimed length is checked
//! against the remaining input before allocation, nesting depth is
//! bounded, and every loop consumes at least one octet.

use super::consts::*;
use super::CodecError;

/// One storage value. Arrays are homogeneous; the element tag is kept
/// explicitly so empty arrays survive a round-trip.
#[derive(Debug, Clone, PartialEq)]
pub enum EpeeValue {
    I64(i64),
    I32(i32),
    I16(i16),
    I8(i8),
    U64(u64),
    U32(u32),
    U16(u16),
    U8(u8),
    F64(f64),
    Bool(bool),
    Bytes(Vec<u8>),
    Section(EpeeSection),
    Array(EpeeArray),
}

/// Ordered list of named entries. Order is preserved so encode/decode
/// round-trips byte-identically; names must be unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpeeSection {
    pub entries: Vec<(String, EpeeValue)>,
}

/// Homogeneous array with its element tag.
#[derive(Debug, Clone, PartialEq)]
pub struct EpeeArray {
    pub elem_tag: u8,
    pub values: Vec<EpeeValue>,
}

impl EpeeValue {
    /// Type tag this value serializes under.
    pub fn tag(&self) -> u8 {
        match self {
            EpeeValue::I64(_) => TAG_I64,
            EpeeValue::I32(_) => TAG_I32,
            EpeeValue::I16(_) => TAG_I16,
            EpeeValue::I8(_) => TAG_I8,
            EpeeValue::U64(_) => TAG_U64,
            EpeeValue::U32(_) => TAG_U32,
            EpeeValue::U16(_) => TAG_U16,
            EpeeValue::U8(_) => TAG_U8,
            EpeeValue::F64(_) => TAG_F64,
            EpeeValue::Bytes(_) => TAG_STRING,
            EpeeValue::Bool(_) => TAG_BOOL,
            EpeeValue::Section(_) => TAG_SECTION,
            EpeeValue::Array(_) => TAG_ARRAY,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            EpeeValue::U64(v) => Some(v),
            EpeeValue::U32(v) => Some(v as u64),
            EpeeValue::U16(v) => Some(v as u64),
            EpeeValue::U8(v) => Some(v as u64),
            EpeeValue::I64(v) if v >= 0 => Some(v as u64),
            EpeeValue::I32(v) if v >= 0 => Some(v as u64),
            EpeeValue::I16(v) if v >= 0 => Some(v as u64),
            EpeeValue::I8(v) if v >= 0 => Some(v as u64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            EpeeValue::I64(v) => Some(v),
            EpeeValue::I32(v) => Some(v as i64),
            EpeeValue::I16(v) => Some(v as i64),
            EpeeValue::I8(v) => Some(v as i64),
            EpeeValue::U64(v) => i64::try_from(v).ok(),
            EpeeValue::U32(v) => Some(v as i64),
            EpeeValue::U16(v) => Some(v as i64),
            EpeeValue::U8(v) => Some(v as i64),
            _ => None,
        }
    }
}

impl EpeeSection {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append an entry. Duplicate names are a caller bug and rejected at
    /// encode time.
    pub fn push(&mut self, name: impl Into<String>, value: EpeeValue) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<&EpeeValue> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

impl EpeeArray {
    /// Build an array of sections (the shape peer lists use).
    pub fn of_sections(sections: Vec<EpeeSection>) -> Self {
        EpeeArray {
            elem_tag: TAG_SECTION,
            values: sections.into_iter().map(EpeeValue::Section).collect(),
        }
    }
}

// ---------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    max_depth: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], max_depth: usize) -> Self {
        Reader { buf, pos: 0, max_depth }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::MalformedStorage(format!(
                "truncated: wanted {n} octets, {} left",
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Epee varint: low two bits of the first octet select the width.
    fn varint(&mut self) -> Result<u64, CodecError> {
        let first = self.u8()?;
        let mark = first & 0x03;
        Ok(match mark {
            0 => (first >> 2) as u64,
            1 => {
                let rest = self.take(1)?[0];
                (u16::from_le_bytes([first, rest]) >> 2) as u64
            }
            2 => {
                let rest = self.take(3)?;
                (u32::from_le_bytes([first, rest[0], rest[1], rest[2]]) >> 2) as u64
            }
            _ => {
                let rest = self.take(7)?;
                let mut b = [0u8; 8];
                b[0] = first;
                b[1..].copy_from_slice(rest);
                u64::from_le_bytes(b) >> 2
            }
        })
    }

    fn name(&mut self) -> Result<String, CodecError> {
        let len = self.u8()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| CodecError::MalformedStorage("entry name is not UTF-8".into()))
    }

    fn value(&mut self, tag: u8, depth: usize) -> Result<EpeeValue, CodecError> {
        Ok(match tag {
            TAG_I64 => EpeeValue::I64(self.u64()? as i64),
            TAG_I32 => EpeeValue::I32(self.u32()? as i32),
            TAG_I16 => EpeeValue::I16(self.u16()? as i16),
            TAG_I8 => EpeeValue::I8(self.u8()? as i8),
            TAG_U64 => EpeeValue::U64(self.u64()?),
            TAG_U32 => EpeeValue::U32(self.u32()?),
            TAG_U16 => EpeeValue::U16(self.u16()?),
            TAG_U8 => EpeeValue::U8(self.u8()?),
            TAG_F64 => EpeeValue::F64(f64::from_bits(self.u64()?)),
            TAG_BOOL => EpeeValue::Bool(self.u8()? != 0),
            TAG_STRING => {
                let len = self.varint()?;
                if len > self.remaining() as u64 {
                    return Err(CodecError::MalformedStorage(format!(
                        "string length {len} exceeds remaining input"
                    )));
                }
                EpeeValue::Bytes(self.take(len as usize)?.to_vec())
            }
            TAG_SECTION => EpeeValue::Section(self.section(depth + 1)?),
            TAG_ARRAY => {
                // Nested array entry: the real element tag follows.
                let inner = self.u8()?;
                if inner & FLAG_ARRAY == 0 {
                    return Err(CodecError::MalformedStorage(
                        "array entry without array flag on element tag".into(),
                    ));
                }
                self.array(inner & !FLAG_ARRAY, depth)?
            }
            other => {
                return Err(CodecError::MalformedStorage(format!(
                    "unknown type tag {other}"
                )))
            }
        })
    }

    fn array(&mut self, elem_tag: u8, depth: usize) -> Result<EpeeValue, CodecError> {
        if depth > self.max_depth {
            return Err(CodecError::DepthExceeded);
        }
        let count = self.varint()?;
        // Every element consumes at least one octet.
        if count > self.remaining() as u64 {
            return Err(CodecError::MalformedStorage(format!(
                "array count {count} exceeds remaining input"
            )));
        }
        let mut values = Vec::with_capacity(count as usize);
        for _ in 0..count {
            values.push(self.value(elem_tag, depth)?);
        }
        Ok(EpeeValue::Array(EpeeArray { elem_tag, values }))
    }

    pub(crate) fn section(&mut self, depth: usize) -> Result<EpeeSection, CodecError> {
        if depth > self.max_depth {
            return Err(CodecError::DepthExceeded);
        }
        let count = self.varint()?;
        if count > self.remaining() as u64 {
            return Err(CodecError::MalformedStorage(format!(
                "section count {count} exceeds remaining input"
            )));
        }
        let mut section = EpeeSection::new();
        for _ in 0..count {
            let name = self.name()?;
            if section.entries.iter().any(|(n, _)| *n == name) {
                return Err(CodecError::MalformedStorage(format!(
                    "duplicate entry name {name:?}"
                )));
            }
            let tag = self.u8()?;
            let value = if tag & FLAG_ARRAY != 0 {
                self.array(tag & !FLAG_ARRAY, depth)?
            } else {
                self.value(tag, depth)?
            };
            section.push(name, value);
        }
        Ok(section)
    }
}

/// Decode a full portable-storage body (header + root section).
///
/// A completely empty input and a bare 9-octet header both decode to an
/// empty root section; trailing octets after the root section are an
/// error.
pub fn decode_storage(bytes: &[u8], max_depth: usize) -> Result<EpeeSection, CodecError> {
    if bytes.is_empty() {
        return Ok(EpeeSection::new());
    }
    if bytes.len() < STORAGE_HEADER_LEN {
        return Err(CodecError::MalformedStorage("truncated storage header".into()));
    }
    let sig_a = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let sig_b = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if sig_a != STORAGE_SIGNATURE_A || sig_b != STORAGE_SIGNATURE_B {
        return Err(CodecError::MalformedStorage("bad storage signature".into()));
    }
    if bytes[8] != STORAGE_FORMAT_VERSION {
        return Err(CodecError::MalformedStorage(format!(
            "unsupported storage version {}",
            bytes[8]
        )));
    }
    let body = &bytes[STORAGE_HEADER_LEN..];
    if body.is_empty() {
        return Ok(EpeeSection::new());
    }
    let mut reader = Reader::new(body, max_depth);
    let root = reader.section(0)?;
    if reader.remaining() != 0 {
        return Err(CodecError::MalformedStorage(format!(
            "{} trailing octet(s) after root section",
            reader.remaining()
        )));
    }
    Ok(root)
}

// ---------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------

fn write_varint(out: &mut Vec<u8>, v: u64) -> Result<(), CodecError> {
    if v <= 0x3f {
        out.push((v as u8) << 2);
    } else if v <= 0x3fff {
        out.extend_from_slice(&(((v as u16) << 2) | 1).to_le_bytes());
    } else if v <= 0x3fff_ffff {
        out.extend_from_slice(&(((v as u32) << 2) | 2).to_le_bytes());
    } else if v <= (u64::MAX >> 2) {
        out.extend_from_slice(&((v << 2) | 3).to_le_bytes());
    } else {
        return Err(CodecError::UnsupportedValue(format!(
            "length {v} does not fit a storage varint"
        )));
    }
    Ok(())
}

fn write_value(out: &mut Vec<u8>, value: &EpeeValue) -> Result<(), CodecError> {
    match value {
        EpeeValue::I64(v) => out.extend_from_slice(&v.to_le_bytes()),
        EpeeValue::I32(v) => out.extend_from_slice(&v.to_le_bytes()),
        EpeeValue::I16(v) => out.extend_from_slice(&v.to_le_bytes()),
        EpeeValue::I8(v) => out.extend_from_slice(&v.to_le_bytes()),
        EpeeValue::U64(v) => out.extend_from_slice(&v.to_le_bytes()),
        EpeeValue::U32(v) => out.extend_from_slice(&v.to_le_bytes()),
        EpeeValue::U16(v) => out.extend_from_slice(&v.to_le_bytes()),
        EpeeValue::U8(v) => out.push(*v),
        EpeeValue::F64(v) => out.extend_from_slice(&v.to_bits().to_le_bytes()),
        EpeeValue::Bool(v) => out.push(*v as u8),
        EpeeValue::Bytes(b) => {
            write_varint(out, b.len() as u64)?;
            out.extend_from_slice(b);
        }
        EpeeValue::Section(s) => write_section_body(out, s)?,
        EpeeValue::Array(a) => {
            // Bare arrays only appear through the entry path, which
            // emits the flagged tag itself.
            write_varint(out, a.values.len() as u64)?;
            for v in &a.values {
                if v.tag() != a.elem_tag {
                    return Err(CodecError::UnsupportedValue(
                        "array elements must share one type tag".into(),
                    ));
                }
                write_value(out, v)?;
            }
        }
    }
    Ok(())
}

fn write_section_body(out: &mut Vec<u8>, section: &EpeeSection) -> Result<(), CodecError> {
    write_varint(out, section.entries.len() as u64)?;
    for (name, value) in &section.entries {
        if name.len() > u8::MAX as usize {
            return Err(CodecError::UnsupportedValue(format!(
                "entry name longer than 255 octets: {name:?}"
            )));
        }
        if section.entries.iter().filter(|(n, _)| n == name).count() > 1 {
            return Err(CodecError::UnsupportedValue(format!(
                "duplicate entry name {name:?}"
            )));
        }
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
        match value {
            EpeeValue::Array(a) => {
                out.push(a.elem_tag | FLAG_ARRAY);
                write_value(out, value)?;
            }
            other => {
                out.push(other.tag());
                write_value(out, other)?;
            }
        }
    }
    Ok(())
}

/// Encode a root section into a full storage body. An empty section
/// yields just the 9-octet header.
pub fn encode_storage(root: &EpeeSection) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    out.extend_from_slice(&STORAGE_SIGNATURE_A.to_le_bytes());
    out.extend_from_slice(&STORAGE_SIGNATURE_B.to_le_bytes());
    out.push(STORAGE_FORMAT_VERSION);
    if !root.entries.is_empty() {
        write_section_body(&mut out, root)?;
    }
    Ok(out)
}
