//! Binary cache for parsed unit sets, so repeated runs skip text parsing.
//!
//! Layout: 8-byte magic `BBPPCACH`, u16 format version, the 32-byte source
//! digest, a length-prefixed payload, and a trailing checksum of the payload
//! bytes. Integers are little-endian fixed width, strings length-prefixed.
//! Invalidation is whole-tree: any source change produces a different
//! digest and the cache is rebuilt from scratch.

use crate::unit::{DependencyKind, ServiceType, UnitFile, UnitName, UnitSet};
use std::collections::BTreeMap;

pub const CACHE_MAGIC: [u8; 8] = *b"BBPPCACH";
pub const CACHE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CacheError {
    #[error("not a unit cache (bad magic)")]
    BadMagic,
    #[error("cache format version {found} is not {CACHE_VERSION}")]
    VersionMismatch { found: u16 },
    #[error("corrupt cache: {0}")]
    Corrupt(String),
}

/// FNV-1a folded over 8-byte little-endian words (zero-padded tail). Each
/// step xors then multiplies by an odd prime, both injective in u64, so any
/// single corrupted byte changes its word and therefore the result.
fn checksum(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut chunks = bytes.chunks_exact(8);
    for chunk in &mut chunks {
        h ^= u64::from_le_bytes(chunk.try_into().unwrap());
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let rest = chunks.remainder();
    if !rest.is_empty() {
        let mut tail = [0u8; 8];
        tail[..rest.len()].copy_from_slice(rest);
        h ^= u64::from_le_bytes(tail);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CacheError::Corrupt("truncated payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CacheError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32, CacheError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, CacheError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CacheError::Corrupt("string is not UTF-8".into()))
    }
    fn unit_name(&mut self) -> Result<UnitName, CacheError> {
        let s = self.str()?;
        UnitName::parse(&s).map_err(|e| CacheError::Corrupt(e.to_string()))
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn dep_kind_tag(kind: DependencyKind) -> u8 {
    match kind {
        DependencyKind::Strong => 0,
        DependencyKind::Weak => 1,
        DependencyKind::OrderBefore => 2,
        DependencyKind::OrderAfter => 3,
        DependencyKind::WantedBy => 4,
    }
}

fn dep_kind_from_tag(tag: u8) -> Result<DependencyKind, CacheError> {
    Ok(match tag {
        0 => DependencyKind::Strong,
        1 => DependencyKind::Weak,
        2 => DependencyKind::OrderBefore,
        3 => DependencyKind::OrderAfter,
        4 => DependencyKind::WantedBy,
        other => return Err(CacheError::Corrupt(format!("bad dependency tag {other}"))),
    })
}

fn service_type_tag(t: ServiceType) -> u8 {
    match t {
        ServiceType::Simple => 0,
        ServiceType::Forking => 1,
        ServiceType::Oneshot => 2,
    }
}

fn service_type_from_tag(tag: u8) -> Result<ServiceType, CacheError> {
    Ok(match tag {
        0 => ServiceType::Simple,
        1 => ServiceType::Forking,
        2 => ServiceType::Oneshot,
        other => return Err(CacheError::Corrupt(format!("bad service type tag {other}"))),
    })
}

fn encode_unit(w: &mut Writer, unit: &UnitFile) {
    w.str(unit.name.as_str());
    w.str(&unit.description);
    w.u8(service_type_tag(unit.service_type));
    match &unit.exec_start {
        Some(s) => {
            w.u8(1);
            w.str(s);
        }
        None => w.u8(0),
    }
    w.u64(unit.exec_duration);
    match unit.fork_point {
        Some(fp) => {
            w.u8(1);
            w.u64(fp);
        }
        None => w.u8(0),
    }
    w.u8(unit.deferred as u8);
    w.u8(unit.boot_critical_hint as u8);
    w.i32(unit.priority);
    w.u32(unit.deps.len() as u32);
    for (kind, target) in &unit.deps {
        w.u8(dep_kind_tag(*kind));
        w.str(target.as_str());
    }
}

fn decode_unit(r: &mut Reader) -> Result<UnitFile, CacheError> {
    let name = r.unit_name()?;
    let mut unit = UnitFile::new(name);
    unit.description = r.str()?;
    unit.service_type = service_type_from_tag(r.u8()?)?;
    unit.exec_start = match r.u8()? {
        0 => None,
        1 => Some(r.str()?),
        other => return Err(CacheError::Corrupt(format!("bad option tag {other}"))),
    };
    unit.exec_duration = r.u64()?;
    unit.fork_point = match r.u8()? {
        0 => None,
        1 => Some(r.u64()?),
        other => return Err(CacheError::Corrupt(format!("bad option tag {other}"))),
    };
    unit.deferred = r.u8()? != 0;
    unit.boot_critical_hint = r.u8()? != 0;
    unit.priority = r.i32()?;
    let dep_count = r.u32()? as usize;
    for _ in 0..dep_count {
        let kind = dep_kind_from_tag(r.u8()?)?;
        let target = r.unit_name()?;
        unit.deps.push((kind, target));
    }
    Ok(unit)
}

/// Serialize a unit set to a cache image. Deterministic: the same set always
/// produces the same bytes.
pub fn encode_cache(set: &UnitSet) -> Vec<u8> {
    let mut payload = Writer { buf: Vec::new() };
    payload.u32(set.len() as u32);
    for unit in set.units().values() {
        encode_unit(&mut payload, unit);
    }
    let payload = payload.buf;

    let mut out = Vec::with_capacity(payload.len() + 64);
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(set.source_digest());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    let sum = checksum(&payload);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

/// Read back the source digest without decoding the payload.
pub fn image_digest(image: &[u8]) -> Result<[u8; 32], CacheError> {
    if image.len() < 10 || image[..8] != CACHE_MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = u16::from_le_bytes(image[8..10].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(CacheError::VersionMismatch { found: version });
    }
    if image.len() < 42 {
        return Err(CacheError::Corrupt("truncated header".into()));
    }
    Ok(image[10..42].try_into().unwrap())
}

/// Decode a cache image back to the unit set it was built from. This path
/// never touches the text parser.
pub fn decode_cache(image: &[u8]) -> Result<UnitSet, CacheError> {
    let digest = image_digest(image)?;
    let mut header = Reader {
        buf: image,
        pos: 42,
    };
    let payload_len = header.u64()? as usize;
    let payload = header.take(payload_len)?;
    let stored_sum = header.u64()?;
    if !header.done() {
        return Err(CacheError::Corrupt("trailing bytes after checksum".into()));
    }
    if checksum(payload) != stored_sum {
        return Err(CacheError::Corrupt("payload checksum mismatch".into()));
    }

    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let count = r.u32()? as usize;
    let mut units = BTreeMap::new();
    for _ in 0..count {
        let unit = decode_unit(&mut r)?;
        if units.insert(unit.name.clone(), unit).is_some() {
            return Err(CacheError::Corrupt("duplicate unit in payload".into()));
        }
    }
    if !r.done() {
        return Err(CacheError::Corrupt("trailing bytes in payload".into()));
    }
    Ok(UnitSet::new(units, digest))
}

/// True iff the image decodes cleanly and was built from sources with
/// `current_digest`. Malformed images are simply stale, never errors.
pub fn cache_valid(image: &[u8], current_digest: &[u8; 32]) -> bool {
    match decode_cache(image) {
        Ok(set) => set.source_digest() == current_digest,
        Err(_) => false,
    }
}
