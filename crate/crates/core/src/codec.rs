//! Little-endian primitives shared by the packed dataset and index formats.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::distance::DistanceKind;
use crate::error::{FairKnnError, Result};
use crate::types::{Attribute, AttributeSchema};

/// Upper bound on any length prefix, guarding allocations on corrupt input.
const MAX_LEN: u64 = 1 << 40;

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| FairKnnError::Format(format!("invalid utf-8: {e}")))
}

pub(crate) fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = r.read_u64::<LE>()?;
    if n > MAX_LEN {
        return Err(FairKnnError::Format(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

pub(crate) fn write_schema<W: Write>(w: &mut W, schema: &AttributeSchema) -> Result<()> {
    for attr in schema.attributes() {
        write_str(w, &attr.name)?;
        w.write_u32::<LE>(attr.values.len() as u32)?;
        for v in &attr.values {
            write_str(w, v)?;
        }
    }
    Ok(())
}

pub(crate) fn read_schema<R: Read>(r: &mut R, m: usize) -> Result<AttributeSchema> {
    let mut attrs = Vec::with_capacity(m);
    for _ in 0..m {
        let name = read_str(r)?;
        let count = r.read_u32::<LE>()? as usize;
        let values = (0..count).map(|_| read_str(r)).collect::<Result<Vec<_>>>()?;
        attrs.push(Attribute { name, values });
    }
    AttributeSchema::new(attrs)
}

pub(crate) fn write_distance<W: Write>(w: &mut W, kind: DistanceKind) -> Result<()> {
    let (tag, p) = match kind {
        DistanceKind::Euclidean => (0u8, 0.0),
        DistanceKind::Manhattan => (1, 0.0),
        DistanceKind::CosineBased => (2, 0.0),
        DistanceKind::Minkowski(p) => (3, p),
    };
    w.write_u8(tag)?;
    w.write_f64::<LE>(p)?;
    Ok(())
}

pub(crate) fn read_distance<R: Read>(r: &mut R) -> Result<DistanceKind> {
    let tag = r.read_u8()?;
    let p = r.read_f64::<LE>()?;
    match tag {
        0 => Ok(DistanceKind::Euclidean),
        1 => Ok(DistanceKind::Manhattan),
        2 => Ok(DistanceKind::CosineBased),
        3 => DistanceKind::minkowski(p),
        t => Err(FairKnnError::Format(format!("unknown distance tag {t}"))),
    }
}

pub(crate) fn check_magic<R: Read>(r: &mut R, magic: &[u8; 8], version: u32, what: &str) -> Result<()> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(FairKnnError::Format(format!("not a {what} file (bad magic)")));
    }
    let v = r.read_u32::<LE>()?;
    if v != version {
        return Err(FairKnnError::Format(format!(
            "{what} format version {v} is not supported (expected {version})"
        )));
    }
    Ok(())
}

/// FNV-1a, used as a dataset fingerprint.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv64 {
    pub(crate) fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub(crate) fn finish(self) -> u64 {
        self.0
    }
}
