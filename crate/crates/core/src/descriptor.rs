//! Descriptor sets and the binary descriptor file format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "FAEB" | version: u32 | dim: u32 | image count: u64
//! per image: id length: u32 | id (UTF-8) | descriptor count: u64 | count * dim f32, row-major
//! CRC32 (u32) of every byte after the 20-byte header
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{check_dim, Error, Result};

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"FAEB";
pub const DESCRIPTOR_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// The local descriptors extracted from one image, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    image_id: String,
    dim: usize,
    data: Vec<f64>,
}

impl DescriptorSet {
    /// Builds a set from row-major data. Every value must be finite.
    pub fn new(image_id: impl Into<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("descriptor dimension must be >= 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not split into descriptors of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("descriptor set"));
        }
        Ok(Self {
            image_id: image_id.into(),
            dim,
            data,
        })
    }

    pub fn from_rows(image_id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| {
            Error::InvalidArgument("cannot infer dimension of an empty row list".into())
        })?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(image_id, dim, data)
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Concatenates the descriptors of several sets into one row-major buffer.
pub fn stack_descriptors(sets: &[DescriptorSet]) -> Result<(usize, Vec<f64>)> {
    let dim = sets
        .first()
        .map(DescriptorSet::dim)
        .ok_or_else(|| Error::InvalidArgument("no descriptor sets".into()))?;
    let mut out = Vec::new();
    for s in sets {
        check_dim(dim, s.dim())?;
        out.extend_from_slice(s.as_slice());
    }
    Ok((dim, out))
}

/// Serializes descriptor sets. Values are narrowed to `f32`.
pub fn encode_descriptor_file(sets: &[DescriptorSet]) -> Result<Vec<u8>> {
    let dim = sets.first().map_or(0, DescriptorSet::dim);
    let mut buf = Vec::new();
    buf.extend_from_slice(DESCRIPTOR_MAGIC);
    buf.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(sets.len() as u64).to_le_bytes());
    for s in sets {
        check_dim(dim, s.dim())?;
        let id = s.image_id().as_bytes();
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
        for v in s.as_slice() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf[HEADER_LEN..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated descriptor file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_descriptor_file(bytes: &[u8]) -> Result<Vec<DescriptorSet>> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Format("truncated descriptor file".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let mut cur = Cursor { buf: body, pos: 0 };
    if cur.take(4)? != DESCRIPTOR_MAGIC {
        return Err(Error::Format("bad magic, expected FAEB".into()));
    }
    let version = cur.u32()?;
    if version != DESCRIPTOR_VERSION {
        return Err(Error::UnsupportedVersion {
            major: version as u16,
            minor: 0,
        });
    }
    let dim = cur.u32()? as usize;
    let count = cur.u64()?;
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(&body[HEADER_LEN..]) != stored {
        return Err(Error::Checksum("descriptor file".into()));
    }
    let mut sets = Vec::new();
    for _ in 0..count {
        let id_len = cur.u32()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| Error::Format("image id is not UTF-8".into()))?
            .to_owned();
        let n = cur.u64()? as usize;
        let raw = cur.take(n.checked_mul(dim * 4).ok_or_else(|| {
            Error::Format("descriptor count overflows".into())
        })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        sets.push(DescriptorSet::new(id, dim, data)?);
    }
    if cur.pos != body.len() {
        return Err(Error::Format("trailing bytes before checksum".into()));
    }
    Ok(sets)
}

pub fn write_descriptor_file(path: impl AsRef<Path>, sets: &[DescriptorSet]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_descriptor_file(sets)?;
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<Vec<DescriptorSet>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_descriptor_file(&bytes)
}
