//! Versioned binary container of named, checksummed array sections.
//!
//! ```text
//! "FAMB" | major: u16 | minor: u16 | section count: u32
//! table, per section: name length: u32 | name | offset: u64 | length: u64
//! CRC32 (u32) of everything above
//! sections at their offsets:
//!   kind: u32 | ndim: u32 | shape: ndim * u64 | payload | CRC32 of the section bytes before it
//! ```
//!
//! Payloads: `F64` and `U64` are little-endian arrays of `prod(shape)`
//! elements, `Bytes` is raw bytes, `Strings` holds `shape[0]` entries of
//! `length: u32 | UTF-8`. Readers accept any minor version of their major.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"FAMB";
pub const CONTAINER_MAJOR: u16 = 1;
pub const CONTAINER_MINOR: u16 = 1;

const KIND_F64: u32 = 1;
const KIND_U64: u32 = 2;
const KIND_BYTES: u32 = 3;
const KIND_STRINGS: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Blob {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    U64 { shape: Vec<usize>, data: Vec<u64> },
    Bytes(Vec<u8>),
    Strings(Vec<String>),
}

impl Blob {
    fn kind(&self) -> u32 {
        match self {
            Blob::F64 { .. } => KIND_F64,
            Blob::U64 { .. } => KIND_U64,
            Blob::Bytes(_) => KIND_BYTES,
            Blob::Strings(_) => KIND_STRINGS,
        }
    }

    fn shape(&self) -> Vec<usize> {
        match self {
            Blob::F64 { shape, .. } | Blob::U64 { shape, .. } => shape.clone(),
            Blob::Bytes(b) => vec![b.len()],
            Blob::Strings(s) => vec![s.len()],
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.kind().to_le_bytes());
        let shape = self.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for s in &shape {
            out.extend_from_slice(&(*s as u64).to_le_bytes());
        }
        match self {
            Blob::F64 { data, .. } => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Blob::U64 { data, .. } => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Blob::Bytes(b) => out.extend_from_slice(b),
            Blob::Strings(s) => {
                for v in s {
                    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    out.extend_from_slice(v.as_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    fn decode(name: &str, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Format(format!("section {name} is truncated")));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(Error::Checksum(format!("section {name}")));
        }
        let mut r = Reader { buf: body, pos: 0, what: name };
        let kind = r.u32()?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |a, s| a.checked_mul(*s)).ok_or_else(|| r.err("shape overflows"))?;
        let blob = match kind {
            KIND_F64 | KIND_U64 => {
                let raw = r.take(count.checked_mul(8).ok_or_else(|| r.err("shape overflows"))?)?;
                let words = raw.chunks_exact(8).map(|c| c.try_into().unwrap());
                if kind == KIND_F64 {
                    Blob::F64 { shape, data: words.map(f64::from_le_bytes).collect() }
                } else {
                    Blob::U64 { shape, data: words.map(u64::from_le_bytes).collect() }
                }
            }
            KIND_BYTES if ndim == 1 => Blob::Bytes(r.take(count)?.to_vec()),
            KIND_STRINGS if ndim == 1 => Blob::Strings((0..count).map(|_| r.string()).collect::<Result<_>>()?),
            _ => return Err(r.err(&format!("unknown kind {kind} with {ndim} dimensions"))),
        };
        if r.pos != body.len() {
            return Err(r.err("trailing bytes"));
        }
        Ok(blob)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Format(format!("{}: {msg}", self.what))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| self.err("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| self.err("length does not fit in memory"))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| self.err("invalid UTF-8"))
    }
}

/// Named sections, kept in name order so encoding is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    sections: BTreeMap<String, Blob>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, blob: Blob) -> &mut Self {
        self.sections.insert(name.into(), blob);
        self
    }

    pub fn put_f64(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> &mut Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.insert(name, Blob::F64 { shape: shape.to_vec(), data })
    }

    pub fn put_u64(&mut self, name: &str, data: Vec<u64>) -> &mut Self {
        self.insert(name, Blob::U64 { shape: vec![data.len()], data })
    }

    pub fn put_str(&mut self, name: &str, value: &str) -> &mut Self {
        self.insert(name, Blob::Strings(vec![value.to_owned()]))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&Blob> {
        self.sections.get(name).ok_or_else(|| Error::MissingSection(name.to_owned()))
    }

    pub fn f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.get(name)? {
            Blob::F64 { shape, data } => Ok((shape, data)),
            _ => Err(Error::Format(format!("section {name} is not a float array"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<&[u64]> {
        match self.get(name)? {
            Blob::U64 { data, .. } => Ok(data),
            _ => Err(Error::Format(format!("section {name} is not an integer array"))),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8]> {
        match self.get(name)? {
            Blob::Bytes(b) => Ok(b),
            _ => Err(Error::Format(format!("section {name} is not a byte blob"))),
        }
    }

    pub fn strings(&self, name: &str) -> Result<&[String]> {
        match self.get(name)? {
            Blob::Strings(s) => Ok(s),
            _ => Err(Error::Format(format!("section {name} is not a string list"))),
        }
    }

    pub fn str(&self, name: &str) -> Result<&str> {
        match self.strings(name)? {
            [s] => Ok(s),
            _ => Err(Error::Format(format!("section {name} should hold one string"))),
        }
    }

    /// A single scalar stored as a one-element `U64` array.
    pub fn scalar_u64(&self, name: &str) -> Result<u64> {
        match self.u64(name)? {
            [v] => Ok(*v),
            _ => Err(Error::Format(format!("section {name} should hold one integer"))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        self.encode_with_version(CONTAINER_MAJOR, CONTAINER_MINOR)
    }

    fn encode_with_version(&self, major: u16, minor: u16) -> Vec<u8> {
        let blobs: Vec<Vec<u8>> = self.sections.values().map(Blob::encode).collect();
        let table_len: usize = self.sections.keys().map(|n| 4 + n.len() + 16).sum();
        let mut offset = (12 + table_len + 4) as u64;
        let mut out = Vec::new();
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&major.to_le_bytes());
        out.extend_from_slice(&minor.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, blob) in self.sections.keys().zip(&blobs) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            offset += blob.len() as u64;
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        for b in blobs {
            out.extend_from_slice(&b);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0, what: "container" };
        if r.take(4).map_err(|_| Error::Format("container is truncated".into()))? != CONTAINER_MAGIC {
            return Err(Error::Format("not a model container (bad magic)".into()));
        }
        let (major, minor) = (r.u16()?, r.u16()?);
        if major != CONTAINER_MAJOR {
            return Err(Error::UnsupportedVersion { major, minor });
        }
        let count = r.u32()? as usize;
        let mut table = Vec::new();
        for _ in 0..count {
            let name = r.string()?;
            table.push((name, r.len()?, r.len()?));
        }
        let header_end = r.pos;
        let crc = r.u32()?;
        if crc32fast::hash(&bytes[..header_end]) != crc {
            return Err(Error::Checksum("container header".into()));
        }
        let mut sections = BTreeMap::new();
        for (name, offset, len) in table {
            let body = offset
                .checked_add(len)
                .filter(|end| *end <= bytes.len())
                .map(|end| &bytes[offset..end])
                .ok_or_else(|| Error::Format(format!("section {name} is truncated")))?;
            let blob = Blob::decode(&name, body)?;
            sections.insert(name, blob);
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
