use crate::error::{Error, Result};

/// A packed bit string. Bit `k` lives in byte `k / 8` at position `k % 8`
/// (least significant bit first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCode {
    pub image_id: String,
    bits: usize,
    bytes: Vec<u8>,
}

impl BinaryCode {
    pub fn from_bits(image_id: impl Into<String>, bits: &[bool]) -> Self {
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (k, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            bytes[k / 8] |= 1 << (k % 8);
        }
        Self { image_id: image_id.into(), bits: bits.len(), bytes }
    }

    /// Unused high bits of the last byte must be zero.
    pub fn from_packed(image_id: impl Into<String>, bits: usize, bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != bits.div_ceil(8) {
            return Err(Error::Format(format!("{} bytes cannot hold exactly {bits} bits", bytes.len())));
        }
        if !bits.is_multiple_of(8) && bytes[bytes.len() - 1] >> (bits % 8) != 0 {
            return Err(Error::Format("padding bits are set".into()));
        }
        Ok(Self { image_id: image_id.into(), bits, bytes })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, k: usize) -> bool {
        assert!(k < self.bits, "bit {k} out of range");
        self.bytes[k / 8] >> (k % 8) & 1 == 1
    }
}

pub fn hamming_distance(a: &BinaryCode, b: &BinaryCode) -> Result<u32> {
    if a.bits != b.bits {
        return Err(Error::DimensionMismatch { expected: a.bits, got: b.bits });
    }
    let mut ca = a.bytes.chunks_exact(8);
    let mut cb = b.bytes.chunks_exact(8);
    let mut dist: u32 = ca
        .by_ref()
        .zip(cb.by_ref())
        .map(|(x, y)| {
            let x = u64::from_le_bytes(x.try_into().unwrap());
            let y = u64::from_le_bytes(y.try_into().unwrap());
            (x ^ y).count_ones()
        })
        .sum();
    dist += ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x ^ y).count_ones()).sum::<u32>();
    Ok(dist)
}

/// Database entries by ascending distance; equal distances keep database order.
pub fn hamming_rank(query: &BinaryCode, db: &[BinaryCode]) -> Result<Vec<(String, u32)>> {
    let mut ranked = db
        .iter()
        .map(|c| Ok((c.image_id.clone(), hamming_distance(query, c)?)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by_key(|(_, d)| *d);
    Ok(ranked)
}
