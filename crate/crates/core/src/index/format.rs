//! Little-endian on-disk layout:
//!
//! ```text
//! header   "SPHT" version:u32 vocab_size:u32 doc_count:u32 bits:u8 global_max:f64
//! docs     doc_count × (id_len:u32 id:bytes nnz:u32)
//! lists    list_count:u32, then per list in token order:
//!          token:u32 length:u32 max_weight:f64
//!          ceil(length/128) × (block_bytes:u32 gaps:group-varint impacts)
//! ```
//!
//! Gaps are taken from the previous document in the list (the first from 0).
//! Impacts are bit packed at `bits` width, or raw `f64` when `bits == 0`.
//! Encoding is canonical: one index has exactly one byte representation.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::vector::TokenId;

use super::codec::{bitpack, bitunpack, group_varint_decode, group_varint_encode, packed_len, BLOCK_LEN};
use super::{DocEntry, InvertedIndex, PostingList, QuantizationSpec};

pub const MAGIC: [u8; 4] = *b"SPHT";
pub const FORMAT_VERSION: u32 = 1;

fn encode(index: &InvertedIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&index.vocab_size.to_le_bytes());
    out.extend_from_slice(&(index.docs.len() as u32).to_le_bytes());
    out.push(index.quant.bits);
    out.extend_from_slice(&index.quant.global_max.to_le_bytes());

    for d in &index.docs {
        out.extend_from_slice(&(d.id.len() as u32).to_le_bytes());
        out.extend_from_slice(d.id.as_bytes());
        out.extend_from_slice(&d.nnz.to_le_bytes());
    }

    out.extend_from_slice(&(index.lists.len() as u32).to_le_bytes());
    let bits = index.quant.bits as u32;
    let mut block = Vec::new();
    let mut gaps = Vec::with_capacity(BLOCK_LEN);
    for list in &index.lists {
        out.extend_from_slice(&list.token.0.to_le_bytes());
        out.extend_from_slice(&(list.len() as u32).to_le_bytes());
        out.extend_from_slice(&list.max_weight.to_le_bytes());
        let mut prev = 0u32;
        for start in (0..list.len()).step_by(BLOCK_LEN) {
            let end = (start + BLOCK_LEN).min(list.len());
            gaps.clear();
            for &d in &list.docs[start..end] {
                gaps.push(d - prev);
                prev = d;
            }
            block.clear();
            group_varint_encode(&gaps, &mut block);
            if bits == 0 {
                for w in &list.weights[start..end] {
                    block.extend_from_slice(&w.to_le_bytes());
                }
            } else {
                bitpack(&list.impacts[start..end], bits, &mut block);
            }
            out.extend_from_slice(&(block.len() as u32).to_le_bytes());
            out.extend_from_slice(&block);
        }
    }
    out
}

pub fn write_to(index: &InvertedIndex, w: &mut dyn Write) -> io::Result<()> {
    w.write_all(&encode(index))
}

/// Writes atomically: the file at `path` is either the old one or complete.
pub fn write(index: &InvertedIndex, path: &Path) -> Result<()> {
    let bytes = encode(index);
    atomic_write(path, |w| w.write_all(&bytes))?;
    Ok(())
}

/// Bytes [`write`] would produce.
pub fn serialized_size(index: &InvertedIndex) -> u64 {
    encode(index).len() as u64
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        match end {
            Some(end) => {
                let s = &self.data[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "{what} at byte {} needs {n} bytes, {} left",
                self.pos,
                self.data.len() - self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn decode(data: &[u8]) -> Result<InvertedIndex> {
    let mut c = Cursor { data, pos: 0 };
    let magic: [u8; 4] = c.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::BadVersion(version));
    }
    let vocab_size = c.u32("vocab size")?;
    let doc_count = c.u32("doc count")?;
    let bits = c.u8("bits")?;
    let global_max = c.f64("global max")?;
    let quant = QuantizationSpec::new(bits, global_max).map_err(|e| Error::Corrupt(e.to_string()))?;

    let mut docs = Vec::with_capacity((doc_count as usize).min(data.len()));
    for i in 0..doc_count {
        let len = c.u32("doc id length")? as usize;
        let id = std::str::from_utf8(c.take(len, "doc id")?)
            .map_err(|_| Error::Corrupt(format!("doc {i} id is not UTF-8")))?
            .to_owned();
        let nnz = c.u32("doc nnz")?;
        docs.push(DocEntry { id, nnz });
    }

    let list_count = c.u32("list count")?;
    let bits32 = bits as u32;
    let mut lists = Vec::with_capacity((list_count as usize).min(data.len()));
    for _ in 0..list_count {
        let token = TokenId(c.u32("list token")?);
        let length = c.u32("list length")? as usize;
        let max_weight = c.f64("list max weight")?;
        let mut list = PostingList {
            token,
            docs: Vec::with_capacity(length.min(data.len())),
            impacts: Vec::new(),
            weights: Vec::with_capacity(length.min(data.len())),
            max_weight,
        };
        let mut prev = 0u32;
        let mut remaining = length;
        while remaining > 0 {
            let n = remaining.min(BLOCK_LEN);
            let block_len = c.u32("block length")? as usize;
            let block = c.take(block_len, "block")?;
            let (gaps, used) = group_varint_decode(block, n)
                .ok_or_else(|| Error::Corrupt(format!("short gap block in list {token}")))?;
            for (i, g) in gaps.into_iter().enumerate() {
                let first = list.docs.is_empty() && i == 0;
                if !first && g == 0 {
                    return Err(Error::Corrupt(format!("zero gap in list {token}")));
                }
                prev = prev
                    .checked_add(g)
                    .ok_or_else(|| Error::Corrupt(format!("doc ordinal overflow in list {token}")))?;
                list.docs.push(prev);
            }
            let rest = &block[used..];
            let expected = if bits32 == 0 { n * 8 } else { packed_len(n, bits32) };
            if rest.len() != expected {
                return Err(Error::Corrupt(format!(
                    "block in list {token} has {} impact bytes, expected {expected}",
                    rest.len()
                )));
            }
            if bits32 == 0 {
                for chunk in rest.chunks_exact(8) {
                    list.weights.push(f64::from_le_bytes(chunk.try_into().unwrap()));
                }
            } else {
                let impacts = bitunpack(rest, n, bits32).expect("length checked above");
                for q in impacts {
                    if q > quant.levels() {
                        return Err(Error::Corrupt(format!("impact {q} out of range in list {token}")));
                    }
                    list.weights.push(quant.dequantize(q));
                    list.impacts.push(q);
                }
            }
            remaining -= n;
        }
        lists.push(list);
    }
    if c.pos != data.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after last list",
            data.len() - c.pos
        )));
    }
    InvertedIndex::from_parts(vocab_size, lists, docs, quant)
}

pub fn read_from(r: &mut dyn Read) -> Result<InvertedIndex> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    decode(&data)
}

pub fn read(path: &Path) -> Result<InvertedIndex> {
    let data = std::fs::read(path)?;
    decode(&data)
}
