//! Block codecs for posting lists: group-varint for document gaps and
//! fixed-width little-endian bit packing for quantized impacts.

/// Postings per block.
pub const BLOCK_LEN: usize = 128;

#[inline]
fn byte_len(v: u32) -> usize {
    match v {
        0..=0xFF => 1,
        0x100..=0xFFFF => 2,
        0x1_0000..=0xFF_FFFF => 3,
        _ => 4,
    }
}

/// Group-varint: each group of up to four values is one control byte (two
/// bits per value holding `len - 1`, first value in the low bits) followed by
/// the values' minimal little-endian bytes. A short final group leaves its
/// unused control fields zero.
pub fn group_varint_encode(values: &[u32], out: &mut Vec<u8>) {
    for group in values.chunks(4) {
        let control_at = out.len();
        out.push(0);
        let mut control = 0u8;
        for (i, &v) in group.iter().enumerate() {
            let len = byte_len(v);
            control |= ((len - 1) as u8) << (2 * i);
            out.extend_from_slice(&v.to_le_bytes()[..len]);
        }
        out[control_at] = control;
    }
}

/// Decodes exactly `count` values, returning them and the bytes consumed.
/// `None` if `data` ends early.
pub fn group_varint_decode(data: &[u8], count: usize) -> Option<(Vec<u32>, usize)> {
    let mut values = Vec::with_capacity(count);
    let mut pos = 0;
    while values.len() < count {
        let control = *data.get(pos)?;
        pos += 1;
        let in_group = (count - values.len()).min(4);
        for i in 0..in_group {
            let len = ((control >> (2 * i)) & 0b11) as usize + 1;
            let bytes = data.get(pos..pos + len)?;
            let mut buf = [0u8; 4];
            buf[..len].copy_from_slice(bytes);
            values.push(u32::from_le_bytes(buf));
            pos += len;
        }
    }
    Some((values, pos))
}

/// Packs `values` at `bits` (1..=32) bits each, LSB first; the final byte is
/// zero padded. Values must fit in `bits`.
pub fn bitpack(values: &[u32], bits: u32, out: &mut Vec<u8>) {
    debug_assert!((1..=32).contains(&bits));
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for &v in values {
        debug_assert!(bits == 32 || v >> bits == 0, "{v} does not fit in {bits} bits");
        acc |= (v as u64) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
}

pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

/// Inverse of [`bitpack`]; `None` if `data` is shorter than needed.
pub fn bitunpack(data: &[u8], count: usize, bits: u32) -> Option<Vec<u32>> {
    let need = packed_len(count, bits);
    let data = data.get(..need)?;
    let mask = if bits == 32 { u32::MAX as u64 } else { (1u64 << bits) - 1 };
    let mut values = Vec::with_capacity(count);
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    let mut bytes = data.iter();
    for _ in 0..count {
        while filled < bits {
            acc |= (*bytes.next()? as u64) << filled;
            filled += 8;
        }
        values.push((acc & mask) as u32);
        acc >>= bits;
        filled -= bits;
    }
    Some(values)
}
