//! Adaptive order-0 arithmetic coder over bytes.
//!
//! Stream format:
//! - 257-symbol alphabet: bytes 0..=255 plus an end-of-stream symbol (256).
//! - Every frequency starts at 1; the coded symbol's count grows by 32 after
//!   each symbol. When the total reaches 2^16 all counts are halved
//!   (rounding up, so none drops to zero).
//! - 32-bit low/high registers with the usual E1/E2/E3 renormalization and
//!   pending-bit carry handling.
//! - After the end symbol the encoder emits one more disambiguating bit plus
//!   pending bits. Bits are packed MSB-first; the last byte is zero-padded.
//!
//! Because the stream length is fully determined by the symbols coded, the
//! decoder rejects any stream whose byte length or padding disagrees with the
//! position at which it found the end symbol.

use crate::error::{Error, Result};

const NUM_SYMBOLS: usize = 257;
const EOS: usize = 256;
const INCREMENT: u32 = 32;
const MAX_TOTAL: u32 = 1 << 16;
/// Largest accepted input, in bytes.
pub const MAX_INPUT: usize = (1 << 16) - 1;

const TOP: u64 = (1 << 32) - 1;
const HALF: u64 = 1 << 31;
const QUARTER: u64 = 1 << 30;

#[derive(Debug, Clone)]
struct AdaptiveByteModel {
    freq: [u32; NUM_SYMBOLS],
    total: u32,
}

impl AdaptiveByteModel {
    fn new() -> Self {
        AdaptiveByteModel {
            freq: [1; NUM_SYMBOLS],
            total: NUM_SYMBOLS as u32,
        }
    }

    /// Cumulative range `[lo, hi)` of `sym`.
    fn range(&self, sym: usize) -> (u32, u32) {
        let lo: u32 = self.freq[..sym].iter().sum();
        (lo, lo + self.freq[sym])
    }

    /// Symbol whose cumulative range contains `target`, with its range.
    fn find(&self, target: u32) -> (usize, u32, u32) {
        let mut lo = 0;
        for (sym, &f) in self.freq.iter().enumerate() {
            if target < lo + f {
                return (sym, lo, lo + f);
            }
            lo += f;
        }
        unreachable!("target {target} beyond total {}", self.total)
    }

    fn update(&mut self, sym: usize) {
        self.freq[sym] += INCREMENT;
        self.total += INCREMENT;
        if self.total >= MAX_TOTAL {
            self.total = 0;
            for f in self.freq.iter_mut() {
                *f = (*f + 1) / 2;
                self.total += *f;
            }
        }
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    nbits: usize,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        if self.nbits % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.nbits % 8);
        }
        self.nbits += 1;
    }

    fn push_with_pending(&mut self, bit: bool, pending: &mut u64) {
        self.push(bit);
        for _ in 0..*pending {
            self.push(!bit);
        }
        *pending = 0;
    }
}

/// Compresses `text`; the result is a packed bit string.
pub fn ac_encode(text: &[u8]) -> Result<Vec<u8>> {
    if text.len() > MAX_INPUT {
        return Err(Error::Frame(format!(
            "input of {} bytes exceeds the {MAX_INPUT}-byte limit",
            text.len()
        )));
    }
    let mut model = AdaptiveByteModel::new();
    let mut out = BitWriter::default();
    let (mut low, mut high, mut pending) = (0u64, TOP, 0u64);
    for sym in text.iter().map(|&b| b as usize).chain(std::iter::once(EOS)) {
        let (lo, hi) = model.range(sym);
        let range = high - low + 1;
        let total = model.total as u64;
        high = low + range * hi as u64 / total - 1;
        low += range * lo as u64 / total;
        loop {
            if high < HALF {
                out.push_with_pending(false, &mut pending);
            } else if low >= HALF {
                out.push_with_pending(true, &mut pending);
                low -= HALF;
                high -= HALF;
            } else if low >= QUARTER && high < HALF + QUARTER {
                pending += 1;
                low -= QUARTER;
                high -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
        }
        model.update(sym);
    }
    pending += 1;
    out.push_with_pending(low >= QUARTER, &mut pending);
    Ok(out.bytes)
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn next(&mut self) -> u64 {
        let bit = self
            .bytes
            .get(self.pos / 8)
            .map_or(0, |b| (b >> (7 - self.pos % 8)) & 1);
        self.pos += 1;
        bit as u64
    }
}

/// Inverse of [`ac_encode`]. Malformed or truncated streams are rejected.
pub fn ac_decode(bits: &[u8]) -> Result<Vec<u8>> {
    let mut model = AdaptiveByteModel::new();
    let mut reader = BitReader { bytes: bits, pos: 0 };
    let mut value = 0u64;
    for _ in 0..32 {
        value = (value << 1) | reader.next();
    }
    let (mut low, mut high) = (0u64, TOP);
    let mut shifts = 0usize;
    let mut out = Vec::new();
    loop {
        if value < low || value > high {
            return Err(Error::Decode("code value left the coding interval".into()));
        }
        let range = high - low + 1;
        let total = model.total as u64;
        let target = ((value - low + 1) * total - 1) / range;
        let (sym, lo, hi) = model.find(target as u32);
        high = low + range * hi as u64 / total - 1;
        low += range * lo as u64 / total;
        loop {
            if high < HALF {
            } else if low >= HALF {
                low -= HALF;
                high -= HALF;
                value -= HALF;
            } else if low >= QUARTER && high < HALF + QUARTER {
                low -= QUARTER;
                high -= QUARTER;
                value -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
            value = (value << 1) | reader.next();
            shifts += 1;
            if shifts > 8 * bits.len() + 8 {
                return Err(Error::Decode("stream ended before end-of-stream symbol".into()));
            }
        }
        if sym == EOS {
            break;
        }
        if out.len() == MAX_INPUT {
            return Err(Error::Decode("decoded output exceeds size limit".into()));
        }
        out.push(sym as u8);
        model.update(sym);
    }
    let used_bits = shifts + 2;
    if bits.len() != used_bits.div_ceil(8) {
        return Err(Error::Decode(format!(
            "stream length {} bytes does not match the {used_bits} coded bits",
            bits.len()
        )));
    }
    if used_bits % 8 != 0 {
        let mask = 0xffu8 >> (used_bits % 8);
        if bits[bits.len() - 1] & mask != 0 {
            return Err(Error::Decode("nonzero padding bits".into()));
        }
    }
    Ok(out)
}
