//! Byte-oriented range coder with deferred carry propagation.
//!
//! The interval `[low, low + range)` lives in a 56-bit window of a 64-bit register;
//! bit 56 of `low` catches carries. After every symbol the range is renormalized
//! so that it never drops below [`RANGE_BOTTOM`], which leaves at least `2^32`
//! units of resolution for each step of a `2^16` table and keeps the truncation
//! loss per symbol under `2^-32` in relative width.

use super::table::{CumulativeTable, TOTAL};
use super::CodecError;

/// Active register width in bits.
pub const WINDOW_BITS: u32 = 56;
const TOP: u64 = 1 << WINDOW_BITS;
/// Renormalization threshold: `range >= RANGE_BOTTOM` holds between symbols.
pub const RANGE_BOTTOM: u64 = 1 << (WINDOW_BITS - 8);
const INITIAL_RANGE: u64 = TOP - 1;
const TABLE_SHIFT: u32 = TOTAL.trailing_zeros();

/// Encoder half of the coder state.
#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    /// Most recent settled byte, still open to a carry.
    cache: Option<u8>,
    /// 0xFF bytes queued behind `cache`.
    pending: u64,
    shifts: u64,
    out: Vec<u8>,
}

/// Output of [`RangeEncoder::finish`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedBits {
    /// Bitstream padded with zero bits to a byte boundary.
    pub bytes: Vec<u8>,
    /// Bits that carry information; `bytes.len() * 8 - bits` is padding.
    pub bits: u64,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: INITIAL_RANGE,
            cache: None,
            pending: 0,
            shifts: 0,
            out: Vec::new(),
        }
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    /// Bits settled so far (excluding the termination flush).
    pub fn bits_emitted(&self) -> u64 {
        self.shifts * 8
    }

    pub fn encode(&mut self, table: &CumulativeTable, symbol: u8) -> Result<(), CodecError> {
        let width = table.width(symbol) as u64;
        if width == 0 {
            return Err(CodecError::ZeroWidthSymbol(symbol));
        }
        let r = self.range >> TABLE_SHIFT;
        self.low += r * table.start(symbol) as u64;
        self.range = r * width;
        while self.range < RANGE_BOTTOM {
            self.shift_low();
            self.range <<= 8;
        }
        Ok(())
    }

    fn shift_low(&mut self) {
        if self.low < (0xFF << (WINDOW_BITS - 8)) || self.low >= TOP {
            let carry = (self.low >> WINDOW_BITS) as u8;
            match self.cache {
                Some(c) => self.out.push(c.wrapping_add(carry)),
                // the implicit leading byte of a value in [0, 1) is zero and never carries
                None => debug_assert_eq!(carry, 0),
            }
            for _ in 0..self.pending {
                self.out.push(0xFFu8.wrapping_add(carry));
            }
            self.pending = 0;
            self.cache = Some((self.low >> (WINDOW_BITS - 8)) as u8);
        } else {
            self.pending += 1;
        }
        self.low = (self.low & (RANGE_BOTTOM - 1)) << 8;
        self.shifts += 1;
    }

    /// Terminates the stream.
    ///
    /// Picks the point of `[low, low + range)` with the most trailing zero bits at
    /// granularity `2^floor(log2 range)` and emits only the bits above that
    /// granularity (between 1 and 8). A decoder reading past the end sees zeros,
    /// which reproduces the chosen point exactly.
    pub fn finish(mut self) -> EncodedBits {
        let align = 63 - self.range.leading_zeros();
        let mask = (1u64 << align) - 1;
        self.low = (self.low + mask) & !mask;
        let flush_bits = (WINDOW_BITS - align) as u64;
        let bits = self.shifts * 8 + flush_bits;
        self.shift_low();
        debug_assert!(self.low < TOP);
        if let Some(c) = self.cache {
            self.out.push(c);
        }
        for _ in 0..self.pending {
            self.out.push(0xFF);
        }
        EncodedBits {
            bytes: self.out,
            bits,
        }
    }
}

/// Decoder half of the coder state; mirrors [`RangeEncoder`] update for update.
#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    /// Offset of the code point from the encoder's `low`.
    code: u64,
    range: u64,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut dec = Self {
            code: 0,
            range: INITIAL_RANGE,
            input,
            pos: 0,
        };
        for _ in 0..WINDOW_BITS / 8 {
            dec.code = (dec.code << 8) | dec.next_byte() as u64;
        }
        dec
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    #[inline]
    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Position of the code point inside the table, in `[0, TOTAL)`.
    pub fn scaled_code_point(&self) -> u32 {
        let r = self.range >> TABLE_SHIFT;
        (self.code / r).min(TOTAL as u64 - 1) as u32
    }

    pub fn decode(&mut self, table: &CumulativeTable) -> u8 {
        let r = self.range >> TABLE_SHIFT;
        let point = (self.code / r).min(TOTAL as u64 - 1) as u32;
        let symbol = table.find(point);
        // a corrupted stream may point past the last interval; saturate instead of wrapping
        self.code = self.code.saturating_sub(r * table.start(symbol) as u64);
        self.range = r * table.width(symbol) as u64;
        while self.range < RANGE_BOTTOM {
            self.code = ((self.code << 8) | self.next_byte() as u64) & (TOP - 1);
            self.range <<= 8;
        }
        symbol
    }
}

#[cfg(test)]
mod tests {
    use super::super::table::{quantize, FrequencyVector};
    use super::*;

    #[test]
    fn certain_symbol_emits_nothing() {
        let mut q = [0u32; 256];
        q[42] = TOTAL;
        let table = CumulativeTable::from_quantized(&q).unwrap();
        let mut enc = RangeEncoder::new();
        let before = enc.bits_emitted();
        enc.encode(&table, 42).unwrap();
        assert_eq!(enc.bits_emitted(), before);
        assert!(enc.encode(&table, 41).is_err());
    }

    #[test]
    fn empty_stream_costs_at_most_one_byte() {
        let out = RangeEncoder::new().finish();
        assert!(out.bits <= 8);
        assert_eq!(out.bytes.len(), 1);
    }

    #[test]
    fn uniform_table_costs_eight_bits_per_symbol() {
        let table = quantize(&FrequencyVector::uniform());
        let data: Vec<u8> = (0..1000u32).map(|i| (i * 37 % 251) as u8).collect();
        let mut enc = RangeEncoder::new();
        for &b in &data {
            enc.encode(&table, b).unwrap();
        }
        let out = enc.finish();
        assert!(out.bits >= 8000 && out.bits <= 8000 + 8, "{}", out.bits);
        let mut dec = RangeDecoder::new(&out.bytes);
        for &b in &data {
            assert_eq!(dec.decode(&table), b);
        }
    }

    #[test]
    fn carry_through_pending_ff_bytes() {
        // a skewed table where the top symbol pushes low towards the window edge
        let mut counts = [1u32; 256];
        counts[255] = 60_000;
        let table = quantize(&FrequencyVector::new(counts).unwrap());
        let mut data = vec![255u8; 5000];
        data.extend((0..200).map(|i| (i % 7) as u8));
        data.extend(std::iter::repeat(255u8).take(3000));
        let mut enc = RangeEncoder::new();
        for &b in &data {
            enc.encode(&table, b).unwrap();
        }
        let out = enc.finish();
        let mut dec = RangeDecoder::new(&out.bytes);
        let back: Vec<u8> = data.iter().map(|_| dec.decode(&table)).collect();
        assert_eq!(back, data);
    }
}
