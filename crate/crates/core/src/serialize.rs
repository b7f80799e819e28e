//! Bijective mapping between multivariate float series and byte streams.
//!
//! Every element contributes its raw IEEE-754 bit pattern, so NaN payloads,
//! infinities and signed zeros survive a roundtrip unchanged. Elements are
//! visited in the order given by [`ScanOrder`] and each one is written with
//! the declared [`ByteOrder`].

use std::ops::Deref;

use half::f16;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SerializeError {
    #[error("byte length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid shape {steps}x{channels}: both dimensions must be at least 1")]
    InvalidShape { steps: usize, channels: usize },
    #[error("value count {values} does not match shape {steps}x{channels}")]
    ValueCount {
        steps: usize,
        channels: usize,
        values: usize,
    },
    #[error("unsupported sample width {0} (expected 2, 4 or 8)")]
    UnsupportedWidth(u8),
    #[error("malformed raw-float header: {0}")]
    BadHeader(&'static str),
}

/// A fixed-width floating point sample that can be moved to and from its bit pattern.
pub trait Sample: Copy + PartialEq + std::fmt::Debug + Send + Sync + 'static {
    /// Bytes per sample.
    const WIDTH: usize;

    fn to_raw(self) -> u64;
    fn from_raw(bits: u64) -> Self;
}

impl Sample for f32 {
    const WIDTH: usize = 4;

    fn to_raw(self) -> u64 {
        self.to_bits() as u64
    }

    fn from_raw(bits: u64) -> Self {
        f32::from_bits(bits as u32)
    }
}

impl Sample for f64 {
    const WIDTH: usize = 8;

    fn to_raw(self) -> u64 {
        self.to_bits()
    }

    fn from_raw(bits: u64) -> Self {
        f64::from_bits(bits)
    }
}

impl Sample for f16 {
    const WIDTH: usize = 2;

    fn to_raw(self) -> u64 {
        self.to_bits() as u64
    }

    fn from_raw(bits: u64) -> Self {
        f16::from_bits(bits as u16)
    }
}

/// Order in which tensor elements are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    /// All channels of step 0, then all channels of step 1, ...
    #[default]
    ChannelFirst,
    /// All steps of channel 0, then all steps of channel 1, ...
    TimeFirst,
}

impl ScanOrder {
    pub fn code(self) -> u8 {
        match self {
            ScanOrder::ChannelFirst => 0,
            ScanOrder::TimeFirst => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ScanOrder::ChannelFirst),
            1 => Some(ScanOrder::TimeFirst),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

impl ByteOrder {
    pub fn code(self) -> u8 {
        match self {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ByteOrder::Little),
            1 => Some(ByteOrder::Big),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, Hash)]
pub struct LayoutSpec {
    pub order: ScanOrder,
    pub byte_order: ByteOrder,
}

/// A `steps x channels` grid of samples, stored step-major (`values[t * channels + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTensor<T: Sample = f32> {
    steps: usize,
    channels: usize,
    values: Vec<T>,
}

impl<T: Sample> SeriesTensor<T> {
    pub fn new(steps: usize, channels: usize, values: Vec<T>) -> Result<Self, SerializeError> {
        if steps == 0 || channels == 0 {
            return Err(SerializeError::InvalidShape { steps, channels });
        }
        if values.len() != steps * channels {
            return Err(SerializeError::ValueCount {
                steps,
                channels,
                values: values.len(),
            });
        }
        Ok(Self {
            steps,
            channels,
            values,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, t: usize, c: usize) -> T {
        self.values[t * self.channels + c]
    }

    /// Bit-level equality; treats NaNs with identical payloads as equal.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.steps == other.steps
            && self.channels == other.channels
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_raw() == b.to_raw())
    }

    /// Index into `values` of the `i`-th element visited in `order`.
    fn scan_index(&self, order: ScanOrder, i: usize) -> usize {
        match order {
            ScanOrder::ChannelFirst => i,
            ScanOrder::TimeFirst => {
                let (c, t) = (i / self.steps, i % self.steps);
                t * self.channels + c
            }
        }
    }
}

/// Byte sequence over the 256-symbol alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct SymbolStream(Vec<u8>);

impl SymbolStream {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl Deref for SymbolStream {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for SymbolStream {
    fn from(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }
}

fn put_sample(out: &mut Vec<u8>, bits: u64, width: usize, byte_order: ByteOrder) {
    let le = bits.to_le_bytes();
    match byte_order {
        ByteOrder::Little => out.extend_from_slice(&le[..width]),
        ByteOrder::Big => out.extend(le[..width].iter().rev()),
    }
}

fn get_sample(chunk: &[u8], byte_order: ByteOrder) -> u64 {
    let mut le = [0u8; 8];
    match byte_order {
        ByteOrder::Little => le[..chunk.len()].copy_from_slice(chunk),
        ByteOrder::Big => {
            for (dst, src) in le.iter_mut().zip(chunk.iter().rev()) {
                *dst = *src;
            }
        }
    }
    u64::from_le_bytes(le)
}

/// Serializes `x` into `T * d * WIDTH` bytes.
pub fn encode_series<T: Sample>(x: &SeriesTensor<T>, layout: LayoutSpec) -> SymbolStream {
    let n = x.values.len();
    let mut out = Vec::with_capacity(n * T::WIDTH);
    for i in 0..n {
        let v = x.values[x.scan_index(layout.order, i)];
        put_sample(&mut out, v.to_raw(), T::WIDTH, layout.byte_order);
    }
    SymbolStream(out)
}

pub fn decode_series<T: Sample>(
    s: &[u8],
    steps: usize,
    channels: usize,
    layout: LayoutSpec,
) -> Result<SeriesTensor<T>, SerializeError> {
    if steps == 0 || channels == 0 {
        return Err(SerializeError::InvalidShape { steps, channels });
    }
    let expected = steps
        .checked_mul(channels)
        .and_then(|n| n.checked_mul(T::WIDTH))
        .ok_or(SerializeError::InvalidShape { steps, channels })?;
    if s.len() != expected {
        return Err(SerializeError::LengthMismatch {
            expected,
            actual: s.len(),
        });
    }
    let n = steps * channels;
    let mut values = vec![T::from_raw(0); n];
    let shape = SeriesTensor::<T> {
        steps,
        channels,
        values: Vec::new(),
    };
    for (i, chunk) in s.chunks_exact(T::WIDTH).enumerate() {
        values[shape.scan_index(layout.order, i)] = T::from_raw(get_sample(chunk, layout.byte_order));
    }
    Ok(SeriesTensor {
        steps,
        channels,
        values,
    })
}

/// Length in bytes of a raw-float file header.
pub const RAW_HEADER_LEN: usize = 16;
pub const RAW_MAGIC: &[u8; 4] = b"TSRF";
pub const RAW_VERSION: u8 = 1;

/// Self-describing header for raw-float files. Multi-byte fields are little-endian
/// regardless of the payload byte order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawFloatHeader {
    pub width: u8,
    pub layout: LayoutSpec,
    pub steps: u32,
    pub channels: u32,
}

impl RawFloatHeader {
    pub fn to_bytes(&self) -> [u8; RAW_HEADER_LEN] {
        let mut out = [0u8; RAW_HEADER_LEN];
        out[..4].copy_from_slice(RAW_MAGIC);
        out[4] = RAW_VERSION;
        out[5] = self.width;
        out[6] = self.layout.order.code();
        out[7] = self.layout.byte_order.code();
        out[8..12].copy_from_slice(&self.steps.to_le_bytes());
        out[12..16].copy_from_slice(&self.channels.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, SerializeError> {
        if bytes.len() < RAW_HEADER_LEN {
            return Err(SerializeError::BadHeader("truncated"));
        }
        if &bytes[..4] != RAW_MAGIC {
            return Err(SerializeError::BadHeader("bad magic"));
        }
        if bytes[4] != RAW_VERSION {
            return Err(SerializeError::BadHeader("unsupported version"));
        }
        let width = bytes[5];
        if !matches!(width, 2 | 4 | 8) {
            return Err(SerializeError::UnsupportedWidth(width));
        }
        let order = ScanOrder::from_code(bytes[6]).ok_or(SerializeError::BadHeader("bad order"))?;
        let byte_order =
            ByteOrder::from_code(bytes[7]).ok_or(SerializeError::BadHeader("bad byte order"))?;
        let steps = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let channels = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        Ok(Self {
            width,
            layout: LayoutSpec { order, byte_order },
            steps,
            channels,
        })
    }

    pub fn payload_len(&self) -> usize {
        self.steps as usize * self.channels as usize * self.width as usize
    }
}

/// Header followed by the serialized payload.
pub fn write_raw_file<T: Sample>(x: &SeriesTensor<T>, layout: LayoutSpec) -> Vec<u8> {
    let header = RawFloatHeader {
        width: T::WIDTH as u8,
        layout,
        steps: x.steps as u32,
        channels: x.channels as u32,
    };
    let mut out = header.to_bytes().to_vec();
    out.extend_from_slice(&encode_series(x, layout));
    out
}

/// Splits a raw-float file into its header and payload, checking the payload length.
pub fn read_raw_file(bytes: &[u8]) -> Result<(RawFloatHeader, &[u8]), SerializeError> {
    let header = RawFloatHeader::parse(bytes)?;
    let payload = &bytes[RAW_HEADER_LEN..];
    if payload.len() != header.payload_len() {
        return Err(SerializeError::LengthMismatch {
            expected: header.payload_len(),
            actual: payload.len(),
        });
    }
    Ok((header, payload))
}
