//! The `TSCC` compressed file format.
//!
//! ```text
//! "TSCC" | u8 version | u8 predictor id | u32 config len | config
//!        | u64 original length | payload ... | u32 CRC-32 of the original bytes
//! ```
//!
//! Integers are little-endian. The payload has no length field; it runs up to the
//! trailing checksum.

use thiserror::Error;

use crate::codec::{decode_stream, encode_stream, CodeLengthAccount, CodecError};
use crate::predictors::{Predictor, PredictorError, PredictorSpec};

pub const MAGIC: &[u8; 4] = b"TSCC";
pub const VERSION: u8 = 1;
/// Smallest possible container: fixed header, empty config and payload, checksum.
pub const MIN_LEN: usize = 4 + 1 + 1 + 4 + 8 + 4;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("container truncated")]
    Truncated,
    #[error("CRC mismatch: stored {stored:08x}, decoded data has {actual:08x}")]
    CrcMismatch { stored: u32, actual: u32 },
    #[error("original length {0} does not fit in memory")]
    TooLong(u64),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub predictor_id: u8,
    pub config: Vec<u8>,
    pub original_len: u64,
    pub payload: Vec<u8>,
    pub crc32: u32,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MIN_LEN + self.config.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.predictor_id);
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.config);
        out.extend_from_slice(&self.original_len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.crc32.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 4 {
            return Err(ContainerError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        if bytes.len() < MIN_LEN {
            return Err(ContainerError::Truncated);
        }
        if bytes[4] != VERSION {
            return Err(ContainerError::UnsupportedVersion(bytes[4]));
        }
        let predictor_id = bytes[5];
        let config_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let rest = &bytes[10..];
        if rest.len() < config_len + 8 + 4 {
            return Err(ContainerError::Truncated);
        }
        let (config, rest) = rest.split_at(config_len);
        let original_len = u64::from_le_bytes(rest[..8].try_into().unwrap());
        let (payload, crc) = rest[8..].split_at(rest.len() - 8 - 4);
        Ok(Self {
            predictor_id,
            config: config.to_vec(),
            original_len,
            payload: payload.to_vec(),
            crc32: u32::from_le_bytes(crc.try_into().unwrap()),
        })
    }

    pub fn spec(&self) -> Result<PredictorSpec, PredictorError> {
        PredictorSpec::from_config(self.predictor_id, &self.config)
    }
}

/// Codes `data` with a freshly reset `predictor` and wraps the result.
pub fn compress(
    predictor: &mut dyn Predictor,
    data: &[u8],
) -> Result<(Container, CodeLengthAccount), ContainerError> {
    predictor.reset()?;
    let spec = predictor.spec();
    let encoded = encode_stream(predictor, data)?;
    let container = Container {
        predictor_id: spec.id(),
        config: spec.config_bytes(),
        original_len: data.len() as u64,
        payload: encoded.payload,
        crc32: crc32fast::hash(data),
    };
    Ok((container, encoded.account))
}

/// Decodes with `predictor`, which must match the container's predictor spec.
pub fn decompress_with(
    container: &Container,
    predictor: &mut dyn Predictor,
) -> Result<Vec<u8>, ContainerError> {
    let len = usize::try_from(container.original_len)
        .map_err(|_| ContainerError::TooLong(container.original_len))?;
    // the decoder allocates the output up front; a corrupt length must not abort
    if len as u64 > (container.payload.len() as u64 + 8) * 8 * 1024 * 1024 {
        return Err(ContainerError::Truncated);
    }
    predictor.reset()?;
    let data = decode_stream(predictor, &container.payload, len)?;
    let actual = crc32fast::hash(&data);
    if actual != container.crc32 {
        return Err(ContainerError::CrcMismatch {
            stored: container.crc32,
            actual,
        });
    }
    Ok(data)
}

/// Decodes a container whose predictor can be rebuilt from its header.
pub fn decompress(bytes: &[u8]) -> Result<Vec<u8>, ContainerError> {
    let container = Container::parse(bytes)?;
    let mut predictor = container.spec()?.build()?;
    decompress_with(&container, predictor.as_mut())
}
