//! The predictor contract and the built-in statistical predictors.
//!
//! A predictor is a deterministic state machine over the byte prefix seen so far.
//! The encoder and decoder each run their own instance; both must produce the same
//! [`FrequencyVector`] after the same sequence of [`Predictor::observe`] calls, or the
//! decoder will diverge.

mod context;
mod histogram;
mod order0;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bridge::BridgeError;
use crate::codec::FrequencyVector;

pub use context::{ContextModel, ContextModelConfig, CONTEXT_SLOTS, MAX_CONTEXTS, MAX_ORDER};
pub use histogram::StaticHistogram;
pub use order0::AdaptiveOrder0;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("invalid predictor configuration: {0}")]
    InvalidConfig(String),
    #[error("static histogram needs a non-empty training stream")]
    EmptyTraining,
    #[error("unknown predictor id {0}")]
    UnknownId(u8),
    #[error("predictor id {0} cannot be built in-process")]
    NotInProcess(u8),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

/// Next-byte model driving the coder.
pub trait Predictor: Send {
    /// Writes the distribution of the next symbol into `out`.
    ///
    /// In-process predictors never change state here; only `observe` does.
    fn predict(&mut self, out: &mut FrequencyVector) -> Result<(), PredictorError>;

    fn observe(&mut self, symbol: u8) -> Result<(), PredictorError>;

    /// Returns to the state right after construction.
    fn reset(&mut self) -> Result<(), PredictorError>;

    /// Registry identity written into container headers.
    fn spec(&self) -> PredictorSpec;
}

/// Laplace pseudo-count `num / den`, added to every symbol count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alpha {
    pub num: u32,
    pub den: u32,
}

impl Default for Alpha {
    fn default() -> Self {
        Self::ONE
    }
}

impl Alpha {
    pub const ONE: Alpha = Alpha { num: 1, den: 1 };
    pub const HALF: Alpha = Alpha { num: 1, den: 2 };

    pub fn new(num: u32, den: u32) -> Result<Self, PredictorError> {
        if num == 0 || den == 0 {
            return Err(PredictorError::InvalidConfig(format!(
                "pseudo-count {num}/{den} must be positive"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Count scaled onto the integer grid `count * den + num`.
    #[inline]
    pub(crate) fn smooth(self, count: u32) -> u64 {
        count as u64 * self.den as u64 + self.num as u64
    }

    fn to_bytes(self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[..4].copy_from_slice(&self.num.to_le_bytes());
        out[4..].copy_from_slice(&self.den.to_le_bytes());
        out
    }

    fn parse(bytes: &[u8]) -> Result<Self, PredictorError> {
        if bytes.len() != 8 {
            return Err(PredictorError::InvalidConfig("pseudo-count needs 8 bytes".into()));
        }
        Self::new(
            u32::from_le_bytes(bytes[..4].try_into().unwrap()),
            u32::from_le_bytes(bytes[4..].try_into().unwrap()),
        )
    }
}

impl std::str::FromStr for Alpha {
    type Err = PredictorError;

    /// Accepts `"1"`, `"3/2"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PredictorError::InvalidConfig(format!("cannot parse pseudo-count {s:?}"));
        match s.split_once('/') {
            Some((n, d)) => Alpha::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => Alpha::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

pub const ID_UNIFORM: u8 = 0;
pub const ID_ADAPTIVE_ORDER0: u8 = 1;
pub const ID_CONTEXT_MODEL: u8 = 2;
pub const ID_STATIC_HISTOGRAM: u8 = 3;
pub const ID_BRIDGE: u8 = 255;

/// Registry entry: predictor id plus its configuration.
///
/// Config byte layouts (all integers little-endian):
///
/// | id  | predictor        | config                                   |
/// |-----|------------------|------------------------------------------|
/// | 0   | uniform          | empty                                    |
/// | 1   | adaptive order-0 | `u32 alpha_num, u32 alpha_den`           |
/// | 2   | context model    | `u8 order, u32 alpha_num, u32 alpha_den` |
/// | 3   | static histogram | `256 x u32` counts                       |
/// | 255 | external bridge  | `u16 protocol version`, UTF-8 model name |
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorSpec {
    Uniform,
    AdaptiveOrder0 { alpha: Alpha },
    ContextModel(ContextModelConfig),
    StaticHistogram { counts: Box<[u32; 256]> },
    Bridge { version: u16, model: String },
}

impl PredictorSpec {
    pub fn id(&self) -> u8 {
        match self {
            PredictorSpec::Uniform => ID_UNIFORM,
            PredictorSpec::AdaptiveOrder0 { .. } => ID_ADAPTIVE_ORDER0,
            PredictorSpec::ContextModel(_) => ID_CONTEXT_MODEL,
            PredictorSpec::StaticHistogram { .. } => ID_STATIC_HISTOGRAM,
            PredictorSpec::Bridge { .. } => ID_BRIDGE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PredictorSpec::Uniform => "uniform",
            PredictorSpec::AdaptiveOrder0 { .. } => "order0",
            PredictorSpec::ContextModel(_) => "context",
            PredictorSpec::StaticHistogram { .. } => "static",
            PredictorSpec::Bridge { .. } => "bridge",
        }
    }

    pub fn config_bytes(&self) -> Vec<u8> {
        match self {
            PredictorSpec::Uniform => Vec::new(),
            PredictorSpec::AdaptiveOrder0 { alpha } => alpha.to_bytes().to_vec(),
            PredictorSpec::ContextModel(cfg) => {
                let mut out = vec![cfg.order];
                out.extend_from_slice(&cfg.alpha.to_bytes());
                out
            }
            PredictorSpec::StaticHistogram { counts } => {
                counts.iter().flat_map(|c| c.to_le_bytes()).collect()
            }
            PredictorSpec::Bridge { version, model } => {
                let mut out = version.to_le_bytes().to_vec();
                out.extend_from_slice(model.as_bytes());
                out
            }
        }
    }

    pub fn from_config(id: u8, config: &[u8]) -> Result<Self, PredictorError> {
        match id {
            ID_UNIFORM => {
                if !config.is_empty() {
                    return Err(PredictorError::InvalidConfig(
                        "uniform predictor takes no config".into(),
                    ));
                }
                Ok(PredictorSpec::Uniform)
            }
            ID_ADAPTIVE_ORDER0 => Ok(PredictorSpec::AdaptiveOrder0 {
                alpha: Alpha::parse(config)?,
            }),
            ID_CONTEXT_MODEL => {
                if config.len() != 9 {
                    return Err(PredictorError::InvalidConfig(
                        "context model config needs 9 bytes".into(),
                    ));
                }
                let cfg = ContextModelConfig::new(config[0], Alpha::parse(&config[1..])?)?;
                Ok(PredictorSpec::ContextModel(cfg))
            }
            ID_STATIC_HISTOGRAM => {
                if config.len() != 1024 {
                    return Err(PredictorError::InvalidConfig(
                        "static histogram config needs 1024 bytes".into(),
                    ));
                }
                let mut counts = Box::new([0u32; 256]);
                for (c, chunk) in counts.iter_mut().zip(config.chunks_exact(4)) {
                    *c = u32::from_le_bytes(chunk.try_into().unwrap());
                }
                if counts.iter().all(|&c| c == 0) {
                    return Err(PredictorError::EmptyTraining);
                }
                Ok(PredictorSpec::StaticHistogram { counts })
            }
            ID_BRIDGE => {
                if config.len() < 2 {
                    return Err(PredictorError::InvalidConfig(
                        "bridge config needs a version".into(),
                    ));
                }
                let version = u16::from_le_bytes([config[0], config[1]]);
                let model = String::from_utf8(config[2..].to_vec())
                    .map_err(|_| PredictorError::InvalidConfig("bridge model name".into()))?;
                Ok(PredictorSpec::Bridge { version, model })
            }
            other => Err(PredictorError::UnknownId(other)),
        }
    }

    /// Instantiates an in-process predictor. Bridge specs need a live session instead.
    pub fn build(&self) -> Result<Box<dyn Predictor>, PredictorError> {
        Ok(match self {
            PredictorSpec::Uniform => Box::new(Uniform),
            PredictorSpec::AdaptiveOrder0 { alpha } => Box::new(AdaptiveOrder0::new(*alpha)),
            PredictorSpec::ContextModel(cfg) => Box::new(ContextModel::new(*cfg)),
            PredictorSpec::StaticHistogram { counts } => {
                Box::new(StaticHistogram::from_counts(**counts)?)
            }
            PredictorSpec::Bridge { .. } => return Err(PredictorError::NotInProcess(ID_BRIDGE)),
        })
    }

    /// Bytes charged to the compressed length for shipping the model itself.
    pub fn model_charge_bytes(&self) -> u64 {
        match self {
            PredictorSpec::StaticHistogram { .. } => 1024,
            _ => 0,
        }
    }

    /// Hex SHA-256 over the id byte followed by the config bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update([self.id()]);
        h.update(self.config_bytes());
        hex::encode(h.finalize())
    }
}

/// Predicts the uniform distribution regardless of history.
#[derive(Debug, Clone, Copy, Default)]
pub struct Uniform;

impl Predictor for Uniform {
    fn predict(&mut self, out: &mut FrequencyVector) -> Result<(), PredictorError> {
        out.counts_mut().fill(1);
        Ok(())
    }

    fn observe(&mut self, _symbol: u8) -> Result<(), PredictorError> {
        Ok(())
    }

    fn reset(&mut self) -> Result<(), PredictorError> {
        Ok(())
    }

    fn spec(&self) -> PredictorSpec {
        PredictorSpec::Uniform
    }
}
