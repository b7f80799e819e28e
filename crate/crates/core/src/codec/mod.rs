//! Fixed-precision arithmetic coding driven by per-symbol frequency vectors.

mod range;
mod stream;
mod table;

use thiserror::Error;

use crate::predictors::PredictorError;

pub use range::{EncodedBits, RangeDecoder, RangeEncoder, RANGE_BOTTOM, WINDOW_BITS};
pub use stream::{
    code_length_account, decode_stream, encode_stream, replay, CodeLengthAccount, EncodedStream,
    SymbolCost,
};
pub use table::{quantize, CumulativeTable, FrequencyVector, ALPHABET, MAX_FREQ_TOTAL, TOTAL};

/// Upper bound on `emitted_bits - nll_quantized_bits` for any stream.
pub const TERMINATION_BUDGET_BITS: u64 = 48;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frequency total {total} outside [1, 2^30]")]
    InvalidFrequencies { total: u64 },
    #[error("quantized counts sum to {sum}, expected {TOTAL}")]
    TableSum { sum: u64 },
    #[error("symbol {0} has an empty interval and cannot be encoded")]
    ZeroWidthSymbol(u8),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}
