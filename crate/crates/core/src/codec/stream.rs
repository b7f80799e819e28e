//! Drives the range coder from a [`Predictor`], one symbol at a time.

use serde::{Deserialize, Serialize};

use super::range::{RangeDecoder, RangeEncoder};
use super::table::{quantize, CumulativeTable, FrequencyVector};
use super::CodecError;
use crate::predictors::Predictor;

/// Ideal and actual code lengths of one coded stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CodeLengthAccount {
    pub symbols: u64,
    /// `sum -log2(count_s / total)` under the predictor's own distribution.
    pub nll_model_bits: f64,
    /// `sum -log2(q_s / TOTAL)` under the quantized table the coder used.
    pub nll_quantized_bits: f64,
    /// Length of the real bitstream; absent for replay-only accounts.
    pub emitted_bits: Option<u64>,
}

impl CodeLengthAccount {
    /// `emitted_bits - nll_quantized_bits`, when a bitstream exists.
    pub fn coding_gap_bits(&self) -> Option<f64> {
        self.emitted_bits.map(|e| e as f64 - self.nll_quantized_bits)
    }

    fn add(&mut self, model_p: f64, q: f64) {
        self.symbols += 1;
        self.nll_model_bits -= model_p.log2();
        self.nll_quantized_bits -= q.log2();
    }
}

/// Validated, quantized form of the last frequency vector seen.
///
/// Static and uniform predictors hand back the same counts on every step, so the
/// quantizer only runs when the counts actually change.
struct TableCache {
    counts: Option<FrequencyVector>,
    total: u64,
    table: CumulativeTable,
}

impl TableCache {
    fn new() -> Self {
        Self {
            counts: None,
            total: 0,
            table: CumulativeTable::from_quantized(&[super::table::TOTAL / 256; 256])
                .expect("flat table is valid"),
        }
    }

    fn update(&mut self, fv: &FrequencyVector) -> Result<&CumulativeTable, CodecError> {
        if self.counts.as_ref() != Some(fv) {
            fv.validate()?;
            self.total = fv.total();
            self.table = quantize(fv);
            self.counts = Some(fv.clone());
        }
        Ok(&self.table)
    }

    fn model_probability(&self, symbol: u8) -> f64 {
        let counts = self.counts.as_ref().expect("update called first");
        counts.counts()[symbol as usize] as f64 / self.total as f64
    }
}

#[derive(Debug, Clone)]
pub struct EncodedStream {
    /// Bitstream padded to a byte boundary.
    pub payload: Vec<u8>,
    pub account: CodeLengthAccount,
}

/// Per-symbol cost record handed to [`replay`] callbacks.
#[derive(Debug, Clone, Copy)]
pub struct SymbolCost {
    pub position: usize,
    pub symbol: u8,
    pub model_bits: f64,
    pub quantized_bits: f64,
}

/// Feeds `data` through the predictor without coding, reporting each symbol's cost.
pub fn replay<F>(predictor: &mut dyn Predictor, data: &[u8], mut f: F) -> Result<(), CodecError>
where
    F: FnMut(SymbolCost),
{
    let mut fv = FrequencyVector::zeroed();
    let mut cache = TableCache::new();
    for (position, &symbol) in data.iter().enumerate() {
        predictor.predict(&mut fv)?;
        let quantized_bits = -cache.update(&fv)?.probability(symbol).log2();
        f(SymbolCost {
            position,
            symbol,
            model_bits: -cache.model_probability(symbol).log2(),
            quantized_bits,
        });
        predictor.observe(symbol)?;
    }
    Ok(())
}

/// Replays the predictor over `data` and sums the ideal code lengths.
pub fn code_length_account(
    predictor: &mut dyn Predictor,
    data: &[u8],
) -> Result<CodeLengthAccount, CodecError> {
    let mut account = CodeLengthAccount::default();
    replay(predictor, data, |c| {
        account.symbols += 1;
        account.nll_model_bits += c.model_bits;
        account.nll_quantized_bits += c.quantized_bits;
    })?;
    Ok(account)
}

pub fn encode_stream(
    predictor: &mut dyn Predictor,
    data: &[u8],
) -> Result<EncodedStream, CodecError> {
    let mut enc = RangeEncoder::new();
    let mut account = CodeLengthAccount::default();
    let mut fv = FrequencyVector::zeroed();
    let mut cache = TableCache::new();
    for &symbol in data {
        predictor.predict(&mut fv)?;
        let table = cache.update(&fv)?;
        enc.encode(table, symbol)?;
        let q = table.probability(symbol);
        account.add(cache.model_probability(symbol), q);
        predictor.observe(symbol)?;
    }
    let out = enc.finish();
    account.emitted_bits = Some(out.bits);
    Ok(EncodedStream {
        payload: out.bytes,
        account,
    })
}

/// Decodes `len` symbols. The predictor must start in the same state the encoder's did.
pub fn decode_stream(
    predictor: &mut dyn Predictor,
    payload: &[u8],
    len: usize,
) -> Result<Vec<u8>, CodecError> {
    let mut dec = RangeDecoder::new(payload);
    let mut out = Vec::with_capacity(len);
    let mut fv = FrequencyVector::zeroed();
    let mut cache = TableCache::new();
    for _ in 0..len {
        predictor.predict(&mut fv)?;
        let symbol = dec.decode(cache.update(&fv)?);
        out.push(symbol);
        predictor.observe(symbol)?;
    }
    Ok(out)
}
