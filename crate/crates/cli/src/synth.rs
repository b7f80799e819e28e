//! Synthetic corpora with a metadata sidecar recording how they were made.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tscom_core::serialize::SymbolStream;
use tscom_core::synthetic::{
    gen_markov, gen_periodic, markov_entropy, periodic_entropy, EntropyOracle, MarkovSpec,
    NoiseDistribution, PeriodicSpec,
};

use crate::error::HarnessError;
use crate::ingest::sidecar_path;
use crate::output::write_atomic;

/// Contents of `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub generator: String,
    pub spec: serde_json::Value,
    pub seed: u64,
    pub length: u64,
    pub oracle: EntropyOracle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthSource {
    Periodic(PeriodicSpec),
    Markov(MarkovSpec),
}

impl SynthSource {
    pub fn name(&self) -> &'static str {
        match self {
            SynthSource::Periodic(_) => "periodic",
            SynthSource::Markov(_) => "markov",
        }
    }

    pub fn oracle(&self) -> EntropyOracle {
        match self {
            SynthSource::Periodic(s) => periodic_entropy(s),
            SynthSource::Markov(s) => markov_entropy(s),
        }
    }

    pub fn generate(&self, length: usize, seed: u64) -> Result<(SymbolStream, SynthMeta), HarnessError> {
        let (stream, spec) = match self {
            SynthSource::Periodic(s) => (gen_periodic(s, length, seed)?, serde_json::to_value(s)),
            SynthSource::Markov(s) => (gen_markov(s, length, seed)?, serde_json::to_value(s)),
        };
        let meta = SynthMeta {
            generator: self.name().into(),
            spec: spec.expect("specs serialize"),
            seed,
            length: length as u64,
            oracle: self.oracle(),
        };
        Ok((stream, meta))
    }
}

/// Periodic source with a random base waveform in `[8, 247]`.
pub fn periodic_source(
    period: usize,
    base_seed: u64,
    noise: NoiseDistribution,
) -> Result<SynthSource, HarnessError> {
    Ok(SynthSource::Periodic(PeriodicSpec::random_base(
        period, 8, 247, base_seed, noise,
    )?))
}

/// Parses `"9/10"` or a terminating decimal such as `"0.9"` into a reduced fraction.
pub fn parse_ratio(s: &str) -> Result<(u32, u32), String> {
    let bad = || format!("cannot parse {s:?} as a probability");
    let s = s.trim();
    let (num, den) = if let Some((n, d)) = s.split_once('/') {
        (
            n.trim().parse::<u64>().map_err(|_| bad())?,
            d.trim().parse::<u64>().map_err(|_| bad())?,
        )
    } else {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        (int * den + frac, den)
    };
    if den == 0 {
        return Err(bad());
    }
    let g = gcd(num, den);
    let (num, den) = (num / g.max(1), den / g.max(1));
    Ok((
        u32::try_from(num).map_err(|_| bad())?,
        u32::try_from(den).map_err(|_| bad())?,
    ))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Writes the stream to `out` and its metadata next to it. Returns both paths.
pub fn write_synth(
    out: &Path,
    source: &SynthSource,
    length: usize,
    seed: u64,
) -> Result<(SynthMeta, [PathBuf; 2]), HarnessError> {
    let (stream, meta) = source.generate(length, seed)?;
    write_atomic(out, stream.as_bytes())?;
    let side = sidecar_path(out);
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write_atomic(&side, json.as_bytes())?;
    Ok((meta, [out.to_path_buf(), side]))
}
