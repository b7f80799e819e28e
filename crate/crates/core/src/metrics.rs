//! Compression metrics: bits per byte, compression ratio, throughput, and the
//! entropy gap against a known source rate.
//!
//! ```text
//! bpb = L_comp / L        CR = L_comp / (8 L)        CT = (L / 1024) / t
//! ```
//!
//! `L_comp` is counted in bits, `L` in bytes and `t` in seconds of compression wall
//! time, so CT is in KiB/s.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{replay, CodeLengthAccount, CodecError};
use crate::predictors::Predictor;
use crate::serialize::SeriesTensor;
use crate::synthetic::EntropyOracle;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("original length must be positive")]
    EmptyInput,
    #[error("wall time must be positive and finite, got {0}")]
    BadWallTime(f64),
    #[error("report violates {0}")]
    Inconsistent(&'static str),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    /// Original length in bytes.
    #[serde(rename = "L")]
    pub original_bytes: u64,
    /// Compressed length in bits: bitstream plus any shipped model.
    #[serde(rename = "L_comp_bits")]
    pub compressed_bits: u64,
    pub bpb: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
    /// KiB per second.
    #[serde(rename = "CT")]
    pub ct: f64,
    /// Infinite when the model gave a coded symbol zero probability (the coder's
    /// floor still made it codable); written as `null` in JSON.
    #[serde(with = "infinite_as_null")]
    pub nll_model_bits: f64,
    pub nll_quantized_bits: f64,
    pub emitted_bits: u64,
    pub model_charge_bits: u64,
    /// `emitted_bits - nll_quantized_bits`.
    pub coding_gap_bits: f64,
    pub entropy_oracle_bpb: Option<f64>,
    /// `bpb - entropy_oracle_bpb`.
    pub entropy_gap: Option<f64>,
    pub wall_time_s: f64,
    pub predictor_id: Option<u8>,
    pub predictor: Option<String>,
    pub predictor_digest: Option<String>,
    pub dataset_digest: Option<String>,
    pub seed: Option<u64>,
    /// Bytes held out before the coded slice; 0 when the whole stream was coded.
    #[serde(default)]
    pub train_bytes: u64,
    /// Adaptive predictors start the coded slice from a reset state rather than
    /// carrying over what they saw in the training slice.
    #[serde(default)]
    pub reset_at_split: bool,
    /// Set once a decode of the produced container matched the input.
    pub verified: bool,
}

/// Builds a report from a coded stream's account.
///
/// Replay-only accounts have no bitstream; their quantized NLL, rounded up, stands in
/// for the emitted length.
pub fn report(
    account: &CodeLengthAccount,
    original_bytes: u64,
    wall_time_s: f64,
    oracle: Option<&EntropyOracle>,
) -> Result<CompressionReport, MetricsError> {
    if original_bytes == 0 {
        return Err(MetricsError::EmptyInput);
    }
    if !(wall_time_s > 0.0 && wall_time_s.is_finite()) {
        return Err(MetricsError::BadWallTime(wall_time_s));
    }
    let emitted_bits = account
        .emitted_bits
        .unwrap_or_else(|| account.nll_quantized_bits.ceil() as u64);
    let mut r = CompressionReport {
        original_bytes,
        compressed_bits: 0,
        bpb: 0.0,
        cr: 0.0,
        ct: 0.0,
        nll_model_bits: account.nll_model_bits,
        nll_quantized_bits: account.nll_quantized_bits,
        emitted_bits,
        model_charge_bits: 0,
        coding_gap_bits: emitted_bits as f64 - account.nll_quantized_bits,
        entropy_oracle_bpb: oracle.map(|o| o.entropy_rate_bpb),
        entropy_gap: None,
        wall_time_s,
        predictor_id: None,
        predictor: None,
        predictor_digest: None,
        dataset_digest: None,
        seed: None,
        train_bytes: 0,
        reset_at_split: false,
        verified: false,
    };
    r.recompute();
    Ok(r)
}

impl CompressionReport {
    fn recompute(&mut self) {
        let l = self.original_bytes as f64;
        self.compressed_bits = self.emitted_bits + self.model_charge_bits;
        let bits = self.compressed_bits as f64;
        self.bpb = bits / l;
        self.cr = bits / (8.0 * l);
        self.ct = (l / 1024.0) / self.wall_time_s;
        self.entropy_gap = self.entropy_oracle_bpb.map(|h| self.bpb - h);
    }

    /// Adds the cost of shipping the model (e.g. a static table) to `L_comp`.
    pub fn charge_model(&mut self, bits: u64) {
        self.model_charge_bits = bits;
        self.recompute();
    }

    /// Checks the metric identities exactly.
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.original_bytes == 0 {
            return Err(MetricsError::EmptyInput);
        }
        if !(self.wall_time_s > 0.0 && self.wall_time_s.is_finite()) {
            return Err(MetricsError::BadWallTime(self.wall_time_s));
        }
        let l = self.original_bytes as f64;
        let bits = self.compressed_bits as f64;
        if self.compressed_bits != self.emitted_bits + self.model_charge_bits {
            return Err(MetricsError::Inconsistent("L_comp = emitted + model charge"));
        }
        if self.bpb != bits / l {
            return Err(MetricsError::Inconsistent("bpb = L_comp / L"));
        }
        if self.cr != bits / (8.0 * l) || self.cr != self.bpb / 8.0 {
            return Err(MetricsError::Inconsistent("CR = L_comp / 8L = bpb / 8"));
        }
        if self.ct != (l / 1024.0) / self.wall_time_s {
            return Err(MetricsError::Inconsistent("CT = (L / 1024) / t"));
        }
        if self.entropy_gap != self.entropy_oracle_bpb.map(|h| self.bpb - h) {
            return Err(MetricsError::Inconsistent("gap = bpb - oracle"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, MetricsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a JSON report.
    pub fn from_json(json: &str) -> Result<Self, MetricsError> {
        let r: Self = serde_json::from_str(json)?;
        r.validate()?;
        Ok(r)
    }

    /// The report with timing-dependent fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_s: 0.0,
            ct: 0.0,
            ..self.clone()
        }
    }

    /// Writes reports as CSV: one header line, then one row per report.
    pub fn write_csv<W: std::io::Write>(reports: &[Self], out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        for r in reports {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Running bpb sampled at every power of two and every whole MiB, plus the last byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub checkpoints: Vec<(u64, f64)>,
}

const MIB: u64 = 1 << 20;

fn is_checkpoint(n: u64) -> bool {
    n.is_power_of_two() || n % MIB == 0
}

impl ConvergenceCurve {
    pub fn last(&self) -> Option<(u64, f64)> {
        self.checkpoints.last().copied()
    }

    /// Cumulative bpb at exactly `bytes`, if that was a checkpoint.
    pub fn at(&self, bytes: u64) -> Option<f64> {
        self.checkpoints
            .iter()
            .find(|(n, _)| *n == bytes)
            .map(|(_, b)| *b)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bytes_processed,cumulative_bpb\n");
        for (n, bpb) in &self.checkpoints {
            out.push_str(&format!("{n},{bpb}\n"));
        }
        out
    }
}

/// Replays `predictor` over `s` and samples the cumulative quantized code length.
pub fn convergence_curve(
    predictor: &mut dyn Predictor,
    s: &[u8],
) -> Result<ConvergenceCurve, MetricsError> {
    if s.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let last = s.len() as u64;
    let mut bits = 0.0;
    let mut checkpoints = Vec::new();
    replay(predictor, s, |c| {
        bits += c.quantized_bits;
        let n = c.position as u64 + 1;
        if is_checkpoint(n) || n == last {
            checkpoints.push((n, bits / n as f64));
        }
    })?;
    Ok(ConvergenceCurve { checkpoints })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDiagnostics {
    pub total_samples: u64,
    /// Share of samples numerically equal to zero (`+0.0` and `-0.0`).
    pub zero_fraction: f64,
    /// Distinct bit patterns; `+0.0` and `-0.0` count separately.
    pub unique_values: u64,
    /// Range over finite samples; absent when there are none.
    pub value_min: Option<f32>,
    pub value_max: Option<f32>,
}

pub fn diagnostics(x: &SeriesTensor<f32>) -> DatasetDiagnostics {
    let values = x.values();
    let zeros = values.iter().filter(|v| **v == 0.0).count();
    let unique: HashSet<u32> = values.iter().map(|v| v.to_bits()).collect();
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let value_min = finite.clone().reduce(f32::min);
    let value_max = finite.reduce(f32::max);
    DatasetDiagnostics {
        total_samples: values.len() as u64,
        zero_fraction: zeros as f64 / values.len() as f64,
        unique_values: unique.len() as u64,
        value_min,
        value_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{AdaptiveOrder0, Uniform};
    use crate::synthetic::Derivation;

    fn account(bits: u64) -> CodeLengthAccount {
        CodeLengthAccount {
            symbols: 0,
            nll_model_bits: bits as f64,
            nll_quantized_bits: bits as f64,
            emitted_bits: Some(bits),
        }
    }

    #[test]
    fn substitution_examples() {
        let r = report(&account(1024), 1024, 1.0, None).unwrap();
        assert_eq!(r.bpb, 1.0);
        assert_eq!(r.cr, 0.125);
        let r = report(&account(1), 2048, 2.0, None).unwrap();
        assert_eq!(r.ct, 1.0);
        r.validate().unwrap();
    }

    #[test]
    fn entropy_gap_against_oracle() {
        // 128 MB column of the synthetic convergence table: 1.0442 - 1.0097
        let mut r = report(&account(10_442), 10_000, 1.0, None).unwrap();
        r.entropy_oracle_bpb = Some(1.0097);
        r.recompute();
        assert!((r.bpb - 1.0442).abs() < 1e-12);
        assert!((r.entropy_gap.unwrap() - 0.0345).abs() < 1e-12);

        let oracle = EntropyOracle {
            entropy_rate_bpb: 1.0097,
            derivation: Derivation::NoiseEntropyPeriodic,
        };
        let r = report(&account(10_442), 10_000, 1.0, Some(&oracle)).unwrap();
        assert!((r.entropy_gap.unwrap() - 0.0345).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            report(&account(8), 0, 1.0, None),
            Err(MetricsError::EmptyInput)
        ));
        assert!(matches!(
            report(&account(8), 1, 0.0, None),
            Err(MetricsError::BadWallTime(_))
        ));
        assert!(report(&account(8), 1, f64::NAN, None).is_err());
    }

    #[test]
    fn model_charge_enters_compressed_length() {
        let mut r = report(&account(800), 100, 0.5, None).unwrap();
        r.charge_model(8192);
        assert_eq!(r.compressed_bits, 8992);
        assert_eq!(r.bpb, 89.92);
        r.validate().unwrap();
    }

    #[test]
    fn json_roundtrip_validates() {
        let mut r = report(&account(777), 123, 0.25, None).unwrap();
        r.predictor = Some("order0".into());
        let back = CompressionReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let tampered = r.to_json().unwrap().replace("\"CR\": ", "\"CR\": 1");
        assert!(CompressionReport::from_json(&tampered).is_err());
    }

    #[test]
    fn infinite_model_nll_survives_json() {
        let mut a = account(64);
        a.nll_model_bits = f64::INFINITY;
        let r = report(&a, 8, 1.0, None).unwrap();
        let json = r.to_json().unwrap();
        assert!(json.contains("\"nll_model_bits\": null"));
        assert_eq!(CompressionReport::from_json(&json).unwrap(), r);
    }

    #[test]
    fn csv_has_one_row_per_report() {
        let r = report(&account(777), 123, 0.25, None).unwrap();
        let mut buf = Vec::new();
        CompressionReport::write_csv(&[r.clone(), r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("L,L_comp_bits,bpb,CR,CT,"));
    }

    #[test]
    fn uniform_curve_is_flat_at_eight() {
        let data = vec![0x5Au8; 5000];
        let curve = convergence_curve(&mut Uniform, &data).unwrap();
        assert!(curve.checkpoints.iter().all(|&(_, b)| b == 8.0));
        assert_eq!(curve.last().unwrap().0, 5000);
        let ns: Vec<u64> = curve.checkpoints.iter().map(|c| c.0).collect();
        assert_eq!(&ns[..4], &[1, 2, 4, 8]);
        assert!(ns.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn order0_curve_decreases_on_constant_stream() {
        let data = vec![7u8; 100_000];
        let curve = convergence_curve(&mut AdaptiveOrder0::default(), &data).unwrap();
        assert!(curve.checkpoints.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(curve.checkpoints.iter().all(|&(_, b)| b > 0.0));
    }

    #[test]
    fn empty_curve_is_an_error() {
        assert!(convergence_curve(&mut Uniform, &[]).is_err());
    }

    #[test]
    fn diagnostics_counts() {
        let x = SeriesTensor::new(2, 2, vec![0.0f32, 0.0, 1.0, 2.0]).unwrap();
        let d = diagnostics(&x);
        assert_eq!(d.zero_fraction, 0.5);
        assert_eq!(d.unique_values, 3);
        assert_eq!((d.value_min, d.value_max), (Some(0.0), Some(2.0)));

        let x = SeriesTensor::new(3, 1, vec![0.0f32; 3]).unwrap();
        let d = diagnostics(&x);
        assert_eq!((d.zero_fraction, d.unique_values), (1.0, 1));

        let x = SeriesTensor::new(1, 4, vec![0.0f32, -0.0, f32::NAN, f32::INFINITY]).unwrap();
        let d = diagnostics(&x);
        assert_eq!(d.zero_fraction, 0.5);
        assert_eq!(d.unique_values, 4);
        assert_eq!((d.value_min, d.value_max), (Some(-0.0), Some(0.0)));
    }
}
