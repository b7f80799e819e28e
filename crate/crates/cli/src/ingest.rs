//! Loading datasets into symbol streams.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tscom_core::serialize::{
    decode_series, encode_series, read_raw_file, ByteOrder, LayoutSpec, ScanOrder, SerializeError,
    SeriesTensor, SymbolStream,
};
use tscom_core::synthetic::EntropyOracle;

use crate::error::HarnessError;
use crate::synth::SynthMeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// Rows are time steps, columns are channels; parsed to 32-bit floats.
    Csv,
    /// IEEE-754 samples, with a `TSRF` header or an explicit `--shape`.
    RawFloat,
    /// Any file, coded byte for byte.
    #[default]
    Bytes,
}

/// `steps x channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub steps: usize,
    pub channels: usize,
}

impl FromStr for Shape {
    type Err = String;

    /// Accepts `"1000x3"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (t, d) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("shape {s:?} is not STEPSxCHANNELS"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad shape {s:?}"));
        Ok(Shape {
            steps: parse(t)?,
            channels: parse(d)?,
        })
    }
}

/// Parses `channel-first`, `time-first`, optionally suffixed with `-le` or `-be`.
pub fn parse_layout(s: &str) -> Result<LayoutSpec, String> {
    let (order, byte_order) = match s.rsplit_once('-') {
        Some((o, "le")) => (o, ByteOrder::Little),
        Some((o, "be")) => (o, ByteOrder::Big),
        _ => (s, ByteOrder::Little),
    };
    let order = match order {
        "channel-first" => ScanOrder::ChannelFirst,
        "time-first" => ScanOrder::TimeFirst,
        _ => return Err(format!("unknown layout {s:?}")),
    };
    Ok(LayoutSpec { order, byte_order })
}

pub fn layout_name(layout: LayoutSpec) -> String {
    let order = match layout.order {
        ScanOrder::ChannelFirst => "channel-first",
        ScanOrder::TimeFirst => "time-first",
    };
    let bo = match layout.byte_order {
        ByteOrder::Little => "le",
        ByteOrder::Big => "be",
    };
    format!("{order}-{bo}")
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub stream: SymbolStream,
    /// The samples, when the input was numeric 32-bit data.
    pub tensor: Option<SeriesTensor<f32>>,
    /// Hex SHA-256 of the serialized stream.
    pub digest: String,
    /// Entropy rate of the generating source, when a synth sidecar was found.
    pub oracle: Option<EntropyOracle>,
}

impl Dataset {
    pub fn from_bytes(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            digest: digest(&bytes),
            stream: SymbolStream::new(bytes),
            tensor: None,
            oracle: None,
        }
    }

    pub fn from_tensor(name: impl Into<String>, x: SeriesTensor<f32>, layout: LayoutSpec) -> Self {
        let stream = encode_series(&x, layout);
        Self {
            name: name.into(),
            digest: digest(&stream),
            stream,
            tensor: Some(x),
            oracle: None,
        }
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads `path` as `format`. `layout` is the serialization order for CSV input and the
/// on-disk order for headerless raw-float input.
pub fn ingest(
    path: &Path,
    format: Format,
    layout: LayoutSpec,
    shape: Option<Shape>,
) -> Result<Dataset, HarnessError> {
    let bytes = fs::read(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    match format {
        Format::Bytes => {
            let mut ds = Dataset::from_bytes(name, bytes);
            ds.oracle = read_sidecar(path)?.map(|m| m.oracle);
            Ok(ds)
        }
        Format::Csv => {
            let x = parse_csv(&bytes, path)?;
            Ok(Dataset::from_tensor(name, x, layout))
        }
        Format::RawFloat => ingest_raw(name, &bytes, path, layout, shape),
    }
}

fn ingest_raw(
    name: String,
    bytes: &[u8],
    path: &Path,
    layout: LayoutSpec,
    shape: Option<Shape>,
) -> Result<Dataset, HarnessError> {
    let ser_err = |source| HarnessError::Serialize {
        path: path.to_path_buf(),
        source,
    };
    let (width, file_layout, steps, channels, payload) = if bytes.starts_with(b"TSRF") {
        let (h, payload) = read_raw_file(bytes).map_err(ser_err)?;
        (h.width, h.layout, h.steps as usize, h.channels as usize, payload)
    } else {
        let shape = shape.ok_or_else(|| {
            HarnessError::Config(format!(
                "{} has no raw-float header; pass --shape STEPSxCHANNELS",
                path.display()
            ))
        })?;
        (4, layout, shape.steps, shape.channels, bytes)
    };
    let tensor = if width == 4 {
        Some(decode_series::<f32>(payload, steps, channels, file_layout).map_err(ser_err)?)
    } else {
        let expected = steps * channels * width as usize;
        if payload.len() != expected {
            return Err(ser_err(SerializeError::LengthMismatch {
                expected,
                actual: payload.len(),
            }));
        }
        None
    };
    let stream = SymbolStream::new(payload.to_vec());
    Ok(Dataset {
        name,
        digest: digest(&stream),
        stream,
        tensor,
        oracle: None,
    })
}

/// Parses CSV text into a `rows x columns` tensor of 32-bit floats.
///
/// A first row in which no field parses as a number is taken as a header. Decimal
/// text is rounded to the nearest representable value, ties to even.
pub fn parse_csv(bytes: &[u8], path: &Path) -> Result<SeriesTensor<f32>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let csv_err = |e: csv::Error| HarnessError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut values = Vec::new();
    let mut columns: Option<usize> = None;
    let mut rows = 0usize;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if first {
            first = false;
            if record.iter().all(|f| f.parse::<f32>().is_err()) {
                columns = Some(record.len());
                continue;
            }
        }
        let expected = *columns.get_or_insert(record.len());
        if record.len() != expected {
            return Err(HarnessError::Ragged {
                path: path.to_path_buf(),
                row,
                expected,
                found: record.len(),
            });
        }
        for (i, field) in record.iter().enumerate() {
            let v: f32 = field.parse().map_err(|_| HarnessError::Parse {
                path: path.to_path_buf(),
                row,
                column: i + 1,
                value: field.to_string(),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let channels = columns.unwrap_or(0);
    SeriesTensor::new(rows, channels, values).map_err(|source| HarnessError::Serialize {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn read_sidecar(path: &Path) -> Result<Option<SynthMeta>, HarnessError> {
    let side = sidecar_path(path);
    let text = match fs::read_to_string(&side) {
        Ok(t) => t,
        Err(_) => return Ok(None),
    };
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| HarnessError::Csv {
            path: side,
            message: format!("malformed metadata: {e}"),
        })
}
