//! One benchmark run: ingest, fit, code, verify, report.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tscom_core::bridge::{open_bridge, BridgeSession};
use tscom_core::codec::CodeLengthAccount;
use tscom_core::container::{self, Container};
use tscom_core::metrics::{convergence_curve, report, CompressionReport, ConvergenceCurve};
use tscom_core::predictors::{
    Alpha, AdaptiveOrder0, ContextModel, ContextModelConfig, Predictor, PredictorSpec,
    StaticHistogram, Uniform,
};
use tscom_core::serialize::LayoutSpec;

use crate::error::HarnessError;
use crate::ingest::{ingest, Dataset, Format, Shape};
use crate::output::write_atomic;

pub const DEFAULT_BRIDGE_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PredictorChoice {
    Uniform,
    Order0 { alpha: Alpha },
    Context { order: u8, alpha: Alpha },
    Static,
    Bridge { command: Vec<String>, timeout_ms: u64 },
}

impl PredictorChoice {
    /// Splits a shell-style command line for [`PredictorChoice::Bridge`].
    pub fn bridge(command: &str, timeout_ms: u64) -> Result<Self, HarnessError> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| HarnessError::Config(format!("cannot parse bridge command {command:?}")))?;
        Ok(PredictorChoice::Bridge {
            command: argv,
            timeout_ms,
        })
    }

    /// Short name used in output file names.
    pub fn label(&self) -> String {
        let alpha_suffix = |a: &Alpha| {
            if *a == Alpha::ONE {
                String::new()
            } else {
                format!("-a{}_{}", a.num, a.den)
            }
        };
        match self {
            PredictorChoice::Uniform => "uniform".into(),
            PredictorChoice::Order0 { alpha } => format!("order0{}", alpha_suffix(alpha)),
            PredictorChoice::Context { order, alpha } => {
                format!("context-k{order}{}", alpha_suffix(alpha))
            }
            PredictorChoice::Static => "static".into(),
            PredictorChoice::Bridge { .. } => "bridge".into(),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(
            self,
            PredictorChoice::Order0 { .. } | PredictorChoice::Context { .. } | PredictorChoice::Bridge { .. }
        )
    }

    /// Builds a predictor ready to code. Static histograms are fitted on `train` here
    /// and nowhere else; the returned handle only predicts and observes.
    pub fn instantiate(&self, train: &[u8]) -> Result<Box<dyn Predictor>, HarnessError> {
        Ok(match self {
            PredictorChoice::Uniform => Box::new(Uniform),
            PredictorChoice::Order0 { alpha } => Box::new(AdaptiveOrder0::new(*alpha)),
            PredictorChoice::Context { order, alpha } => {
                Box::new(ContextModel::new(ContextModelConfig::new(*order, *alpha)?))
            }
            PredictorChoice::Static => Box::new(StaticHistogram::fit(train)?),
            PredictorChoice::Bridge { .. } => Box::new(self.open_session()?),
        })
    }

    fn open_session(&self) -> Result<BridgeSession, HarnessError> {
        match self {
            PredictorChoice::Bridge {
                command,
                timeout_ms,
            } => Ok(open_bridge(command, Duration::from_millis(*timeout_ms))?),
            _ => unreachable!("only bridge choices open sessions"),
        }
    }
}

/// Where the coded slice starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Code everything. Static predictors are fitted on the whole input and charged
    /// for it.
    Whole,
    /// The first `floor(f * L)` bytes train, the rest is coded.
    TrainFraction(f64),
}

impl Split {
    pub const DEFAULT_TRAIN: f64 = 0.7;

    pub fn train_fraction(f: f64) -> Result<Self, HarnessError> {
        if f > 0.0 && f < 1.0 {
            Ok(Split::TrainFraction(f))
        } else {
            Err(HarnessError::Config(format!(
                "train fraction {f} must lie strictly between 0 and 1"
            )))
        }
    }

    pub fn boundary(self, len: usize) -> usize {
        match self {
            Split::Whole => 0,
            Split::TrainFraction(f) => ((len as f64) * f).floor() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: Format,
    pub layout: LayoutSpec,
    pub shape: Option<Shape>,
    pub predictor: PredictorChoice,
    pub split: Split,
    pub seed: u64,
    /// Reports, CSV row and curve go here, along with the container unless `output`
    /// names it.
    pub report_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub curve: bool,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, predictor: PredictorChoice) -> Self {
        Self {
            input: input.into(),
            format: Format::Bytes,
            layout: LayoutSpec::default(),
            shape: None,
            predictor,
            split: Split::Whole,
            seed: 0,
            report_dir: None,
            output: None,
            curve: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Absent when the coded slice is empty: there is no per-byte rate to report.
    pub report: Option<CompressionReport>,
    pub container: Vec<u8>,
    /// Code lengths of the coded slice, also for empty slices.
    pub account: CodeLengthAccount,
    pub curve: Option<ConvergenceCurve>,
    pub files: Vec<PathBuf>,
}

/// Codes `ds` under `cfg` and proves the container decodes back to the input.
/// Writes nothing.
pub fn evaluate(cfg: &RunConfig, ds: &Dataset) -> Result<RunOutcome, HarnessError> {
    let data = ds.stream.as_bytes();
    let boundary = cfg.split.boundary(data.len());
    let (train, test) = data.split_at(boundary);
    let fit_on = match cfg.split {
        Split::Whole => data,
        Split::TrainFraction(_) => train,
    };

    let mut predictor = if cfg.predictor == PredictorChoice::Static && fit_on.is_empty() && test.is_empty()
    {
        // nothing to fit and nothing to code; any valid table will do
        Box::new(StaticHistogram::from_counts([1; 256])?)
    } else {
        cfg.predictor.instantiate(fit_on)?
    };
    let start = Instant::now();
    let (c, account) = container::compress(predictor.as_mut(), test)?;
    let wall_time_s = start.elapsed().as_secs_f64().max(1e-9);
    let spec = predictor.spec();
    drop(predictor);

    let container = c.to_bytes();
    verify(cfg, &container, test)?;

    let report = if test.is_empty() {
        None
    } else {
        let mut r = report(&account, test.len() as u64, wall_time_s, ds.oracle.as_ref())?;
        r.charge_model(spec.model_charge_bytes() * 8);
        r.predictor_id = Some(spec.id());
        r.predictor = Some(cfg.predictor.label());
        r.predictor_digest = Some(spec.digest());
        r.dataset_digest = Some(ds.digest.clone());
        r.seed = Some(cfg.seed);
        r.train_bytes = boundary as u64;
        r.reset_at_split = boundary > 0 && cfg.predictor.is_adaptive();
        r.verified = true;
        r.validate()?;
        Some(r)
    };

    let curve = if cfg.curve && !test.is_empty() {
        let mut p = cfg.predictor.instantiate(fit_on)?;
        Some(convergence_curve(p.as_mut(), test)?)
    } else {
        None
    };

    Ok(RunOutcome {
        report,
        container,
        account,
        curve,
        files: Vec::new(),
    })
}

/// Decodes `container` with a fresh predictor and compares it with `original`.
fn verify(cfg: &RunConfig, container: &[u8], original: &[u8]) -> Result<(), HarnessError> {
    let decoded = match &cfg.predictor {
        PredictorChoice::Bridge { .. } => {
            let parsed = Container::parse(container).map_err(verify_error)?;
            let mut session = cfg.predictor.open_session()?;
            container::decompress_with(&parsed, &mut session)
        }
        _ => container::decompress(container),
    }
    .map_err(verify_error)?;
    if decoded != original {
        let at = decoded
            .iter()
            .zip(original)
            .position(|(a, b)| a != b)
            .unwrap_or(decoded.len().min(original.len()));
        return Err(HarnessError::Verify(format!(
            "decoded stream differs from the input at byte {at}"
        )));
    }
    Ok(())
}

/// Bridge failures keep their protocol exit code; anything else while decoding our
/// own output is a verification failure.
fn verify_error(e: container::ContainerError) -> HarnessError {
    match HarnessError::from(e) {
        HarnessError::Bridge(b) => HarnessError::Bridge(b),
        other => HarnessError::Verify(other.to_string()),
    }
}

/// Ingests, evaluates and writes the outputs named by `cfg`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let ds = ingest(&cfg.input, cfg.format, cfg.layout, cfg.shape)?;
    let mut outcome = evaluate(cfg, &ds)?;
    outcome.files = write_outputs(cfg, &ds, &outcome)?;
    Ok(outcome)
}

pub fn output_stem(cfg: &RunConfig, ds: &Dataset) -> String {
    format!("{}.{}", ds.name, cfg.predictor.label())
}

fn write_outputs(
    cfg: &RunConfig,
    ds: &Dataset,
    outcome: &RunOutcome,
) -> Result<Vec<PathBuf>, HarnessError> {
    let stem = output_stem(cfg, ds);
    let mut files = Vec::new();
    let mut put = |path: PathBuf, bytes: &[u8]| -> Result<(), HarnessError> {
        write_atomic(&path, bytes)?;
        files.push(path);
        Ok(())
    };
    let container_path = match (&cfg.output, &cfg.report_dir) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => Some(dir.join(format!("{stem}.tscc"))),
        (None, None) => None,
    };
    if let Some(dir) = &cfg.report_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Write {
            path: dir.clone(),
            source,
        })?;
    }
    if let Some(p) = container_path {
        put(p, &outcome.container)?;
    }
    if let Some(dir) = &cfg.report_dir {
        if let Some(r) = &outcome.report {
            put(dir.join(format!("{stem}.report.json")), r.to_json()?.as_bytes())?;
            put(dir.join(format!("{stem}.report.csv")), &csv_rows(std::slice::from_ref(r))?)?;
        }
        if let Some(c) = &outcome.curve {
            put(dir.join(format!("{stem}.curve.csv")), c.to_csv().as_bytes())?;
        }
    }
    Ok(files)
}

pub fn csv_rows(reports: &[CompressionReport]) -> Result<Vec<u8>, HarnessError> {
    let mut buf = Vec::new();
    CompressionReport::write_csv(reports, &mut buf)?;
    Ok(buf)
}

/// Rebuilds the predictor named in a container header. Bridge containers need the
/// server command; the server must announce the model the container was made with.
pub fn decoder_for(
    container: &Container,
    bridge: Option<&PredictorChoice>,
) -> Result<Box<dyn Predictor>, HarnessError> {
    let spec = container.spec()?;
    match (&spec, bridge) {
        (PredictorSpec::Bridge { version, model }, Some(choice)) => {
            let session = choice.open_session()?;
            if session.version() != *version || session.model() != model {
                return Err(HarnessError::Config(format!(
                    "container was made with bridge model {model:?} (protocol {version}), \
                     server announced {:?} (protocol {})",
                    session.model(),
                    session.version()
                )));
            }
            Ok(Box::new(session))
        }
        (PredictorSpec::Bridge { model, .. }, None) => Err(HarnessError::Config(format!(
            "container was made with bridge model {model:?}; pass --bridge-cmd"
        ))),
        _ => Ok(spec.build()?),
    }
}

/// Decodes container bytes read from `path`.
pub fn decompress_file(
    path: &Path,
    bridge: Option<&PredictorChoice>,
) -> Result<Vec<u8>, HarnessError> {
    let bytes = std::fs::read(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let c = Container::parse(&bytes)?;
    let mut predictor = decoder_for(&c, bridge)?;
    Ok(container::decompress_with(&c, predictor.as_mut())?)
}
