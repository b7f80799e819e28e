use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tscom_core::metrics::diagnostics;
use tscom_core::predictors::Alpha;
use tscom_core::serialize::LayoutSpec;
use tscom_core::synthetic::{MarkovSpec, NoiseDistribution, PeriodicSpec};

use tscom::error::{HarnessError, EXIT_INPUT, EXIT_OK};
use tscom::ingest::{ingest, layout_name, parse_layout, Format, Shape};
use tscom::output::write_atomic;
use tscom::run::{
    csv_rows, decompress_file, run, PredictorChoice, RunConfig, Split, DEFAULT_BRIDGE_TIMEOUT_MS,
};
use tscom::suite::{collect_reports, workers_from_env, BenchSuite};
use tscom::synth::{parse_ratio, periodic_source, write_synth, SynthSource};

/// Lossless compression driven by next-byte predictors.
#[derive(Parser)]
#[command(name = "tscom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a file byte for byte into a container.
    Compress(CompressArgs),
    /// Restore the original file from a container.
    Decompress(DecompressArgs),
    /// Run every predictor on every input and write reports.
    Bench(BenchArgs),
    /// Generate a synthetic corpus with a known entropy rate.
    Synth(SynthArgs),
    /// Print value statistics of a numeric dataset as JSON.
    Diag(DiagArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PredictorKind {
    Uniform,
    Order0,
    Context,
    Static,
    Bridge,
}

#[derive(Args)]
struct PredictorArgs {
    /// Predictor(s); bench accepts a comma-separated list.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "order0")]
    predictor: Vec<PredictorKind>,
    /// Context length for the context predictor.
    #[arg(long, default_value_t = 1)]
    order: u8,
    /// Pseudo-count added to every symbol, e.g. `1` or `1/2`.
    #[arg(long, default_value = "1")]
    alpha: Alpha,
    /// Command line of an external predictor server.
    #[arg(long)]
    bridge_cmd: Option<String>,
    /// Handshake and per-request timeout for the server.
    #[arg(long, default_value_t = DEFAULT_BRIDGE_TIMEOUT_MS)]
    bridge_timeout_ms: u64,
}

impl PredictorArgs {
    fn choices(&self) -> Result<Vec<PredictorChoice>, HarnessError> {
        self.predictor
            .iter()
            .map(|kind| {
                Ok(match kind {
                    PredictorKind::Uniform => PredictorChoice::Uniform,
                    PredictorKind::Order0 => PredictorChoice::Order0 { alpha: self.alpha },
                    PredictorKind::Context => PredictorChoice::Context {
                        order: self.order,
                        alpha: self.alpha,
                    },
                    PredictorKind::Static => PredictorChoice::Static,
                    PredictorKind::Bridge => {
                        let cmd = self.bridge_cmd.as_deref().ok_or_else(|| {
                            HarnessError::Config("--predictor bridge needs --bridge-cmd".into())
                        })?;
                        PredictorChoice::bridge(cmd, self.bridge_timeout_ms)?
                    }
                })
            })
            .collect()
    }
}

#[derive(Args)]
struct CompressArgs {
    input: PathBuf,
    /// Container path [default: INPUT.tscc]
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    predictor: PredictorArgs,
    /// Recorded in the report.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the JSON report, CSV row and curve here.
    #[arg(long)]
    report_dir: Option<PathBuf>,
    /// Record cumulative bpb at checkpoints (needs --report-dir).
    #[arg(long)]
    curve: bool,
}

#[derive(Args)]
struct DecompressArgs {
    input: PathBuf,
    /// Output path [default: INPUT without .tscc, else INPUT.out]
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Server for containers made with a bridge predictor.
    #[arg(long)]
    bridge_cmd: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BRIDGE_TIMEOUT_MS)]
    bridge_timeout_ms: u64,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long, value_enum, default_value_t = Format::Bytes)]
    format: Format,
    /// channel-first or time-first, optionally with -le or -be.
    #[arg(long, default_value = "channel-first-le", value_parser = parse_layout)]
    layout: LayoutSpec,
    /// STEPSxCHANNELS, for raw-float files without a header.
    #[arg(long)]
    shape: Option<Shape>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    predictor: PredictorArgs,
    /// Train fraction by byte offset, or `whole` to code everything.
    #[arg(long, default_value = "0.7", value_parser = parse_split)]
    split: Split,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, required = true)]
    report_dir: PathBuf,
    #[arg(long)]
    curve: bool,
}

fn parse_split(s: &str) -> Result<Split, String> {
    if s == "whole" {
        return Ok(Split::Whole);
    }
    let f: f64 = s.parse().map_err(|_| format!("bad split {s:?}"))?;
    Split::train_fraction(f).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceKind {
    Periodic,
    Markov,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseKind {
    Reference,
    None,
}

#[derive(Args)]
struct SynthArgs {
    source: SourceKind,
    /// Bytes to generate.
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
    /// Markov self-transition probability.
    #[arg(long, default_value = "9/10")]
    stay: String,
    /// Periodic waveform length.
    #[arg(long, default_value_t = PeriodicSpec::DEFAULT_PERIOD)]
    period: usize,
    /// Seed of the periodic base waveform.
    #[arg(long, default_value_t = 0x5eed_ba5e)]
    base_seed: u64,
    #[arg(long, value_enum, default_value_t = NoiseKind::Reference)]
    noise: NoiseKind,
}

#[derive(Args)]
struct DiagArgs {
    input: PathBuf,
    #[command(flatten)]
    dataset: DatasetArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
        Command::Diag(a) => diag(a),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("tscom: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn compress(a: CompressArgs) -> Result<(), HarnessError> {
    let mut choices = a.predictor.choices()?;
    if choices.len() != 1 {
        return Err(HarnessError::Config("compress takes exactly one --predictor".into()));
    }
    let output = a.output.unwrap_or_else(|| with_suffix(&a.input, ".tscc"));
    let mut cfg = RunConfig::new(&a.input, choices.remove(0));
    cfg.seed = a.seed;
    cfg.output = Some(output.clone());
    cfg.report_dir = a.report_dir;
    cfg.curve = a.curve;
    let outcome = run(&cfg)?;
    match &outcome.report {
        Some(r) => println!(
            "{} -> {}: {} bytes, {} bits, {:.4} bpb, CR {:.4}",
            a.input.display(),
            output.display(),
            r.original_bytes,
            r.compressed_bits,
            r.bpb,
            r.cr
        ),
        None => println!("{} -> {}: empty input", a.input.display(), output.display()),
    }
    Ok(())
}

fn decompress(a: DecompressArgs) -> Result<(), HarnessError> {
    let bridge = a
        .bridge_cmd
        .as_deref()
        .map(|cmd| PredictorChoice::bridge(cmd, a.bridge_timeout_ms))
        .transpose()?;
    let data = decompress_file(&a.input, bridge.as_ref())?;
    let output = a.output.unwrap_or_else(|| {
        let s = a.input.to_string_lossy();
        match s.strip_suffix(".tscc") {
            Some(stem) if !stem.is_empty() => PathBuf::from(stem),
            _ => with_suffix(&a.input, ".out"),
        }
    });
    write_atomic(&output, &data)?;
    println!("{} -> {}: {} bytes", a.input.display(), output.display(), data.len());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), HarnessError> {
    let choices = a.predictor.choices()?;
    let workers = workers_from_env()?;
    let mut runs = Vec::new();
    for input in &a.inputs {
        for choice in &choices {
            let mut cfg = RunConfig::new(input, choice.clone());
            cfg.format = a.dataset.format;
            cfg.layout = a.dataset.layout;
            cfg.shape = a.dataset.shape;
            cfg.split = a.split;
            cfg.seed = a.seed;
            cfg.report_dir = Some(a.report_dir.clone());
            cfg.curve = a.curve;
            runs.push(cfg);
        }
    }
    let suite = BenchSuite::new(runs);
    std::fs::create_dir_all(&a.report_dir).map_err(|source| HarnessError::Write {
        path: a.report_dir.clone(),
        source,
    })?;
    let results = suite.execute(workers);

    println!("suite {} ({} runs, layout {})", suite.digest(), suite.runs.len(), layout_name(a.dataset.layout));
    let mut first_error = None;
    for (cfg, res) in suite.runs.iter().zip(&results) {
        let name = format!("{} {}", cfg.input.display(), cfg.predictor.label());
        match res {
            Ok(o) => match &o.report {
                Some(r) => println!(
                    "{name}: {:.4} bpb, CR {:.4}, CT {:.1} KiB/s{}",
                    r.bpb,
                    r.cr,
                    r.ct,
                    r.entropy_gap.map(|g| format!(", gap {g:+.4}")).unwrap_or_default()
                ),
                None => println!("{name}: nothing to code"),
            },
            Err(e) => {
                eprintln!("{name}: {e}");
                first_error.get_or_insert(e.exit_code());
            }
        }
    }
    let reports = collect_reports(&results);
    write_atomic(&a.report_dir.join("suite.csv"), &csv_rows(&reports)?)?;
    let summary = serde_json::json!({ "digest": suite.digest(), "suite": suite, "reports": reports });
    write_atomic(
        &a.report_dir.join("suite.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes").as_bytes(),
    )?;
    match first_error {
        None => Ok(()),
        Some(code) => std::process::exit(code.into()),
    }
}

fn synth(a: SynthArgs) -> Result<(), HarnessError> {
    let source = match a.source {
        SourceKind::Markov => {
            let (num, den) = parse_ratio(&a.stay).map_err(HarnessError::Config)?;
            SynthSource::Markov(MarkovSpec::new(num, den)?)
        }
        SourceKind::Periodic => {
            let noise = match a.noise {
                NoiseKind::Reference => NoiseDistribution::reference(),
                NoiseKind::None => NoiseDistribution::none(),
            };
            periodic_source(a.period, a.base_seed, noise)?
        }
    };
    let (meta, [data, side]) = write_synth(&a.output, &source, a.length, a.seed)?;
    println!(
        "{} ({} bytes, entropy rate {:.6} bpb), metadata in {}",
        data.display(),
        meta.length,
        meta.oracle.entropy_rate_bpb,
        side.display()
    );
    Ok(())
}

fn diag(a: DiagArgs) -> Result<(), HarnessError> {
    let ds = ingest(&a.input, a.dataset.format, a.dataset.layout, a.dataset.shape)?;
    let x = ds.tensor.as_ref().ok_or_else(|| {
        HarnessError::Config("diag needs 32-bit numeric input (--format csv or raw-float)".into())
    })?;
    let d = diagnostics(x);
    println!("{}", serde_json::to_string_pretty(&d).expect("diagnostics serialize"));
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
