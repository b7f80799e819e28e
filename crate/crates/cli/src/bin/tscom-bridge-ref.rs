//! Reference predictor server for the bridge protocol.
//!
//! The well-behaved modes serve a built-in model. The others misbehave on purpose so
//! the client's failure handling can be exercised end to end.

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use tscom_core::bridge::{
    freqs_payload, init_ack_payload, read_frame, serve, write_frame, Opcode, PROTOCOL_VERSION,
};
use tscom_core::codec::FrequencyVector;
use tscom_core::predictors::{AdaptiveOrder0, Alpha, Predictor, Uniform};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Adaptive order-0, matching the in-process predictor.
    Order0,
    Uniform,
    /// Answers INIT with protocol version 2.
    Version2,
    /// Returns all-zero counts.
    ZeroTotal,
    /// Exits without a word after `--after` predictions.
    Crash,
    /// Replies ERROR to the first PREDICT.
    ErrorOnPredict,
    /// Never answers PREDICT.
    Stall,
}

#[derive(Parser)]
#[command(name = "tscom-bridge-ref")]
struct Args {
    #[arg(long, value_enum, default_value_t = Mode::Order0)]
    mode: Mode,
    #[arg(long, default_value = "1")]
    alpha: Alpha,
    #[arg(long, default_value_t = 0)]
    after: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let input = BufReader::new(io::stdin().lock());
    let output = BufWriter::new(io::stdout().lock());
    let result = match args.mode {
        Mode::Order0 => serve(&mut AdaptiveOrder0::new(args.alpha), "order0", input, output),
        Mode::Uniform => serve(&mut Uniform, "uniform", input, output),
        _ => return faulty(args, input, output),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tscom-bridge-ref: {e}");
            ExitCode::FAILURE
        }
    }
}

fn faulty(args: Args, mut input: impl io::Read, mut output: impl Write) -> ExitCode {
    let mut model = AdaptiveOrder0::new(args.alpha);
    let mut fv = FrequencyVector::zeroed();
    let mut predictions = 0u64;
    loop {
        let frame = match read_frame(&mut input) {
            Ok(Some(f)) => f,
            _ => return ExitCode::SUCCESS,
        };
        let reply = match Opcode::from_u8(frame.opcode) {
            Some(Opcode::Init) => {
                let version = if args.mode == Mode::Version2 { 2 } else { PROTOCOL_VERSION };
                Some((Opcode::InitAck, init_ack_payload(version, "faulty")))
            }
            Some(Opcode::Predict) => match args.mode {
                Mode::ZeroTotal => Some((Opcode::Freqs, freqs_payload(&[0; 256]))),
                Mode::ErrorOnPredict => {
                    eprintln!("model raised on predict");
                    let _ = write_frame(&mut output, Opcode::Error, b"model raised on predict");
                    let _ = output.flush();
                    return ExitCode::FAILURE;
                }
                Mode::Stall => {
                    eprintln!("stalling");
                    std::thread::sleep(Duration::from_secs(3600));
                    return ExitCode::FAILURE;
                }
                Mode::Crash if predictions >= args.after => {
                    eprintln!("crashing after {predictions} predictions");
                    std::process::exit(101);
                }
                _ => {
                    predictions += 1;
                    model.predict(&mut fv).expect("order0 predicts");
                    Some((Opcode::Freqs, freqs_payload(fv.counts())))
                }
            },
            Some(Opcode::Observe) => {
                model.observe(frame.payload[0]).expect("order0 observes");
                None
            }
            Some(Opcode::Reset) => {
                model.reset().expect("order0 resets");
                None
            }
            _ => return ExitCode::SUCCESS,
        };
        if let Some((op, payload)) = reply {
            if write_frame(&mut output, op, &payload).and_then(|_| output.flush()).is_err() {
                return ExitCode::FAILURE;
            }
        }
    }
}
