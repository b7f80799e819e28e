//! Length-prefixed frame protocol for predictors running in another process.
//!
//! Every frame is `u8 opcode | u32 payload length (LE) | payload`. The client owns
//! the conversation: it sends `INIT`, waits for `INIT_ACK`, then streams `PREDICT`,
//! `OBSERVE` and `RESET` requests. Only `PREDICT` gets a reply (`FREQS`), so at most
//! one request is ever outstanding. `docs/protocol.md` has the byte-level grammar.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::codec::{FrequencyVector, ALPHABET, MAX_FREQ_TOTAL};
use crate::predictors::{Predictor, PredictorError, PredictorSpec};

pub const MAGIC: &[u8; 4] = b"TSCB";
pub const PROTOCOL_VERSION: u16 = 1;
/// Frames larger than this are rejected before their payload is read.
pub const MAX_PAYLOAD: u32 = 1 << 16;
/// Bytes of child stderr kept for error messages.
pub const STDERR_CAPTURE: usize = 16 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Opcode {
    Init = 1,
    InitAck = 2,
    Predict = 3,
    Freqs = 4,
    Observe = 5,
    Reset = 6,
    Close = 7,
    Error = 255,
}

impl Opcode {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Opcode::Init,
            2 => Opcode::InitAck,
            3 => Opcode::Predict,
            4 => Opcode::Freqs,
            5 => Opcode::Observe,
            6 => Opcode::Reset,
            7 => Opcode::Close,
            255 => Opcode::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot launch bridge command {command:?}: {source}")]
    Launch {
        command: String,
        source: io::Error,
    },
    #[error("bridge server did not acknowledge INIT within {timeout:?}{}", show(stderr))]
    HandshakeTimeout { timeout: Duration, stderr: String },
    #[error("bridge protocol version mismatch: client {client}, server {server}{}", show(stderr))]
    VersionMismatch {
        client: u16,
        server: u16,
        stderr: String,
    },
    #[error("malformed INIT: {0}")]
    BadInit(String),
    #[error("frame {opcode:#04x} has invalid payload length {len}")]
    FrameLength { opcode: u8, len: u32 },
    #[error("unknown frame opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("frequency total {total} outside [1, 2^30]")]
    TotalOutOfRange { total: u64 },
    #[error("bridge server went away{}{}", status_suffix(status), show(stderr))]
    BrokenPipe {
        status: Option<ExitStatus>,
        stderr: String,
    },
    #[error("bridge server did not answer within {timeout:?}{}", show(stderr))]
    Timeout { timeout: Duration, stderr: String },
    #[error("bridge server reported an error: {message}{}", show(stderr))]
    ServerError { message: String, stderr: String },
    #[error("expected {expected:?} frame, got opcode {got:#04x}")]
    UnexpectedFrame { expected: Opcode, got: u8 },
    #[error("bridge I/O error: {0}")]
    Io(#[from] io::Error),
}

fn show(stderr: &str) -> String {
    let s = stderr.trim();
    if s.is_empty() {
        String::new()
    } else {
        format!("; server stderr: {s}")
    }
}

fn status_suffix(status: &Option<ExitStatus>) -> String {
    match status {
        Some(s) => format!(" ({s})"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: Opcode, payload: Vec<u8>) -> Self {
        Self {
            opcode: opcode as u8,
            payload,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.push(self.opcode);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Fails with `FrameLength` if a known opcode carries a payload of the wrong size.
    pub fn check_length(&self) -> Result<(), BridgeError> {
        let len = self.payload.len();
        let ok = match Opcode::from_u8(self.opcode) {
            Some(Opcode::Init) => len == INIT_LEN,
            Some(Opcode::InitAck) => len >= 6,
            Some(Opcode::Predict | Opcode::Reset | Opcode::Close) => len == 0,
            Some(Opcode::Freqs) => len == ALPHABET * 4,
            Some(Opcode::Observe) => len == 1,
            Some(Opcode::Error) => true,
            None => return Err(BridgeError::UnknownOpcode(self.opcode)),
        };
        if ok {
            Ok(())
        } else {
            Err(BridgeError::FrameLength {
                opcode: self.opcode,
                len: len as u32,
            })
        }
    }
}

pub fn write_frame<W: Write>(w: &mut W, opcode: Opcode, payload: &[u8]) -> io::Result<()> {
    w.write_all(&[opcode as u8])?;
    w.write_all(&(payload.len() as u32).to_le_bytes())?;
    w.write_all(payload)
}

/// Reads one frame. Returns `None` on a clean end of stream at a frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, BridgeError> {
    let mut head = [0u8; 5];
    let mut got = 0;
    while got < head.len() {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(head[1..].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(BridgeError::FrameLength {
            opcode: head[0],
            len,
        });
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(Frame {
        opcode: head[0],
        payload,
    }))
}

const INIT_LEN: usize = 4 + 2 + 2 + 4;

/// INIT payload: magic, protocol version, alphabet size, advisory context window.
pub fn init_payload(version: u16, context_hint: u32) -> Vec<u8> {
    let mut p = MAGIC.to_vec();
    p.extend_from_slice(&version.to_le_bytes());
    p.extend_from_slice(&(ALPHABET as u16).to_le_bytes());
    p.extend_from_slice(&context_hint.to_le_bytes());
    p
}

/// INIT_ACK payload: magic, protocol version, UTF-8 model identifier.
pub fn init_ack_payload(version: u16, model: &str) -> Vec<u8> {
    let mut p = MAGIC.to_vec();
    p.extend_from_slice(&version.to_le_bytes());
    p.extend_from_slice(model.as_bytes());
    p
}

pub fn freqs_payload(counts: &[u32; ALPHABET]) -> Vec<u8> {
    counts.iter().flat_map(|c| c.to_le_bytes()).collect()
}

/// Decodes a FREQS payload, rejecting totals outside `[1, 2^30]`.
pub fn parse_freqs(payload: &[u8], out: &mut FrequencyVector) -> Result<(), BridgeError> {
    if payload.len() != ALPHABET * 4 {
        return Err(BridgeError::FrameLength {
            opcode: Opcode::Freqs as u8,
            len: payload.len() as u32,
        });
    }
    let mut total = 0u64;
    for (c, chunk) in out.counts_mut().iter_mut().zip(payload.chunks_exact(4)) {
        *c = u32::from_le_bytes(chunk.try_into().unwrap());
        total += *c as u64;
    }
    if total == 0 || total > MAX_FREQ_TOTAL {
        return Err(BridgeError::TotalOutOfRange { total });
    }
    Ok(())
}

/// Child stderr collected on a background thread.
#[derive(Clone, Default)]
struct StderrSink {
    buf: Arc<Mutex<Vec<u8>>>,
    done: Arc<AtomicBool>,
}

impl StderrSink {
    fn spawn<R: Read + Send + 'static>(&self, mut r: R) {
        let sink = self.clone();
        thread::spawn(move || {
            let mut chunk = [0u8; 4096];
            while let Ok(n) = r.read(&mut chunk) {
                if n == 0 {
                    break;
                }
                let mut buf = sink.buf.lock().unwrap();
                let room = STDERR_CAPTURE.saturating_sub(buf.len());
                buf.extend_from_slice(&chunk[..n.min(room)]);
            }
            sink.done.store(true, Ordering::Release);
        });
    }

    /// Waits briefly for the child to finish writing, then returns what was captured.
    fn snapshot(&self, wait: Duration) -> String {
        let deadline = Instant::now() + wait;
        while !self.done.load(Ordering::Acquire) && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        String::from_utf8_lossy(&self.buf.lock().unwrap()).into_owned()
    }
}

/// Client side of a running bridge server; acts as predictor id 255.
pub struct BridgeSession {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    frames: Receiver<Result<Option<Frame>, BridgeError>>,
    stderr: StderrSink,
    timeout: Duration,
    version: u16,
    model: String,
    requests: u64,
    responses: u64,
    failed: bool,
}

impl std::fmt::Debug for BridgeSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeSession")
            .field("pid", &self.child.id())
            .field("version", &self.version)
            .field("model", &self.model)
            .field("requests", &self.requests)
            .finish_non_exhaustive()
    }
}

const STDERR_GRACE: Duration = Duration::from_millis(500);

/// Launches `argv` and performs the INIT handshake.
///
/// `timeout` bounds the handshake and every later PREDICT round trip.
pub fn open_bridge(argv: &[String], timeout: Duration) -> Result<BridgeSession, BridgeError> {
    open_bridge_with_hint(argv, timeout, 0)
}

pub fn open_bridge_with_hint(
    argv: &[String],
    timeout: Duration,
    context_hint: u32,
) -> Result<BridgeSession, BridgeError> {
    let launch_err = |source| BridgeError::Launch {
        command: argv.join(" "),
        source,
    };
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| launch_err(io::Error::new(io::ErrorKind::InvalidInput, "empty command")))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(launch_err)?;

    let stderr = StderrSink::default();
    stderr.spawn(child.stderr.take().expect("piped stderr"));

    let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
    let (tx, frames) = mpsc::sync_channel(1);
    thread::spawn(move || loop {
        let frame = read_frame(&mut stdout);
        let stop = !matches!(frame, Ok(Some(_)));
        if tx.send(frame).is_err() || stop {
            break;
        }
    });

    let mut session = BridgeSession {
        stdin: Some(BufWriter::new(child.stdin.take().expect("piped stdin"))),
        child,
        frames,
        stderr,
        timeout,
        version: 0,
        model: String::new(),
        requests: 0,
        responses: 0,
        failed: false,
    };
    session.handshake(context_hint)?;
    Ok(session)
}

impl BridgeSession {
    pub fn version(&self) -> u16 {
        self.version
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    /// PREDICT requests sent and FREQS replies received so far.
    pub fn frame_counts(&self) -> (u64, u64) {
        (self.requests, self.responses)
    }

    fn handshake(&mut self, context_hint: u32) -> Result<(), BridgeError> {
        self.send(Opcode::Init, &init_payload(PROTOCOL_VERSION, context_hint))?;
        self.flush()?;
        let frame = match self.frames.recv_timeout(self.timeout) {
            Ok(f) => f,
            Err(RecvTimeoutError::Timeout) => {
                let stderr = self.kill_and_capture();
                return Err(BridgeError::HandshakeTimeout {
                    timeout: self.timeout,
                    stderr,
                });
            }
            Err(RecvTimeoutError::Disconnected) => Ok(None),
        };
        let frame = self.expect_frame(frame, Opcode::InitAck)?;
        let p = &frame.payload;
        if &p[..4] != MAGIC {
            return self.fail(BridgeError::ServerError {
                message: "INIT_ACK has bad magic".into(),
                stderr: String::new(),
            });
        }
        let server = u16::from_le_bytes([p[4], p[5]]);
        if server != PROTOCOL_VERSION {
            let stderr = self.kill_and_capture();
            return Err(BridgeError::VersionMismatch {
                client: PROTOCOL_VERSION,
                server,
                stderr,
            });
        }
        self.version = server;
        self.model = String::from_utf8_lossy(&p[6..]).into_owned();
        Ok(())
    }

    fn send(&mut self, opcode: Opcode, payload: &[u8]) -> Result<(), BridgeError> {
        if self.failed {
            return Err(self.broken());
        }
        let res = match self.stdin.as_mut() {
            Some(w) => write_frame(w, opcode, payload),
            None => Err(io::ErrorKind::BrokenPipe.into()),
        };
        res.or_else(|_| Err(self.broken()))
    }

    fn flush(&mut self) -> Result<(), BridgeError> {
        let res = match self.stdin.as_mut() {
            Some(w) => w.flush(),
            None => Err(io::ErrorKind::BrokenPipe.into()),
        };
        res.or_else(|_| Err(self.broken()))
    }

    fn broken(&mut self) -> BridgeError {
        self.failed = true;
        self.stdin = None;
        let stderr = self.stderr.snapshot(STDERR_GRACE);
        let status = wait_timeout(&mut self.child, STDERR_GRACE);
        BridgeError::BrokenPipe { status, stderr }
    }

    fn kill_and_capture(&mut self) -> String {
        self.failed = true;
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.stderr.snapshot(STDERR_GRACE)
    }

    fn fail<T>(&mut self, err: BridgeError) -> Result<T, BridgeError> {
        let stderr = self.kill_and_capture();
        Err(match err {
            BridgeError::ServerError { message, .. } => BridgeError::ServerError { message, stderr },
            other => other,
        })
    }

    /// Unwraps a received frame, mapping EOF, ERROR frames and wrong opcodes to errors.
    fn expect_frame(
        &mut self,
        frame: Result<Option<Frame>, BridgeError>,
        expected: Opcode,
    ) -> Result<Frame, BridgeError> {
        let frame = match frame {
            Ok(Some(f)) => f,
            Ok(None) | Err(BridgeError::Io(_)) => return Err(self.broken()),
            Err(e) => return self.fail(e),
        };
        if frame.opcode == Opcode::Error as u8 {
            let message = String::from_utf8_lossy(&frame.payload).into_owned();
            return self.fail(BridgeError::ServerError {
                message,
                stderr: String::new(),
            });
        }
        if frame.opcode != expected as u8 {
            return self.fail(BridgeError::UnexpectedFrame {
                expected,
                got: frame.opcode,
            });
        }
        if let Err(e) = frame.check_length() {
            return self.fail(e);
        }
        Ok(frame)
    }

    fn predict_frame(&mut self, out: &mut FrequencyVector) -> Result<(), BridgeError> {
        self.send(Opcode::Predict, &[])?;
        self.flush()?;
        self.requests += 1;
        let frame = match self.frames.recv_timeout(self.timeout) {
            Ok(f) => f,
            Err(RecvTimeoutError::Timeout) => {
                let stderr = self.kill_and_capture();
                return Err(BridgeError::Timeout {
                    timeout: self.timeout,
                    stderr,
                });
            }
            Err(RecvTimeoutError::Disconnected) => Ok(None),
        };
        let frame = self.expect_frame(frame, Opcode::Freqs)?;
        self.responses += 1;
        match parse_freqs(&frame.payload, out) {
            Ok(()) => Ok(()),
            Err(e) => self.fail(e),
        }
    }

    /// Sends CLOSE and waits for the server to exit.
    pub fn close(mut self) -> Result<Option<ExitStatus>, BridgeError> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<Option<ExitStatus>, BridgeError> {
        if !self.failed && self.stdin.is_some() {
            let _ = self.send(Opcode::Close, &[]);
            let _ = self.flush();
        }
        self.stdin = None;
        let status = wait_timeout(&mut self.child, Duration::from_secs(2));
        if status.is_none() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
        self.failed = true;
        Ok(status)
    }
}

fn wait_timeout(child: &mut Child, wait: Duration) -> Option<ExitStatus> {
    let deadline = Instant::now() + wait;
    loop {
        match child.try_wait() {
            Ok(Some(s)) => return Some(s),
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
            _ => return None,
        }
    }
}

impl Drop for BridgeSession {
    fn drop(&mut self) {
        if !self.failed {
            let _ = self.shutdown();
        } else if wait_timeout(&mut self.child, Duration::ZERO).is_none() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

impl Predictor for BridgeSession {
    fn predict(&mut self, out: &mut FrequencyVector) -> Result<(), PredictorError> {
        Ok(self.predict_frame(out)?)
    }

    fn observe(&mut self, symbol: u8) -> Result<(), PredictorError> {
        Ok(self.send(Opcode::Observe, &[symbol])?)
    }

    fn reset(&mut self) -> Result<(), PredictorError> {
        Ok(self.send(Opcode::Reset, &[])?)
    }

    fn spec(&self) -> PredictorSpec {
        PredictorSpec::Bridge {
            version: self.version,
            model: self.model.clone(),
        }
    }
}

/// How a [`serve`] loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeEnd {
    /// CLOSE received.
    Closed,
    /// Input ended at a frame boundary without CLOSE.
    Eof,
}

/// Runs the server side of the protocol over `input`/`output`, answering with `model`.
///
/// Predictor failures and invalid requests are reported to the client with an ERROR
/// frame before the error is returned.
pub fn serve<R: Read, W: Write>(
    model: &mut dyn Predictor,
    name: &str,
    mut input: R,
    mut output: W,
) -> Result<ServeEnd, BridgeError> {
    let mut fv = FrequencyVector::zeroed();
    let mut initialized = false;
    let reply_error = |output: &mut W, err: BridgeError| -> Result<ServeEnd, BridgeError> {
        let _ = write_frame(output, Opcode::Error, err.to_string().as_bytes());
        let _ = output.flush();
        Err(err)
    };
    loop {
        let frame = match read_frame(&mut input) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(ServeEnd::Eof),
            Err(e) => return reply_error(&mut output, e),
        };
        if let Err(e) = frame.check_length() {
            return reply_error(&mut output, e);
        }
        let opcode = Opcode::from_u8(frame.opcode).expect("checked above");
        if !initialized && opcode != Opcode::Init && opcode != Opcode::Close {
            return reply_error(
                &mut output,
                BridgeError::UnexpectedFrame {
                    expected: Opcode::Init,
                    got: frame.opcode,
                },
            );
        }
        match opcode {
            Opcode::Init => {
                let p = &frame.payload;
                let version = u16::from_le_bytes([p[4], p[5]]);
                let alphabet = u16::from_le_bytes([p[6], p[7]]);
                if &p[..4] != MAGIC {
                    return reply_error(&mut output, BridgeError::BadInit("bad magic".into()));
                }
                if version != PROTOCOL_VERSION {
                    return reply_error(
                        &mut output,
                        BridgeError::VersionMismatch {
                            client: version,
                            server: PROTOCOL_VERSION,
                            stderr: String::new(),
                        },
                    );
                }
                if alphabet as usize != ALPHABET {
                    return reply_error(
                        &mut output,
                        BridgeError::BadInit(format!("alphabet {alphabet}, expected 256")),
                    );
                }
                write_frame(&mut output, Opcode::InitAck, &init_ack_payload(version, name))?;
                output.flush()?;
                initialized = true;
            }
            Opcode::Predict => {
                let res = model.predict(&mut fv).map_err(|e| e.to_string()).and_then(|()| {
                    let total = fv.total();
                    if total == 0 || total > MAX_FREQ_TOTAL {
                        Err(BridgeError::TotalOutOfRange { total }.to_string())
                    } else {
                        Ok(())
                    }
                });
                if let Err(message) = res {
                    return reply_error(
                        &mut output,
                        BridgeError::ServerError {
                            message,
                            stderr: String::new(),
                        },
                    );
                }
                write_frame(&mut output, Opcode::Freqs, &freqs_payload(fv.counts()))?;
                output.flush()?;
            }
            Opcode::Observe => {
                if let Err(e) = model.observe(frame.payload[0]) {
                    return reply_error(
                        &mut output,
                        BridgeError::ServerError {
                            message: e.to_string(),
                            stderr: String::new(),
                        },
                    );
                }
            }
            Opcode::Reset => {
                if let Err(e) = model.reset() {
                    return reply_error(
                        &mut output,
                        BridgeError::ServerError {
                            message: e.to_string(),
                            stderr: String::new(),
                        },
                    );
                }
            }
            Opcode::Close => return Ok(ServeEnd::Closed),
            Opcode::InitAck | Opcode::Freqs | Opcode::Error => {
                return reply_error(
                    &mut output,
                    BridgeError::UnexpectedFrame {
                        expected: Opcode::Predict,
                        got: frame.opcode,
                    },
                );
            }
        }
    }
}
