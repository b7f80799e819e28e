//! The bridge client against a real child process.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use common::*;
use tscom_core::bridge::open_bridge;
use tscom_core::container::{compress, decompress_with, Container};
use tscom_core::predictors::{AdaptiveOrder0, Predictor, PredictorSpec};

const TIMEOUT: Duration = Duration::from_secs(20);

#[test]
fn handshake_and_clean_close() {
    let session = open_bridge(&bridge_argv(&[]), TIMEOUT).unwrap();
    assert_eq!(session.version(), 1);
    assert_eq!(session.model(), "order0");
    assert_eq!(
        session.spec(),
        PredictorSpec::Bridge {
            version: 1,
            model: "order0".into()
        }
    );
    let status = session.close().unwrap();
    assert!(status.is_some_and(|s| s.success()), "{status:?}");
}

#[test]
fn mirrored_order0_is_bit_identical_on_64k() {
    let mut data = text_bytes(48 * 1024);
    data.extend(random_bytes(16 * 1024, 8));
    assert_eq!(data.len(), 65_536);

    let (local, local_acc) = compress(&mut AdaptiveOrder0::default(), &data).unwrap();
    let mut session = open_bridge(&bridge_argv(&["--mode", "order0"]), TIMEOUT).unwrap();
    let (remote, remote_acc) = compress(&mut session, &data).unwrap();
    drop(session);

    // headers name different predictors; everything that was coded must agree
    assert_eq!(remote.payload, local.payload);
    assert_eq!(remote.crc32, local.crc32);
    assert_eq!(remote.original_len, local.original_len);
    assert_eq!(remote_acc, local_acc);
    assert_eq!(remote.predictor_id, 255);
    assert_eq!(local.predictor_id, 1);

    // and the bridge decodes the in-process bitstream
    let mut session = open_bridge(&bridge_argv(&[]), TIMEOUT).unwrap();
    let as_bridge = Container {
        predictor_id: remote.predictor_id,
        config: remote.config.clone(),
        ..local
    };
    assert_eq!(decompress_with(&as_bridge, &mut session).unwrap(), data);
}

#[test]
fn bridge_containers_roundtrip_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("b.txt");
    let data = text_bytes(20_000);
    fs::write(&input, &data).unwrap();
    let packed = dir.path().join("b.tscc");
    let cmd = bridge_cmd(&[]);
    let out = run_tscom(&[
        "compress", path_str(&input), "-o", path_str(&packed), "--predictor", "bridge",
        "--bridge-cmd", &cmd,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let restored = dir.path().join("b.out");
    let out = run_tscom(&["decompress", path_str(&packed), "-o", path_str(&restored)]);
    assert_eq!(code(&out), 4, "no server given");
    assert!(stderr(&out).contains("--bridge-cmd"));

    let wrong = bridge_cmd(&["--mode", "uniform"]);
    let out = run_tscom(&[
        "decompress", path_str(&packed), "-o", path_str(&restored), "--bridge-cmd", &wrong,
    ]);
    assert_eq!(code(&out), 4, "server announces another model");

    let out = run_tscom(&[
        "decompress", path_str(&packed), "-o", path_str(&restored), "--bridge-cmd", &cmd,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&restored).unwrap(), data);
}

/// Compresses through a faulty server and checks for exit 3 and an untouched output
/// directory.
fn expect_protocol_failure(server_args: &[&str], extra: &[&str]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.bin");
    fs::write(&input, text_bytes(10_000)).unwrap();
    let packed = dir.path().join("in.tscc");
    let reports = dir.path().join("reports");
    let cmd = bridge_cmd(server_args);
    let mut args = vec![
        "compress", path_str(&input), "-o", path_str(&packed), "--predictor", "bridge",
        "--bridge-cmd", &cmd, "--report-dir", path_str(&reports),
    ];
    args.extend_from_slice(extra);
    let out = run_tscom(&args);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(!packed.exists(), "container written despite failure");
    assert_eq!(listing(dir.path()), ["in.bin"], "stray files left behind");
    stderr(&out)
}

#[test]
fn version_mismatch_exits_3() {
    let err = expect_protocol_failure(&["--mode", "version2"], &[]);
    assert!(err.contains("version"), "{err}");
}

#[test]
fn zero_total_exits_3() {
    let err = expect_protocol_failure(&["--mode", "zero-total"], &[]);
    assert!(err.contains("total"), "{err}");
}

#[test]
fn crash_mid_stream_exits_3_without_container() {
    let err = expect_protocol_failure(&["--mode", "crash", "--after", "500"], &[]);
    assert!(err.contains("crashing after 500"), "server stderr should be relayed: {err}");
}

#[test]
fn server_error_frame_exits_3() {
    let err = expect_protocol_failure(&["--mode", "error-on-predict"], &[]);
    assert!(err.contains("model raised on predict"), "{err}");
}

#[test]
fn stalled_server_times_out() {
    let start = Instant::now();
    let err = expect_protocol_failure(&["--mode", "stall"], &["--bridge-timeout-ms", "300"]);
    assert!(start.elapsed() < Duration::from_secs(15), "{:?}", start.elapsed());
    assert!(err.contains("did not answer within 300ms"), "{err}");
}

#[test]
fn unlaunchable_server_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x");
    fs::write(&input, b"abc").unwrap();
    let out = run_tscom(&[
        "compress", path_str(&input), "--predictor", "bridge", "--bridge-cmd",
        "/nonexistent/predictor-server",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn bridge_runs_in_a_bench_suite() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("s.txt");
    fs::write(&input, text_bytes(8_000)).unwrap();
    let reports = dir.path().join("r");
    let cmd = bridge_cmd(&[]);
    let out = run_tscom(&[
        "bench", path_str(&input), "--predictor", "order0,bridge", "--bridge-cmd", &cmd,
        "--report-dir", path_str(&reports),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let read = |label: &str| {
        tscom_core::metrics::CompressionReport::from_json(
            &fs::read_to_string(reports.join(format!("s.txt.{label}.report.json"))).unwrap(),
        )
        .unwrap()
    };
    let (local, remote) = (read("order0"), read("bridge"));
    assert_eq!(local.compressed_bits, remote.compressed_bits);
    assert_eq!(local.nll_quantized_bits, remote.nll_quantized_bits);
    assert!(remote.verified && remote.reset_at_split);
}
