#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub fn tscom() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tscom"))
}

pub fn run_tscom(args: &[&str]) -> Output {
    tscom().args(args).output().expect("tscom runs")
}

/// `--bridge-cmd` value launching the reference server with extra arguments.
pub fn bridge_cmd(extra: &[&str]) -> String {
    let mut argv = vec![env!("CARGO_BIN_EXE_tscom-bridge-ref")];
    argv.extend_from_slice(extra);
    shlex::try_join(argv).unwrap()
}

pub fn bridge_argv(extra: &[&str]) -> Vec<String> {
    let mut argv = vec![env!("CARGO_BIN_EXE_tscom-bridge-ref").to_string()];
    argv.extend(extra.iter().map(|s| s.to_string()));
    argv
}

pub fn random_bytes(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut out = vec![0u8; n];
    rng.fill_bytes(&mut out);
    out
}

/// Skewed, repetitive text-like bytes.
pub fn text_bytes(n: usize) -> Vec<u8> {
    let words = ["the ", "entropy ", "of ", "a ", "source ", "bounds ", "its ", "code ", "length. "];
    let mut rng = Xoshiro256StarStar::seed_from_u64(99);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        out.extend_from_slice(words[(rng.next_u32() % words.len() as u32) as usize].as_bytes());
    }
    out.truncate(n);
    out
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Names of everything in `dir`.
pub fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}
