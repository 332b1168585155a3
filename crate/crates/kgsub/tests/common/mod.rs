#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgsub::cli::load_config;
use kgsub::io::{load_dataset, DataPaths, LoadOptions};
use kgsub::Config;
use kgsub_core::Dataset;

pub fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn toy_config_path() -> PathBuf {
    workspace().join("configs/toy.toml")
}

pub fn toy_dataset() -> Dataset {
    load_dataset(&DataPaths::in_dir(&workspace().join("data/toy")), LoadOptions::default()).unwrap()
}

/// The toy config with `--section.key=value` overrides applied.
pub fn toy_config(overrides: &[&str]) -> Config {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    load_config(&toy_config_path(), &overrides).unwrap()
}

/// Writes `train`, `valid`, `test` (tab-separated lines) into `dir`.
pub fn write_splits(dir: &Path, train: &str, valid: &str, test: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("train.txt"), train).unwrap();
    fs::write(dir.join("valid.txt"), valid).unwrap();
    fs::write(dir.join("test.txt"), test).unwrap();
}

pub fn kgsub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgsub")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `dir`, relative path and contents, sorted by path.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
