#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use featgp_core::rng::stream;
use rand::Rng;

pub fn featgp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featgp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Rows of uniform(−2, 2) features with a header `x0,…,x{d-1},y`, where
/// `y = target(row)`.
pub fn uniform_csv(n: usize, d: usize, seed: u64, target: impl Fn(&[f64]) -> f64) -> String {
    let mut rng = stream(seed, 0);
    let mut text: String = (0..d).map(|j| format!("x{j},")).collect();
    text.push_str("y\n");
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        for v in &row {
            text.push_str(&format!("{v},"));
        }
        text.push_str(&format!("{}\n", target(&row)));
    }
    text
}

/// Parses a CSV written by the tool into its header and rows.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let t = featgp::table::Table::read(path).unwrap();
    (t.headers, t.rows)
}

pub fn column(path: &Path, name: &str) -> Vec<String> {
    let (headers, rows) = read_csv(path);
    let j = headers.iter().position(|h| h == name).unwrap();
    rows.into_iter().map(|r| r[j].clone()).collect()
}
