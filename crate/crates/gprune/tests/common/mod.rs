//! On-disk model fixtures shared by the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gprune::bench::derive_seed;
use gprune::io::{
    write_manifest, write_norm_csv, write_weight_tensor, ManifestLayer, ModelManifest,
};
use gprune::{NormMatrix, WeightTensor};

/// Weights in quarter steps of [-2, 2]. Quarter steps are exact in f32, so
/// the values survive the tensor files unchanged and in-memory solutions
/// match what the command-line tool computes from disk.
pub fn quarter_step_weights(
    c_out: usize,
    c_in: usize,
    k_h: usize,
    k_w: usize,
    seed: u64,
) -> WeightTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..c_out * c_in * k_h * k_w)
        .map(|_| rng.random_range(-8..=8i32) as f64 * 0.25)
        .collect();
    WeightTensor::new(c_out, c_in, k_h, k_w, data).unwrap()
}

/// Writes a three-layer model into `dir` and returns the manifest path:
/// `conv1` is 4x4 all-ones 1x1 weights, `conv3` is 8x8 seeded 3x3 weights,
/// and `fc_norms` ships a norm matrix without any weight data.
pub fn write_model(dir: &Path) -> PathBuf {
    let ones = WeightTensor::new(4, 4, 1, 1, vec![1.0; 16]).unwrap();
    write_weight_tensor(&dir.join("conv1.gpt1"), &ones).unwrap();

    let conv3 = quarter_step_weights(8, 8, 3, 3, derive_seed(77, &[3]));
    write_weight_tensor(&dir.join("conv3.gpt1"), &conv3).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(77, &[6]));
    let values: Vec<f64> = (0..36).map(|_| rng.random_range(0.05..2.0)).collect();
    let norms = NormMatrix::new(6, 6, values).unwrap();
    write_norm_csv(&dir.join("fc.csv"), &norms).unwrap();

    let layer = |name: &str, c: usize, k: usize, h: usize, data: Option<&str>, norm: Option<&str>| {
        ManifestLayer {
            name: name.into(),
            c_in: c,
            c_out: c,
            k_h: k,
            k_w: k,
            h_out: h,
            w_out: h,
            dtype: "f32".into(),
            data_file: data.map(Into::into),
            norm_file: norm.map(Into::into),
        }
    };
    let manifest = ModelManifest::new(vec![
        layer("conv1", 4, 1, 8, Some("conv1.gpt1"), None),
        layer("conv3", 8, 3, 6, Some("conv3.gpt1"), None),
        layer("fc_norms", 6, 1, 4, None, Some("fc.csv")),
    ]);
    let path = dir.join("model.json");
    write_manifest(&path, &manifest).unwrap();
    path
}

/// Runs the compiled `gprune` binary with the given arguments.
pub fn gprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gprune"))
        .args(args)
        .output()
        .expect("the gprune binary runs")
}

/// Runs `gprune` from inside `dir`, so relative output paths land there.
///
/// Reports echo their command line verbatim; runs that should produce
/// byte-identical reports must therefore pass identical relative paths and
/// differ only in working directory.
pub fn gprune_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gprune"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("the gprune binary runs")
}

pub fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("standard output is one JSON document")
}

/// All files under `dir`, as (path relative to `dir`, contents) pairs
/// sorted by path.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
