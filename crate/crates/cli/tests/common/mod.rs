//! Fixture writers and a runner for the `divscan` binary.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use divscan_core::tensor_io::{write_bundle, LayerKind, LayerTensor, TensorBundle};

pub fn divscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divscan"))
        .args(args)
        .env_remove("DIVSCAN_THREADS")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim_end().to_owned()
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn manifest_of(report: &Path) -> PathBuf {
    let mut name = report.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn wave(n: usize, phase: f32) -> Vec<f32> {
    (0..n)
        .map(|i| ((i as f32 + phase) * 0.731).sin() + 0.05 * (i % 7) as f32)
        .collect()
}

/// Two weight layers: a conv and a two-head attention projection.
pub fn weight_bundle(dir: &Path, accuracy: Option<f64>) -> PathBuf {
    let layers = vec![
        LayerTensor::new(
            "conv1",
            LayerKind::Conv,
            vec![3, 3, 2, 6],
            1,
            wave(108, 0.0),
        )
        .unwrap(),
        LayerTensor::new("attn.q", LayerKind::MsaQ, vec![8, 5], 2, wave(40, 1.3)).unwrap(),
        LayerTensor::new(
            "fc",
            LayerKind::FullyConnected,
            vec![6, 4],
            1,
            wave(24, 2.9),
        )
        .unwrap(),
    ];
    let path = dir.join("weights");
    write_bundle(
        &TensorBundle::new("fixture", layers, accuracy).unwrap(),
        &path,
    )
    .unwrap();
    path
}

/// Activation stages over the same 16 examples.
pub fn activation_bundle(dir: &Path, name: &str, stages: usize) -> PathBuf {
    let layers = (0..stages)
        .map(|s| {
            LayerTensor::new(
                format!("stage{s}"),
                LayerKind::Activation,
                vec![16, 3 + s],
                1,
                wave(16 * (3 + s), s as f32),
            )
            .unwrap()
        })
        .collect();
    let path = dir.join(name);
    write_bundle(&TensorBundle::new(name, layers, None).unwrap(), &path).unwrap();
    path
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

pub const ORTHOGONAL_EMBEDDINGS: &str = "label,e0,e1\ncat,1,0\ncat,1,0\ndog,0,1\ndog,0,1\n";

pub fn importance_table(dir: &Path) -> PathBuf {
    let mut text = String::from("model_id,cis,cka,msc,transfer\n");
    for i in 0..30 {
        let cis = ((i * 37) % 30) as f64 / 30.0;
        let cka = ((i * 11) % 7) as f64 / 7.0;
        let msc = ((i * 5) % 13) as f64 / 13.0 - 0.5;
        text.push_str(&format!("m{i},{cis},{cka},{msc},{cis}\n"));
    }
    write(dir, "features.csv", &text)
}
