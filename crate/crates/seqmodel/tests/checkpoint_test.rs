//! Checkpoint round-trips and corruption detection: bit-exact restore,
//! checksum and truncation guards, schema versioning, and tensor-table
//! validation against the configuration.

mod common;

use std::fs;

use common::{fill, tiny_window};
use seqmodel::checkpoint::{load, save};
use seqmodel::{DynamicsModel, ModelConfig, ModelError, NormStats};

fn sample_model() -> DynamicsModel {
    let cfg = ModelConfig {
        k_hist: 1,
        horizon: 2,
        n_layers: 1,
        ..ModelConfig::default()
    };
    // Distinct, non-identity statistics so the restore is checked for them.
    let stats = NormStats {
        state_mean: [0.1, -0.2, 0.05, 1.5, 0.0, 0.3],
        state_std: [1.1, 0.9, 0.4, 2.0, 0.6, 1.3],
        act_mean: [0.2, -0.1],
        act_std: [0.7, 0.5],
        target_std: [0.3, 0.25, 0.1, 0.5, 0.2, 0.4],
    };
    let mut m = DynamicsModel::new(&cfg, stats, 13).unwrap();
    // Non-zero head so predictions exercise every stored tensor.
    fill(m.tensor_mut("head.w"), |i, j| {
        (((i * 7 + j * 3) % 5) as f32 - 2.0) * 0.03
    });
    m
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let m = sample_model();
    save(&m, dir.path()).unwrap();
    let r = load(dir.path()).unwrap();
    assert_eq!(r.cfg(), m.cfg());
    assert_eq!(r.stats, m.stats);
    assert_eq!(r.weights.flat(), m.weights.flat());
    // Same inputs, bit-identical predictions.
    let w = tiny_window();
    let a = m.predict_each(std::slice::from_ref(&w)).unwrap();
    let b = r.predict_each(&[w]).unwrap();
    for (x, y) in a[0].iter().zip(&b[0]) {
        common::assert_state_eq(y, x, "restored prediction");
    }
}

#[test]
fn resaving_overwrites_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = sample_model();
    save(&m, dir.path()).unwrap();
    fill(m.tensor_mut("head.b"), |_, j| 0.01 * j as f32);
    save(&m, dir.path()).unwrap();
    let r = load(dir.path()).unwrap();
    assert_eq!(r.weights.flat(), m.weights.flat());
}

#[test]
fn flipped_weight_byte_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    save(&sample_model(), dir.path()).unwrap();
    let wpath = dir.path().join("weights.f32");
    let mut bytes = fs::read(&wpath).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&wpath, bytes).unwrap();
    assert!(matches!(
        load(dir.path()),
        Err(ModelError::ChecksumMismatch { .. })
    ));
}

#[test]
fn truncated_weights_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    save(&sample_model(), dir.path()).unwrap();
    let wpath = dir.path().join("weights.f32");
    let bytes = fs::read(&wpath).unwrap();
    fs::write(&wpath, &bytes[..bytes.len() - 4]).unwrap();
    match load(dir.path()) {
        Err(ModelError::Truncated { expected, found, .. }) => {
            assert_eq!(expected, bytes.len());
            assert_eq!(found, bytes.len() - 4);
        }
        other => panic!("expected Truncated, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn future_schema_versions_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    save(&sample_model(), dir.path()).unwrap();
    let mpath = dir.path().join("meta.json");
    let mut meta: serde_json::Value =
        serde_json::from_slice(&fs::read(&mpath).unwrap()).unwrap();
    meta["schema_version"] = serde_json::json!(2);
    fs::write(&mpath, serde_json::to_vec(&meta).unwrap()).unwrap();
    match load(dir.path()) {
        Err(ModelError::VersionMismatch { found, expected }) => {
            assert_eq!(found, 2);
            assert_eq!(expected, 1);
        }
        other => panic!("expected VersionMismatch, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn tensor_table_must_match_the_configuration() {
    // A checkpoint whose config disagrees with its stored tensor shapes
    // (here: a longer history changes the positional table) must refuse to
    // load rather than reinterpret the flat buffer.
    let dir = tempfile::tempdir().unwrap();
    save(&sample_model(), dir.path()).unwrap();
    let mpath = dir.path().join("meta.json");
    let mut meta: serde_json::Value =
        serde_json::from_slice(&fs::read(&mpath).unwrap()).unwrap();
    meta["cfg"]["k_hist"] = serde_json::json!(3);
    fs::write(&mpath, serde_json::to_vec(&meta).unwrap()).unwrap();
    assert!(matches!(
        load(dir.path()),
        Err(ModelError::TensorMismatch { .. })
    ));
}

#[test]
fn missing_and_malformed_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    // Nothing saved yet.
    assert!(matches!(load(dir.path()), Err(ModelError::Io { .. })));
    // Unparseable metadata.
    save(&sample_model(), dir.path()).unwrap();
    fs::write(dir.path().join("meta.json"), b"{not json").unwrap();
    assert!(matches!(load(dir.path()), Err(ModelError::Meta(_))));
}
