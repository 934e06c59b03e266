//! A store written by an independent tool, committed byte for byte.

use std::fs;
use std::path::PathBuf;

use lpclip_core::tensorio::{read_store, write_store, EmbeddingStore, Manifest};
use lpclip_core::Matrix;
use sha2::{Digest, Sha256};

const FIXTURE_SHA256: &str = "5bc55fcbfe829ebd637ca84ef2c5d339733d5c2608c19170873aef2cf3cf28de";

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fixture_4x4.lpce")
}

fn expected_values() -> Vec<f64> {
    (0..16).map(|k| 0.25 * k as f64 - 1.5).collect()
}

fn expected_manifest() -> Manifest {
    Manifest {
        labels: Some(vec![0, 1, -1, 1]),
        ..Manifest::new(vec!["a".into(), "b".into()], "fixture")
    }
}

#[test]
fn fixture_bytes_are_pinned() {
    let bytes = fs::read(fixture()).unwrap();
    assert_eq!(hex::encode(Sha256::digest(&bytes)), FIXTURE_SHA256);
    assert_eq!(bytes.len(), 24 + 16 * 4);
}

#[test]
fn fixture_reads_back_exact_values() {
    let s = read_store(&fixture()).unwrap();
    assert_eq!((s.rows(), s.cols()), (4, 4));
    assert!(!s.is_unit_norm());
    let got: Vec<f64> = s.data().iter().map(|&v| v as f64).collect();
    assert_eq!(got, expected_values());
    assert_eq!(s.manifest, expected_manifest());
    assert_eq!(s.labels(), Some(&[0, 1, -1, 1][..]));
}

#[test]
fn writer_reproduces_fixture_bytes() {
    let m = Matrix::from_vec(4, 4, expected_values()).unwrap();
    let store = EmbeddingStore::from_matrix(&m, false, expected_manifest()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.lpce");
    write_store(&store, &out).unwrap();
    assert_eq!(fs::read(&out).unwrap(), fs::read(fixture()).unwrap());
    assert_eq!(read_store(&out).unwrap().manifest, expected_manifest());
}
