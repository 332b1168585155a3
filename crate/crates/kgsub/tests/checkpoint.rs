//! Checkpoint files: round trip and integrity checks.

mod common;

use std::fs;

use kgsub::checkpoint::{bytes_f64, CheckpointManifest, ENTITIES_FILE, MANIFEST_FILE};
use kgsub::{Checkpoint, Error};
use kgsub_core::models::init_model;
use kgsub_core::{ModelKind, Norm, Vocab};

fn sample(kind: ModelKind) -> Checkpoint {
    let store = init_model(&kind, 4, 2, 6, 3, 0.5).unwrap();
    Checkpoint {
        kind,
        store,
        entities: Vocab::synthetic("e", 4),
        relations: Vocab::synthetic("r", 2),
        config: serde_json::json!({"note": "test"}),
    }
}

fn kinds() -> [ModelKind; 5] {
    [
        ModelKind::TransE { norm: Norm::L1 },
        ModelKind::TransE { norm: Norm::L2 },
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::rotate_for_range(0.25),
    ]
}

#[test]
fn round_trip_every_model() {
    for kind in kinds() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = sample(kind);
        ckpt.save(dir.path()).unwrap();
        assert_eq!(Checkpoint::load(dir.path()).unwrap(), ckpt, "{kind}");
    }
}

#[test]
fn matrix_file_is_raw_little_endian_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = sample(ModelKind::DistMult);
    ckpt.save(dir.path()).unwrap();
    let bytes = fs::read(dir.path().join(ENTITIES_FILE)).unwrap();
    assert_eq!(bytes.len(), 4 * 6 * 8);
    let first = f64::from_le_bytes(bytes[..8].try_into().unwrap());
    assert_eq!(first, ckpt.store.entity_matrix()[0]);
    assert_eq!(bytes_f64(&bytes), ckpt.store.entity_matrix());
}

#[test]
fn saving_twice_gives_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ckpt = sample(ModelKind::ComplEx);
    ckpt.save(a.path()).unwrap();
    ckpt.save(b.path()).unwrap();
    assert_eq!(common::tree(a.path()), common::tree(b.path()));
}

#[test]
fn flipped_byte_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    sample(ModelKind::ComplEx).save(dir.path()).unwrap();
    let path = dir.path().join(ENTITIES_FILE);
    let mut bytes = fs::read(&path).unwrap();
    bytes[17] ^= 1;
    fs::write(&path, bytes).unwrap();
    let err = Checkpoint::load(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Mismatch(_)), "{err:?}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn truncated_matrix_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    sample(ModelKind::DistMult).save(dir.path()).unwrap();
    let path = dir.path().join(ENTITIES_FILE);
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(Checkpoint::load(dir.path()), Err(Error::Mismatch(_))));
}

#[test]
fn corrupt_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    sample(ModelKind::DistMult).save(dir.path()).unwrap();
    fs::write(dir.path().join(MANIFEST_FILE), "{ not json").unwrap();
    assert!(Checkpoint::load(dir.path()).is_err());

    sample(ModelKind::DistMult).save(dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    let mut m: CheckpointManifest = serde_json::from_str(&text).unwrap();
    m.num_entities += 1;
    fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
    assert!(matches!(Checkpoint::load(dir.path()), Err(Error::Mismatch(_))));
}

#[test]
fn edited_dictionary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    sample(ModelKind::DistMult).save(dir.path()).unwrap();
    fs::write(dir.path().join("entities.dict"), "0\te0\n1\te1\n2\te2\n3\tsomething_else\n").unwrap();
    assert!(matches!(Checkpoint::load(dir.path()), Err(Error::Mismatch(_))));
}

#[test]
fn vocabulary_check() {
    let ckpt = sample(ModelKind::DistMult);
    ckpt.check_vocab(&Vocab::synthetic("e", 4), &Vocab::synthetic("r", 2)).unwrap();
    let err = ckpt.check_vocab(&Vocab::synthetic("x", 4), &Vocab::synthetic("r", 2)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn missing_checkpoint_directory() {
    let err = Checkpoint::load(std::path::Path::new("/nonexistent/ckpt")).unwrap_err();
    assert!(matches!(err, Error::MissingInput(_)));
}
