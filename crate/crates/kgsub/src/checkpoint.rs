//! Model checkpoints.
//!
//! A checkpoint is a directory:
//!
//! | file             | contents                                              |
//! |------------------|-------------------------------------------------------|
//! | `manifest.json`  | [`CheckpointManifest`]                                |
//! | `entities.bin`   | entity matrix, `num_entities x dim`                   |
//! | `relations.bin`  | relation matrix, `num_relations x relation_dim`       |
//! | `entities.dict`  | `id<TAB>name` lines                                   |
//! | `relations.dict` | `id<TAB>name` lines                                   |
//!
//! Matrices are row-major IEEE-754 binary64 values in little-endian byte
//! order with no header; the shape comes from the manifest. The manifest
//! stores the SHA-256 of both matrix files and of both vocabularies (names
//! in id order, each followed by `\n`). It carries no timestamps, so equal
//! models give byte-identical checkpoints.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use kgsub_core::{EmbeddingStore, ModelKind, Norm, Vocab};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{read_dictionary, write_dictionary};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENTITIES_FILE: &str = "entities.bin";
pub const RELATIONS_FILE: &str = "relations.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub model: ModelDescriptor,
    pub dim: usize,
    pub relation_dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entity_vocab_sha256: String,
    pub relation_vocab_sha256: String,
    pub entities_sha256: String,
    pub relations_sha256: String,
    /// Resolved configuration of the run that produced the model.
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelDescriptor {
    TransE { norm: String },
    DistMult,
    ComplEx,
    RotatE { phase_scale: f64 },
}

impl From<ModelKind> for ModelDescriptor {
    fn from(kind: ModelKind) -> Self {
        match kind {
            ModelKind::TransE { norm: Norm::L1 } => ModelDescriptor::TransE { norm: "l1".into() },
            ModelKind::TransE { norm: Norm::L2 } => ModelDescriptor::TransE { norm: "l2".into() },
            ModelKind::DistMult => ModelDescriptor::DistMult,
            ModelKind::ComplEx => ModelDescriptor::ComplEx,
            ModelKind::RotatE { phase_scale } => ModelDescriptor::RotatE { phase_scale },
        }
    }
}

impl ModelDescriptor {
    pub fn model_kind(&self) -> Result<ModelKind> {
        Ok(match self {
            ModelDescriptor::TransE { norm } => ModelKind::TransE {
                norm: match norm.as_str() {
                    "l1" => Norm::L1,
                    "l2" => Norm::L2,
                    other => return Err(Error::Mismatch(format!("unknown TransE norm {other:?}"))),
                },
            },
            ModelDescriptor::DistMult => ModelKind::DistMult,
            ModelDescriptor::ComplEx => ModelKind::ComplEx,
            ModelDescriptor::RotatE { phase_scale } => ModelKind::RotatE { phase_scale: *phase_scale },
        })
    }
}

pub fn vocab_sha256(vocab: &Vocab) -> String {
    let mut h = Sha256::new();
    for name in vocab.names() {
        h.update(name.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn bytes_f64(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Mismatch(format!("{}: {e}", path.display())))
}

/// A model together with the vocabularies that name its rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub store: EmbeddingStore,
    pub entities: Vocab,
    pub relations: Vocab,
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<CheckpointManifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let entity_bytes = f64_bytes(self.store.entity_matrix());
        let relation_bytes = f64_bytes(self.store.relation_matrix());
        write_file(&dir.join(ENTITIES_FILE), &entity_bytes)?;
        write_file(&dir.join(RELATIONS_FILE), &relation_bytes)?;
        write_dictionary(&self.entities, &dir.join("entities.dict"))?;
        write_dictionary(&self.relations, &dir.join("relations.dict"))?;
        let manifest = CheckpointManifest {
            format_version: FORMAT_VERSION,
            model: self.kind.into(),
            dim: self.store.dim(),
            relation_dim: self.store.relation_dim(),
            num_entities: self.store.num_entities(),
            num_relations: self.store.num_relations(),
            entity_vocab_sha256: vocab_sha256(&self.entities),
            relation_vocab_sha256: vocab_sha256(&self.relations),
            entities_sha256: sha256_hex(&entity_bytes),
            relations_sha256: sha256_hex(&relation_bytes),
            config: self.config.clone(),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }

    /// Loads and cross-checks every file against the manifest.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CheckpointManifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Mismatch(format!("unsupported checkpoint format {}", manifest.format_version)));
        }
        let kind = manifest.model.model_kind()?;
        let matrix = |file: &str, rows: usize, width: usize, sha: &str| -> Result<Vec<f64>> {
            let path = dir.join(file);
            let bytes = read_file(&path)?;
            if bytes.len() != rows * width * 8 {
                return Err(Error::Mismatch(format!(
                    "{}: expected {} bytes for {rows}x{width}, found {}",
                    path.display(),
                    rows * width * 8,
                    bytes.len()
                )));
            }
            if sha256_hex(&bytes) != sha {
                return Err(Error::Mismatch(format!("{}: checksum differs from manifest", path.display())));
            }
            Ok(bytes_f64(&bytes))
        };
        let entity = matrix(ENTITIES_FILE, manifest.num_entities, manifest.dim, &manifest.entities_sha256)?;
        let relation = matrix(RELATIONS_FILE, manifest.num_relations, manifest.relation_dim, &manifest.relations_sha256)?;
        if kind.relation_dim(manifest.dim) != manifest.relation_dim {
            return Err(Error::Mismatch(format!("relation width {} does not fit {kind}", manifest.relation_dim)));
        }
        let store = EmbeddingStore::from_parts(manifest.dim, manifest.relation_dim, entity, relation)?;
        let entities = read_dictionary(&dir.join("entities.dict"))?;
        let relations = read_dictionary(&dir.join("relations.dict"))?;
        if vocab_sha256(&entities) != manifest.entity_vocab_sha256
            || vocab_sha256(&relations) != manifest.relation_vocab_sha256
        {
            return Err(Error::Mismatch(format!("{}: dictionaries differ from manifest hashes", dir.display())));
        }
        Ok(Self { kind, store, entities, relations, config: manifest.config })
    }

    /// Fails with [`Error::Mismatch`] unless both vocabularies equal the
    /// checkpoint's.
    pub fn check_vocab(&self, entities: &Vocab, relations: &Vocab) -> Result<()> {
        for (what, ours, theirs) in [("entity", &self.entities, entities), ("relation", &self.relations, relations)] {
            let (a, b) = (vocab_sha256(ours), vocab_sha256(theirs));
            if a != b {
                return Err(Error::Mismatch(format!("{what} vocabulary hash {b} does not match checkpoint {a}")));
            }
        }
        Ok(())
    }

    /// Writes `entities.tsv` and `relations.tsv`: the name, then the row
    /// values, tab-separated.
    pub fn export_tsv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rows = [
            ("entities.tsv", &self.entities, self.store.entity_matrix(), self.store.dim()),
            ("relations.tsv", &self.relations, self.store.relation_matrix(), self.store.relation_dim()),
        ];
        for (file, vocab, matrix, width) in rows {
            let path = dir.join(file);
            let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = BufWriter::new(f);
            for (name, row) in vocab.names().iter().zip(matrix.chunks_exact(width)) {
                let mut line = name.clone();
                for v in row {
                    line.push('\t');
                    line.push_str(&v.to_string());
                }
                writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
            }
            out.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
