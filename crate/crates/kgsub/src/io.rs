//! Tab-separated triple files and `id<TAB>name` dictionaries.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use kgsub_core::data::Pushed;
use kgsub_core::{Dataset, DatasetBuilder, DuplicatePolicy, Split, Triple, Vocab};

use crate::error::{Error, Result};

/// Where the splits (and optional dictionaries) live.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub relations: Option<PathBuf>,
}

impl DataPaths {
    /// `train.txt`, `valid.txt`, `test.txt` in `dir`, plus `entities.dict` /
    /// `relations.dict` when present.
    pub fn in_dir(dir: &Path) -> Self {
        let existing = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            train: dir.join("train.txt"),
            valid: existing("valid.txt"),
            test: existing("test.txt"),
            entities: existing("entities.dict"),
            relations: existing("relations.dict"),
        }
    }

    /// Every file that contributes to the dataset, in a fixed order.
    pub fn files(&self) -> Vec<&Path> {
        [Some(&self.train), self.valid.as_ref(), self.test.as_ref(), self.entities.as_ref(), self.relations.as_ref()]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    pub duplicates: DuplicatePolicy,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn for_each_line(path: &Path, mut f: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        f(i + 1, line)?;
    }
    Ok(())
}

fn split_fields<'a, const N: usize>(path: &Path, line_no: usize, line: &'a str) -> Result<[&'a str; N]> {
    let fields: Vec<&'a str> = line.split('\t').collect();
    fields.try_into().map_err(|fields: Vec<&'a str>| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message: format!("expected {N} tab-separated fields, found {}", fields.len()),
    })
}

/// Reads an `id<TAB>name` dictionary. Ids must be exactly `0..n`.
pub fn read_dictionary(path: &Path) -> Result<Vocab> {
    let mut entries: Vec<(u32, String, usize)> = Vec::new();
    for_each_line(path, |line_no, line| {
        let [id, name] = split_fields::<2>(path, line_no, line)?;
        let id = id.trim().parse::<u32>().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("bad id {id:?}: {e}"),
        })?;
        entries.push((id, name.to_string(), line_no));
        Ok(())
    })?;
    entries.sort_by_key(|e| e.0);
    let mut vocab = Vocab::new();
    for (expected, (id, name, line_no)) in entries.into_iter().enumerate() {
        if id as usize != expected || vocab.id(&name).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("dictionary ids must be unique and dense; entry {id} ({name:?}) breaks that"),
            });
        }
        vocab.intern(&name);
    }
    Ok(vocab)
}

/// Reads the splits in train, valid, test order. Ids are assigned by first
/// appearance unless dictionaries are given, in which case every name must
/// appear in them.
pub fn load_dataset(paths: &DataPaths, options: LoadOptions) -> Result<Dataset> {
    let mut builder = DatasetBuilder::new(options.duplicates);
    if let Some(path) = &paths.entities {
        builder = builder.with_entities(read_dictionary(path)?);
    }
    if let Some(path) = &paths.relations {
        builder = builder.with_relations(read_dictionary(path)?);
    }
    let splits = [(Split::Train, Some(&paths.train)), (Split::Valid, paths.valid.as_ref()), (Split::Test, paths.test.as_ref())];
    for (split, path) in splits {
        let Some(path) = path else { continue };
        let mut dropped = 0usize;
        for_each_line(path, |line_no, line| {
            let [h, r, t] = split_fields::<3>(path, line_no, line)?;
            match builder.push(split, h, r, t) {
                Ok(Pushed::Added) => Ok(()),
                Ok(Pushed::DroppedDuplicate) => {
                    dropped += 1;
                    log::warn!("{}:{line_no}: dropping duplicate training triple", path.display());
                    Ok(())
                }
                Err(e) => Err(Error::Parse { path: path.clone(), line: line_no, message: e.to_string() }),
            }
        })?;
        if dropped > 0 {
            log::warn!("{}: dropped {dropped} duplicate triples", path.display());
        }
    }
    Ok(builder.finish()?)
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn triple_line(ds: &Dataset, t: &Triple) -> String {
    let name = |v: &Vocab, id| v.name(id).unwrap_or_default().to_string();
    format!("{}\t{}\t{}", name(&ds.entities, t.head), name(&ds.relations, t.relation), name(&ds.entities, t.tail))
}

/// Writes the three splits and both dictionaries into `dir`, in the layout
/// [`DataPaths::in_dir`] reads back.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in [Split::Train, Split::Valid, Split::Test] {
        let path = dir.join(format!("{}.txt", split.as_str()));
        write_lines(&path, dataset.split(split).iter().map(|t| triple_line(dataset, t)))?;
    }
    write_dictionary(&dataset.entities, &dir.join("entities.dict"))?;
    write_dictionary(&dataset.relations, &dir.join("relations.dict"))
}

pub fn write_dictionary(vocab: &Vocab, path: &Path) -> Result<()> {
    write_lines(path, vocab.names().iter().enumerate().map(|(i, n)| format!("{i}\t{n}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.txt", "a\tr\tb\na r c\n");
        let err = load_dataset(&DataPaths::in_dir(dir.path()), LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { path, line, .. } => {
                assert!(path.ends_with("train.txt"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_train_triple() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.txt", "a\tr\tb\na\tr\tb\n");
        let paths = DataPaths::in_dir(dir.path());
        assert!(matches!(load_dataset(&paths, LoadOptions::default()), Err(Error::Parse { line: 2, .. })));
        let ds = load_dataset(&paths, LoadOptions { duplicates: DuplicatePolicy::Dedupe }).unwrap();
        assert_eq!(ds.train.len(), 1);
    }

    #[test]
    fn empty_train_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DataPaths::in_dir(dir.path());
        assert!(matches!(load_dataset(&paths, LoadOptions::default()), Err(Error::MissingInput(_))));
        write(dir.path(), "train.txt", "");
        let err = load_dataset(&paths, LoadOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "empty training split");
    }

    #[test]
    fn dictionaries_fix_ids() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.txt", "b\tr\ta\n");
        write(dir.path(), "entities.dict", "1\tb\n0\ta\n2\tc\n");
        let ds = load_dataset(&DataPaths::in_dir(dir.path()), LoadOptions::default()).unwrap();
        assert_eq!(ds.entities.id("a"), Some(0));
        assert_eq!(ds.num_entities(), 3);
        assert_eq!(ds.train[0], Triple::new(1, 0, 0));
    }

    #[test]
    fn sparse_dictionary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "entities.dict", "0\ta\n2\tb\n");
        assert!(matches!(read_dictionary(&p), Err(Error::Parse { .. })));
    }
}
