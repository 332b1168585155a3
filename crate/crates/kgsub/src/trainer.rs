//! Mini-batch training with validation-based model selection and resumable
//! state.
//!
//! Each train triple gives two examples (tail and head prediction). Every
//! epoch the example ids are shuffled by a seeded permutation and consumed
//! `batch_size` at a time; a batch that runs past the end of an epoch is
//! filled from the next one.
//!
//! A single ChaCha8 stream, seeded from `trainer.seed`, drives both the
//! permutations and the negative draws, always on one thread. The
//! per-example losses and gradients are then computed on the worker pool and
//! summed in batch order, so the log does not depend on the worker count.

use std::fs;
use std::io::Write;
use std::path::Path;

use kgsub_core::loss::{draw_batch_negatives, example_loss, reduce_batch, ExampleLoss};
use kgsub_core::optim::{Moments, Optimizer};
use kgsub_core::{
    compute_weights, count_frequencies, init_model, AnswerIndex, Dataset, EmbeddingStore, LossConfig, ModelKind,
    SubsamplingWeights,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{bytes_f64, f64_bytes, read_file, read_json, vocab_sha256, write_file, write_json, Checkpoint};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::evaluation::{build_pool, evaluate};

/// One line of the JSON-lines training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_mrr: Option<f64>,
}

impl LogRecord {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("log record serializes");
        s.push('\n');
        s
    }
}

/// Why [`Trainer::run`] returned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub steps: u64,
    pub stopped_early: bool,
    pub best_valid_mrr: Option<f64>,
    pub best_step: Option<u64>,
}

/// SHA-256 over the train triples' ids, little-endian `u32` head, relation,
/// tail in file order.
pub fn train_sha256(dataset: &Dataset) -> String {
    let mut h = Sha256::new();
    for t in &dataset.train {
        for v in [t.head, t.relation, t.tail] {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub struct Trainer<'a> {
    dataset: &'a Dataset,
    config: Config,
    kind: ModelKind,
    loss: LossConfig,
    weights: SubsamplingWeights,
    train_answers: Option<AnswerIndex>,
    known: AnswerIndex,
    pool: rayon::ThreadPool,
    step: u64,
    epoch: u64,
    cursor: usize,
    permutation: Vec<u32>,
    rng: ChaCha8Rng,
    store: EmbeddingStore,
    optimizer: Optimizer,
    best: Option<Best>,
    evals_since_best: u64,
    stopped_early: bool,
    log: Vec<LogRecord>,
}

#[derive(Clone, Debug)]
struct Best {
    mrr: f64,
    step: u64,
    store: EmbeddingStore,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, config: &Config) -> Result<Self> {
        config.validate()?;
        let kind = config.model_kind();
        let store = init_model(
            &kind,
            dataset.num_entities(),
            dataset.num_relations(),
            config.model.dim,
            config.trainer.seed,
            config.init_range(),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.trainer.seed);
        let mut permutation: Vec<u32> = (0..dataset.num_examples() as u32).collect();
        permutation.shuffle(&mut rng);
        let optimizer = Optimizer::new(config.trainer.optimizer_kind(), &store);
        Self::assemble(dataset, config, kind, store, optimizer, rng, permutation)
    }

    fn assemble(
        dataset: &'a Dataset,
        config: &Config,
        kind: ModelKind,
        store: EmbeddingStore,
        optimizer: Optimizer,
        rng: ChaCha8Rng,
        permutation: Vec<u32>,
    ) -> Result<Self> {
        let loss = config.loss_config();
        let table = count_frequencies(dataset);
        let weights = compute_weights(&loss.scheme, dataset, &table)?;
        let train_answers = loss.noise.filter_false_negatives.then(|| dataset.train_answers());
        if config.trainer.eval_every > 0 && dataset.valid.is_empty() {
            log::warn!("no validation triples; the final model is the last one");
        }
        Ok(Self {
            dataset,
            config: config.clone(),
            kind,
            loss,
            weights,
            train_answers,
            known: dataset.all_answers(),
            pool: build_pool(config.trainer.workers)?,
            step: 0,
            epoch: 0,
            cursor: 0,
            permutation,
            rng,
            store,
            optimizer,
            best: None,
            evals_since_best: 0,
            stopped_early: false,
            log: Vec::new(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Current parameters.
    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    /// The parameters with the highest validation MRR so far, or the current
    /// ones if no validation has run.
    pub fn best_store(&self) -> &EmbeddingStore {
        self.best.as_ref().map_or(&self.store, |b| &b.store)
    }

    /// Records produced by this trainer since it was created or resumed.
    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn weights(&self) -> &SubsamplingWeights {
        &self.weights
    }

    pub fn outcome(&self) -> TrainOutcome {
        TrainOutcome {
            steps: self.step,
            stopped_early: self.stopped_early,
            best_valid_mrr: self.best.as_ref().map(|b| b.mrr),
            best_step: self.best.as_ref().map(|b| b.step),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.stopped_early || self.step >= self.config.trainer.max_steps
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let size = self.config.trainer.batch_size;
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.permutation.len() {
                self.epoch += 1;
                self.cursor = 0;
                for (i, slot) in self.permutation.iter_mut().enumerate() {
                    *slot = i as u32;
                }
                self.permutation.shuffle(&mut self.rng);
            }
            let take = (size - batch.len()).min(self.permutation.len() - self.cursor);
            batch.extend(self.permutation[self.cursor..self.cursor + take].iter().map(|&i| i as usize));
            self.cursor += take;
        }
        batch
    }

    /// One optimizer step, plus validation when it is due.
    pub fn train_step(&mut self) -> Result<LogRecord> {
        let step = self.step + 1;
        let lr = self.config.trainer.learning_rate_at(step);
        let epoch = self.epoch;
        let batch = self.next_batch();
        let negatives =
            draw_batch_negatives(&mut self.rng, &self.loss.noise, self.dataset, &batch, self.train_answers.as_ref())?;
        let (store, kind, dataset, weights, loss) = (&self.store, &self.kind, self.dataset, &self.weights, &self.loss);
        let results: Vec<ExampleLoss> = self.pool.install(|| {
            batch
                .par_iter()
                .zip(&negatives)
                .map(|(&id, neg)| {
                    let (a, b) = weights.get(id);
                    example_loss(store, kind, &dataset.example(id), a, b, loss, neg)
                })
                .collect::<kgsub_core::Result<Vec<_>>>()
        })?;
        let batch_loss = reduce_batch(results, self.store.dim(), self.store.relation_dim())?;
        if !batch_loss.loss.is_finite() || !batch_loss.grads.is_finite() {
            return Err(Error::NonFiniteLoss { step, learning_rate: lr, batch });
        }
        self.optimizer.apply(&mut self.store, &batch_loss.grads, lr);
        self.step = step;

        let mut record = LogRecord { step, epoch, loss: batch_loss.loss, learning_rate: lr, valid_mrr: None };
        let every = self.config.trainer.eval_every;
        if every > 0 && step.is_multiple_of(every) && !self.dataset.valid.is_empty() {
            let mrr = self.validate()?;
            record.valid_mrr = Some(mrr);
            if self.best.as_ref().is_none_or(|b| mrr > b.mrr) {
                self.best = Some(Best { mrr, step, store: self.store.clone() });
                self.evals_since_best = 0;
            } else {
                self.evals_since_best += 1;
                let patience = self.config.trainer.patience;
                if patience > 0 && self.evals_since_best >= patience {
                    log::info!("step {step}: no improvement in {patience} validations, stopping");
                    self.stopped_early = true;
                }
            }
        }
        self.log.push(record.clone());
        Ok(record)
    }

    /// Filtered validation MRR of the current parameters.
    pub fn validate(&self) -> Result<f64> {
        Ok(evaluate(&self.pool, &self.store, &self.kind, &self.dataset.valid, &self.known)?.mrr())
    }

    /// Trains until `max_steps` or early stopping. Every record is written
    /// to `log` as one JSON line. With `state_dir`, the resumable state is
    /// saved every `checkpoint_every` steps and at the end.
    pub fn run(&mut self, log: &mut dyn Write, state_dir: Option<&Path>) -> Result<TrainOutcome> {
        let every = self.config.trainer.checkpoint_every;
        while !self.is_finished() {
            let record = self.train_step()?;
            log.write_all(record.to_json_line().as_bytes()).map_err(|e| Error::Io {
                path: "<training log>".into(),
                source: e,
            })?;
            if record.step % 100 == 0 || record.valid_mrr.is_some() {
                log::info!(
                    "step {} loss {:.6}{}",
                    record.step,
                    record.loss,
                    record.valid_mrr.map(|m| format!(" valid MRR {m:.4}")).unwrap_or_default()
                );
            }
            if let Some(dir) = state_dir {
                if every > 0 && record.step % every == 0 && !self.is_finished() {
                    log.flush().ok();
                    self.save_state(dir)?;
                }
            }
        }
        log.flush().ok();
        if let Some(dir) = state_dir {
            self.save_state(dir)?;
        }
        Ok(self.outcome())
    }

    /// The selected model as a checkpoint.
    pub fn checkpoint(&self) -> Checkpoint {
        self.checkpoint_of(self.best_store())
    }

    fn checkpoint_of(&self, store: &EmbeddingStore) -> Checkpoint {
        Checkpoint {
            kind: self.kind,
            store: store.clone(),
            entities: self.dataset.entities.clone(),
            relations: self.dataset.relations.clone(),
            config: serde_json::to_value(&self.config).expect("config serializes"),
        }
    }

    /// Writes everything needed to continue bit-identically into `dir`.
    pub fn save_state(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.checkpoint_of(&self.store).save(&dir.join("current"))?;
        let best_dir = dir.join("best");
        if let Some(best) = &self.best {
            self.checkpoint_of(&best.store).save(&best_dir)?;
        } else if best_dir.exists() {
            fs::remove_dir_all(&best_dir).map_err(|e| Error::io(&best_dir, e))?;
        }
        let perm: Vec<u8> = self.permutation.iter().flat_map(|v| v.to_le_bytes()).collect();
        write_file(&dir.join(PERMUTATION_FILE), &perm)?;
        let moments = [("entity", &self.optimizer.entity), ("relation", &self.optimizer.relation)];
        for (name, m) in moments {
            write_file(&dir.join(format!("adam_{name}_m.bin")), &f64_bytes(&m.first))?;
            write_file(&dir.join(format!("adam_{name}_v.bin")), &f64_bytes(&m.second))?;
            let last: Vec<u8> = m.last_step.iter().flat_map(|v| v.to_le_bytes()).collect();
            write_file(&dir.join(format!("adam_{name}_last.bin")), &last)?;
        }
        let state = StateFile {
            format_version: STATE_VERSION,
            step: self.step,
            epoch: self.epoch,
            cursor: self.cursor,
            rng_seed: hex::encode(self.rng.get_seed()),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
            optimizer_step: self.optimizer.step,
            best_valid_mrr: self.best.as_ref().map(|b| b.mrr),
            best_step: self.best.as_ref().map(|b| b.step),
            evals_since_best: self.evals_since_best,
            stopped_early: self.stopped_early,
            entity_vocab_sha256: vocab_sha256(&self.dataset.entities),
            relation_vocab_sha256: vocab_sha256(&self.dataset.relations),
            train_sha256: train_sha256(self.dataset),
            config: serde_json::to_value(&self.config)?,
        };
        write_json(&dir.join(STATE_FILE), &state)
    }

    /// Rebuilds a trainer from [`Trainer::save_state`] output.
    ///
    /// `config` may differ from the saved one only in `trainer.max_steps`,
    /// `trainer.workers`, `trainer.checkpoint_every` and the data file
    /// locations; the data itself must hash the same.
    pub fn resume(dataset: &'a Dataset, config: &Config, dir: &Path) -> Result<Self> {
        config.validate()?;
        let state: StateFile = read_json(&dir.join(STATE_FILE))?;
        if state.format_version != STATE_VERSION {
            return Err(Error::Mismatch(format!("unsupported state format {}", state.format_version)));
        }
        let saved: Config = serde_json::from_value(state.config.clone())
            .map_err(|e| Error::Mismatch(format!("{}: saved config: {e}", dir.display())))?;
        check_resumable(&saved, config)?;
        for (what, saved_hash, ours) in [
            ("entity vocabulary", &state.entity_vocab_sha256, vocab_sha256(&dataset.entities)),
            ("relation vocabulary", &state.relation_vocab_sha256, vocab_sha256(&dataset.relations)),
            ("training triples", &state.train_sha256, train_sha256(dataset)),
        ] {
            if *saved_hash != ours {
                return Err(Error::Mismatch(format!("{what} differ from the saved state")));
            }
        }

        let current = Checkpoint::load(&dir.join("current"))?;
        let kind = config.model_kind();
        if current.kind != kind {
            return Err(Error::Mismatch(format!("saved model is {}, config asks for {kind}", current.kind)));
        }
        let store = current.store;
        if store.num_entities() != dataset.num_entities() || store.num_relations() != dataset.num_relations() {
            return Err(Error::Mismatch("saved model shape does not fit the dataset".into()));
        }

        let perm_bytes = read_file(&dir.join(PERMUTATION_FILE))?;
        if perm_bytes.len() != dataset.num_examples() * 4 {
            return Err(Error::Mismatch("saved permutation has the wrong length".into()));
        }
        let permutation: Vec<u32> =
            perm_bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if state.cursor > permutation.len() {
            return Err(Error::Mismatch("saved epoch cursor is out of range".into()));
        }

        let mut optimizer = Optimizer::new(config.trainer.optimizer_kind(), &store);
        optimizer.step = state.optimizer_step;
        for (name, m) in [("entity", &mut optimizer.entity), ("relation", &mut optimizer.relation)] {
            load_moments(dir, name, m)?;
        }

        let seed: [u8; 32] = hex::decode(&state.rng_seed)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Mismatch("saved rng seed is malformed".into()))?;
        let word_pos: u128 =
            state.rng_word_pos.parse().map_err(|_| Error::Mismatch("saved rng position is malformed".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(state.rng_stream);
        rng.set_word_pos(word_pos);

        let mut trainer = Self::assemble(dataset, config, kind, store, optimizer, rng, permutation)?;
        trainer.step = state.step;
        trainer.epoch = state.epoch;
        trainer.cursor = state.cursor;
        trainer.evals_since_best = state.evals_since_best;
        trainer.stopped_early = state.stopped_early;
        if let (Some(mrr), Some(step)) = (state.best_valid_mrr, state.best_step) {
            let best = Checkpoint::load(&dir.join("best"))?;
            trainer.best = Some(Best { mrr, step, store: best.store });
        }
        Ok(trainer)
    }
}

const STATE_VERSION: u32 = 1;
const STATE_FILE: &str = "state.json";
const PERMUTATION_FILE: &str = "permutation.bin";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    format_version: u32,
    step: u64,
    epoch: u64,
    cursor: usize,
    rng_seed: String,
    rng_stream: u64,
    /// Decimal, since JSON numbers cannot hold every `u128`.
    rng_word_pos: String,
    optimizer_step: u64,
    best_valid_mrr: Option<f64>,
    best_step: Option<u64>,
    evals_since_best: u64,
    stopped_early: bool,
    entity_vocab_sha256: String,
    relation_vocab_sha256: String,
    train_sha256: String,
    config: serde_json::Value,
}

fn load_moments(dir: &Path, name: &str, m: &mut Moments) -> Result<()> {
    let f64s = |file: String, len: usize| -> Result<Vec<f64>> {
        let bytes = read_file(&dir.join(&file))?;
        if bytes.len() != len * 8 {
            return Err(Error::Mismatch(format!("{file}: wrong length")));
        }
        Ok(bytes_f64(&bytes))
    };
    m.first = f64s(format!("adam_{name}_m.bin"), m.first.len())?;
    m.second = f64s(format!("adam_{name}_v.bin"), m.second.len())?;
    let file = format!("adam_{name}_last.bin");
    let bytes = read_file(&dir.join(&file))?;
    if bytes.len() != m.last_step.len() * 8 {
        return Err(Error::Mismatch(format!("{file}: wrong length")));
    }
    m.last_step = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(())
}

/// Keys that may change between an interrupted run and its continuation.
const RESUMABLE_KEYS: [&str; 3] = ["max_steps", "workers", "checkpoint_every"];

fn check_resumable(saved: &Config, new: &Config) -> Result<()> {
    let to_json = |c: &Config| {
        let mut v = serde_json::to_value(c).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("data");
        if let Some(t) = obj.get_mut("trainer").and_then(|t| t.as_object_mut()) {
            for k in RESUMABLE_KEYS {
                t.remove(k);
            }
        }
        v
    };
    let (a, b) = (to_json(saved), to_json(new));
    if a == b {
        return Ok(());
    }
    let mut changed = Vec::new();
    for (section, values) in a.as_object().into_iter().flatten() {
        for (key, old) in values.as_object().into_iter().flatten() {
            let now = &b[section][key];
            if now != old {
                changed.push(format!("{section}.{key} ({old} -> {now})"));
            }
        }
    }
    Err(Error::Mismatch(format!("cannot resume with a different configuration: {}", changed.join(", "))))
}

/// Trains a fresh model and returns the selected parameters and the log.
pub fn train(dataset: &Dataset, config: &Config) -> Result<(EmbeddingStore, Vec<LogRecord>)> {
    let mut trainer = Trainer::new(dataset, config)?;
    trainer.run(&mut std::io::sink(), None)?;
    Ok((trainer.best_store().clone(), trainer.log))
}
