//! The `kgsub` command line.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kgsub_core::{compute_weights, count_frequencies, weight_summary, Dataset, SchemeKind, Split, SubsamplingScheme};

use crate::checkpoint::{write_file, write_json, Checkpoint};
use crate::config::{split_overrides, Config};
use crate::error::{Error, Result};
use crate::evaluation::{build_pool, evaluate};
use crate::io::{load_dataset, DataPaths, LoadOptions};
use crate::manifest::RunManifest;
use crate::report::{CompareReport, CompareRow, EvalReport};
use crate::theory_check::{self, TheoryOptions};
use crate::trainer::{LogRecord, Trainer};

/// Default output directory when `--out` is not given.
pub const OUTPUT_DIR_ENV: &str = "KGSUB_OUTPUT_DIR";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Parser)]
#[command(name = "kgsub", version, about = "Subsampled negative-sampling training for knowledge graph embeddings")]
#[command(after_help = "Config keys can be overridden as --section.key=value, e.g. --subsampling.kind=freq")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a config file.
    Train {
        config: PathBuf,
        /// Output directory [default: $KGSUB_OUTPUT_DIR or ./runs]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue an interrupted or finished run.
    Resume {
        /// Directory written by `train`.
        run: PathBuf,
        /// Config to continue with [default: the run's config.toml]
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Filtered ranking metrics of a checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "test")]
        split: SplitArg,
        /// Where to write eval_<split>.json / .txt [default: the checkpoint]
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Head-relation and relation-tail counts of the train split, as TSV.
    Freq {
        #[command(flatten)]
        data: DataArgs,
        /// Write the TSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-example subsampling weights, as TSV, plus summary statistics.
    Weights {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "base", value_parser = parse_scheme)]
        scheme: SchemeKind,
        #[arg(long, default_value_t = 0.5)]
        exponent: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numerical checks of the Monte-Carlo reasoning behind the weighted loss.
    TheoryCheck {
        #[arg(long, default_value_t = 8)]
        nx: usize,
        #[arg(long, default_value_t = 8)]
        ny: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Comma-separated sample counts.
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
        schedule: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write convergence.tsv and summary.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate once per scheme with identical seeds.
    Compare {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "none,base,freq,uniq", value_parser = parse_scheme)]
        schemes: Vec<SchemeKind>,
        /// Seeds to run for every scheme [default: trainer.seed]
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a checkpoint's embeddings as TSV.
    Export {
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory with train.txt, valid.txt, test.txt and optional .dict files.
    #[arg(long)]
    pub data: PathBuf,
    /// Drop duplicate train triples instead of failing.
    #[arg(long)]
    pub dedupe: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let duplicates =
            if self.dedupe { kgsub_core::DuplicatePolicy::Dedupe } else { kgsub_core::DuplicatePolicy::Error };
        let paths = DataPaths::in_dir(&self.data);
        load_dataset(&paths, LoadOptions { duplicates })
    }
}

fn parse_scheme(s: &str) -> std::result::Result<SchemeKind, String> {
    SchemeKind::parse(s).ok_or_else(|| format!("unknown scheme {s:?}; expected none, base, freq or uniq"))
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with_args(args: impl IntoIterator<Item = String>) -> Result<()> {
    let (plain, overrides) = split_overrides(args);
    let cli = match Cli::try_parse_from(plain) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Config(e.to_string().trim_end().to_string())),
    };
    if !overrides.is_empty() && !matches!(cli.command, Command::Train { .. } | Command::Compare { .. } | Command::Resume { .. }) {
        return Err(Error::Config("config overrides only apply to train, resume and compare".into()));
    }
    match cli.command {
        Command::Train { config, out } => {
            let config = load_config(&config, &overrides)?;
            train(&config, &output_dir(out)?).map(|_| ())
        }
        Command::Resume { run, config } => resume(&run, config.as_deref(), &overrides),
        Command::Eval { checkpoint, data, split, out, workers } => {
            let report = eval(&checkpoint, &data.load()?, split.into(), workers)?;
            let out = out.unwrap_or(checkpoint);
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let stem = format!("eval_{}", report.split);
            write_json(&out.join(format!("{stem}.json")), &report)?;
            write_file(&out.join(format!("{stem}.txt")), report.text().as_bytes())?;
            print!("{}", report.text());
            Ok(())
        }
        Command::Freq { data, out } => emit(out.as_deref(), &freq_tsv(&data.load()?)),
        Command::Weights { data, scheme, exponent, out } => {
            let dataset = data.load()?;
            let scheme = SubsamplingScheme::new(scheme).with_exponent(exponent);
            let (tsv, summary) = weights_tsv(&dataset, &scheme)?;
            emit(out.as_deref(), &tsv)?;
            eprintln!("{summary}");
            Ok(())
        }
        Command::TheoryCheck { nx, ny, trials, schedule, seed, out } => {
            let options = TheoryOptions { nx, ny, trials, schedule, seed, ..TheoryOptions::default() };
            let outcome = theory_check::run(&options)?;
            match &out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    write_file(&dir.join("convergence.tsv"), outcome.tsv().as_bytes())?;
                    write_file(&dir.join("summary.txt"), outcome.summary().as_bytes())?;
                }
                None => print!("{}", outcome.tsv()),
            }
            print!("{}", outcome.summary());
            if outcome.passed() {
                Ok(())
            } else {
                Err(Error::CheckFailed("theory check failed".into()))
            }
        }
        Command::Compare { config, schemes, seeds, out } => {
            let config = load_config(&config, &overrides)?;
            let report = compare(&config, &schemes, &seeds, &output_dir(out)?)?;
            print!("{}", report.text());
            Ok(())
        }
        Command::Export { checkpoint, out } => Checkpoint::load(&checkpoint)?.export_tsv(&out),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn output_dir(out: Option<PathBuf>) -> Result<PathBuf> {
    Ok(out.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("runs")))
}

/// Loads a config and makes its data paths absolute, so the saved copy works
/// from any directory.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<Config> {
    let mut config = Config::load(path, overrides)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    let base = fs::canonicalize(&base).map_err(|e| Error::io(&base, e))?;
    let data = &mut config.data;
    for p in [&mut data.dir, &mut data.train, &mut data.valid, &mut data.test, &mut data.entities, &mut data.relations]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}

fn load_config_data(config: &Config) -> Result<(Dataset, DataPaths)> {
    let paths = config.data.paths(Path::new("."))?;
    let dataset = load_dataset(&paths, config.data.load_options())?;
    Ok((dataset, paths))
}

/// Results of one `train` invocation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub stopped_early: bool,
    pub best_step: Option<u64>,
    pub valid: Option<kgsub_core::eval::Metrics>,
    pub test: Option<kgsub_core::eval::Metrics>,
}

/// Trains per `config` into `out`:
///
/// - `config.toml`: the resolved config
/// - `train_log.jsonl`: one record per step
/// - `checkpoint/`: the selected model
/// - `state/`: resumable trainer state
/// - `run_manifest.json`
pub fn train(config: &Config, out: &Path) -> Result<TrainSummary> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (dataset, paths) = load_config_data(config)?;
    let manifest = RunManifest::start("train", config, &paths.files())?;
    write_file(&out.join(CONFIG_FILE), config.to_toml_string().as_bytes())?;
    manifest.write(out)?;
    let mut trainer = Trainer::new(&dataset, config)?;
    let log_path = out.join(LOG_FILE);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    finish_run(&mut trainer, &dataset, file, out, manifest)
}

fn finish_run(
    trainer: &mut Trainer<'_>,
    dataset: &Dataset,
    log_file: File,
    out: &Path,
    mut manifest: RunManifest,
) -> Result<TrainSummary> {
    let mut log = BufWriter::new(log_file);
    let outcome = trainer.run(&mut log, Some(&out.join("state")))?;
    drop(log);
    let checkpoint = trainer.checkpoint();
    checkpoint.save(&out.join("checkpoint"))?;

    let pool = build_pool(trainer.config().trainer.workers)?;
    let known = dataset.all_answers();
    let metrics = |split: Split| -> Result<Option<kgsub_core::eval::Metrics>> {
        let triples = dataset.split(split);
        if triples.is_empty() {
            return Ok(None);
        }
        let report = evaluate(&pool, &checkpoint.store, &checkpoint.kind, triples, &known)?;
        let eval = EvalReport { split: split.as_str().into(), report };
        write_json(&out.join(format!("eval_{}.json", split.as_str())), &eval)?;
        write_file(&out.join(format!("eval_{}.txt", split.as_str())), eval.text().as_bytes())?;
        Ok(Some(report.overall))
    };
    let summary = TrainSummary {
        steps: outcome.steps,
        stopped_early: outcome.stopped_early,
        best_step: outcome.best_step,
        valid: metrics(Split::Valid)?,
        test: metrics(Split::Test)?,
    };
    manifest.finish(serde_json::to_value(&summary)?);
    manifest.write(out)?;
    log::info!("finished after {} steps; artifacts in {}", summary.steps, out.display());
    Ok(summary)
}

/// Continues the run in `run_dir` with its saved config (or `config`), after
/// applying `overrides`.
pub fn resume(run_dir: &Path, config: Option<&Path>, overrides: &[String]) -> Result<()> {
    let config_path = config.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join(CONFIG_FILE));
    let config = load_config(&config_path, overrides)?;
    let (dataset, paths) = load_config_data(&config)?;
    let mut trainer = Trainer::resume(&dataset, &config, &run_dir.join("state"))?;
    let log_path = run_dir.join(LOG_FILE);
    truncate_log(&log_path, trainer.step())?;
    let file = OpenOptions::new().append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    write_file(&run_dir.join(CONFIG_FILE), config.to_toml_string().as_bytes())?;
    let manifest = RunManifest::start("resume", &config, &paths.files())?;
    finish_run(&mut trainer, &dataset, file, run_dir, manifest).map(|_| ())
}

/// Drops log records past `step`, left behind if a run died after its last
/// saved state.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let record: LogRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.step <= step {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    write_file(path, kept.as_bytes())
}

pub fn eval(checkpoint: &Path, dataset: &Dataset, split: Split, workers: usize) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    ckpt.check_vocab(&dataset.entities, &dataset.relations)?;
    let triples = dataset.split(split);
    if triples.is_empty() {
        return Err(kgsub_core::Error::EmptySplit(split).into());
    }
    let pool = build_pool(workers)?;
    let report = evaluate(&pool, &ckpt.store, &ckpt.kind, triples, &dataset.all_answers())?;
    Ok(EvalReport { split: split.as_str().into(), report })
}

/// `kind<TAB>entity<TAB>relation<TAB>count`, with `kind` either `head_rel`
/// or `rel_tail`.
pub fn freq_tsv(dataset: &Dataset) -> String {
    let table = count_frequencies(dataset);
    let name = |v: &kgsub_core::Vocab, id| v.name(id).unwrap_or_default().to_string();
    let mut s = String::from("kind\tentity\trelation\tcount\n");
    for ((e, r), c) in table.head_rel_counts() {
        s.push_str(&format!("head_rel\t{}\t{}\t{c}\n", name(&dataset.entities, e), name(&dataset.relations, r)));
    }
    for ((r, e), c) in table.rel_tail_counts() {
        s.push_str(&format!("rel_tail\t{}\t{}\t{c}\n", name(&dataset.entities, e), name(&dataset.relations, r)));
    }
    s
}

/// Per-example weights as TSV and a JSON summary of their distribution.
pub fn weights_tsv(dataset: &Dataset, scheme: &SubsamplingScheme) -> Result<(String, String)> {
    let weights = compute_weights(scheme, dataset, &count_frequencies(dataset))?;
    let name = |v: &kgsub_core::Vocab, id| v.name(id).unwrap_or_default().to_string();
    let mut s = String::from("example\tdirection\thead\trelation\ttail\tA\tB\n");
    for (i, ex) in dataset.examples().enumerate() {
        let (a, b) = weights.get(i);
        let t = ex.triple;
        s.push_str(&format!(
            "{i}\t{}\t{}\t{}\t{}\t{a}\t{b}\n",
            ex.direction.as_str(),
            name(&dataset.entities, t.head),
            name(&dataset.relations, t.relation),
            name(&dataset.entities, t.tail)
        ));
    }
    let summary = serde_json::json!({ "scheme": scheme.kind, "exponent": scheme.exponent, "weights": weight_summary(&weights) });
    Ok((s, serde_json::to_string_pretty(&summary)?))
}

/// Trains every scheme for every seed under `out/<scheme>-seed<seed>` and
/// collects validation and test metrics.
pub fn compare(config: &Config, schemes: &[SchemeKind], seeds: &[u64], out: &Path) -> Result<CompareReport> {
    if schemes.is_empty() {
        return Err(Error::Config("compare needs at least one scheme".into()));
    }
    let seeds = if seeds.is_empty() { vec![config.trainer.seed] } else { seeds.to_vec() };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rows = Vec::new();
    for &seed in &seeds {
        for &scheme in schemes {
            let mut c = config.clone();
            c.subsampling.kind = scheme;
            c.trainer.seed = seed;
            log::info!("training {} with seed {seed}", scheme.label());
            let summary = train(&c, &out.join(format!("{scheme}-seed{seed}")))?;
            rows.push(CompareRow { scheme, seed, best_step: summary.best_step, valid: summary.valid, test: summary.test });
        }
    }
    let report = CompareReport { rows };
    write_json(&out.join("compare.json"), &report)?;
    write_file(&out.join("compare.txt"), report.text().as_bytes())?;
    let mut manifest = RunManifest::start("compare", config, &config.data.paths(Path::new("."))?.files())?;
    manifest.finish(serde_json::json!({ "schemes": schemes, "seeds": seeds }));
    manifest.write(out)?;
    Ok(report)
}

/// Flushes stdout, ignoring a closed pipe.
pub fn flush_stdout() {
    std::io::stdout().flush().ok();
}
