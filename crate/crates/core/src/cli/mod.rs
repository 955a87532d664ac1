//! The `extsum` command line: label, train, summarize, evaluate and stats.
//!
//! Settings resolve in three layers: built-in defaults, then the config file
//! (`--config` or `EXTSUM_CONFIG`), then flags. Every command writes a
//! [`RunManifest`] next to its primary output.

mod config;
mod manifest;

use std::ffi::OsString;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

pub use config::{parse_assignments, RunConfig, CONFIG_ENV};
pub use manifest::{manifest_path_for, verify, DigestMismatch, FileDigest, RunManifest};

use crate::corpus::{corpus_stats, detokenize, load_corpus, Document, Gazetteer, LoadOptions};
use crate::evaluation::{self, approx_randomization, pair_scores, read_scores, write_scores, EvalError, EvalResult, GroupBy, TOP_K};
use crate::model::{load_pretrained, Model};
use crate::oracle::{attach_labels, label_corpus, read_labels, write_labels, LabeledDocument};
use crate::training::train;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "extsum", version, about = "Extractive summarisation of scientific articles")]
pub struct Cli {
    /// Seed for every random choice of the run; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-document parallelism (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Flat JSON config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Config override as key=value; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Section-title gazetteer (`title<TAB>class` lines) used when reading corpora.
    #[arg(long, global = true)]
    pub gazetteer: Option<PathBuf>,
    /// Re-check the digests recorded in a run manifest and exit.
    #[arg(long, value_name = "MANIFEST")]
    pub verify: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Greedy oracle labels for every document of a corpus.
    Label(LabelArgs),
    /// Train an extractor and write checkpoint, report and manifest.
    Train(TrainArgs),
    /// Top-ranked sentences and probabilities for every document.
    Summarize(SummarizeArgs),
    /// ROUGE-L F of the top-4 sentences, with optional significance test.
    Evaluate(EvaluateArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum number of selected sentences.
    #[arg(long)]
    pub cap: Option<usize>,
    /// rouge-l-f, rouge-l-r or rouge-2-r.
    #[arg(long)]
    pub metric: Option<String>,
    /// Stop as soon as adding a sentence does not raise the metric.
    #[arg(long)]
    pub stop_on_no_gain: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Label JSONL for the training corpus.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub val_corpus: PathBuf,
    /// Label JSONL for the validation corpus; oracle-labelled on the fly when absent.
    #[arg(long)]
    pub val_labels: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Whitespace-separated word vectors whose width equals `embed_dim`.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long)]
    pub shuffle_train_sentences: bool,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// positive_ratio or inverse_frequency.
    #[arg(long)]
    pub weight_mode: Option<String>,
    /// mean, cnn or rnn.
    #[arg(long)]
    pub encoder: Option<String>,
    /// sequence or baseline.
    #[arg(long)]
    pub architecture: Option<String>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = TOP_K)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// EvalResult JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-document `id,score` CSV here.
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
    /// Score CSV of another system; adds a paired randomisation p-value.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, value_parser = parse_group_by)]
    pub group_by: Option<GroupBy>,
    #[arg(long, default_value_t = evaluation::DEFAULT_ITERATIONS)]
    pub iterations: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Label JSONL; adds the mean positive-label count.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_group_by(s: &str) -> Result<GroupBy, String> {
    match s {
        "asjc" => Ok(GroupBy::Asjc),
        _ => Err(format!("unknown grouping {s:?} (expected asjc)")),
    }
}

/// Parses `args` (program name first), runs, and maps the outcome to an
/// exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(path) = &cli.verify {
        if cli.command.is_some() {
            bail!("--verify runs on its own; drop the subcommand");
        }
        return run_verify(path);
    }
    let Some(command) = &cli.command else {
        bail!("no subcommand given; see `extsum --help`");
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().context("building the worker pool")?;
    pool.install(|| match command {
        Command::Label(a) => cmd_label(&cli, a),
        Command::Train(a) => cmd_train(&cli, a),
        Command::Summarize(a) => cmd_summarize(&cli, a),
        Command::Evaluate(a) => cmd_evaluate(&cli, a),
        Command::Stats(a) => cmd_stats(&cli, a),
    })
}

fn run_verify(path: &Path) -> anyhow::Result<()> {
    let m = RunManifest::read(path)?;
    let bad = verify(&m);
    if bad.is_empty() {
        println!("ok: {} files match {}", m.inputs.len() + m.outputs.len(), path.display());
        return Ok(());
    }
    for b in &bad {
        eprintln!("{b}");
    }
    bail!("{} of {} recorded files do not match {}", bad.len(), m.inputs.len() + m.outputs.len(), path.display())
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}

/// Defaults, then the config file, then `--set`, then command flags.
fn resolve_config(cli: &Cli, flags: Map<String, Value>) -> anyhow::Result<RunConfig> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut overrides = parse_assignments(&cli.set)?;
    overrides.extend(flags);
    if let Some(seed) = cli.seed {
        overrides.insert("seed".into(), json!(seed));
    }
    let resolved = base.apply(&overrides)?;
    resolved.validate()?;
    Ok(resolved)
}

fn load_options(cli: &Cli, require_sentences: bool) -> anyhow::Result<LoadOptions> {
    let gazetteer = match &cli.gazetteer {
        Some(p) => {
            require_file(p, "gazetteer")?;
            Gazetteer::from_file(p)?
        }
        None => Gazetteer::default(),
    };
    Ok(LoadOptions { require_sentences, gazetteer })
}

fn read_corpus(path: &Path, options: &LoadOptions) -> anyhow::Result<Vec<Document>> {
    require_file(path, "corpus")?;
    load_corpus(path, options).with_context(|| format!("corpus {}", path.display()))
}

fn read_labeled(corpus: &[Document], labels: &Path) -> anyhow::Result<Vec<LabeledDocument>> {
    require_file(labels, "label file")?;
    let file = std::fs::File::open(labels).with_context(|| format!("opening {}", labels.display()))?;
    let records = read_labels(BufReader::new(file)).with_context(|| format!("labels {}", labels.display()))?;
    attach_labels(corpus, &records).with_context(|| format!("labels {}", labels.display()))
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn digests(paths: &[&Path]) -> anyhow::Result<Vec<FileDigest>> {
    paths.iter().map(|p| FileDigest::of(p)).collect()
}

struct ManifestDraft<'a> {
    command: &'a str,
    seed: u64,
    config: Map<String, Value>,
    inputs: Vec<&'a Path>,
    outputs: Vec<&'a Path>,
    notes: Vec<String>,
    started: Instant,
}

impl ManifestDraft<'_> {
    fn write(self, path: &Path) -> anyhow::Result<()> {
        RunManifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config.into_iter().collect(),
            inputs: digests(&self.inputs)?,
            outputs: digests(&self.outputs)?,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            notes: self.notes,
        }
        .write(path)
    }
}

fn cmd_label(cli: &Cli, a: &LabelArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut flags = Map::new();
    if let Some(cap) = a.cap {
        flags.insert("cap".into(), json!(cap));
    }
    if let Some(m) = &a.metric {
        flags.insert("metric".into(), json!(m));
    }
    if a.stop_on_no_gain {
        flags.insert("stop_on_no_gain".into(), json!(true));
    }
    let config = resolve_config(cli, flags)?;
    let docs = read_corpus(&a.corpus, &load_options(cli, true)?)?;
    let outcome = label_corpus(&docs, &config.oracle)?;
    create_parent(&a.out)?;
    let mut out = Vec::new();
    write_labels(&mut out, &outcome.labeled)?;
    std::fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    let notes: Vec<String> = outcome.skipped.iter().map(|s| format!("skipped {}: {}", s.id, s.reason)).collect();
    for n in &notes {
        eprintln!("{n}");
    }
    eprintln!("labelled {} of {} documents", outcome.labeled.len(), docs.len());
    let snapshot = serde_json::to_value(config.oracle)?;
    ManifestDraft {
        command: "label",
        seed: config.train.seed,
        config: snapshot.as_object().cloned().unwrap_or_default(),
        inputs: vec![&a.corpus],
        outputs: vec![&a.out],
        notes,
        started,
    }
    .write(&manifest_path_for(&a.out))
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut flags = Map::new();
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            flags.insert(k.into(), v);
        }
    };
    put("learning_rate", a.learning_rate.map(|v| json!(v)));
    put("dropout", a.dropout.map(|v| json!(v)));
    put("max_epochs", a.max_epochs.map(|v| json!(v)));
    put("patience", a.patience.map(|v| json!(v)));
    put("batch_size", a.batch_size.map(|v| json!(v)));
    put("weight_mode", a.weight_mode.as_ref().map(|v| json!(v)));
    put("encoder_kind", a.encoder.as_ref().map(|v| json!(v)));
    put("architecture", a.architecture.as_ref().map(|v| json!(v)));
    put("shuffle_train_sentences", a.shuffle_train_sentences.then_some(json!(true)));
    let config = resolve_config(cli, flags)?;

    let options = load_options(cli, true)?;
    let train_docs = read_corpus(&a.corpus, &options)?;
    let train_set = read_labeled(&train_docs, &a.labels)?;
    let val_docs = read_corpus(&a.val_corpus, &options)?;
    let mut notes = Vec::new();
    let val_set = match &a.val_labels {
        Some(p) => read_labeled(&val_docs, p)?,
        None => {
            let outcome = label_corpus(&val_docs, &config.oracle)?;
            notes.push(format!("validation labels from the greedy oracle ({} documents)", outcome.labeled.len()));
            notes.extend(outcome.skipped.iter().map(|s| format!("validation document {} skipped: {}", s.id, s.reason)));
            outcome.labeled
        }
    };
    let pretrained = match &a.pretrained {
        Some(p) => {
            require_file(p, "pretrained vectors")?;
            Some(load_pretrained(p, config.model.embed_dim).with_context(|| format!("pretrained vectors {}", p.display()))?)
        }
        None => None,
    };

    let outcome = train(&train_set, &val_set, &config.model, &config.train, pretrained.as_ref())?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let ckpt = a.out_dir.join(CHECKPOINT_FILE);
    outcome.model.save(&ckpt)?;
    let mut report = outcome.report;
    report.checkpoint_path = Some(CHECKPOINT_FILE.into());
    let report_path = a.out_dir.join(REPORT_FILE);
    write_json(&report_path, &report)?;
    for e in &report.epochs {
        eprintln!(
            "epoch {:>3}  train loss {:.4}  val loss {:.4}  val rouge-l-f@4 {:.4}",
            e.epoch, e.train_loss, e.validation_loss, e.validation_rouge_l_f_at_4
        );
    }
    eprintln!("best epoch {}{}", report.best_epoch, if report.stopped_early { " (stopped early)" } else { "" });

    let mut inputs: Vec<&Path> = vec![&a.corpus, &a.labels, &a.val_corpus];
    inputs.extend(a.val_labels.as_deref());
    inputs.extend(a.pretrained.as_deref());
    inputs.extend(cli.config.as_deref());
    ManifestDraft {
        command: "train",
        seed: config.train.seed,
        config: config.snapshot().into_iter().collect(),
        inputs,
        outputs: vec![&ckpt, &report_path],
        notes,
        started,
    }
    .write(&a.out_dir.join(MANIFEST_FILE))
}

/// An explicitly requested model configuration that the checkpoint must match.
fn expected_model_config(cli: &Cli) -> anyhow::Result<Option<crate::model::ExtractorConfig>> {
    if cli.config.is_none() && cli.set.is_empty() {
        return Ok(None);
    }
    Ok(Some(resolve_config(cli, Map::new())?.model))
}

fn load_checkpoint(cli: &Cli, path: &Path) -> anyhow::Result<Model> {
    require_file(path, "checkpoint")?;
    let expected = expected_model_config(cli)?;
    Model::load(path, expected.as_ref()).with_context(|| format!("checkpoint {}", path.display()))
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    id: &'a str,
    selected: Vec<usize>,
    sentences: Vec<String>,
    probabilities: Vec<f64>,
}

fn cmd_summarize(cli: &Cli, a: &SummarizeArgs) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let started = Instant::now();
    if a.k == 0 {
        bail!("--k must be at least 1");
    }
    let model = load_checkpoint(cli, &a.checkpoint)?;
    let docs = read_corpus(&a.corpus, &load_options(cli, false)?)?;
    if let Some(d) = docs.iter().find(|d| d.sentences.is_empty()) {
        bail!("document {} has no sentences to rank", d.id);
    }
    let ranked: Vec<(Vec<usize>, Vec<f64>)> =
        docs.par_iter().map(|d| model.summarize(d, a.k).with_context(|| format!("document {}", d.id))).collect::<anyhow::Result<_>>()?;
    let mut out = Vec::new();
    for (d, (selected, probabilities)) in docs.iter().zip(ranked) {
        let sentences = selected.iter().map(|&i| detokenize(&d.sentences[i].tokens)).collect();
        serde_json::to_writer(&mut out, &SummaryLine { id: &d.id, selected, sentences, probabilities })?;
        out.push(b'\n');
    }
    create_parent(&a.out)?;
    std::fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut config = Map::new();
    config.insert("k".into(), json!(a.k));
    config.insert("model".into(), serde_json::to_value(model.config())?);
    ManifestDraft { command: "summarize", seed: 0, config, inputs: vec![&a.checkpoint, &a.corpus], outputs: vec![&a.out], notes: vec![], started }
        .write(&manifest_path_for(&a.out))
}

#[derive(Serialize)]
struct Randomization {
    compared_with: String,
    p_value: f64,
    iterations: usize,
    seed: u64,
    paired_documents: usize,
}

#[derive(Serialize)]
struct EvaluateOutput {
    #[serde(flatten)]
    result: EvalResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    randomization: Option<Randomization>,
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let seed = resolve_config(cli, Map::new())?.train.seed;
    let model = load_checkpoint(cli, &a.checkpoint)?;
    let docs = read_corpus(&a.corpus, &load_options(cli, false)?)?;
    let result = match evaluation::rouge_l_f_at_4(&model, &docs, a.group_by) {
        Err(EvalError::NothingToScore) => bail!(
            "no document in {} has highlights to score against; add a non-empty \"highlights\" list to the records you want evaluated",
            a.corpus.display()
        ),
        other => other?,
    };
    if let Some(p) = &a.scores_out {
        create_parent(p)?;
        let file = std::fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
        write_scores(file, &result.per_document)?;
    }
    let randomization = match &a.compare {
        Some(p) => {
            require_file(p, "score file")?;
            let file = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let other = read_scores(file).with_context(|| format!("score file {}", p.display()))?;
            let (mine, theirs) = pair_scores(&result.per_document, &other).with_context(|| format!("score file {}", p.display()))?;
            let p_value = approx_randomization(&mine, &theirs, a.iterations, seed)?;
            eprintln!("p = {p_value} over {} paired documents", mine.len());
            Some(Randomization { compared_with: p.display().to_string(), p_value, iterations: a.iterations, seed, paired_documents: mine.len() })
        }
        None => None,
    };
    eprintln!("mean rouge-l-f@4 {:.4} over {} documents ({} skipped)", result.mean, result.per_document.len(), result.skipped.len());
    write_json(&a.out, &EvaluateOutput { result, randomization })?;

    let mut config = Map::new();
    config.insert("top_k".into(), json!(TOP_K));
    config.insert("iterations".into(), json!(a.iterations));
    config.insert("group_by".into(), serde_json::to_value(a.group_by)?);
    let mut inputs: Vec<&Path> = vec![&a.checkpoint, &a.corpus];
    inputs.extend(a.compare.as_deref());
    let mut outputs: Vec<&Path> = vec![&a.out];
    outputs.extend(a.scores_out.as_deref());
    ManifestDraft { command: "evaluate", seed, config, inputs, outputs, notes: vec![], started }.write(&manifest_path_for(&a.out))
}

fn cmd_stats(cli: &Cli, a: &StatsArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let docs = read_corpus(&a.corpus, &load_options(cli, false)?)?;
    let labels: Option<Vec<Vec<u8>>> = match &a.labels {
        Some(p) => Some(read_labeled(&docs, p)?.into_iter().map(|l| l.labels).collect()),
        None => None,
    };
    let stats = corpus_stats(&docs, labels.as_deref())?;
    write_json(&a.out, &stats)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", serde_json::to_string(&stats)?)?;
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    inputs.extend(a.labels.as_deref());
    ManifestDraft { command: "stats", seed: 0, config: Map::new(), inputs, outputs: vec![&a.out], notes: vec![], started }
        .write(&manifest_path_for(&a.out))
}

/// Parses arguments (program name first) without running anything.
pub fn parse<I, T>(args: I) -> anyhow::Result<Cli>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args).map_err(|e| anyhow!(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }
}
