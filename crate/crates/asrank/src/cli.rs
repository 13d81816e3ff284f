//! Operator surface behind the `asrank` binary.
//!
//! Subcommands: `ingest` (official dataset layouts to canonical TSV),
//! `synth` (deterministic synthetic corpus with splits), `train`,
//! `evaluate`, `rank` (ad-hoc queries against a candidate pool), and
//! `gradcheck` (finite-difference audit of the whole model's gradients).
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 unreadable or
//! unusable data, 3 numeric failure.
//!
//! Settings come from three layers, each overriding the last: built-in
//! defaults, a `--config` file of flat `key = value` lines (full-line `#`
//! comments allowed), and command-line flags. Unknown keys are rejected
//! rather than ignored. Logging goes to stderr and is controlled by the
//! `ASRANK_LOG` environment variable (`error`, `info`, or `debug`).

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::corpus::{
    filter_answerable, ingest_trecqa, ingest_wikiqa, parse_dataset, parse_tsv, stats,
    synth_corpus, write_dataset, QuestionGroup,
};
use crate::encoder::{
    forward_on_graph, insert_param_arrays, tokenize, EncoderConfig, EncoderParams, Mode,
    TokenSequence, Vocab,
};
use crate::error::{Error, Result};
use crate::numerics::{grad_check_with_floor, Array, Graph, Var};
use crate::objectives::{
    insert_head_arrays, siamese_batch_loss_on_graph, triplet_batch_loss_on_graph, MiningStrategy,
    SiameseHead,
};
use crate::ranking::{evaluate, rank_candidates, RankMode};
use crate::trainer::{load_checkpoint, save_checkpoint, train, Head, TrainConfig};

/// Which training questions to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainFilter {
    /// Keep every question as parsed.
    None,
    /// Keep questions with at least one correct candidate.
    Answerable,
    /// Keep questions with both a correct and an incorrect candidate.
    AnswerableWithNegative,
}

impl fmt::Display for TrainFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainFilter::None => "none",
            TrainFilter::Answerable => "answerable",
            TrainFilter::AnswerableWithNegative => "answerable-with-negative",
        })
    }
}

impl FromStr for TrainFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<TrainFilter> {
        match s {
            "none" => Ok(TrainFilter::None),
            "answerable" => Ok(TrainFilter::Answerable),
            "answerable-with-negative" => Ok(TrainFilter::AnswerableWithNegative),
            other => Err(Error::Config(format!(
                "unknown train_filter {other:?} (expected none, answerable, or answerable-with-negative)"
            ))),
        }
    }
}

/// Every tunable in one place. Defaults are chosen for from-scratch
/// desk-scale models; see each field's config key of the same name.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub dropout: f32,
    /// Tokens rarer than this in the training split map to the unknown id.
    pub min_freq: usize,
    pub head: Head,
    pub mining: MiningStrategy,
    pub rank_mode: RankMode,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub margin: f64,
    pub triplet_mean: bool,
    pub patience: usize,
    pub max_epochs: usize,
    pub lr_decay: bool,
    pub seed: u64,
    pub threads: usize,
    pub train_filter: TrainFilter,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d_model: 64,
            heads: 4,
            layers: 2,
            ff_dim: 256,
            max_len: 128,
            dropout: 0.1,
            min_freq: 1,
            head: Head::Triplet,
            mining: MiningStrategy::All,
            rank_mode: RankMode::Distance,
            batch_size: 32,
            peak_lr: 1e-3,
            warmup_fraction: 0.10,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            margin: 5.0,
            triplet_mean: false,
            patience: 20,
            max_epochs: 200,
            lr_decay: false,
            seed: 42,
            threads: 1,
            train_filter: TrainFilter::Answerable,
        }
    }
}

impl RunConfig {
    /// Sets one field from its config-file key. Flags funnel through the
    /// same path, so file values and flag values parse identically.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("{key}: {e} (got {value:?})")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(Error::Config(format!(
                    "{key}: expected true or false, got {other:?}"
                ))),
            }
        }
        match key {
            "d_model" => self.d_model = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "ff_dim" => self.ff_dim = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "min_freq" => self.min_freq = num(key, value)?,
            "head" => self.head = value.parse()?,
            "mining" => self.mining = value.parse()?,
            "rank_mode" => self.rank_mode = value.parse()?,
            "batch_size" => self.batch_size = num(key, value)?,
            "peak_lr" => self.peak_lr = num(key, value)?,
            "warmup_fraction" => self.warmup_fraction = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            "margin" => self.margin = num(key, value)?,
            "triplet_mean" => self.triplet_mean = flag(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "lr_decay" => self.lr_decay = flag(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "train_filter" => self.train_filter = value.parse()?,
            other => {
                return Err(Error::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Applies a config file of `key = value` lines. Later lines override
    /// earlier ones; errors carry the file and line number.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`, got {line:?}",
                    path.display(),
                    i + 1
                )));
            };
            self.set(key.trim(), value.trim())
                .map_err(|e| e.with_context(&format!("{}:{}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the config file (if any), then individual flags.
    pub fn resolve(overrides: &ConfigOverrides) -> Result<RunConfig> {
        let mut rc = RunConfig::default();
        if let Some(path) = &overrides.config {
            rc.apply_file(path)?;
        }
        let flags: [(&str, &Option<String>); 7] = [
            ("head", &overrides.head),
            ("mining", &overrides.mining),
            ("rank_mode", &overrides.rank_mode),
            ("margin", &overrides.margin),
            ("batch_size", &overrides.batch_size),
            ("seed", &overrides.seed),
            ("threads", &overrides.threads),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                rc.set(key, v)?;
            }
        }
        Ok(rc)
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            vocab_size: 0,
            hidden: self.d_model,
            heads: self.heads,
            layers: self.layers,
            ff_dim: self.ff_dim,
            max_len: self.max_len,
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            peak_lr: self.peak_lr,
            warmup_fraction: self.warmup_fraction,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            clip_norm: self.clip_norm,
            margin: self.margin,
            triplet_mean: self.triplet_mean,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed: self.seed,
            head: self.head,
            mining: self.mining,
            lr_decay: self.lr_decay,
        }
    }
}

/// Flags shared by the data-touching subcommands; each overrides the
/// config-file key of the same name.
#[derive(Args, Debug, Default)]
pub struct ConfigOverrides {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Training objective: triplet or siamese.
    #[arg(long)]
    pub head: Option<String>,
    /// Triplet mining: all, exclude-easy, semi-hard, or hard.
    #[arg(long)]
    pub mining: Option<String>,
    /// Ranking key: distance or score.
    #[arg(long = "rank-mode")]
    pub rank_mode: Option<String>,
    /// Triplet margin.
    #[arg(long)]
    pub margin: Option<String>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Worker threads for evaluation; training is always single-threaded.
    #[arg(long)]
    pub threads: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IngestFormat {
    WikiQa,
    TrecQa,
    Tsv,
}

impl FromStr for IngestFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<IngestFormat> {
        match s {
            "wikiqa" => Ok(IngestFormat::WikiQa),
            "trecqa" => Ok(IngestFormat::TrecQa),
            "tsv" => Ok(IngestFormat::Tsv),
            other => Err(Error::Config(format!(
                "unknown format {other:?} (expected wikiqa, trecqa, or tsv)"
            ))),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "asrank",
    version,
    about = "Train and evaluate sentence embedding models for answer ranking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a dataset release into canonical question\tcandidate\tlabel TSV.
    Ingest {
        /// Source file.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Source layout: wikiqa, trecqa, or tsv.
        #[arg(long)]
        format: String,
        /// Destination TSV path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Generate a deterministic synthetic corpus split into train/dev/test.
    Synth {
        /// Directory receiving train.tsv, dev.tsv, and test.tsv.
        #[arg(long = "out-dir", value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Questions in the training split.
        #[arg(long, default_value_t = 50)]
        train: usize,
        /// Questions in the dev split.
        #[arg(long, default_value_t = 15)]
        dev: usize,
        /// Questions in the test split.
        #[arg(long, default_value_t = 15)]
        test: usize,
        #[arg(long, default_value_t = 8)]
        topics: usize,
        /// Candidates per question.
        #[arg(long, default_value_t = 5)]
        candidates: usize,
    },
    /// Train a model and save the best-dev-MAP checkpoint.
    Train {
        #[command(flatten)]
        overrides: ConfigOverrides,
        #[arg(long = "data-train", value_name = "FILE")]
        data_train: PathBuf,
        #[arg(long = "data-dev", value_name = "FILE")]
        data_dev: PathBuf,
        /// Checkpoint output path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset and print MAP/MRR.
    Evaluate {
        #[command(flatten)]
        overrides: ConfigOverrides,
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        /// Dataset to evaluate; also present as --data-test for symmetry.
        #[arg(long, value_name = "FILE", alias = "data-test")]
        data: PathBuf,
    },
    /// Rank a dataset's candidate pool against one question.
    Rank {
        #[command(flatten)]
        overrides: ConfigOverrides,
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        /// Dataset supplying the candidate pool.
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long = "top-k", default_value_t = 5)]
        top_k: usize,
    },
    /// Compare every analytic gradient against central finite differences.
    Gradcheck {
        #[arg(long = "d-model", default_value_t = 8)]
        d_model: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long = "ff-dim", default_value_t = 16)]
        ff_dim: usize,
        #[arg(long = "max-len", default_value_t = 8)]
        max_len: usize,
        /// Vocabulary size including the two sentinel tokens.
        #[arg(long, default_value_t = 50)]
        vocab: usize,
        #[arg(long, default_value_t = 5.0)]
        margin: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Maximum acceptable relative error.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
}

/// Parses arguments, runs the command, and maps the outcome to an exit
/// code. Logging must already be initialized.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("asrank: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Ingest { input, format, out: out_path } => {
            cmd_ingest(&input, format.parse()?, &out_path, out)
        }
        Command::Synth { out_dir, seed, train, dev, test, topics, candidates } => {
            cmd_synth(&out_dir, seed, [train, dev, test], topics, candidates, out)
        }
        Command::Train { overrides, data_train, data_dev, out: out_path } => {
            let rc = RunConfig::resolve(&overrides)?;
            cmd_train(&rc, &data_train, &data_dev, &out_path, out)
        }
        Command::Evaluate { overrides, ckpt, data } => {
            let rc = RunConfig::resolve(&overrides)?;
            cmd_evaluate(&rc, &ckpt, &data, out)
        }
        Command::Rank { overrides, ckpt, data, question, top_k } => {
            let rc = RunConfig::resolve(&overrides)?;
            cmd_rank(&rc, &ckpt, &data, &question, top_k, out)
        }
        Command::Gradcheck {
            d_model,
            heads,
            layers,
            ff_dim,
            max_len,
            vocab,
            margin,
            seed,
            tolerance,
        } => {
            let cfg = GradcheckConfig {
                d_model,
                heads,
                layers,
                ff_dim,
                max_len,
                vocab,
                margin,
                seed,
                tolerance,
            };
            cmd_gradcheck(&cfg, out)
        }
    }
}

/// Converts a release file into canonical TSV and prints corpus counts.
/// The headline line counts answerable questions and their candidates,
/// the convention used when reporting on these benchmarks; the full
/// unfiltered counts follow. Nothing is written unless parsing succeeds.
pub fn cmd_ingest(
    input: &Path,
    format: IngestFormat,
    out_path: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let text = fs::read_to_string(input)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", input.display())))?;
    let source = input.display().to_string();
    let groups = match format {
        IngestFormat::WikiQa => ingest_wikiqa(&text, &source)?,
        IngestFormat::TrecQa => ingest_trecqa(&text, &source)?,
        IngestFormat::Tsv => parse_tsv(&text, &source)?,
    };
    let all = stats(&groups);
    let answerable = stats(&filter_answerable(groups.clone(), false));
    write_dataset(&groups, out_path)?;
    writeln!(out, "{} questions / {} candidates", answerable.questions, answerable.candidates)?;
    writeln!(out, "questions\t{}", all.questions)?;
    writeln!(out, "candidates\t{}", all.candidates)?;
    writeln!(out, "positives\t{}", all.positives)?;
    writeln!(out, "answerable\t{}", all.answerable)?;
    writeln!(out, "answerable_with_negative\t{}", all.answerable_with_negative)?;
    log::info!("wrote {}", out_path.display());
    Ok(())
}

/// Generates one synthetic corpus and writes consecutive question ranges
/// to train.tsv, dev.tsv, and test.tsv. Questions cycle through topics
/// round-robin, so consecutive ranges stay topic-balanced.
pub fn cmd_synth(
    out_dir: &Path,
    seed: u64,
    split: [usize; 3],
    topics: usize,
    candidates: usize,
    out: &mut dyn Write,
) -> Result<()> {
    let total: usize = split.iter().sum();
    let groups = synth_corpus(seed, total, topics, candidates)?;
    fs::create_dir_all(out_dir)?;
    let mut start = 0;
    for (name, n) in [("train.tsv", split[0]), ("dev.tsv", split[1]), ("test.tsv", split[2])] {
        if n == 0 {
            return Err(Error::Config(format!("{name} would receive zero questions")));
        }
        let path = out_dir.join(name);
        write_dataset(&groups[start..start + n], &path)?;
        writeln!(out, "{}\t{}", path.display(), n)?;
        start += n;
    }
    Ok(())
}

fn apply_train_filter(groups: Vec<QuestionGroup>, filter: TrainFilter) -> Vec<QuestionGroup> {
    match filter {
        TrainFilter::None => groups,
        TrainFilter::Answerable => filter_answerable(groups, false),
        TrainFilter::AnswerableWithNegative => filter_answerable(groups, true),
    }
}

/// Keeps only answerable questions, which evaluation requires; says so
/// when anything is dropped.
fn answerable_for_eval(groups: Vec<QuestionGroup>, what: &str) -> Result<Vec<QuestionGroup>> {
    let before = groups.len();
    let kept = filter_answerable(groups, false);
    if kept.len() < before {
        log::info!("{what}: dropped {} question(s) with no correct candidate", before - kept.len());
    }
    if kept.is_empty() {
        return Err(Error::Data(format!("{what}: no answerable questions")));
    }
    Ok(kept)
}

/// Trains on the given splits, logging one `epoch\ttrain_loss\tdev_map`
/// line per epoch, and saves the best checkpoint to `out_path`.
pub fn cmd_train(
    rc: &RunConfig,
    data_train: &Path,
    data_dev: &Path,
    out_path: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let train_groups = apply_train_filter(parse_dataset(data_train)?, rc.train_filter);
    if train_groups.is_empty() {
        return Err(Error::Data(format!(
            "{}: no questions left after the {} filter",
            data_train.display(),
            rc.train_filter
        )));
    }
    let dev_groups = answerable_for_eval(parse_dataset(data_dev)?, "dev split")?;

    writeln!(out, "epoch\ttrain_loss\tdev_map")?;
    let started = Instant::now();
    let outcome = train(
        &train_groups,
        &dev_groups,
        &rc.encoder_config(),
        &rc.train_config(),
        rc.min_freq,
        &mut |rec| {
            let _ = writeln!(out, "{}\t{:.6}\t{:.4}", rec.epoch, rec.train_loss, rec.dev_map);
        },
    )?;
    save_checkpoint(&outcome.checkpoint, out_path)?;
    writeln!(out, "best_epoch\t{}", outcome.checkpoint.epoch)?;
    writeln!(out, "best_dev_map\t{:.4}", outcome.checkpoint.best_dev_map)?;
    log::info!(
        "trained {} epoch(s) in {:.1}s; checkpoint at {}",
        outcome.history.epochs.len(),
        started.elapsed().as_secs_f64(),
        out_path.display()
    );
    Ok(())
}

/// Evaluates a checkpoint on a dataset, printing the per-question table
/// and then `metric\tsplit\tvalue` lines. Output depends only on the
/// checkpoint and data, so repeated runs are byte-identical.
pub fn cmd_evaluate(rc: &RunConfig, ckpt_path: &Path, data: &Path, out: &mut dyn Write) -> Result<()> {
    let ckpt = load_checkpoint(ckpt_path)?;
    let groups = answerable_for_eval(parse_dataset(data)?, "evaluation data")?;
    let report = evaluate(&groups, &ckpt.encoder, ckpt.head.as_ref(), rc.rank_mode, rc.threads)?;
    let split = data
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("data")
        .to_string();
    write!(out, "{}", report.text_table())?;
    write!(out, "{}", report.machine_lines(&split))?;
    Ok(())
}

/// Ranks candidates against one question, best match first. When the
/// question appears verbatim in the dataset its own candidates (with
/// their labels) are ranked; otherwise the pool is every distinct
/// candidate in the dataset and labels print as `-`.
pub fn cmd_rank(
    rc: &RunConfig,
    ckpt_path: &Path,
    data: &Path,
    question: &str,
    top_k: usize,
    out: &mut dyn Write,
) -> Result<()> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    let ckpt = load_checkpoint(ckpt_path)?;
    let groups = parse_dataset(data)?;
    let (group, labeled) = match groups.iter().find(|g| g.question == question) {
        Some(g) => (g.clone(), true),
        None => {
            let mut seen = std::collections::HashSet::new();
            let candidates: Vec<_> = groups
                .iter()
                .flat_map(|g| g.candidates.iter())
                .filter(|c| seen.insert(c.text.clone()))
                .cloned()
                .collect();
            (
                QuestionGroup {
                    question: question.to_string(),
                    candidates,
                },
                false,
            )
        }
    };
    let ranked = rank_candidates(&group, &ckpt.encoder, ckpt.head.as_ref(), rc.rank_mode)?;
    writeln!(out, "question\t{question}")?;
    for (i, c) in ranked.candidates.iter().take(top_k).enumerate() {
        let label = if labeled { c.label.to_string() } else { "-".to_string() };
        writeln!(out, "{}\t{:.6}\t{}\t{}", i + 1, c.key, label, c.text)?;
    }
    Ok(())
}

/// Shapes for the gradient audit. The defaults are deliberately tiny so
/// the exhaustive parameter sweep stays fast.
#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub vocab: usize,
    pub margin: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            d_model: 8,
            heads: 2,
            layers: 1,
            ff_dim: 16,
            max_len: 8,
            vocab: 50,
            margin: 5.0,
            seed: 42,
            tolerance: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradcheckReport {
    pub triplet_max_rel: f64,
    pub siamese_max_rel: f64,
    /// Parameter entries compared, across both loss heads.
    pub entries: usize,
}

impl GradcheckReport {
    pub fn max_rel(&self) -> f64 {
        self.triplet_max_rel.max(self.siamese_max_rel)
    }
}

enum GcLoss {
    Triplet(Vec<[usize; 3]>, f64),
    Siamese(Vec<(usize, usize, bool)>),
}

/// Loss as a pure function of the flat parameter arrays: rebuilds the
/// graph from scratch each call, which is what makes the finite
/// differences an independent oracle for the backward pass.
fn gc_loss_value(
    arrays: &[Array<f64>],
    config: &EncoderConfig,
    seqs: &[TokenSequence],
    loss: &GcLoss,
) -> Result<f64> {
    let mut g: Graph<f64> = Graph::new();
    let (loss_var, _) = gc_build(&mut g, arrays, config, seqs, loss)?;
    g.value(loss_var).item()
}

/// Builds the forward graph and loss, returning the loss var and the leaf
/// vars in flat parameter order.
fn gc_build(
    g: &mut Graph<f64>,
    arrays: &[Array<f64>],
    config: &EncoderConfig,
    seqs: &[TokenSequence],
    loss: &GcLoss,
) -> Result<(Var, Vec<Var>)> {
    let n_enc = 3 + 16 * config.layers;
    let enc_vars = insert_param_arrays(g, &arrays[..n_enc], config.layers)?;
    let mut leaves: Vec<Var> = enc_vars.flat().to_vec();
    let head_vars = if arrays.len() > n_enc {
        let hv = insert_head_arrays(g, &arrays[n_enc..])?;
        leaves.push(hv.weight);
        leaves.push(hv.bias);
        Some(hv)
    } else {
        None
    };
    let mut pooled = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let out = forward_on_graph(g, &enc_vars, config, seq, &mut Mode::Eval, None)?;
        pooled.push(out.pooled);
    }
    let loss_var = match loss {
        GcLoss::Triplet(items, margin) => {
            let vars: Vec<(Var, Var, Var)> =
                items.iter().map(|t| (pooled[t[0]], pooled[t[1]], pooled[t[2]])).collect();
            triplet_batch_loss_on_graph(g, &vars, *margin, false)?
        }
        GcLoss::Siamese(items) => {
            let hv = head_vars.expect("siamese check passes head arrays");
            let vars: Vec<(Var, Var, bool)> =
                items.iter().map(|&(q, c, y)| (pooled[q], pooled[c], y)).collect();
            siamese_batch_loss_on_graph(g, hv, &vars)?
        }
    };
    Ok((loss_var, leaves))
}

fn gc_check_one(
    arrays: &[Array<f64>],
    config: &EncoderConfig,
    seqs: &[TokenSequence],
    loss: &GcLoss,
) -> Result<(crate::numerics::GradCheckReport<f64>, usize)> {
    let analytic = {
        let mut g: Graph<f64> = Graph::new();
        let (loss_var, leaves) = gc_build(&mut g, arrays, config, seqs, loss)?;
        let mut grads = g.backward(loss_var)?;
        leaves
            .iter()
            .zip(arrays)
            .map(|(&v, a)| grads.take_or_zeros(v, a.shape()))
            .collect::<Vec<_>>()
    };
    // With losses of magnitude ~10, the differences themselves carry
    // roundoff noise near 1e-10; a 1e-5 floor keeps that noise from
    // dominating entries whose true gradient is essentially zero, while a
    // genuinely wrong backward still shows up through the healthy entries.
    let report = grad_check_with_floor(
        |p: &[Array<f64>]| gc_loss_value(p, config, seqs, loss),
        arrays,
        &analytic,
        1e-5,
        1e-5,
    )?;
    log::debug!(
        "worst entry: param {} entry {} analytic {:.6e} numeric {:.6e}",
        report.worst_param,
        report.worst_entry,
        report.worst_analytic,
        report.worst_numeric
    );
    let entries: usize = arrays.iter().map(Array::len).sum();
    Ok((report, entries))
}

/// Audits the analytic gradients of both loss heads against central
/// finite differences on a small model, rebuilt in 64-bit arithmetic so
/// difference noise stays far below the tolerance. Parameters are
/// converted exactly from the same 32-bit initialization training uses.
pub fn gradient_check(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.vocab < 3 {
        return Err(Error::Config(format!("vocab must be at least 3, got {}", cfg.vocab)));
    }
    if !(cfg.tolerance.is_finite() && cfg.tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", cfg.tolerance)));
    }
    let words: Vec<String> = (0..cfg.vocab - 2).map(|i| format!("tok{i:02}")).collect();
    let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string()];
    tokens.extend(words.iter().cloned());
    let vocab = Vocab::from_tokens(tokens, 1)?;
    let config = EncoderConfig {
        vocab_size: vocab.len(),
        hidden: cfg.d_model,
        heads: cfg.heads,
        layers: cfg.layers,
        ff_dim: cfg.ff_dim,
        max_len: cfg.max_len,
        dropout: 0.0,
    };
    config.validate()?;

    let word = |i: usize| words[i % words.len()].clone();
    let sentence = |ids: &[usize]| ids.iter().map(|&i| word(i)).collect::<Vec<_>>().join(" ");
    let texts = [
        sentence(&[0, 1, 2, 3, 4]),
        sentence(&[1, 2, 5]),
        sentence(&[10, 11, 12, 13]),
        sentence(&[20, 21, 22]),
        sentence(&[21, 23]),
        sentence(&[30, 31, 32, 33, 34, 35]),
    ];
    let seqs: Vec<TokenSequence> = texts
        .iter()
        .map(|t| tokenize(t, &vocab, config.max_len))
        .collect::<Result<_>>()?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    use rand::SeedableRng;
    let params = EncoderParams::init(&config, &mut rng)?;
    let head = SiameseHead::init(config.hidden, &mut rng)?;
    let mut enc_arrays: Vec<Array<f64>> = Vec::new();
    params.visit(&mut |_, a| enc_arrays.push(a.convert::<f64>()));

    let triplet_loss = GcLoss::Triplet(vec![[0, 1, 2], [3, 4, 5]], cfg.margin);
    let (triplet_report, triplet_entries) =
        gc_check_one(&enc_arrays, &config, &seqs, &triplet_loss)?;

    let mut with_head = enc_arrays;
    with_head.push(head.weight.convert::<f64>());
    with_head.push(head.bias.convert::<f64>());
    let siamese_loss =
        GcLoss::Siamese(vec![(0, 1, true), (0, 2, false), (3, 4, true), (3, 5, false)]);
    let (siamese_report, siamese_entries) =
        gc_check_one(&with_head, &config, &seqs, &siamese_loss)?;

    Ok(GradcheckReport {
        triplet_max_rel: triplet_report.max_rel_error,
        siamese_max_rel: siamese_report.max_rel_error,
        entries: triplet_entries + siamese_entries,
    })
}

/// Runs the gradient audit and reports per-head maxima. Exits nonzero
/// (numeric failure) when the worst relative error exceeds the tolerance.
pub fn cmd_gradcheck(cfg: &GradcheckConfig, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let report = gradient_check(cfg)?;
    writeln!(out, "triplet\tmax_rel_err\t{:.3e}", report.triplet_max_rel)?;
    writeln!(out, "siamese\tmax_rel_err\t{:.3e}", report.siamese_max_rel)?;
    writeln!(
        out,
        "checked\t{} entries\t{:.1}s",
        report.entries,
        started.elapsed().as_secs_f64()
    )?;
    if report.max_rel() > cfg.tolerance {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
            report.max_rel(),
            cfg.tolerance
        )));
    }
    writeln!(out, "ok\tmax_rel_err\t{:.3e}", report.max_rel())?;
    Ok(())
}
