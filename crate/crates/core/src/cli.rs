//! Command-line front end: `ingest`, `stats`, `train`, `eval`, `ablate` and
//! `predict`.
//!
//! Settings come from built-in defaults, then an optional JSON `--config`
//! file, then command-line flags. Every random choice derives from the one
//! run seed.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{build_report, write_stats_csv, AnalysisError};
use crate::dataset::{
    assemble, balance, load_corpus, parse_engagements, split, write_corpus, Claim, DatasetError, Label,
    LoadReport, MultiPlatformSample, Platform, Source, SplitConfig,
};
use crate::embedding::{load_precomputed, EmbeddingError, HashingEmbedder, TextEncoder, DEFAULT_DIM};
use crate::model::{encode_samples, load_checkpoint, save_checkpoint, EncodedSample, Encoders, ModelError};
use crate::training::{
    ablate, evaluate, predict, train, variant_grid, write_ablation_csv, Metrics, RunSplit, TrainConfig,
    TrainError,
};

pub const HISTORY_JSONL: &str = "history.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const STATS_JSON: &str = "stats.json";
pub const STATS_CSV: &str = "stats.csv";
pub const INGEST_REPORT_JSON: &str = "ingest_report.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Hashing,
    Precomputed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// What changes between the repeated runs of `ablate`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Vary {
    /// Model seeds differ, the split is fixed.
    #[default]
    Seeds,
    /// Splits differ, the model seed is fixed.
    Splits,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// Resolved settings of one invocation. Also stored in the checkpoint
/// manifest so `eval` can rebuild the same splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub claims: Option<PathBuf>,
    pub engagements: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub encoder: EncoderKind,
    /// Embedding width; read from the embeddings header when precomputed.
    pub dim: Option<usize>,
    pub hash_seed: u64,
    /// Drives balancing, splitting, shuffling and initialization.
    pub seed: u64,
    pub balance: bool,
    pub split: Ratios,
    /// Repetitions averaged by `ablate`.
    pub runs: usize,
    pub vary: Vary,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            claims: None,
            engagements: None,
            embeddings: None,
            out: PathBuf::from("out"),
            encoder: EncoderKind::Hashing,
            dim: None,
            hash_seed: 0,
            seed: 0,
            balance: true,
            split: Ratios::default(),
            runs: 3,
            vary: Vary::Seeds,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "apsl", version, about = "Multi-platform fake news detection from propagation trees")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON run config; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of youtube,x,reddit
    #[arg(long, global = true, value_delimiter = ',')]
    pub platforms: Option<Vec<Platform>>,
    #[arg(long, global = true, value_enum)]
    pub encoder: Option<EncoderKind>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub no_adapter: bool,
    #[arg(long, global = true)]
    pub no_attention: bool,
    #[arg(long, global = true)]
    pub content_only: bool,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// claims.jsonl
    #[arg(long, global = true)]
    pub claims: Option<PathBuf>,
    /// engagements.jsonl
    #[arg(long, global = true)]
    pub engagements: Option<PathBuf>,
    /// Precomputed embeddings (JSON lines with a {"dim": D} header)
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub vary: Option<Vary>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and write a normalized copy plus a report
    Ingest,
    /// Propagation statistics per platform and label
    Stats,
    /// Train a model and write checkpoint, history and metrics
    Train,
    /// Recompute metrics of a checkpoint on one split
    Eval {
        /// Directory holding manifest.json and checkpoint.bin (defaults to --out)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Print one JSON line per sample instead of the metrics
        #[arg(long)]
        predictions: bool,
    },
    /// Train and test the component and platform variant grid
    Ablate,
    /// Score claims from a JSON-lines file
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Claims to score: id, text and optionally source and raw_label
        #[arg(long)]
        claim: PathBuf,
    },
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let mut run: RunConfig = match &args.config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        run.apply(args);
        Ok(run)
    }

    fn apply(&mut self, a: &GlobalArgs) {
        let t = &mut self.train;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.seed, a.seed);
        set!(self.out, a.out);
        set!(self.encoder, a.encoder);
        set!(t.platform_subset, a.platforms);
        set!(t.gamma, a.gamma);
        set!(t.tau, a.tau);
        set!(t.lr, a.lr);
        set!(t.max_epochs, a.epochs);
        set!(t.batch_size, a.batch_size);
        set!(t.patience, a.patience);
        set!(self.runs, a.runs);
        set!(self.vary, a.vary);
        t.flags.no_adapter |= a.no_adapter;
        t.flags.no_attention |= a.no_attention;
        t.flags.content_only |= a.content_only;
        if a.dim.is_some() {
            self.dim = a.dim;
        }
        self.apply_paths(a);
        self.train.seed = self.seed;
    }

    fn apply_paths(&mut self, a: &GlobalArgs) {
        if a.claims.is_some() {
            self.claims = a.claims.clone();
        }
        if a.engagements.is_some() {
            self.engagements = a.engagements.clone();
        }
        if a.embeddings.is_some() {
            self.embeddings = a.embeddings.clone();
        }
    }

    fn corpus_paths(&self) -> Result<(&Path, &Path), CliError> {
        let claims = self.claims.as_deref().ok_or_else(|| CliError::Usage("missing --claims".into()))?;
        let engagements = self
            .engagements
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing --engagements".into()))?;
        for p in [claims, engagements] {
            if !p.is_file() {
                return Err(CliError::Usage(format!("{} does not exist", p.display())));
            }
        }
        Ok((claims, engagements))
    }

    pub fn encoders(&self) -> Result<Encoders, CliError> {
        let enc: Arc<dyn TextEncoder> = match self.encoder {
            EncoderKind::Hashing => Arc::new(HashingEmbedder::new(self.dim.unwrap_or(DEFAULT_DIM), self.hash_seed)),
            EncoderKind::Precomputed => {
                let path = self
                    .embeddings
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("--encoder precomputed needs --embeddings".into()))?;
                let store = load_precomputed(path)?;
                if let Some(d) = self.dim.filter(|&d| d != store.dim()) {
                    return Err(CliError::Usage(format!(
                        "--dim {d} does not match {} (dim {})",
                        path.display(),
                        store.dim()
                    )));
                }
                Arc::new(store)
            }
        };
        Ok(Encoders::shared(enc))
    }

    fn split_config(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            train: self.split.train,
            val: self.split.val,
            test: self.split.test,
            seed,
        }
    }
}

type Splits<T> = (Vec<T>, Vec<T>, Vec<T>);

fn load(run: &RunConfig) -> Result<(Vec<MultiPlatformSample>, LoadReport), CliError> {
    let (claims, engagements) = run.corpus_paths()?;
    let (samples, report) = load_corpus(claims, engagements)?;
    info!(
        "loaded {} claims ({} fake, {} true) and {} engagements",
        report.claims, report.fake, report.true_, report.engagements
    );
    Ok((samples, report))
}

fn make_splits(run: &RunConfig, samples: &[MultiPlatformSample], seed: u64) -> Result<Splits<MultiPlatformSample>, CliError> {
    let pool = if run.balance {
        balance(samples, seed)?
    } else {
        samples.to_vec()
    };
    Ok(split(&pool, &run.split_config(seed))?)
}

fn encode_splits(splits: &Splits<MultiPlatformSample>, enc: &Encoders) -> Result<Splits<EncodedSample>, CliError> {
    Ok((
        encode_samples(&splits.0, enc)?,
        encode_samples(&splits.1, enc)?,
        encode_samples(&splits.2, enc)?,
    ))
}

#[derive(Debug, Serialize)]
struct IngestReport {
    #[serde(flatten)]
    counts: LoadReport,
    warnings: Vec<String>,
}

fn cmd_ingest(run: &RunConfig) -> Result<String, CliError> {
    let (samples, counts) = load(run)?;
    let mut warnings = Vec::new();
    if counts.claims_without_engagements > 0 {
        warnings.push(format!("{} claims have no engagements", counts.claims_without_engagements));
    }
    if counts.unknown_keys > 0 {
        warnings.push(format!("{} unknown keys ignored", counts.unknown_keys));
    }
    if counts.fake == 0 || counts.true_ == 0 {
        warnings.push("only one label class present".into());
    }
    for w in &warnings {
        warn!("{w}");
    }
    let dir = run.out.join("corpus");
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    write_corpus(&samples, &dir.join("claims.jsonl"), &dir.join("engagements.jsonl"))?;
    let json = pretty(&IngestReport { counts, warnings });
    write_file(&run.out.join(INGEST_REPORT_JSON), json.as_bytes())?;
    Ok(json)
}

fn cmd_stats(run: &RunConfig, format: Format) -> Result<String, CliError> {
    let (samples, _) = load(run)?;
    let enc = run.encoders()?;
    let report = build_report(&samples, &run.train.platform_subset, Some(&enc))?;
    match format {
        Format::Json => {
            let json = pretty(&report);
            write_file(&run.out.join(STATS_JSON), json.as_bytes())?;
            Ok(json)
        }
        Format::Csv => {
            let mut buf = Vec::new();
            write_stats_csv(&report, &mut buf)?;
            write_file(&run.out.join(STATS_CSV), &buf)?;
            Ok(String::from_utf8(buf).expect("csv is utf-8"))
        }
    }
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub sizes: [usize; 3],
    pub val: Metrics,
    pub test: Metrics,
}

fn cmd_train(run: &RunConfig) -> Result<String, CliError> {
    let (samples, _) = load(run)?;
    let enc = run.encoders()?;
    let (tr, va, te) = encode_splits(&make_splits(run, &samples, run.seed)?, &enc)?;
    let outcome = train(&tr, &va, &run.train)?;
    let flags = run.train.flags;
    let report = TrainReport {
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        stopped_early: outcome.stopped_early,
        sizes: [tr.len(), va.len(), te.len()],
        val: outcome.history[outcome.best_epoch - 1].val,
        test: evaluate(&outcome.model, &te, flags)?,
    };
    let run_json = serde_json::to_value(run).expect("run config serializes");
    save_checkpoint(&run.out, &outcome.model, flags, run.seed, run_json)?;
    let mut history = String::new();
    for r in &outcome.history {
        history.push_str(&serde_json::to_string(r).expect("record serializes"));
        history.push('\n');
    }
    write_file(&run.out.join(HISTORY_JSONL), history.as_bytes())?;
    let json = pretty(&report);
    write_file(&run.out.join(METRICS_JSON), json.as_bytes())?;
    Ok(json)
}

/// Loads a checkpoint along with the run config it was trained under.
/// Corpus and embedding paths given on the command line take precedence.
fn open_checkpoint(
    dir: &Path,
    args: &GlobalArgs,
) -> Result<(crate::model::ApslModel, crate::model::CheckpointManifest, RunConfig), CliError> {
    if !dir.join(crate::model::MANIFEST_JSON).is_file() {
        return Err(CliError::Usage(format!("no checkpoint in {}", dir.display())));
    }
    let (model, manifest) = load_checkpoint(dir)?;
    let mut run: RunConfig = serde_json::from_value(manifest.run.clone()).map_err(|source| CliError::Json {
        path: dir.join(crate::model::MANIFEST_JSON),
        source,
    })?;
    run.apply_paths(args);
    Ok((model, manifest, run))
}

fn checkpoint_dir(explicit: &Option<PathBuf>, run: &RunConfig) -> PathBuf {
    explicit.clone().unwrap_or_else(|| run.out.clone())
}

fn cmd_eval(
    args: &GlobalArgs,
    run: &RunConfig,
    checkpoint: &Option<PathBuf>,
    which: SplitName,
    per_sample: bool,
) -> Result<String, CliError> {
    let (model, manifest, trained) = open_checkpoint(&checkpoint_dir(checkpoint, run), args)?;
    let (samples, _) = load(&trained)?;
    let enc = trained.encoders()?;
    let (tr, va, te) = make_splits(&trained, &samples, trained.seed)?;
    let chosen = match which {
        SplitName::Train => tr,
        SplitName::Val => va,
        SplitName::Test => te,
    };
    let mut encoded = encode_samples(&chosen, &enc)?;
    if let Some(keep) = &args.platforms {
        encoded = encoded.iter().map(|s| s.restricted_to(keep)).collect();
    }
    if per_sample {
        let mut out = String::new();
        for p in predict(&model, &encoded, manifest.flags)? {
            out.push_str(&serde_json::to_string(&p).expect("prediction serializes"));
            out.push('\n');
        }
        return Ok(out);
    }
    Ok(pretty(&evaluate(&model, &encoded, manifest.flags)?))
}

fn cmd_ablate(run: &RunConfig) -> Result<String, CliError> {
    if run.runs == 0 {
        return Err(CliError::Usage("--runs must be positive".into()));
    }
    let (samples, _) = load(run)?;
    let enc = run.encoders()?;
    let mut plans = Vec::with_capacity(run.runs);
    for r in 0..run.runs as u64 {
        let (model_seed, split_seed) = match run.vary {
            Vary::Seeds => (run.seed + r, run.seed),
            Vary::Splits => (run.seed, run.seed + r),
            Vary::Both => (run.seed + r, run.seed + r),
        };
        plans.push((model_seed, encode_splits(&make_splits(run, &samples, split_seed)?, &enc)?));
    }
    let runs: Vec<RunSplit> = plans
        .iter()
        .map(|(seed, (tr, va, te))| RunSplit {
            seed: *seed,
            train: tr,
            val: va,
            test: te,
        })
        .collect();
    let rows = ablate(&runs, &run.train, &variant_grid())?;
    let mut buf = Vec::new();
    write_ablation_csv(&rows, &mut buf)?;
    write_file(&run.out.join(ABLATION_CSV), &buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

#[derive(Debug, Deserialize)]
struct PredictClaim {
    id: String,
    text: String,
    #[serde(default)]
    source: Option<Source>,
    #[serde(default)]
    raw_label: Option<String>,
}

#[derive(Debug, Serialize)]
struct PredictLine {
    id: String,
    yhat: f64,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
}

fn verdict_word(label: Label) -> &'static str {
    match label {
        Label::Fake => "FAKE",
        Label::True => "TRUE",
    }
}

fn read_predict_claims(path: &Path) -> Result<Vec<(Claim, bool)>, CliError> {
    let file = fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| DatasetError::Parse {
            file: path.display().to_string(),
            line: i + 1,
            msg,
        };
        let rec: PredictClaim = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let known = rec.source.is_some() && rec.raw_label.is_some();
        let claim = match (rec.source, rec.raw_label) {
            (Some(source), Some(raw)) => Claim::new(rec.id, rec.text, source, &raw).map_err(|e| bad(e.to_string()))?,
            // Placeholder label; it is never reported.
            _ => Claim::new(rec.id, rec.text, Source::Politifact, "true").expect("known label"),
        };
        out.push((claim, known));
    }
    Ok(out)
}

fn cmd_predict(
    args: &GlobalArgs,
    run: &RunConfig,
    checkpoint: &Option<PathBuf>,
    claim_file: &Path,
    format: Option<Format>,
) -> Result<String, CliError> {
    let (model, manifest, trained) = open_checkpoint(&checkpoint_dir(checkpoint, run), args)?;
    let claims = read_predict_claims(claim_file)?;
    let known: Vec<bool> = claims.iter().map(|c| c.1).collect();
    let engagements = match &args.engagements {
        Some(p) => {
            let file = fs::File::open(p).map_err(|source| CliError::Io { path: p.clone(), source })?;
            parse_engagements(BufReader::new(file), &p.display().to_string())?.0
        }
        None => Vec::new(),
    };
    let samples = assemble(claims.into_iter().map(|c| c.0).collect(), engagements)?;
    let keep = &model.config().platforms;
    let samples: Vec<_> = samples.iter().map(|s| s.restricted_to(keep)).collect();
    for s in samples.iter().filter(|s| s.trees.is_empty()) {
        warn!("claim {} has no engagements on the model's platforms; using the content-only path", s.claim.id);
    }
    let encoded = encode_samples(&samples, &trained.encoders()?)?;
    let mut out = String::new();
    for (p, known) in predict(&model, &encoded, manifest.flags)?.into_iter().zip(known) {
        let line = PredictLine {
            id: p.id,
            yhat: p.yhat,
            verdict: verdict_word(p.predicted),
            label: known.then_some(p.label),
        };
        match format {
            Some(Format::Json) => out.push_str(&serde_json::to_string(&line).expect("serializes")),
            _ => out.push_str(&format!("{}\t{:.6}\t{}", line.id, line.yhat, line.verdict)),
        }
        out.push('\n');
    }
    Ok(out)
}

/// Runs one parsed command and returns what it prints on stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let run = RunConfig::resolve(&cli.global)?;
    let format = cli.global.format;
    match &cli.command {
        Command::Ingest => cmd_ingest(&run),
        Command::Stats => cmd_stats(&run, format.unwrap_or_default()),
        Command::Train => cmd_train(&run),
        Command::Eval {
            checkpoint,
            split,
            predictions,
        } => cmd_eval(&cli.global, &run, checkpoint, *split, *predictions),
        Command::Ablate => cmd_ablate(&run),
        Command::Predict { checkpoint, claim } => cmd_predict(&cli.global, &run, checkpoint, claim, format),
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", one_line(first));
            return 2;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("APSL_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("apsl").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        fs::write(&cfg, r#"{"seed": 7, "train": {"gamma": 0.5, "tau": 0.2}, "runs": 5}"#).unwrap();
        let cli = parse(&["train", "--config", cfg.to_str().unwrap(), "--gamma", "0", "--platforms", "x,reddit"]);
        let run = RunConfig::resolve(&cli.global).unwrap();
        assert_eq!(run.seed, 7);
        assert_eq!(run.train.seed, 7);
        assert_eq!(run.train.gamma, 0.0);
        assert_eq!(run.train.tau, 0.2);
        assert_eq!(run.runs, 5);
        assert_eq!(run.train.platform_subset, vec![Platform::X, Platform::Reddit]);
    }

    #[test]
    fn unknown_config_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        fs::write(&cfg, r#"{"sed": 7}"#).unwrap();
        let cli = parse(&["train", "--config", cfg.to_str().unwrap()]);
        assert!(matches!(RunConfig::resolve(&cli.global), Err(CliError::Json { .. })));
    }

    #[test]
    fn unknown_platform_is_usage_error() {
        let err = Cli::try_parse_from(["apsl", "stats", "--platforms", "myspace"]).unwrap_err();
        assert!(err.use_stderr());
    }

    #[test]
    fn flags_set_ablation_switches() {
        let cli = parse(&["--no-attention", "train", "--content-only"]);
        let run = RunConfig::resolve(&cli.global).unwrap();
        assert!(run.train.flags.no_attention && run.train.flags.content_only);
        assert!(!run.train.flags.no_adapter);
    }

    #[test]
    fn precomputed_dim_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let emb = dir.path().join("emb.jsonl");
        fs::write(&emb, "{\"dim\": 2}\n{\"id\": \"a\", \"v\": [1, 0]}\n").unwrap();
        let mut run = RunConfig {
            encoder: EncoderKind::Precomputed,
            embeddings: Some(emb),
            dim: Some(3),
            ..Default::default()
        };
        assert!(matches!(run.encoders(), Err(CliError::Usage(_))));
        run.dim = None;
        assert_eq!(run.encoders().unwrap().dim(), 2);
        run.embeddings = None;
        assert!(run.encoders().is_err());
    }

    #[test]
    fn one_line_collapses_newlines() {
        assert_eq!(one_line("a\nb  c\n"), "a b c");
    }
}
