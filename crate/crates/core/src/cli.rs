//! Command-line front end. Exit codes: 0 success, 1 input or usage error,
//! 2 internal invariant violation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytics::{
    cooccurrence, descriptive_stats, engagement_by_trigger_count, prevalence_by_cohort, regress_all, tweet_cohorts,
    CooccurrenceMatrix, CurveRow,
};
use crate::corpus::{load_corpus, AccountClass, Corpus};
use crate::lexicon::{Category, Lexicon};
use crate::network::InteractionGraph;
use crate::report::{self, cooccurrence_svg, to_json, write_atomic, Format};
use crate::similarity::{load_references, narrative_filter, EmbeddingProvider};
use crate::simulator::{
    config_lexicon, generate_corpus, planting_thresholds, verify_against_truth, GroundTruth, SimulationConfig,
};
use crate::triggers::{detect, DetectOptions, Detection, ThresholdConfig, ThresholdMode, TriggerRecord, TriggerVector};

pub const LEXICON_ENV: &str = "BIAS_TRIGGERS_LEXICON";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Invariant(_) => 2,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "bias-triggers", version, about = "Detect cognitive-bias triggers in social-media corpora")]
pub struct Cli {
    /// Worker threads; outputs do not depend on this value.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep tweets close to reference narratives.
    Filter(FilterArgs),
    /// Per-tweet trigger flags as JSON lines.
    Detect(DetectCmd),
    /// Per-cohort prevalence with bot-versus-human z-tests.
    Prevalence(TableCmd),
    /// Construct co-occurrence counts per cohort.
    Cooccur(CooccurCmd),
    /// Log-engagement regressions on the seven constructs.
    Regress(TableCmd),
    /// Engagement summary by number of triggers.
    Curve(TableCmd),
    /// Descriptive statistics per cohort.
    Stats(TableCmd),
    /// Generate a planted corpus with ground truth and detector flags.
    Simulate(SimulateArgs),
    /// Compare detector flags with planted ground truth.
    Verify(VerifyArgs),
    /// Every stage, with all reports written to one directory.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Tweets, JSON lines.
    #[arg(long = "in", value_name = "TWEETS")]
    pub tweets: PathBuf,
    /// Profiles, JSON lines.
    #[arg(long)]
    pub profiles: PathBuf,
    /// Lexicon directory; the built-in lists when absent.
    #[arg(long, env = LEXICON_ENV)]
    pub lexicon: Option<PathBuf>,
    /// Load report destination; standard error when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Run manifest destination.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Fixed,
    Auto,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long, value_enum, default_value = "fixed")]
    pub thresholds: ModeArg,
    /// Cosine threshold for near-duplicate posts.
    #[arg(long, default_value_t = crate::similarity::DEFAULT_SIMILARITY)]
    pub similarity: f64,
    #[arg(long = "bot-cutoff", default_value_t = crate::corpus::DEFAULT_BOT_CUTOFF)]
    pub bot_cutoff: f64,
    /// Precomputed embeddings, JSON lines of {tweet_id, vector}.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Neutral posts end confirmation runs.
    #[arg(long = "strict-confirmation")]
    pub strict_confirmation: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Reference narratives, JSON lines of {text, category, vector?}.
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long, default_value_t = crate::similarity::DEFAULT_SIMILARITY)]
    pub similarity: f64,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Matches, JSON lines; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectCmd {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    /// Flags, JSON lines sorted by tweet id.
    #[arg(long)]
    pub out: PathBuf,
    /// Interaction edge list (ego, neighbor, kind, tweet), tab separated.
    #[arg(long)]
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TableCmd {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    /// Flags from an earlier `detect` run instead of detecting again.
    #[arg(long)]
    pub flags: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CooccurCmd {
    #[command(flatten)]
    pub table: TableCmd,
    /// Directory for one SVG heatmap per cohort.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    #[arg(long, env = LEXICON_ENV)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub detected: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LexiconInfo {
    pub source: String,
    pub digests: BTreeMap<Category, String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Input label to SHA-256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    pub thresholds: Option<ThresholdConfig>,
    pub strict_confirmation: bool,
    pub embeddings: String,
    pub lexicon: Option<LexiconInfo>,
    pub engagement_transform: &'static str,
    pub outputs: Vec<String>,
    pub stages: Vec<StageTiming>,
}

impl RunManifest {
    fn new(command: &str) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs: BTreeMap::new(),
            thresholds: None,
            strict_confirmation: false,
            embeddings: "hashed".into(),
            lexicon: None,
            engagement_transform: "ln(1 + count)",
            outputs: Vec::new(),
            stages: Vec::new(),
        }
    }

    fn input(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(label.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }
}

/// Outputs are collected first and written only after every stage succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
    stdout: Vec<u8>,
}

impl Outputs {
    fn file(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.files.push((path, bytes.into()));
    }

    fn file_or_stdout(&mut self, path: Option<&PathBuf>, bytes: impl Into<Vec<u8>>) {
        match path {
            Some(p) => self.file(p.clone(), bytes),
            None => self.stdout.extend(bytes.into()),
        }
    }

    fn flush(self, manifest: &mut RunManifest, manifest_path: Option<PathBuf>) -> Result<(), CliError> {
        manifest.outputs = self.files.iter().map(|(p, _)| p.display().to_string()).collect();
        for (path, bytes) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| input(format!("cannot create {}: {e}", dir.display())))?;
            }
            write_atomic(path, bytes).map_err(|e| input(format!("cannot write {}: {e}", path.display())))?;
        }
        let body = to_json(manifest);
        match manifest_path {
            Some(p) => write_atomic(&p, body.as_bytes()).map_err(|e| input(format!("cannot write {}: {e}", p.display())))?,
            None => eprint!("{body}"),
        }
        std::io::stdout()
            .write_all(&self.stdout)
            .map_err(|e| input(format!("cannot write to standard output: {e}")))?;
        Ok(())
    }
}

fn sibling_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

struct Loaded {
    corpus: Corpus,
    lexicon: Lexicon,
}

fn load_lexicon(dir: Option<&PathBuf>, manifest: &mut RunManifest) -> Result<Lexicon, CliError> {
    let (lexicon, source) = match dir {
        Some(d) => (Lexicon::load_dir(d).map_err(input)?, d.display().to_string()),
        None => (Lexicon::builtin(), "builtin".to_string()),
    };
    manifest.lexicon = Some(LexiconInfo { source, digests: lexicon.digests().clone() });
    Ok(lexicon)
}

fn load(args: &CorpusArgs, manifest: &mut RunManifest, outputs: &mut Outputs) -> Result<Loaded, CliError> {
    manifest.input("tweets", &args.tweets)?;
    manifest.input("profiles", &args.profiles)?;
    let lexicon = load_lexicon(args.lexicon.as_ref(), manifest)?;
    let (mut corpus, load_report) = manifest
        .time("load", || load_corpus(&args.tweets, &args.profiles))
        .map_err(input)?;
    corpus.derive_profile_terms(&lexicon);
    match &args.report {
        Some(p) => outputs.file(p.clone(), to_json(&load_report)),
        None => eprint!("{}", to_json(&load_report)),
    }
    Ok(Loaded { corpus, lexicon })
}

fn provider(path: Option<&PathBuf>, manifest: &mut RunManifest) -> Result<EmbeddingProvider, CliError> {
    match path {
        Some(p) => {
            manifest.input("embeddings", p)?;
            manifest.embeddings = p.display().to_string();
            EmbeddingProvider::load_sidecar(p).map_err(input)
        }
        None => Ok(EmbeddingProvider::default()),
    }
}

fn unit_interval(name: &str, v: f64, open_low: bool) -> Result<(), CliError> {
    let ok = v.is_finite() && v <= 1.0 && if open_low { v > 0.0 } else { v >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(input(format!("--{name} must lie in {}0, 1]", if open_low { "(" } else { "[" })))
    }
}

fn thresholds(args: &DetectArgs) -> Result<ThresholdConfig, CliError> {
    unit_interval("similarity", args.similarity, true)?;
    unit_interval("bot-cutoff", args.bot_cutoff, false)?;
    Ok(ThresholdConfig {
        mode: match args.thresholds {
            ModeArg::Fixed => ThresholdMode::Fixed,
            ModeArg::Auto => ThresholdMode::Auto,
        },
        r_similarity: args.similarity,
        bot_cutoff: args.bot_cutoff,
        ..ThresholdConfig::default()
    })
}

fn run_detection(loaded: &Loaded, args: &DetectArgs, manifest: &mut RunManifest) -> Result<Detection, CliError> {
    let config = thresholds(args)?;
    let options = DetectOptions {
        provider: provider(args.embeddings.as_ref(), manifest)?,
        strict_confirmation: args.strict_confirmation,
    };
    manifest.strict_confirmation = args.strict_confirmation;
    let detection = manifest.time("detect", || detect(&loaded.corpus, &loaded.lexicon, &loaded.lexicon, &config, &options));
    if detection.vectors.len() != loaded.corpus.len() {
        return Err(CliError::Invariant("detection did not produce one vector per tweet".into()));
    }
    manifest.thresholds = Some(detection.thresholds.clone());
    Ok(detection)
}

fn flags_jsonl(records: &[TriggerRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

fn read_records(path: &Path) -> Result<Vec<TriggerRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| input(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// Flag vectors in corpus order, from a flags file or a fresh detection.
fn vectors_for(cmd: &TableCmd, loaded: &Loaded, manifest: &mut RunManifest) -> Result<Vec<TriggerVector>, CliError> {
    let bot_cutoff = thresholds(&cmd.detect)?.bot_cutoff;
    match &cmd.flags {
        None => Ok(run_detection(loaded, &cmd.detect, manifest)?.vectors),
        Some(path) => {
            manifest.input("flags", path)?;
            manifest.thresholds = Some(ThresholdConfig { bot_cutoff, ..ThresholdConfig::default() });
            let records = read_records(path)?;
            let mut by_id: BTreeMap<String, TriggerVector> =
                records.iter().map(|r| (r.tweet_id.clone(), r.vector())).collect();
            if by_id.len() != records.len() || by_id.len() != loaded.corpus.len() {
                return Err(input("flags file does not cover the corpus one-to-one"));
            }
            loaded
                .corpus
                .tweets()
                .iter()
                .map(|t| by_id.remove(&t.tweet_id).ok_or_else(|| input(format!("no flags for tweet {}", t.tweet_id))))
                .collect()
        }
    }
}

struct Tables {
    prevalence: crate::analytics::PrevalenceReport,
    cooccurrence: Vec<CooccurrenceMatrix>,
    regression: crate::analytics::RegressionSet,
    curve: Vec<(AccountClass, Vec<CurveRow>)>,
    stats: Vec<crate::analytics::CohortStats>,
}

#[derive(Serialize)]
struct CurveReport<'a> {
    engagement_transform: &'static str,
    cohorts: Vec<CurveCohort<'a>>,
}

#[derive(Serialize)]
struct CurveCohort<'a> {
    cohort: AccountClass,
    rows: &'a [CurveRow],
}

fn curve_json(curve: &[(AccountClass, Vec<CurveRow>)]) -> String {
    to_json(&CurveReport {
        engagement_transform: "ln(1 + count)",
        cohorts: curve.iter().map(|(cohort, rows)| CurveCohort { cohort: *cohort, rows }).collect(),
    })
}

fn cohorts_of(loaded: &Loaded, bot_cutoff: f64) -> Vec<Option<AccountClass>> {
    tweet_cohorts(&loaded.corpus, &loaded.corpus.account_classes(bot_cutoff))
}

fn check_matrices(ms: &[CooccurrenceMatrix]) -> Result<(), CliError> {
    if ms.iter().all(CooccurrenceMatrix::is_consistent) {
        Ok(())
    } else {
        Err(CliError::Invariant("co-occurrence matrix is not symmetric or exceeds its diagonal".into()))
    }
}

fn all_tables(
    loaded: &Loaded,
    vectors: &[TriggerVector],
    bot_cutoff: f64,
    manifest: &mut RunManifest,
) -> Result<Tables, CliError> {
    let cohorts = cohorts_of(loaded, bot_cutoff);
    let prevalence = manifest.time("prevalence", || prevalence_by_cohort(vectors, &cohorts)).map_err(input)?;
    let cooccurrence: Vec<_> = manifest.time("cooccur", || {
        AccountClass::ALL.iter().map(|&c| cooccurrence(vectors, &cohorts, c)).collect()
    });
    check_matrices(&cooccurrence)?;
    let regression = manifest.time("regress", || regress_all(&loaded.corpus, vectors, &cohorts));
    let curve = manifest.time("curve", || {
        AccountClass::ALL
            .iter()
            .map(|&c| (c, engagement_by_trigger_count(vectors, &loaded.corpus, &cohorts, c)))
            .collect()
    });
    let classes = loaded.corpus.account_classes(bot_cutoff);
    let stats = manifest.time("stats", || descriptive_stats(&loaded.corpus, &classes, &loaded.lexicon));
    Ok(Tables { prevalence, cooccurrence, regression, curve, stats })
}

fn run_filter(args: &FilterArgs, manifest: &mut RunManifest, out: &mut Outputs) -> Result<Option<PathBuf>, CliError> {
    unit_interval("similarity", args.similarity, true)?;
    let loaded = load(&args.corpus, manifest, out)?;
    manifest.input("references", &args.references)?;
    let refs = load_references(&args.references).map_err(input)?;
    let provider = provider(args.embeddings.as_ref(), manifest)?;
    let matches = manifest
        .time("filter", || narrative_filter(&loaded.corpus, &refs, args.similarity, &provider))
        .map_err(input)?;
    let mut body = String::new();
    for m in &matches {
        body.push_str(&serde_json::to_string(m).expect("matches serialize"));
        body.push('\n');
    }
    out.file_or_stdout(args.out.as_ref(), body);
    Ok(args.corpus.manifest.clone().or_else(|| args.out.as_deref().map(sibling_manifest)))
}

fn run_detect(args: &DetectCmd, manifest: &mut RunManifest, out: &mut Outputs) -> Result<Option<PathBuf>, CliError> {
    let loaded = load(&args.corpus, manifest, out)?;
    let detection = run_detection(&loaded, &args.detect, manifest)?;
    out.file(args.out.clone(), flags_jsonl(&detection.sorted_records()));
    if let Some(edges) = &args.edges {
        let graph = InteractionGraph::build(&loaded.corpus);
        out.file(edges.clone(), graph.edge_list(&loaded.corpus));
    }
    Ok(Some(args.corpus.manifest.clone().unwrap_or_else(|| sibling_manifest(&args.out))))
}

#[derive(Clone, Copy)]
enum Table {
    Prevalence,
    Regress,
    Curve,
    Stats,
}

fn run_table(
    kind: Table,
    cmd: &TableCmd,
    manifest: &mut RunManifest,
    out: &mut Outputs,
) -> Result<Option<PathBuf>, CliError> {
    let loaded = load(&cmd.corpus, manifest, out)?;
    let vectors = vectors_for(cmd, &loaded, manifest)?;
    let bot_cutoff = cmd.detect.bot_cutoff;
    let cohorts = cohorts_of(&loaded, bot_cutoff);
    let body = match kind {
        Table::Prevalence => {
            let r = manifest.time("prevalence", || prevalence_by_cohort(&vectors, &cohorts)).map_err(input)?;
            match cmd.format {
                Format::Json => to_json(&r),
                Format::Csv => report::prevalence_csv(&r),
            }
        }
        Table::Regress => {
            let r = manifest.time("regress", || regress_all(&loaded.corpus, &vectors, &cohorts));
            for a in &r.absent {
                eprintln!("notice: no {} model for {}: {}", a.metric.name(), a.cohort.name(), a.reason);
            }
            match cmd.format {
                Format::Json => to_json(&r),
                Format::Csv => report::regression_csv(&r),
            }
        }
        Table::Curve => {
            let curve: Vec<_> = manifest.time("curve", || {
                AccountClass::ALL
                    .iter()
                    .map(|&c| (c, engagement_by_trigger_count(&vectors, &loaded.corpus, &cohorts, c)))
                    .collect()
            });
            match cmd.format {
                Format::Json => curve_json(&curve),
                Format::Csv => report::curve_csv(&curve),
            }
        }
        Table::Stats => {
            let classes = loaded.corpus.account_classes(bot_cutoff);
            let s = manifest.time("stats", || descriptive_stats(&loaded.corpus, &classes, &loaded.lexicon));
            match cmd.format {
                Format::Json => to_json(&s),
                Format::Csv => report::stats_csv(&s),
            }
        }
    };
    out.file_or_stdout(cmd.out.as_ref(), body);
    Ok(cmd.corpus.manifest.clone().or_else(|| cmd.out.as_deref().map(sibling_manifest)))
}

fn run_cooccur(cmd: &CooccurCmd, manifest: &mut RunManifest, out: &mut Outputs) -> Result<Option<PathBuf>, CliError> {
    let t = &cmd.table;
    let loaded = load(&t.corpus, manifest, out)?;
    let vectors = vectors_for(t, &loaded, manifest)?;
    let cohorts = cohorts_of(&loaded, t.detect.bot_cutoff);
    let ms: Vec<_> = manifest.time("cooccur", || {
        AccountClass::ALL.iter().map(|&c| cooccurrence(&vectors, &cohorts, c)).collect()
    });
    check_matrices(&ms)?;
    let body = match t.format {
        Format::Json => to_json(&ms),
        Format::Csv => report::cooccurrence_csv(&ms),
    };
    out.file_or_stdout(t.out.as_ref(), body);
    if let Some(dir) = &cmd.svg {
        for m in &ms {
            out.file(dir.join(format!("cooccurrence_{}.svg", m.cohort.name())), cooccurrence_svg(m));
        }
    }
    Ok(t.corpus.manifest.clone().or_else(|| t.out.as_deref().map(sibling_manifest)))
}

fn run_simulate(args: &SimulateArgs, manifest: &mut RunManifest, out: &mut Outputs) -> Result<Option<PathBuf>, CliError> {
    manifest.input("config", &args.config)?;
    let text = fs::read_to_string(&args.config).map_err(|e| input(format!("cannot read {}: {e}", args.config.display())))?;
    let config = SimulationConfig::from_json(&text).map_err(input)?;
    let lexicon = match (&config.lexicon_dir, &args.lexicon) {
        (None, Some(dir)) => load_lexicon(Some(dir), manifest)?,
        _ => {
            let lexicon = config_lexicon(&config).map_err(input)?;
            manifest.lexicon = Some(LexiconInfo {
                source: config.lexicon_dir.clone().unwrap_or_else(|| "builtin".into()),
                digests: lexicon.digests().clone(),
            });
            lexicon
        }
    };
    let output = manifest.time("simulate", || generate_corpus(&config, &lexicon)).map_err(input)?;
    let corpus = output.corpus(&lexicon).map_err(|e| CliError::Invariant(e.to_string()))?;
    let thresholds = planting_thresholds(&config);
    let detection = manifest.time("detect", || {
        detect(&corpus, &lexicon, &lexicon, &thresholds, &DetectOptions::default())
    });
    manifest.thresholds = Some(detection.thresholds.clone());
    let dir = &args.out_dir;
    let mut tweets = String::new();
    for t in &output.tweets {
        tweets.push_str(&t.to_json_line());
        tweets.push('\n');
    }
    let mut profiles = String::new();
    for p in &output.profiles {
        profiles.push_str(&p.to_json_line());
        profiles.push('\n');
    }
    out.file(dir.join("tweets.jsonl"), tweets);
    out.file(dir.join("profiles.jsonl"), profiles);
    out.file(dir.join("ground_truth.jsonl"), output.truth.to_jsonl());
    out.file(dir.join("flags.jsonl"), flags_jsonl(&detection.sorted_records()));
    Ok(Some(args.manifest.clone().unwrap_or_else(|| dir.join("manifest.json"))))
}

fn run_verify(args: &VerifyArgs, manifest: &mut RunManifest, out: &mut Outputs) -> Result<Option<PathBuf>, CliError> {
    manifest.input("detected", &args.detected)?;
    manifest.input("truth", &args.truth)?;
    let detected = read_records(&args.detected)?;
    let text = fs::read_to_string(&args.truth).map_err(|e| input(format!("cannot read {}: {e}", args.truth.display())))?;
    let truth = GroundTruth::from_jsonl(&text).map_err(|e| input(format!("{}: {e}", args.truth.display())))?;
    let report = manifest.time("verify", || verify_against_truth(&detected, &truth)).map_err(input)?;
    out.file_or_stdout(args.out.as_ref(), to_json(&report));
    if !report.exact {
        // Planted flags must be detected exactly; a mismatch is a detector or
        // simulator fault rather than bad input.
        return Err(CliError::Invariant(format!("{} flags differ from the planted truth", report.errors())));
    }
    Ok(args.out.as_deref().map(sibling_manifest))
}

fn run_pipeline(args: &PipelineArgs, manifest: &mut RunManifest, out: &mut Outputs) -> Result<Option<PathBuf>, CliError> {
    let loaded = load(&args.corpus, manifest, out)?;
    let detection = run_detection(&loaded, &args.detect, manifest)?;
    let tables = all_tables(&loaded, &detection.vectors, args.detect.bot_cutoff, manifest)?;
    let dir = &args.out_dir;
    out.file(dir.join("flags.jsonl"), flags_jsonl(&detection.sorted_records()));
    out.file(dir.join("detection_report.json"), to_json(&detection.report));
    out.file(dir.join("prevalence.json"), to_json(&tables.prevalence));
    out.file(dir.join("prevalence.csv"), report::prevalence_csv(&tables.prevalence));
    out.file(dir.join("cooccurrence.json"), to_json(&tables.cooccurrence));
    out.file(dir.join("cooccurrence.csv"), report::cooccurrence_csv(&tables.cooccurrence));
    for m in &tables.cooccurrence {
        out.file(dir.join(format!("cooccurrence_{}.svg", m.cohort.name())), cooccurrence_svg(m));
    }
    out.file(dir.join("regression.json"), to_json(&tables.regression));
    out.file(dir.join("regression.csv"), report::regression_csv(&tables.regression));
    out.file(dir.join("curve.json"), curve_json(&tables.curve));
    out.file(dir.join("curve.csv"), report::curve_csv(&tables.curve));
    out.file(dir.join("stats.json"), to_json(&tables.stats));
    out.file(dir.join("stats.csv"), report::stats_csv(&tables.stats));
    let graph = InteractionGraph::build(&loaded.corpus);
    out.file(dir.join("edges.tsv"), graph.edge_list(&loaded.corpus));
    Ok(Some(args.corpus.manifest.clone().unwrap_or_else(|| dir.join("manifest.json"))))
}

fn name_of(cmd: &Command) -> &'static str {
    match cmd {
        Command::Filter(_) => "filter",
        Command::Detect(_) => "detect",
        Command::Prevalence(_) => "prevalence",
        Command::Cooccur(_) => "cooccur",
        Command::Regress(_) => "regress",
        Command::Curve(_) => "curve",
        Command::Stats(_) => "stats",
        Command::Simulate(_) => "simulate",
        Command::Verify(_) => "verify",
        Command::Pipeline(_) => "pipeline",
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut manifest = RunManifest::new(name_of(&cli.command));
    let mut out = Outputs::default();
    let result = match &cli.command {
        Command::Filter(a) => run_filter(a, &mut manifest, &mut out),
        Command::Detect(a) => run_detect(a, &mut manifest, &mut out),
        Command::Prevalence(a) => run_table(Table::Prevalence, a, &mut manifest, &mut out),
        Command::Cooccur(a) => run_cooccur(a, &mut manifest, &mut out),
        Command::Regress(a) => run_table(Table::Regress, a, &mut manifest, &mut out),
        Command::Curve(a) => run_table(Table::Curve, a, &mut manifest, &mut out),
        Command::Stats(a) => run_table(Table::Stats, a, &mut manifest, &mut out),
        Command::Simulate(a) => run_simulate(a, &mut manifest, &mut out),
        Command::Verify(a) => run_verify(a, &mut manifest, &mut out),
        Command::Pipeline(a) => run_pipeline(a, &mut manifest, &mut out),
    };
    match result {
        Ok(path) => out.flush(&mut manifest, path),
        Err(e @ CliError::Invariant(_)) if matches!(cli.command, Command::Verify(_)) => {
            // The confusion report is still written when verification fails.
            out.flush(&mut manifest, None)?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j as usize);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
