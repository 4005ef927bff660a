//! The `biasgauge` command line.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 scorer failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::controlgen::{self, GroupTermList, Skipped, SwapLexicon};
use crate::corpus::{self, BiasType, Dataset, PairSample, QuadSample, Shape};
use crate::freqprior::{self, FreqTable};
use crate::measures::{self, ScoreKind, ScoreRecord};
use crate::report::{self, Format};
use crate::scorer::{Backend, RemoteScorer, ScorerConfig};

pub const ENDPOINT_ENV: &str = "BIASGAUGE_ENDPOINT";

#[derive(Debug, Parser)]
#[command(
    name = "biasgauge",
    version,
    about = "Bias measures for masked language models with control groups"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a dataset and write records plus summary tables.
    Score(ScoreArgs),
    /// Build control-group quadruplets from a pair dataset.
    GenerateControls(GenerateArgs),
    /// Correlate ss scores with keyword frequency priors.
    FreqAnalyze(FreqArgs),
    /// Rebuild summary tables from a records file.
    Report(ReportArgs),
    /// Check a dataset file and report violations per invariant.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Pair,
    Quad,
    Crows,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Shape {
        match s {
            ShapeArg::Pair => Shape::Pair,
            ShapeArg::Quad => Shape::Quad,
            ShapeArg::Crows => Shape::Crows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Table,
    Unigram,
    Hash,
    Remote,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Dataset file (JSONL).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Shape of the dataset records.
    #[arg(long, value_enum)]
    pub shape: ShapeArg,
    /// Comma-separated score kinds: ss, cs, csk, f.
    #[arg(long, value_delimiter = ',', required = true)]
    pub kinds: Vec<ScoreKind>,
    /// Scoring backend.
    #[arg(long, value_enum)]
    pub backend: BackendArg,
    /// Fixture JSON for the table backend.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Word frequency TSV for the unigram backend.
    #[arg(long)]
    pub freq_table: Option<PathBuf>,
    /// Seed for the hash backend; recorded in the summary metadata.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scoring service URL for the remote backend (BIASGAUGE_ENDPOINT wins when set).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Maximum concurrent requests to the scoring service.
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
    /// Call the backend for every request instead of memoizing.
    #[arg(long)]
    pub no_cache: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Output file prefix and table label (default: dataset file stem).
    #[arg(long)]
    pub name: Option<String>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Record the wall-clock time in the summary metadata.
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Pair dataset (JSONL).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for quads.jsonl and skipped.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Gender swap lexicon TSV (default: bundled English lexicon).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Group term list for a bias type, as TYPE=PATH; repeatable.
    #[arg(long = "groups", value_name = "TYPE=PATH")]
    pub groups: Vec<String>,
    /// Control groups drawn per sample for list-based types.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Seed for the random group draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FreqArgs {
    /// Word frequency TSV.
    #[arg(long)]
    pub table: PathBuf,
    /// Records file holding ss records.
    #[arg(long)]
    pub scores: PathBuf,
    /// Dataset the records were computed on.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Shape of the dataset (pair or quad).
    #[arg(long, value_enum)]
    pub shape: ShapeArg,
    /// Also write the result as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Records file (JSONL).
    #[arg(long)]
    pub records: PathBuf,
    /// Kinds to summarize (default: every kind in the file).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<ScoreKind>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Output file prefix and table label (default: records file stem).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dataset file (JSONL).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Expected record shape.
    #[arg(long, value_enum)]
    pub shape: ShapeArg,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn scorer_failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        invalid(error)
    }
}

type CmdResult = Result<(), Failure>;

/// Parse `args` and run the command. Returns the process exit code.
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
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Score(a) => with_jobs(a.jobs, || cmd_score(&a)),
        Command::GenerateControls(a) => with_jobs(a.jobs, || cmd_generate_controls(&a)),
        Command::FreqAnalyze(a) => cmd_freq_analyze(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

fn with_jobs(jobs: Option<usize>, f: impl FnOnce() -> CmdResult + Send) -> CmdResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(invalid(anyhow!("--jobs must be at least 1")));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("failed to start worker threads")?;
    pool.install(f)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("failed to write {}", path.display()))
}

fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("failed to read {}", path.display()))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("failed to create {}", path.display()))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn scorer_config(a: &ScoreArgs) -> anyhow::Result<ScorerConfig> {
    let backend = match a.backend {
        BackendArg::Table => Backend::Table {
            fixture: a
                .fixture
                .clone()
                .ok_or_else(|| anyhow!("--backend table needs --fixture"))?,
        },
        BackendArg::Unigram => Backend::Unigram {
            freq_table: a
                .freq_table
                .clone()
                .ok_or_else(|| anyhow!("--backend unigram needs --freq-table"))?,
        },
        BackendArg::Hash => Backend::Hash { seed: a.seed },
        BackendArg::Remote => {
            let endpoint = std::env::var(ENDPOINT_ENV)
                .ok()
                .filter(|e| !e.is_empty())
                .or_else(|| a.endpoint.clone())
                .ok_or_else(|| anyhow!("--backend remote needs --endpoint or {ENDPOINT_ENV}"))?;
            if a.max_in_flight == 0 {
                bail!("--max-in-flight must be at least 1");
            }
            Backend::Remote {
                endpoint,
                max_in_flight: a.max_in_flight,
            }
        }
    };
    Ok(ScorerConfig {
        backend,
        cache_enabled: !a.no_cache,
    })
}

pub fn cmd_score(a: &ScoreArgs) -> CmdResult {
    let shape = Shape::from(a.shape);
    let kinds: BTreeSet<ScoreKind> = a.kinds.iter().copied().collect();
    measures::check_kinds(shape, &kinds).map_err(invalid)?;
    let config = scorer_config(a)?;
    let dataset_bytes = read_file(&a.dataset)?;
    let dataset = corpus::load_dataset(&a.dataset, shape).map_err(invalid)?;
    let scorer = config.build().map_err(invalid)?;
    if let Backend::Remote {
        endpoint,
        max_in_flight,
    } = &config.backend
    {
        let info = RemoteScorer::new(endpoint, *max_in_flight)
            .map_err(|e| invalid(anyhow!(e)))?
            .info()
            .map_err(scorer_failure)?;
        eprintln!("scoring with {} via {endpoint}", info.model_id);
    }

    let run = measures::score_dataset(&dataset, &kinds, &*scorer).map_err(invalid)?;
    create_dir(&a.out)?;
    let name = a.name.clone().unwrap_or_else(|| file_stem(&a.dataset));
    write_file(
        &a.out.join("records.jsonl"),
        measures::records_to_jsonl(&run.records),
    )?;
    if !run.is_complete() {
        let mut text = String::from("sample_id\tkind\terror\n");
        for f in &run.failures {
            text.push_str(&format!("{}\t{}\t{}\n", f.sample_id, f.kind, f.error));
        }
        write_file(&a.out.join("failures.tsv"), text)?;
        for f in run.failures.iter().take(10) {
            eprintln!("  {f}");
        }
        return Err(scorer_failure(anyhow!(
            "{} of {} (sample, kind) scores failed; partial records in {}, see failures.tsv",
            run.failures.len(),
            run.failures.len() + run.records.len(),
            a.out.display()
        )));
    }

    let mut table = report::summarize(&name, &run.records, &kinds).map_err(invalid)?;
    table.metadata.scorer_digest = Some(config.digest().map_err(invalid)?);
    table.metadata.dataset_digest = Some(report::sha256_hex(&dataset_bytes));
    table.metadata.backend = Some(config.backend_name().into());
    table.metadata.seed = Some(a.seed);
    if a.timestamp {
        table.metadata.timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }
    write_summaries(&a.out, &name, &table, &run.records, &kinds)?;
    eprintln!(
        "scored {} samples, {} records -> {}",
        dataset.len(),
        run.records.len(),
        a.out.display()
    );
    Ok(())
}

fn write_summaries(
    out: &Path,
    name: &str,
    table: &report::SummaryTable,
    records: &[ScoreRecord],
    kinds: &BTreeSet<ScoreKind>,
) -> anyhow::Result<()> {
    for format in Format::ALL {
        let bytes = report::emit(table, format)?;
        write_file(
            &out.join(format!("{name}.summary.{}", format.extension())),
            bytes,
        )?;
    }
    for &kind in kinds {
        let has_control = records
            .iter()
            .any(|r| r.kind == kind && r.value_control.is_some());
        if has_control {
            let tsv = report::scatter_export(records, kind)?;
            write_file(&out.join(format!("{name}.{kind}.scatter.tsv")), tsv)?;
        }
    }
    Ok(())
}

fn parse_groups(specs: &[String]) -> anyhow::Result<BTreeMap<BiasType, GroupTermList>> {
    let mut out = BTreeMap::new();
    for spec in specs {
        let (ty, path) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--groups expects TYPE=PATH, got `{spec}`"))?;
        let ty: BiasType = ty.parse().map_err(|e: String| anyhow!(e))?;
        let list = GroupTermList::load(ty, Path::new(path))?;
        if out.insert(ty, list).is_some() {
            bail!("--groups given twice for {ty}");
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct GenerateMeta {
    tool_version: &'static str,
    dataset_digest: String,
    lexicon_digest: String,
    group_digests: BTreeMap<String, String>,
    k: usize,
    seed: u64,
    samples: usize,
    quads: usize,
    skipped: usize,
}

pub fn cmd_generate_controls(a: &GenerateArgs) -> CmdResult {
    let dataset_bytes = read_file(&a.dataset)?;
    let pairs: Vec<PairSample> = corpus::load_samples(&a.dataset).map_err(invalid)?;
    let (lexicon, lexicon_digest) = match &a.lexicon {
        Some(p) => (
            SwapLexicon::load(p).map_err(invalid)?,
            report::sha256_hex(&read_file(p)?),
        ),
        None => (SwapLexicon::english_gender(), "bundled".to_string()),
    };
    let groups = parse_groups(&a.groups)?;
    if a.k == 0 {
        return Err(invalid(anyhow!("--k must be at least 1")));
    }

    let unrouted: BTreeSet<BiasType> = pairs
        .iter()
        .map(|p| p.bias_type)
        .filter(|t| *t != BiasType::Gender && !groups.contains_key(t))
        .collect();
    if !unrouted.is_empty() {
        let names: Vec<String> = unrouted.iter().map(ToString::to_string).collect();
        return Err(invalid(anyhow!(
            "no control route for bias type(s) {}: pass --groups TYPE=PATH",
            names.join(", ")
        )));
    }

    let per_sample: Vec<Result<Vec<QuadSample>, Skipped>> = pairs
        .par_iter()
        .map(|p| match p.bias_type {
            BiasType::Gender => {
                let (quads, skipped) = controlgen::build_quads(std::slice::from_ref(p), &lexicon);
                if skipped.is_empty() {
                    Ok(quads)
                } else {
                    Err(Skipped {
                        id: p.id.clone(),
                        reason: "no valid gender swap".into(),
                    })
                }
            }
            ty => {
                controlgen::random_substitution(p, &groups[&ty], a.k, a.seed).map_err(|e| Skipped {
                    id: p.id.clone(),
                    reason: e.to_string(),
                })
            }
        })
        .collect();

    let mut quads = Vec::new();
    let mut skipped = String::new();
    let mut n_skipped = 0;
    for r in per_sample {
        match r {
            Ok(q) => quads.extend(q),
            Err(s) => {
                n_skipped += 1;
                skipped.push_str(&format!("{}\t{}\n", s.id, s.reason));
            }
        }
    }
    create_dir(&a.out)?;
    corpus::write_samples(&a.out.join("quads.jsonl"), &quads).map_err(invalid)?;
    write_file(&a.out.join("skipped.txt"), skipped)?;
    let meta = GenerateMeta {
        tool_version: env!("CARGO_PKG_VERSION"),
        dataset_digest: report::sha256_hex(&dataset_bytes),
        lexicon_digest,
        group_digests: a
            .groups
            .iter()
            .filter_map(|s| s.split_once('='))
            .map(|(t, p)| Ok((t.to_string(), report::sha256_hex(&read_file(Path::new(p))?))))
            .collect::<anyhow::Result<_>>()?,
        k: a.k,
        seed: a.seed,
        samples: pairs.len(),
        quads: quads.len(),
        skipped: n_skipped,
    };
    write_file(
        &a.out.join("controls.meta.json"),
        serde_json::to_string_pretty(&meta).context("serializing metadata")? + "\n",
    )?;
    eprintln!(
        "{} samples -> {} quads, {} skipped (see skipped.txt)",
        pairs.len(),
        quads.len(),
        n_skipped
    );
    Ok(())
}

pub fn cmd_freq_analyze(a: &FreqArgs) -> CmdResult {
    let table = FreqTable::load(&a.table).map_err(invalid)?;
    let text = String::from_utf8(read_file(&a.scores)?).context("records file is not UTF-8")?;
    let records = measures::parse_records(&text).map_err(invalid)?;
    let samples: Vec<PairSample> =
        match corpus::load_dataset(&a.dataset, a.shape.into()).map_err(invalid)? {
            Dataset::Pair(v) => v,
            Dataset::Quad(v) => v.iter().map(QuadSample::original).collect(),
            Dataset::Crows(_) => {
                return Err(invalid(anyhow!(
                    "freq-analyze needs a pair or quad dataset"
                )))
            }
        };
    let result = freqprior::correlate_priors(&records, &samples, &table).map_err(invalid)?;
    let json = serde_json::to_string_pretty(&result).context("serializing result")? + "\n";
    print!("{json}");
    if let Some(out) = &a.out {
        write_file(out, &json)?;
    }
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> CmdResult {
    let bytes = read_file(&a.records)?;
    let text = String::from_utf8(bytes).context("records file is not UTF-8")?;
    let records = measures::parse_records(&text).map_err(invalid)?;
    let kinds: BTreeSet<ScoreKind> = if a.kinds.is_empty() {
        records.iter().map(|r| r.kind).collect()
    } else {
        a.kinds.iter().copied().collect()
    };
    if kinds.is_empty() {
        return Err(invalid(anyhow!("{} holds no records", a.records.display())));
    }
    let name = a.name.clone().unwrap_or_else(|| file_stem(&a.records));
    let table = report::summarize(&name, &records, &kinds).map_err(invalid)?;
    create_dir(&a.out)?;
    write_summaries(&a.out, &name, &table, &records, &kinds)?;
    Ok(())
}

pub fn cmd_validate(a: &ValidateArgs) -> CmdResult {
    let rep = corpus::validate_file(&a.dataset, a.shape.into()).map_err(invalid)?;
    println!("{}: {} records", a.dataset.display(), rep.records);
    for (category, n) in rep.counts() {
        println!("  {category}: {n}");
    }
    for v in &rep.violations {
        println!("{v}");
    }
    if rep.is_clean() {
        println!("clean");
        Ok(())
    } else {
        Err(invalid(anyhow!("{} violation(s)", rep.violations.len())))
    }
}
