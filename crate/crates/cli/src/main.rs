//! `tweetarchive`: candidate ids, collection planning, mock service,
//! collection, dehydration, storage, search and trends from one binary.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tweetarchive::analytics;
use tweetarchive::calendar::{format_iso, format_iso_date, parse_instant, Granularity, MS_PER_DAY};
use tweetarchive::clock::SystemClock;
use tweetarchive::config::{KeyValues, PipelineConfig};
use tweetarchive::dehydrator::dehydrate_dir;
use tweetarchive::fetcher::{self, Credential, FetchOptions, GzRollingSink, DEFAULT_ROLL_RECORDS};
use tweetarchive::idgen::{self, DedupPolicy, IdSource, RangeTable};
use tweetarchive::mockhose::http::{HttpLookup, MockServer};
use tweetarchive::mockhose::{Corpus, CorpusSpec, MockService};
use tweetarchive::pipeline::{self, DemoOptions};
use tweetarchive::planner::{self, RatePolicy, StorageModel, GB};
use tweetarchive::search::{Query, Scope, Searcher};
use tweetarchive::store::{self, Archive, PartitionKey};

#[derive(Parser)]
#[command(name = "tweetarchive", version, about = "Rebuild, store and search an archive of early tweets")]
struct Cli {
    /// Plain `key = value` settings; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output format for tabular results.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Tsv,
    Json,
    /// Human-readable text.
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Candidate tweet ids from the range table.
    #[command(subcommand)]
    Ids(IdsCommand),
    /// Collection time and storage estimates.
    Plan(PlanArgs),
    /// Synthetic lookup service.
    #[command(subcommand)]
    Mock(MockCommand),
    /// Rate-limited collection against a lookup endpoint.
    #[command(subcommand)]
    Fetch(FetchCommand),
    /// Reduce hydrated records to the eight archive fields.
    Dehydrate(DehydrateArgs),
    /// Load dehydrated records into the partitioned archive.
    Ingest(IngestArgs),
    /// Build or rebuild search indexes.
    Index(IndexArgs),
    /// Archive inspection.
    #[command(subcommand)]
    Archive(ArchiveCommand),
    /// Full-text search, newest first.
    Search(SearchArgs),
    /// Per-mille series of a query.
    Trend(TrendArgs),
    /// Raw tweet volume per bucket.
    Volume(SeriesArgs),
    /// Most frequent "-ing" words.
    Actions(ActionsArgs),
    /// Share of tweets with URLs, and their domains.
    Urls(UrlsArgs),
    /// End-to-end run against a local mock service.
    Demo(DemoArgs),
}

#[derive(Args)]
struct TableArgs {
    /// Range table file (`start:end` or `start:step:end` per line); defaults to the built-in table.
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    /// How shared boundaries between adjacent ranges are handled.
    #[arg(long, default_value = "dedup")]
    policy: DedupPolicy,
}

impl TableArgs {
    fn load(&self) -> Result<RangeTable> {
        match &self.table {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(RangeTable::parse(&text)?)
            }
            None => Ok(RangeTable::builtin()),
        }
    }
}

#[derive(Subcommand)]
enum IdsCommand {
    /// Number of candidate ids.
    Count(TableArgs),
    /// Candidate ids, one per line.
    Emit(EmitArgs),
}

#[derive(Args)]
struct EmitArgs {
    #[command(flatten)]
    table: TableArgs,
    #[arg(long, default_value_t = 1)]
    shards: usize,
    #[arg(long, default_value_t = 0)]
    shard_index: usize,
    #[arg(long)]
    limit: Option<u64>,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct PlanArgs {
    #[command(subcommand)]
    storage: Option<PlanCommand>,
    /// Number of ids to look up; defaults to the candidate id count.
    #[arg(long)]
    ids: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: u64,
    /// Seconds between requests per credential.
    #[arg(long, default_value_t = 5.0)]
    interval: f64,
    #[arg(long, default_value_t = 100)]
    batch: u64,
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Disk space for a number of tweets (decimal units, 1 GB = 10^9 bytes).
    Storage {
        #[arg(long)]
        tweets: u64,
        /// Compressed bytes per 5-million-tweet bulk.
        #[arg(long, default_value_t = 300e6)]
        compressed_per_bulk: f64,
        /// Decompressed bytes per 5-million-tweet bulk.
        #[arg(long, default_value_t = 2.5e9)]
        decompressed_per_bulk: f64,
    },
}

#[derive(Subcommand)]
enum MockCommand {
    /// Serve the lookup endpoint until interrupted.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Corpus settings (`key = value`).
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        /// Minimum seconds between requests per token; overrides the config file.
        #[arg(long)]
        interval: Option<f64>,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Print the tweets the service would return for the ids in FILE.
    Sample {
        #[arg(long, value_name = "FILE")]
        ids: PathBuf,
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FetchCommand {
    /// Collect tweets for candidate ids, resuming from checkpoints.
    Run(FetchArgs),
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long)]
    endpoint: Option<String>,
    /// Credential; repeat or use --tokens for several workers.
    #[arg(long)]
    token: Vec<String>,
    /// File with one token per line.
    #[arg(long, value_name = "FILE")]
    tokens: Option<PathBuf>,
    /// File of ids, one per line.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["table", "range_table"])]
    ids: Option<PathBuf>,
    /// Use the built-in candidate range table.
    #[arg(long)]
    table: bool,
    /// Use a range table file.
    #[arg(long, value_name = "FILE")]
    range_table: Option<PathBuf>,
    #[arg(long, default_value = "dedup")]
    policy: DedupPolicy,
    /// Seconds between requests per credential.
    #[arg(long)]
    interval: Option<f64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    checkpoint: PathBuf,
    /// Number of workers; must not exceed the number of tokens.
    #[arg(long)]
    workers: Option<usize>,
    /// Only the first N candidate ids.
    #[arg(long)]
    limit: Option<u64>,
    /// Also write ids that did not resolve to FILE (per worker suffix).
    #[arg(long, value_name = "FILE")]
    log_missing: Option<PathBuf>,
}

#[derive(Args)]
struct DehydrateArgs {
    #[arg(long = "in", value_name = "DIR")]
    input: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in", value_name = "DIR")]
    input: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    archive: Option<PathBuf>,
}

#[derive(Args)]
struct StoreArgs {
    #[arg(long, value_name = "DIR")]
    archive: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    index: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    store: StoreArgs,
    /// Only this partition (e.g. 2009-W07).
    #[arg(long)]
    partition: Option<PartitionKey>,
}

#[derive(Subcommand)]
enum ArchiveCommand {
    /// Records and segments per partition.
    Stats {
        #[arg(long, value_name = "DIR")]
        archive: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScopeArgs {
    /// Start, inclusive (YYYY-MM-DD, ISO datetime or epoch ms).
    #[arg(long)]
    from: Option<String>,
    /// End, inclusive; a bare date covers that whole day.
    #[arg(long)]
    to: Option<String>,
}

impl ScopeArgs {
    fn scope(&self) -> Result<Scope> {
        let from = self.from.as_deref().map(parse_instant).transpose()?.unwrap_or(i64::MIN);
        let to = match self.to.as_deref() {
            None => i64::MAX,
            Some(t) => {
                let ms = parse_instant(t)?;
                if t.len() == 10 && t.as_bytes()[4] == b'-' {
                    ms + MS_PER_DAY - 1
                } else {
                    ms
                }
            }
        };
        Ok(Scope::new(from, to)?)
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    query: String,
    #[command(flatten)]
    scope: ScopeArgs,
    #[arg(long)]
    limit: Option<usize>,
    /// Print counts instead of documents.
    #[arg(long)]
    count_only: bool,
    /// With --count-only: counts per day, week or month.
    #[arg(long)]
    bucket: Option<Granularity>,
    #[command(flatten)]
    store: StoreArgs,
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long)]
    bucket: Option<Granularity>,
    #[command(flatten)]
    scope: ScopeArgs,
    /// Write CSV here instead of standard output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    store: StoreArgs,
}

#[derive(Args)]
struct TrendArgs {
    #[arg(long)]
    query: String,
    #[command(flatten)]
    series: SeriesArgs,
}

#[derive(Args)]
struct ActionsArgs {
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[command(flatten)]
    scope: ScopeArgs,
    #[command(flatten)]
    store: StoreArgs,
}

#[derive(Args)]
struct UrlsArgs {
    #[command(flatten)]
    scope: ScopeArgs,
    #[arg(long, value_name = "DIR")]
    archive: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of candidate ids to collect.
    #[arg(long, default_value_t = 100_000)]
    ids: u64,
    /// Working directory; report.txt is written here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Tabular output in the selected format.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Table {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, format: Format, out: &mut dyn Write) -> Result<()> {
        match format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
                w.write_record(&self.header)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                w.flush()?;
            }
            Format::Tsv | Format::Text => {
                if format == Format::Tsv {
                    writeln!(out, "{}", self.header.join("\t"))?;
                }
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(|c| escape_tsv(c)).collect();
                    writeln!(out, "{}", cells.join("\t"))?;
                }
            }
            Format::Json => {
                for r in &self.rows {
                    let obj: serde_json::Map<String, serde_json::Value> = self
                        .header
                        .iter()
                        .zip(r)
                        .map(|(h, v)| (h.to_string(), serde_json::Value::String(v.clone())))
                        .collect();
                    writeln!(out, "{}", serde_json::Value::Object(obj))?;
                }
            }
        }
        Ok(())
    }
}

fn escape_tsv(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n").replace('\r', "\\r")
}

struct Context_ {
    cfg: PipelineConfig,
    format: Option<Format>,
}

impl Context_ {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn archive_dir(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.cfg.archive_dir.clone())
    }

    fn index_dir(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.cfg.index_dir.clone())
    }

    fn searcher(&self, s: &StoreArgs) -> Searcher {
        Searcher::open(&self.archive_dir(&s.archive), &self.index_dir(&s.index))
    }

    fn bucket(&self, flag: Option<Granularity>) -> Result<Granularity> {
        match flag {
            Some(b) => Ok(b),
            None => Ok(self.cfg.bucket.parse()?),
        }
    }
}

fn stdout() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(stdout()),
    })
}

fn load_spec(path: Option<&Path>) -> Result<CorpusSpec> {
    Ok(match path {
        Some(p) => CorpusSpec::load(p).with_context(|| format!("corpus spec {}", p.display()))?,
        None => CorpusSpec::default(),
    })
}

fn read_ids(path: &Path) -> Result<Vec<u64>> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut ids = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let id: u64 = t.parse().map_err(|_| tweetarchive::Error::invalid(format!("{}:{}: bad id {t:?}", path.display(), n + 1)))?;
        ids.push(id);
    }
    Ok(ids)
}

fn cmd_ids(cmd: IdsCommand, ctx: &Context_) -> Result<()> {
    match cmd {
        IdsCommand::Count(t) => {
            let table = t.load()?;
            let n = idgen::count(&table, t.policy);
            let mut out = stdout();
            match ctx.format_or(Format::Text) {
                Format::Json => writeln!(out, "{}", serde_json::json!({ "ids": n, "ranges": table.ranges().len() }))?,
                Format::Csv | Format::Tsv => {
                    let mut tab = Table::new(&["ids", "ranges"]);
                    tab.push(vec![n.to_string(), table.ranges().len().to_string()]);
                    tab.write(ctx.format_or(Format::Csv), &mut out)?;
                }
                Format::Text => writeln!(out, "{n}")?,
            }
            out.flush()?;
        }
        IdsCommand::Emit(a) => {
            if a.shard_index >= a.shards {
                bail!(tweetarchive::Error::invalid(format!("--shard-index {} out of range for {} shards", a.shard_index, a.shards)));
            }
            let source = IdSource::table(&a.table.load()?, a.table.policy);
            let shard = idgen::shard(&source, a.shards)?.swap_remove(a.shard_index);
            let mut out = stdout();
            for id in shard.iter().take(a.limit.unwrap_or(u64::MAX) as usize) {
                writeln!(out, "{id}")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn cmd_plan(a: PlanArgs, ctx: &Context_) -> Result<()> {
    let mut out = stdout();
    if let Some(PlanCommand::Storage { tweets, compressed_per_bulk, decompressed_per_bulk }) = a.storage {
        let model = StorageModel::new(compressed_per_bulk, decompressed_per_bulk)?;
        let est = planner::storage_estimate(tweets, &model);
        let (c, d) = (est.compressed_bytes / GB, est.decompressed_bytes / GB);
        match ctx.format_or(Format::Text) {
            Format::Text => {
                writeln!(out, "tweets: {tweets}")?;
                writeln!(out, "compressed: {c:.3} GB")?;
                writeln!(out, "decompressed: {d:.3} GB")?;
                writeln!(out, "(decimal units: 1 GB = 10^9 bytes)")?;
            }
            f => {
                let mut t = Table::new(&["tweets", "compressed_gb", "decompressed_gb"]);
                t.push(vec![tweets.to_string(), format!("{c:.3}"), format!("{d:.3}")]);
                t.write(f, &mut out)?;
            }
        }
        out.flush()?;
        return Ok(());
    }
    let policy = RatePolicy::new(a.batch, a.interval, a.workers)?;
    let ids = a.ids.unwrap_or_else(|| idgen::count(&RangeTable::builtin(), DedupPolicy::default()));
    let per_day = planner::throughput_per_day(&policy);
    let dur = planner::collection_days(ids, &policy);
    match ctx.format_or(Format::Text) {
        Format::Text => {
            writeln!(out, "ids: {ids}")?;
            writeln!(
                out,
                "throughput: {per_day} tweets/day ({} worker(s), {} ids every {} s)",
                policy.workers, policy.batch_size, policy.min_interval_secs
            )?;
            writeln!(out, "duration: {:.3} days", dur.days)?;
            writeln!(out, "whole days: {}", dur.whole_days)?;
            writeln!(out, "rounded days: {}", dur.days.round())?;
        }
        f => {
            let mut t = Table::new(&["ids", "workers", "batch", "interval_s", "tweets_per_day", "days", "whole_days"]);
            t.push(vec![
                ids.to_string(),
                policy.workers.to_string(),
                policy.batch_size.to_string(),
                policy.min_interval_secs.to_string(),
                per_day.to_string(),
                format!("{:.3}", dur.days),
                dur.whole_days.to_string(),
            ]);
            t.write(f, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_mock(cmd: MockCommand, ctx: &Context_) -> Result<()> {
    match cmd {
        MockCommand::Serve { port, host, spec, interval, threads } => {
            let spec = load_spec(spec.as_deref().or(ctx.cfg.corpus_spec.as_deref()))?;
            let interval = interval.unwrap_or(ctx.cfg.interval_secs);
            if interval.is_nan() || interval < 0.0 {
                bail!(tweetarchive::Error::invalid("--interval must not be negative"));
            }
            let service = Arc::new(MockService::new(Corpus::new(spec)?, (interval * 1000.0).round() as u64));
            let server = MockServer::start(service, &format!("{host}:{port}"), threads)?;
            println!("{}", server.base_url());
            server.join();
        }
        MockCommand::Sample { ids, spec } => {
            let corpus = Corpus::new(load_spec(spec.as_deref().or(ctx.cfg.corpus_spec.as_deref()))?)?;
            let mut out = stdout();
            for id in read_ids(&ids)? {
                if let Some(t) = corpus.gen_tweet(id) {
                    serde_json::to_writer(&mut out, &t)?;
                    out.write_all(b"\n")?;
                }
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn cmd_fetch(cmd: FetchCommand, ctx: &Context_) -> Result<()> {
    let FetchCommand::Run(a) = cmd;
    let mut tokens = a.token.clone();
    if let Some(p) = &a.tokens {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        tokens.extend(text.lines().map(str::trim).filter(|t| !t.is_empty() && !t.starts_with('#')).map(String::from));
    }
    if tokens.is_empty() {
        tokens = ctx.cfg.tokens.clone();
    }
    let workers = a.workers.unwrap_or(tokens.len());
    if workers == 0 || workers > tokens.len() {
        bail!(tweetarchive::Error::invalid(format!("{workers} workers need as many tokens; {} given", tokens.len())));
    }
    let interval = a.interval.unwrap_or(ctx.cfg.interval_secs);
    if interval.is_nan() || interval < 0.0 {
        bail!(tweetarchive::Error::invalid("--interval must not be negative"));
    }
    let endpoint = a.endpoint.clone().unwrap_or_else(|| ctx.cfg.endpoint.clone());
    let out_dir = a.out.clone().unwrap_or_else(|| ctx.cfg.raw_dir.clone());

    let source = if let Some(p) = a.ids.as_ref().or(ctx.cfg.ids_path.as_ref()).filter(|_| !a.table && a.range_table.is_none()) {
        IdSource::list(read_ids(p)?)
    } else {
        let table = match &a.range_table {
            Some(p) => RangeTable::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => RangeTable::builtin(),
        };
        IdSource::table(&table, a.policy)
    };
    let source = match a.limit {
        Some(n) if n < source.len() => IdSource::list(source.iter().take(n as usize).collect()),
        _ => source,
    };

    let interval_ms = (interval * 1000.0).round() as u64;
    let credentials: Vec<Credential> = tokens[..workers].iter().map(|t| Credential::new(t.clone(), interval_ms)).collect();
    let opts = FetchOptions::default();
    let log_missing = a.log_missing.clone();
    let report = if workers == 1 {
        let shard = idgen::shard(&source, 1)?.remove(0);
        let opts = FetchOptions { missing_log: log_missing, ..opts };
        let mut sink = GzRollingSink::new(&out_dir, "worker-000", DEFAULT_ROLL_RECORDS)?;
        fetcher::run(
            &shard,
            &mut HttpLookup::new(&endpoint),
            &credentials[0],
            &mut sink,
            &fetcher::checkpoint_path(&a.checkpoint, 0),
            &SystemClock,
            &opts,
        )?
    } else {
        if log_missing.is_some() {
            bail!(tweetarchive::Error::invalid("--log-missing supports a single worker"));
        }
        let fleet = fetcher::run_fleet(
            &source,
            &credentials,
            |_| HttpLookup::new(&endpoint),
            |w| GzRollingSink::new(&out_dir, &format!("worker-{w:03}"), DEFAULT_ROLL_RECORDS),
            &a.checkpoint,
            |_| SystemClock,
            &opts,
        )?;
        for (w, e) in fleet.errors() {
            eprintln!("worker {w}: {e}");
        }
        fleet.into_result()?
    };
    let mut out = stdout();
    let mut t = Table::new(&["ids_requested", "found", "missing", "found_rate", "throttle_events", "transport_retries", "seconds"]);
    t.push(vec![
        report.ids_requested.to_string(),
        report.found.to_string(),
        report.missing.to_string(),
        format!("{:.4}", report.found_rate()),
        report.throttle_events.to_string(),
        report.transport_retries.to_string(),
        format!("{:.1}", report.wall_seconds),
    ]);
    t.write(ctx.format_or(Format::Tsv), &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_search(a: SearchArgs, ctx: &Context_) -> Result<()> {
    let query = Query::parse(&a.query)?;
    let scope = a.scope.scope()?;
    let searcher = ctx.searcher(&a.store);
    let mut out = stdout();
    if a.count_only || a.bucket.is_some() {
        match a.bucket {
            None => writeln!(out, "{}", searcher.count_total(&query, scope)?)?,
            Some(b) => {
                let mut t = Table::new(&["bucket_start", "matches"]);
                for (start, n) in searcher.count(&query, b, scope)? {
                    t.push(vec![format_iso_date(start), n.to_string()]);
                }
                t.write(ctx.format_or(Format::Csv), &mut out)?;
            }
        }
    } else {
        let mut t = Table::new(&["timestamp", "id", "text"]);
        for r in searcher.execute(&query, scope, a.limit)? {
            t.push(vec![format_iso(r.timestamp), r.id_str, r.text]);
        }
        let format = ctx.format_or(Format::Tsv);
        if format == Format::Tsv {
            // Rows only, so output pipes straight into cut/sort.
            Table { header: Vec::new(), rows: t.rows }.write(Format::Text, &mut out)?;
        } else {
            t.write(format, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn series_table(rows: &[analytics::TrendRow]) -> Table {
    let mut t = Table::new(&["bucket_start", "total", "matches", "per_mille"]);
    for r in rows {
        t.push(vec![
            format_iso_date(r.bucket_start),
            r.total.to_string(),
            r.matches.to_string(),
            r.per_mille.map(analytics::format_rate).unwrap_or_default(),
        ]);
    }
    t
}

fn cmd_trend(a: TrendArgs, ctx: &Context_) -> Result<()> {
    let query = Query::parse(&a.query)?;
    let s = &a.series;
    let rows = analytics::trend(&ctx.searcher(&s.store), &query, ctx.bucket(s.bucket)?, s.scope.scope()?)?;
    let mut out = open_output(&s.out)?;
    series_table(&rows).write(ctx.format_or(Format::Csv), &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_volume(s: SeriesArgs, ctx: &Context_) -> Result<()> {
    let rows = analytics::volume(&ctx.searcher(&s.store), ctx.bucket(s.bucket)?, s.scope.scope()?)?;
    let mut t = Table::new(&["bucket_start", "total"]);
    for r in rows {
        t.push(vec![format_iso_date(r.bucket_start), r.total.to_string()]);
    }
    let mut out = open_output(&s.out)?;
    t.write(ctx.format_or(Format::Csv), &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_actions(a: ActionsArgs, ctx: &Context_) -> Result<()> {
    let ranked = analytics::top_actions(&ctx.searcher(&a.store), a.scope.scope()?, a.top)?;
    let mut t = Table::new(&["action", "tweets"]);
    for (w, n) in ranked {
        t.push(vec![w, n.to_string()]);
    }
    let mut out = stdout();
    t.write(ctx.format_or(Format::Csv), &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_urls(a: UrlsArgs, ctx: &Context_) -> Result<()> {
    let stats = analytics::url_stats(&Archive::open(&ctx.archive_dir(&a.archive)), a.scope.scope()?)?;
    let mut t = Table::new(&["domain", "tweets", "fraction"]);
    t.push(vec!["*".into(), stats.with_url.to_string(), analytics::format_rate(stats.fraction_with_url())]);
    for (d, n) in &stats.domains {
        t.push(vec![d.clone(), n.to_string(), analytics::format_rate(stats.domain_fraction(*n))]);
    }
    let mut out = stdout();
    t.write(ctx.format_or(Format::Csv), &mut out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::from_kv(&KeyValues::load(p).with_context(|| format!("config {}", p.display()))?)?,
        None => PipelineConfig::default(),
    };
    let ctx = Context_ { cfg, format: cli.format };
    match cli.command {
        Command::Ids(c) => cmd_ids(c, &ctx)?,
        Command::Plan(a) => cmd_plan(a, &ctx)?,
        Command::Mock(c) => cmd_mock(c, &ctx)?,
        Command::Fetch(c) => cmd_fetch(c, &ctx)?,
        Command::Dehydrate(a) => {
            let input = a.input.unwrap_or_else(|| ctx.cfg.raw_dir.clone());
            let output = a.out.unwrap_or_else(|| ctx.cfg.dehydrated_dir.clone());
            let r = dehydrate_dir(&input, &output)?;
            let mut t = Table::new(&["files", "records", "rejected"]);
            t.push(vec![r.files.to_string(), r.records.to_string(), r.rejected.to_string()]);
            let mut out = stdout();
            t.write(ctx.format_or(Format::Tsv), &mut out)?;
            out.flush()?;
        }
        Command::Ingest(a) => {
            let input = a.input.unwrap_or_else(|| ctx.cfg.dehydrated_dir.clone());
            let (stats, rejected) = store::ingest_dir(&input, &ctx.archive_dir(&a.archive))?;
            let mut t = Table::new(&["stored", "quarantined", "rejected"]);
            t.push(vec![stats.appended.to_string(), stats.quarantined.to_string(), rejected.to_string()]);
            let mut out = stdout();
            t.write(ctx.format_or(Format::Tsv), &mut out)?;
            out.flush()?;
        }
        Command::Index(a) => {
            let archive = Archive::open(&ctx.archive_dir(&a.store.archive));
            let root = ctx.index_dir(&a.store.index);
            let built = match a.partition {
                Some(k) => vec![tweetarchive::search::build_partition(&archive, k, &root)?],
                None => tweetarchive::search::build_all(&archive, &root)?,
            };
            let mut t = Table::new(&["partition", "docs", "terms", "postings_bytes"]);
            for s in built {
                t.push(vec![s.partition.to_string(), s.docs.to_string(), s.terms.to_string(), s.postings_bytes.to_string()]);
            }
            let mut out = stdout();
            t.write(ctx.format_or(Format::Tsv), &mut out)?;
            out.flush()?;
        }
        Command::Archive(ArchiveCommand::Stats { archive }) => {
            let mut t = Table::new(&["partition", "segments", "records", "min_ts", "max_ts"]);
            for p in Archive::open(&ctx.archive_dir(&archive)).stats()? {
                let ts = |v: Option<i64>| v.map(format_iso).unwrap_or_default();
                t.push(vec![p.route.to_string(), p.segments.to_string(), p.records.to_string(), ts(p.min_ts), ts(p.max_ts)]);
            }
            let mut out = stdout();
            t.write(ctx.format_or(Format::Tsv), &mut out)?;
            out.flush()?;
        }
        Command::Search(a) => cmd_search(a, &ctx)?,
        Command::Trend(a) => cmd_trend(a, &ctx)?,
        Command::Volume(a) => cmd_volume(a, &ctx)?,
        Command::Actions(a) => cmd_actions(a, &ctx)?,
        Command::Urls(a) => cmd_urls(a, &ctx)?,
        Command::Demo(a) => {
            let out_dir = a.out.unwrap_or_else(pipeline::default_demo_dir);
            let outcome = pipeline::run_demo(&DemoOptions { seed: a.seed, n_ids: a.ids, out_dir: out_dir.clone() })?;
            print!("{}", outcome.report);
            for (stage, secs) in &outcome.timings {
                eprintln!("{stage}: {secs:.2} s");
            }
            eprintln!("report written to {}", out_dir.join("report.txt").display());
            return Ok(outcome.passed);
        }
    }
    Ok(true)
}

fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<tweetarchive::Error>(),
            Some(tweetarchive::Error::InvalidArgument(_) | tweetarchive::Error::Parse(_))
        ) || c.downcast_ref::<tweetarchive::error::ParseError>().is_some()
    })
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
