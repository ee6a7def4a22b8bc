//! Rate-limited, resumable bulk collection.
//!
//! A worker walks its shard of candidate ids in batches, spaces request
//! starts at least `min_interval` apart per credential, re-issues throttled
//! batches after the advertised delay, and checkpoints after every batch.
//! On restart it rewinds its sink to the checkpoint and continues with the
//! next unrequested batch.

mod checkpoint;
mod sink;

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

pub use checkpoint::Checkpoint;
pub use sink::{GzRollingSink, MemorySink, Sink, SinkPosition, DEFAULT_ROLL_RECORDS};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::idgen::{batch, shard, IdSource, Shard, MAX_BATCH};
use crate::lookup::{Lookup, LookupError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub token: String,
    pub min_interval_ms: u64,
}

impl Credential {
    pub fn new(token: impl Into<String>, min_interval_ms: u64) -> Credential {
        Credential { token: token.into(), min_interval_ms }
    }
}

/// Where an injected crash strikes within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    AfterRequest,
    AfterSinkWrite,
    AfterCheckpoint,
}

/// Simulated process death, for resumability tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    pub worker: Option<usize>,
    pub batch: u64,
    pub point: FaultPoint,
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub batch_size: usize,
    pub max_transport_tries: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    /// Keep every request start time in the report.
    pub record_trace: bool,
    /// Write ids that did not resolve, one per line, to this file.
    pub missing_log: Option<PathBuf>,
    pub fault: Option<Fault>,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            batch_size: MAX_BATCH,
            max_transport_tries: 8,
            backoff_base_ms: 1_000,
            backoff_cap_ms: 60_000,
            record_trace: false,
            missing_log: None,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchReport {
    pub batches_done: u64,
    pub ids_requested: u64,
    pub found: u64,
    pub missing: u64,
    pub throttle_events: u64,
    pub transport_retries: u64,
    /// Elapsed clock time of this session.
    pub wall_seconds: f64,
    pub request_starts: Vec<u64>,
}

impl FetchReport {
    pub fn found_rate(&self) -> f64 {
        if self.ids_requested == 0 {
            0.0
        } else {
            self.found as f64 / self.ids_requested as f64
        }
    }
}

/// Delay before retry number `failures` (1-based): base·2^(failures−1), capped.
pub fn backoff_ms(failures: u32, base_ms: u64, cap_ms: u64) -> u64 {
    base_ms.saturating_mul(1u64 << failures.saturating_sub(1).min(32)).min(cap_ms)
}

struct MissingLog {
    file: File,
    bytes: u64,
}

impl MissingLog {
    fn open(path: &Path, committed: u64) -> Result<MissingLog> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).write(true).truncate(false).open(path)?;
        file.set_len(committed)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(MissingLog { file, bytes: committed })
    }

    fn write(&mut self, ids: impl Iterator<Item = u64>) -> Result<()> {
        let text: String = ids.map(|id| format!("{id}\n")).collect();
        self.file.write_all(text.as_bytes())?;
        self.file.sync_data()?;
        self.bytes += text.len() as u64;
        Ok(())
    }
}

fn injected(fault: &Option<Fault>, worker: usize, batch: u64, point: FaultPoint) -> Result<()> {
    match fault {
        Some(f) if f.batch == batch && f.point == point && f.worker.is_none_or(|w| w == worker) => {
            Err(Error::Stage(format!("injected crash in worker {worker} at batch {batch} ({point:?})")))
        }
        _ => Ok(()),
    }
}

/// Collects one shard through `lookup`, resuming from `checkpoint_path` if it exists.
pub fn run<L, S, C>(
    candidates: &Shard,
    lookup: &mut L,
    credential: &Credential,
    sink: &mut S,
    checkpoint_path: &Path,
    clock: &C,
    opts: &FetchOptions,
) -> Result<FetchReport>
where
    L: Lookup + ?Sized,
    S: Sink + ?Sized,
    C: Clock + ?Sized,
{
    let worker = candidates.index;
    let mut cp = match Checkpoint::load(checkpoint_path)? {
        Some(cp) => {
            if cp.shard_offset != candidates.offset || cp.shard_len != candidates.len || cp.batch_size != opts.batch_size {
                return Err(Error::invalid(format!(
                    "checkpoint {} belongs to a different shard or batch size",
                    checkpoint_path.display()
                )));
            }
            cp
        }
        None => Checkpoint {
            worker_id: worker,
            shard_offset: candidates.offset,
            shard_len: candidates.len,
            batch_size: opts.batch_size,
            ..Checkpoint::default()
        },
    };
    sink.restore(&cp.sink)?;
    let mut missing_log = opts.missing_log.as_deref().map(|p| MissingLog::open(p, cp.missing_log_bytes)).transpose()?;

    let started = clock.now_ms();
    let mut report = FetchReport::default();
    let mut last_start = cp.last_request_ms.filter(|t| *t <= started);
    let skip = cp.next_batch_index * opts.batch_size as u64;

    for ids in batch(candidates.iter_from(skip), opts.batch_size)? {
        let batch_index = cp.next_batch_index;
        let mut not_before = last_start.map(|t| t + credential.min_interval_ms).unwrap_or(0);
        let mut failures = 0u32;
        let tweets = loop {
            clock.sleep_until(not_before);
            let start = clock.now_ms();
            last_start = Some(start);
            if opts.record_trace {
                report.request_starts.push(start);
            }
            match lookup.lookup(&ids, &credential.token) {
                Ok(tweets) => break tweets,
                Err(LookupError::Throttled { retry_after_ms }) => {
                    report.throttle_events += 1;
                    cp.throttle_events += 1;
                    not_before = (start + credential.min_interval_ms).max(clock.now_ms() + retry_after_ms);
                }
                Err(LookupError::Transport(msg)) => {
                    failures += 1;
                    report.transport_retries += 1;
                    if failures >= opts.max_transport_tries {
                        return Err(Error::FetchAborted { batch: batch_index, attempts: failures, last: msg });
                    }
                    let wait = backoff_ms(failures, opts.backoff_base_ms, opts.backoff_cap_ms);
                    not_before = (start + credential.min_interval_ms).max(clock.now_ms() + wait);
                }
                Err(e) => return Err(e.into()),
            }
        };
        injected(&opts.fault, worker, batch_index, FaultPoint::AfterRequest)?;

        let requested: HashSet<u64> = ids.iter().copied().collect();
        if let Some(stray) = tweets.iter().find(|t| !requested.contains(&t.id)) {
            return Err(Error::Stage(format!("endpoint returned unrequested id {}", stray.id)));
        }
        sink.append(&tweets)?;
        let position = sink.commit()?;
        if let Some(log) = missing_log.as_mut() {
            let found: HashSet<u64> = tweets.iter().map(|t| t.id).collect();
            log.write(ids.iter().copied().filter(|id| !found.contains(id)))?;
        }
        injected(&opts.fault, worker, batch_index, FaultPoint::AfterSinkWrite)?;

        cp.next_batch_index += 1;
        cp.ids_requested += ids.len() as u64;
        cp.tweets_stored += tweets.len() as u64;
        cp.last_update = clock.now_ms();
        cp.last_request_ms = last_start;
        cp.sink = position;
        cp.missing_log_bytes = missing_log.as_ref().map_or(0, |l| l.bytes);
        cp.store(checkpoint_path)?;
        injected(&opts.fault, worker, batch_index, FaultPoint::AfterCheckpoint)?;
    }

    report.batches_done = cp.next_batch_index;
    report.ids_requested = cp.ids_requested;
    report.found = cp.tweets_stored;
    report.missing = cp.ids_requested - cp.tweets_stored;
    report.wall_seconds = clock.now_ms().saturating_sub(started) as f64 / 1000.0;
    Ok(report)
}

pub fn checkpoint_path(dir: &Path, worker: usize) -> PathBuf {
    dir.join(format!("worker-{worker:03}.json"))
}

#[derive(Debug)]
pub struct FleetReport {
    pub workers: Vec<Result<FetchReport>>,
}

impl FleetReport {
    /// Sums the successful workers; wall time is the slowest worker's.
    pub fn aggregate(&self) -> FetchReport {
        let mut total = FetchReport::default();
        for r in self.workers.iter().flatten() {
            total.batches_done += r.batches_done;
            total.ids_requested += r.ids_requested;
            total.found += r.found;
            total.missing += r.missing;
            total.throttle_events += r.throttle_events;
            total.transport_retries += r.transport_retries;
            total.wall_seconds = total.wall_seconds.max(r.wall_seconds);
        }
        total
    }

    pub fn errors(&self) -> impl Iterator<Item = (usize, &Error)> {
        self.workers.iter().enumerate().filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
    }

    pub fn into_result(self) -> Result<FetchReport> {
        let total = self.aggregate();
        match self.workers.into_iter().enumerate().find_map(|(i, r)| r.err().map(|e| (i, e))) {
            Some((i, e)) => Err(Error::Stage(format!("worker {i}: {e}"))),
            None => Ok(total),
        }
    }
}

/// One worker per credential over contiguous shards of `source`, each with
/// its own limiter, sink and checkpoint. A failing worker does not stop the others.
pub fn run_fleet<L, S, C>(
    source: &IdSource,
    credentials: &[Credential],
    make_lookup: impl Fn(usize) -> L + Sync,
    make_sink: impl Fn(usize) -> Result<S> + Sync,
    checkpoint_dir: &Path,
    make_clock: impl Fn(usize) -> C + Sync,
    opts: &FetchOptions,
) -> Result<FleetReport>
where
    L: Lookup,
    S: Sink,
    C: Clock,
{
    let shards = shard(source, credentials.len())?;
    let workers = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .zip(credentials)
            .map(|(sh, cred)| {
                let (make_lookup, make_sink, make_clock) = (&make_lookup, &make_sink, &make_clock);
                scope.spawn(move || -> Result<FetchReport> {
                    let mut lookup = make_lookup(sh.index);
                    let mut sink = make_sink(sh.index)?;
                    let clock = make_clock(sh.index);
                    run(sh, &mut lookup, cred, &mut sink, &checkpoint_path(checkpoint_dir, sh.index), &clock, opts)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Stage("worker panicked".into()))))
            .collect()
    });
    Ok(FleetReport { workers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::mockhose::{Corpus, CorpusSpec, InProcessLookup, MockService};
    use crate::tweet::HydratedTweet;
    use std::sync::Arc;

    fn service(interval_ms: u64) -> Arc<MockService> {
        Arc::new(MockService::new(Corpus::new(CorpusSpec::default()).unwrap(), interval_ms).with_request_log())
    }

    fn whole(source: IdSource) -> Shard {
        shard(&source, 1).unwrap().remove(0)
    }

    #[test]
    fn backoff_schedule() {
        let s: Vec<u64> = (1..=8).map(|f| backoff_ms(f, 1_000, 60_000)).collect();
        assert_eq!(s, [1_000, 2_000, 4_000, 8_000, 16_000, 32_000, 60_000, 60_000]);
    }

    #[test]
    fn thousand_ids_take_at_least_45_seconds() {
        let svc = service(5_000);
        let clock = SimClock::new(0);
        let mut lookup = InProcessLookup::new(svc.clone(), clock.clone());
        let dir = tempfile::tempdir().unwrap();
        let mut sink = MemorySink::default();
        let opts = FetchOptions { record_trace: true, ..FetchOptions::default() };
        let report = run(
            &whole(IdSource::full(1_000_000, 1_000_999).unwrap()),
            &mut lookup,
            &Credential::new("t", 5_000),
            &mut sink,
            &dir.path().join("cp.json"),
            &clock,
            &opts,
        )
        .unwrap();
        assert_eq!(report.batches_done, 10);
        assert!(report.wall_seconds >= 45.0);
        assert_eq!(report.throttle_events, 0);
        assert_eq!(report.found + report.missing, 1_000);
        assert!(report.request_starts.windows(2).all(|w| w[1] - w[0] >= 5_000));
        assert_eq!(sink.tweets.len() as u64, report.found);
    }

    /// Throttles every other attempt regardless of timing.
    struct Flaky<L> {
        inner: L,
        calls: u64,
        transport_every: Option<u64>,
    }

    impl<L: Lookup> Lookup for Flaky<L> {
        fn lookup(&mut self, ids: &[u64], token: &str) -> Result<Vec<HydratedTweet>, LookupError> {
            self.calls += 1;
            if self.calls % 2 == 0 {
                return Err(LookupError::Throttled { retry_after_ms: 3_000 });
            }
            if self.transport_every.is_some_and(|k| self.calls % k == 0) {
                return Err(LookupError::Transport("connection reset".into()));
            }
            self.inner.lookup(ids, token)
        }
    }

    #[test]
    fn throttles_are_retried_without_losing_batches() {
        let clock = SimClock::new(0);
        let dir = tempfile::tempdir().unwrap();
        let src = IdSource::full(2_000_000, 2_000_499).unwrap();

        let mut clean = MemorySink::default();
        run(&whole(src.clone()), &mut InProcessLookup::new(service(0), clock.clone()), &Credential::new("t", 10),
            &mut clean, &dir.path().join("a.json"), &clock, &FetchOptions::default()).unwrap();

        let mut flaky = Flaky { inner: InProcessLookup::new(service(0), clock.clone()), calls: 0, transport_every: Some(7) };
        let mut sink = MemorySink::default();
        let opts = FetchOptions { record_trace: true, ..FetchOptions::default() };
        let report = run(&whole(src), &mut flaky, &Credential::new("t", 10), &mut sink,
            &dir.path().join("b.json"), &clock, &opts).unwrap();
        assert!(report.throttle_events > 0);
        assert!(report.transport_retries > 0);
        assert_eq!(sink.tweets, clean.tweets);
        assert!(report.request_starts.windows(2).all(|w| w[1] - w[0] >= 10));
    }

    struct Down;

    impl Lookup for Down {
        fn lookup(&mut self, _: &[u64], _: &str) -> Result<Vec<HydratedTweet>, LookupError> {
            Err(LookupError::Transport("refused".into()))
        }
    }

    #[test]
    fn transport_failures_abort_after_eight_tries() {
        let clock = SimClock::new(0);
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("cp.json");
        let opts = FetchOptions { record_trace: true, ..FetchOptions::default() };
        let err = run(&whole(IdSource::full(1, 300).unwrap()), &mut Down, &Credential::new("t", 5_000),
            &mut MemorySink::default(), &cp, &clock, &opts).unwrap_err();
        assert!(matches!(err, Error::FetchAborted { batch: 0, attempts: 8, .. }));
        // Backoff 1+2+4+8+16+32+60 s, but never closer than the 5 s spacing.
        assert_eq!(clock.now_ms(), (5 + 5 + 5 + 8 + 16 + 32 + 60) * 1000);
        assert_eq!(Checkpoint::load(&cp).unwrap(), None);
    }

    #[test]
    fn bad_request_is_fatal() {
        let clock = SimClock::new(0);
        let dir = tempfile::tempdir().unwrap();
        let err = run(&whole(IdSource::list(vec![5, 3_100_000_000])), &mut InProcessLookup::new(service(0), clock.clone()),
            &Credential::new("t", 0), &mut MemorySink::default(), &dir.path().join("cp.json"), &clock,
            &FetchOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Lookup(LookupError::BadRequest(_))));
    }

    #[test]
    fn missing_ids_are_logged_on_request() {
        let clock = SimClock::new(0);
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("missing.txt");
        let svc = service(0);
        let opts = FetchOptions { missing_log: Some(log.clone()), ..FetchOptions::default() };
        let report = run(&whole(IdSource::full(3_000_000, 3_000_249).unwrap()), &mut InProcessLookup::new(svc.clone(), clock.clone()),
            &Credential::new("t", 0), &mut MemorySink::default(), &dir.path().join("cp.json"), &clock, &opts).unwrap();
        let logged: Vec<u64> = std::fs::read_to_string(&log).unwrap().lines().map(|l| l.parse().unwrap()).collect();
        let expected: Vec<u64> = (3_000_000..3_000_250).filter(|&id| !svc.corpus().exists(id)).collect();
        assert_eq!(logged, expected);
        assert_eq!(report.missing, expected.len() as u64);
    }

    #[test]
    fn checkpoint_for_other_shard_is_refused() {
        let clock = SimClock::new(0);
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("cp.json");
        let svc = service(0);
        run(&whole(IdSource::full(1, 200).unwrap()), &mut InProcessLookup::new(svc.clone(), clock.clone()),
            &Credential::new("t", 0), &mut MemorySink::default(), &cp, &clock, &FetchOptions::default()).unwrap();
        let err = run(&whole(IdSource::full(1, 300).unwrap()), &mut InProcessLookup::new(svc, clock.clone()),
            &Credential::new("t", 0), &mut MemorySink::default(), &cp, &clock, &FetchOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
