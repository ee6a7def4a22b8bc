//! Time-partitioned, append-only archive of dehydrated tweets.
//!
//! ```text
//! archive/
//!   2006/MANIFEST
//!   2006/segment-000001.ndjson.gz
//!   2007-03/...
//!   2009-W07/...
//!   quarantine/...        out-of-range timestamps
//! ```
//!
//! A segment becomes visible only once its manifest line is written, and is
//! never modified afterwards.

mod partition;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use itertools::Itertools;

pub use partition::{partition_key, partitions_for_range, ArchiveBounds, PartitionKey, ARCHIVE_END_MS, ARCHIVE_START_MS};

use crate::error::{Error, Result};
use crate::tweet::DehydratedTweet;

pub const MANIFEST: &str = "MANIFEST";
pub const QUARANTINE: &str = "quarantine";
pub const DEFAULT_ROLL_RECORDS: u64 = 1_000_000;
pub const DEFAULT_ROLL_BYTES: u64 = 256 * 1024 * 1024;

/// Where a record is stored: its partition, or quarantine when its
/// timestamp falls outside the archive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Route {
    Partition(PartitionKey),
    Quarantine,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::Partition(k) => k.fmt(f),
            Route::Quarantine => f.write_str(QUARANTINE),
        }
    }
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Route> {
        if s == QUARANTINE {
            Ok(Route::Quarantine)
        } else {
            s.parse().map(Route::Partition)
        }
    }
}

/// Metadata of one flushed, immutable segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub partition: Route,
    pub seq: u32,
    pub record_count: u64,
    pub min_ts: i64,
    pub max_ts: i64,
    pub path: PathBuf,
}

fn segment_name(seq: u32) -> String {
    format!("segment-{seq:06}.ndjson.gz")
}

fn read_manifest(dir: &Path, route: Route) -> Result<Vec<Segment>> {
    let path = dir.join(MANIFEST);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|line| {
            let bad = || Error::CorruptSegment { path: path.clone(), reason: format!("bad manifest line {line:?}") };
            let f: Vec<&str> = line.split_whitespace().collect();
            let [seq, count, min_ts, max_ts] = f[..] else { return Err(bad()) };
            let seq: u32 = seq.parse().map_err(|_| bad())?;
            Ok(Segment {
                partition: route,
                seq,
                record_count: count.parse().map_err(|_| bad())?,
                min_ts: min_ts.parse().map_err(|_| bad())?,
                max_ts: max_ts.parse().map_err(|_| bad())?,
                path: dir.join(segment_name(seq)),
            })
        })
        .collect()
}

fn write_manifest(dir: &Path, segments: &[Segment]) -> Result<()> {
    let mut text = String::from("# seq count min_ts max_ts\n");
    for s in segments {
        text.push_str(&format!("{} {} {} {}\n", s.seq, s.record_count, s.min_ts, s.max_ts));
    }
    let tmp = dir.join(format!("{MANIFEST}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, dir.join(MANIFEST))?;
    Ok(())
}

struct OpenSegment {
    seq: u32,
    tmp_path: PathBuf,
    enc: GzEncoder<BufWriter<File>>,
    count: u64,
    bytes: u64,
    min_ts: i64,
    max_ts: i64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub appended: u64,
    pub quarantined: u64,
}

/// Routes records to their partitions and writes gzip segments.
pub struct ArchiveWriter {
    root: PathBuf,
    bounds: ArchiveBounds,
    roll_records: u64,
    roll_bytes: u64,
    open: BTreeMap<Route, OpenSegment>,
    manifests: BTreeMap<Route, Vec<Segment>>,
    stats: IngestStats,
}

impl ArchiveWriter {
    pub fn create(root: &Path) -> Result<ArchiveWriter> {
        ArchiveWriter::with_options(root, ArchiveBounds::default(), DEFAULT_ROLL_RECORDS, DEFAULT_ROLL_BYTES)
    }

    pub fn with_options(root: &Path, bounds: ArchiveBounds, roll_records: u64, roll_bytes: u64) -> Result<ArchiveWriter> {
        fs::create_dir_all(root)?;
        Ok(ArchiveWriter {
            root: root.to_path_buf(),
            bounds,
            roll_records: roll_records.max(1),
            roll_bytes: roll_bytes.max(1),
            open: BTreeMap::new(),
            manifests: BTreeMap::new(),
            stats: IngestStats::default(),
        })
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn route(&self, ts: i64) -> Route {
        self.bounds.partition_key(ts).map_or(Route::Quarantine, Route::Partition)
    }

    fn manifest(&mut self, route: Route) -> Result<&mut Vec<Segment>> {
        if !self.manifests.contains_key(&route) {
            let dir = self.root.join(route.to_string());
            fs::create_dir_all(&dir)?;
            // Leftovers of an interrupted writer were never published.
            for entry in fs::read_dir(&dir)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "tmp") {
                    fs::remove_file(p)?;
                }
            }
            let segments = read_manifest(&dir, route)?;
            self.manifests.insert(route, segments);
        }
        Ok(self.manifests.get_mut(&route).expect("inserted above"))
    }

    pub fn append(&mut self, record: &DehydratedTweet) -> Result<Route> {
        let route = self.route(record.timestamp);
        if !self.open.contains_key(&route) {
            let seq = self.manifest(route)?.last().map_or(1, |s| s.seq + 1);
            let tmp_path = self.root.join(route.to_string()).join(format!("{}.tmp", segment_name(seq)));
            let enc = GzEncoder::new(BufWriter::new(File::create(&tmp_path)?), Compression::default());
            self.open.insert(route, OpenSegment { seq, tmp_path, enc, count: 0, bytes: 0, min_ts: i64::MAX, max_ts: i64::MIN });
        }
        let seg = self.open.get_mut(&route).expect("opened above");
        let line = record.to_line();
        seg.enc.write_all(line.as_bytes())?;
        seg.enc.write_all(b"\n")?;
        seg.count += 1;
        seg.bytes += line.len() as u64 + 1;
        seg.min_ts = seg.min_ts.min(record.timestamp);
        seg.max_ts = seg.max_ts.max(record.timestamp);
        if route == Route::Quarantine {
            self.stats.quarantined += 1;
        } else {
            self.stats.appended += 1;
        }
        if seg.count >= self.roll_records || seg.bytes >= self.roll_bytes {
            self.finish(route)?;
        }
        Ok(route)
    }

    fn finish(&mut self, route: Route) -> Result<Option<Segment>> {
        let Some(seg) = self.open.remove(&route) else { return Ok(None) };
        let file = seg.enc.finish()?.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        let dir = self.root.join(route.to_string());
        let path = dir.join(segment_name(seg.seq));
        fs::rename(&seg.tmp_path, &path)?;
        let meta = Segment { partition: route, seq: seg.seq, record_count: seg.count, min_ts: seg.min_ts, max_ts: seg.max_ts, path };
        let manifest = self.manifest(route)?;
        manifest.push(meta.clone());
        let snapshot = manifest.clone();
        write_manifest(&dir, &snapshot)?;
        Ok(Some(meta))
    }

    /// Publishes every open segment; returns the segments published by this call.
    pub fn flush(&mut self) -> Result<Vec<Segment>> {
        let routes: Vec<Route> = self.open.keys().copied().collect();
        let mut out = Vec::new();
        for r in routes {
            out.extend(self.finish(r)?);
        }
        Ok(out)
    }
}

/// Read side of an archive directory.
#[derive(Debug, Clone)]
pub struct Archive {
    root: PathBuf,
    bounds: ArchiveBounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionStats {
    pub route: Route,
    pub segments: usize,
    pub records: u64,
    pub min_ts: Option<i64>,
    pub max_ts: Option<i64>,
}

impl Archive {
    pub fn open(root: &Path) -> Archive {
        Archive { root: root.to_path_buf(), bounds: ArchiveBounds::default() }
    }

    pub fn with_bounds(root: &Path, bounds: ArchiveBounds) -> Archive {
        Archive { root: root.to_path_buf(), bounds }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn bounds(&self) -> ArchiveBounds {
        self.bounds
    }

    /// Partitions holding at least one published segment, in time order (quarantine excluded).
    pub fn partitions(&self) -> Result<Vec<PartitionKey>> {
        let mut keys = Vec::new();
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(keys),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let entry = entry?;
            let Some(name) = entry.file_name().to_str().map(str::to_string) else { continue };
            if let Ok(key) = name.parse::<PartitionKey>() {
                if !self.segments(Route::Partition(key))?.is_empty() {
                    keys.push(key);
                }
            }
        }
        keys.sort();
        Ok(keys)
    }

    pub fn segments(&self, route: Route) -> Result<Vec<Segment>> {
        read_manifest(&self.root.join(route.to_string()), route)
    }

    /// Raw lines of a segment, in insertion order.
    pub fn read_segment_lines(&self, segment: &Segment) -> Result<Vec<String>> {
        let corrupt = |reason: String| Error::CorruptSegment { path: segment.path.clone(), reason };
        let file = File::open(&segment.path).map_err(|e| corrupt(e.to_string()))?;
        let lines: Vec<String> = BufReader::new(MultiGzDecoder::new(file))
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| corrupt(e.to_string()))?;
        if lines.len() as u64 != segment.record_count {
            return Err(corrupt(format!("{} records, manifest says {}", lines.len(), segment.record_count)));
        }
        Ok(lines)
    }

    pub fn read_segment(&self, segment: &Segment) -> Result<Vec<DehydratedTweet>> {
        self.read_segment_lines(segment)?
            .iter()
            .map(|l| {
                DehydratedTweet::from_line(l)
                    .map_err(|e| Error::CorruptSegment { path: segment.path.clone(), reason: e.to_string() })
            })
            .collect()
    }

    /// Every record of `route`, merged across segments in (timestamp, id)
    /// order. A corrupt segment yields one error and is skipped.
    pub fn scan(&self, route: Route) -> Result<impl Iterator<Item = Result<DehydratedTweet>>> {
        let mut errors = Vec::new();
        let mut runs = Vec::new();
        for seg in self.segments(route)? {
            match self.read_segment(&seg) {
                Ok(mut recs) => {
                    recs.sort_by_key(|r| (r.timestamp, r.id()));
                    runs.push(recs);
                }
                Err(e) => errors.push(e),
            }
        }
        let merged = runs.into_iter().kmerge_by(|a, b| (a.timestamp, a.id()) < (b.timestamp, b.id()));
        Ok(errors.into_iter().map(Err).chain(merged.map(Ok)))
    }

    /// All partitions in time order, then quarantine.
    pub fn scan_all(&self) -> Result<impl Iterator<Item = Result<DehydratedTweet>> + '_> {
        let mut routes: Vec<Route> = self.partitions()?.into_iter().map(Route::Partition).collect();
        routes.push(Route::Quarantine);
        Ok(routes.into_iter().flat_map(move |r| match self.scan(r) {
            Ok(it) => Box::new(it) as Box<dyn Iterator<Item = Result<DehydratedTweet>>>,
            Err(e) => Box::new(std::iter::once(Err(e))),
        }))
    }

    /// Records with timestamp in `[t0, t1]`, reading only intersecting partitions.
    pub fn scan_range(&self, t0: i64, t1: i64) -> Result<Vec<DehydratedTweet>> {
        let present = self.partitions()?;
        let mut out = Vec::new();
        for key in self.bounds.partitions_for_range(t0, t1) {
            if !present.contains(&key) {
                continue;
            }
            for rec in self.scan(Route::Partition(key))? {
                let rec = rec?;
                if (t0..=t1).contains(&rec.timestamp) {
                    out.push(rec);
                }
            }
        }
        Ok(out)
    }

    pub fn stats(&self) -> Result<Vec<PartitionStats>> {
        let mut routes: Vec<Route> = self.partitions()?.into_iter().map(Route::Partition).collect();
        if !self.segments(Route::Quarantine)?.is_empty() {
            routes.push(Route::Quarantine);
        }
        routes
            .into_iter()
            .map(|route| {
                let segs = self.segments(route)?;
                Ok(PartitionStats {
                    route,
                    segments: segs.len(),
                    records: segs.iter().map(|s| s.record_count).sum(),
                    min_ts: segs.iter().map(|s| s.min_ts).min(),
                    max_ts: segs.iter().map(|s| s.max_ts).max(),
                })
            })
            .collect()
    }
}

/// Loads every gzip NDJSON file of dehydrated (or hydrated) records under `input` into the archive.
pub fn ingest_dir(input: &Path, archive_root: &Path) -> Result<(IngestStats, u64)> {
    let mut writer = ArchiveWriter::create(archive_root)?;
    let mut rejected = 0;
    for path in crate::dehydrator::gz_files(input)? {
        for line in crate::dehydrator::open_gz_lines(&path)? {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match crate::dehydrator::dehydrate_json(&line) {
                Ok(rec) => {
                    writer.append(&rec)?;
                }
                Err(Error::Rejected(_)) => rejected += 1,
                Err(e) => return Err(e),
            }
        }
    }
    writer.flush()?;
    Ok((writer.stats(), rejected))
}
