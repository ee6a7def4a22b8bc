//! Full-text search over the archive: per-partition positional indexes,
//! boolean/phrase/time queries, and chronological (newest first) results.

mod index;
mod iter;
mod query;
mod tokenize;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

pub use index::{build_all, build_partition, read_meta, DocEntry, IndexMeta, IndexStats, PartitionIndex, TermInfo};
pub use iter::{compile, compile_scoped, DocIter};
pub use query::Query;
pub use tokenize::{is_token_char, tokenize};

use crate::calendar::Granularity;
use crate::error::{Error, Result};
use crate::store::{Archive, PartitionKey, Route};

/// Inclusive time window a search is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub from: i64,
    pub to: i64,
}

impl Scope {
    pub fn all() -> Scope {
        Scope { from: i64::MIN, to: i64::MAX }
    }

    pub fn new(from: i64, to: i64) -> Result<Scope> {
        if from > to {
            return Err(Error::invalid(format!("empty scope {from}..{to}")));
        }
        Ok(Scope { from, to })
    }

    pub fn contains(&self, ts: i64) -> bool {
        (self.from..=self.to).contains(&ts)
    }
}

impl Default for Scope {
    fn default() -> Self {
        Scope::all()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub id_str: String,
    pub timestamp: i64,
    pub text: String,
    pub partition: PartitionKey,
}

/// Query front end over an archive and its index directory.
#[derive(Debug)]
pub struct Searcher {
    archive: Archive,
    index_root: PathBuf,
    opens: AtomicUsize,
}

impl Searcher {
    pub fn new(archive: Archive, index_root: &Path) -> Searcher {
        Searcher { archive, index_root: index_root.to_path_buf(), opens: AtomicUsize::new(0) }
    }

    pub fn open(archive_root: &Path, index_root: &Path) -> Searcher {
        Searcher::new(Archive::open(archive_root), index_root)
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    /// Partition indexes opened since construction or the last reset.
    pub fn partition_opens(&self) -> usize {
        self.opens.load(Ordering::Relaxed)
    }

    pub fn reset_partition_opens(&self) {
        self.opens.store(0, Ordering::Relaxed);
    }

    /// Builds (or rebuilds) every partition index.
    pub fn build(&self) -> Result<Vec<IndexStats>> {
        build_all(&self.archive, &self.index_root)
    }

    /// Partitions with data and an up-to-date index, listed by the staleness check.
    pub fn unindexed(&self) -> Result<Vec<PartitionKey>> {
        let mut out = Vec::new();
        for key in self.archive.partitions()? {
            if !self.is_fresh(key)? {
                out.push(key);
            }
        }
        Ok(out)
    }

    fn is_fresh(&self, key: PartitionKey) -> Result<bool> {
        let segments = self.archive.segments(Route::Partition(key))?;
        Ok(match read_meta(&self.index_root.join(key.to_string()))? {
            Some(meta) => meta.segments == index::segment_fingerprint(&segments),
            None => false,
        })
    }

    /// Effective window and the partitions to visit, newest first.
    fn plan(&self, query: &Query, scope: Scope) -> Result<Option<(i64, i64, Vec<PartitionKey>)>> {
        query.validate()?;
        let (q0, q1) = query.time_bounds();
        let bounds = self.archive.bounds();
        let (t0, t1) = (scope.from.max(q0).max(bounds.start), scope.to.min(q1).min(bounds.end - 1));
        if t0 > t1 {
            return Ok(None);
        }
        let mut keys = Vec::new();
        let mut missing = Vec::new();
        for key in bounds.partitions_for_range(t0, t1) {
            if self.archive.segments(Route::Partition(key))?.is_empty() {
                continue;
            }
            if self.is_fresh(key)? {
                keys.push(key);
            } else {
                missing.push(key.to_string());
            }
        }
        if !missing.is_empty() {
            return Err(Error::NotIndexed(missing));
        }
        keys.reverse();
        Ok(Some((t0, t1, keys)))
    }

    fn open_index(&self, key: PartitionKey) -> Result<PartitionIndex> {
        self.opens.fetch_add(1, Ordering::Relaxed);
        PartitionIndex::open(&self.index_root.join(key.to_string()), key)
    }

    fn partition_results(&self, key: PartitionKey, query: &Query, t0: i64, t1: i64, limit: usize) -> Result<Vec<SearchResult>> {
        let index = self.open_index(key)?;
        let run = || -> std::io::Result<Vec<SearchResult>> {
            let mut it = compile_scoped(&index, query, t0, t1)?;
            let mut docs = index.doc_reader();
            let mut texts = index.text_reader();
            let mut out = Vec::new();
            while let Some(ord) = it.doc() {
                if out.len() >= limit {
                    break;
                }
                let d = docs.doc(ord)?;
                out.push(SearchResult { id_str: d.id.to_string(), timestamp: d.timestamp, text: texts.text(&d)?, partition: key });
                it.next()?;
            }
            Ok(out)
        };
        run().map_err(|e| index.corrupt(e))
    }

    /// Documents matching `query` within `scope`, newest first, at most `limit`.
    pub fn execute(&self, query: &Query, scope: Scope, limit: Option<usize>) -> Result<Vec<SearchResult>> {
        let Some((t0, t1, keys)) = self.plan(query, scope)? else { return Ok(Vec::new()) };
        match limit {
            None => {
                let parts = keys
                    .par_iter()
                    .map(|&k| self.partition_results(k, query, t0, t1, usize::MAX))
                    .collect::<Result<Vec<_>>>()?;
                Ok(parts.into_iter().flatten().collect())
            }
            Some(limit) => {
                let mut out = Vec::new();
                for k in keys {
                    if out.len() >= limit {
                        break;
                    }
                    out.extend(self.partition_results(k, query, t0, t1, limit - out.len())?);
                }
                Ok(out)
            }
        }
    }

    /// Matches per bucket start (only buckets with matches appear), without reading texts.
    pub fn count(&self, query: &Query, bucket: Granularity, scope: Scope) -> Result<BTreeMap<i64, u64>> {
        let Some((t0, t1, keys)) = self.plan(query, scope)? else { return Ok(BTreeMap::new()) };
        let parts = keys
            .par_iter()
            .map(|&k| {
                let index = self.open_index(k)?;
                let run = || -> std::io::Result<BTreeMap<i64, u64>> {
                    let mut it = compile_scoped(&index, query, t0, t1)?;
                    let mut docs = index.doc_reader();
                    let mut counts = BTreeMap::new();
                    while let Some(ord) = it.doc() {
                        *counts.entry(bucket.floor(docs.doc(ord)?.timestamp)).or_insert(0) += 1;
                        it.next()?;
                    }
                    Ok(counts)
                };
                run().map_err(|e| index.corrupt(e))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = BTreeMap::new();
        for part in parts {
            for (b, n) in part {
                *total.entry(b).or_insert(0) += n;
            }
        }
        Ok(total)
    }

    pub fn count_total(&self, query: &Query, scope: Scope) -> Result<u64> {
        let Some((t0, t1, keys)) = self.plan(query, scope)? else { return Ok(0) };
        keys.par_iter()
            .map(|&k| {
                let index = self.open_index(k)?;
                let run = || -> std::io::Result<u64> {
                    let mut it = compile_scoped(&index, query, t0, t1)?;
                    let mut n = 0;
                    while it.doc().is_some() {
                        n += 1;
                        it.next()?;
                    }
                    Ok(n)
                };
                run().map_err(|e| index.corrupt(e))
            })
            .sum()
    }

    /// Document frequency of every indexed term accepted by `keep`, within `scope`.
    pub fn document_frequencies(&self, scope: Scope, keep: impl Fn(&str) -> bool + Sync) -> Result<BTreeMap<String, u64>> {
        let Some((t0, t1, keys)) = self.plan(&Query::all(), scope)? else { return Ok(BTreeMap::new()) };
        let parts = keys
            .par_iter()
            .map(|&k| {
                let index = self.open_index(k)?;
                let run = || -> std::io::Result<BTreeMap<String, u64>> {
                    let (lo, hi) = index.ordinal_range(t0, t1)?;
                    let whole = lo == 0 && hi == index.doc_count();
                    let mut out = BTreeMap::new();
                    for (term, info) in index.terms().filter(|(t, _)| keep(t)) {
                        let df = if whole {
                            info.df
                        } else {
                            let mut it = compile_scoped(&index, &Query::Term(term.to_string()), t0, t1)?;
                            let mut n = 0;
                            while it.doc().is_some() {
                                n += 1;
                                it.next()?;
                            }
                            n
                        };
                        if df > 0 {
                            out.insert(term.to_string(), df);
                        }
                    }
                    Ok(out)
                };
                run().map_err(|e| index.corrupt(e))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = BTreeMap::new();
        for part in parts {
            for (t, n) in part {
                *total.entry(t).or_insert(0) += n;
            }
        }
        Ok(total)
    }
}

/// Reference evaluation by scanning and tokenizing every stored record.
/// Slow, index-free; used to cross-check index results.
pub fn scan_search(archive: &Archive, query: &Query, scope: Scope) -> Result<Vec<SearchResult>> {
    query.validate()?;
    let bounds = archive.bounds();
    let mut out = Vec::new();
    for key in archive.partitions()? {
        for rec in archive.scan(Route::Partition(key))? {
            let rec = rec?;
            if scope.contains(rec.timestamp) && bounds.contains(rec.timestamp) && query.matches(&tokenize(&rec.text), rec.timestamp) {
                out.push(SearchResult { id_str: rec.id_str.clone(), timestamp: rec.timestamp, text: rec.text, partition: key });
            }
        }
    }
    let id = |r: &SearchResult| r.id_str.parse::<u64>().unwrap_or(0);
    out.sort_by(|a, b| (b.timestamp, id(b)).cmp(&(a.timestamp, id(a))));
    out.dedup_by(|a, b| a.timestamp == b.timestamp && a.id_str == b.id_str);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{format_created_at, parse_instant, MS_PER_DAY};
    use crate::store::ArchiveWriter;
    use crate::tweet::DehydratedTweet;

    fn record(id: u64, ts: i64, text: &str) -> DehydratedTweet {
        DehydratedTweet {
            created_at: format_created_at(ts),
            id_str: id.to_string(),
            in_reply_to_status_id_str: None,
            in_reply_to_user_id_str: None,
            lang: "en".into(),
            text: text.into(),
            timestamp: ts,
            user_id_str: "9".into(),
        }
    }

    fn at(s: &str) -> i64 {
        parse_instant(s).unwrap()
    }

    fn fixture(docs: &[(u64, &str, &str)]) -> (tempfile::TempDir, Searcher) {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArchiveWriter::create(&dir.path().join("archive")).unwrap();
        for (id, when, text) in docs {
            w.append(&record(*id, at(when), text)).unwrap();
        }
        w.flush().unwrap();
        let s = Searcher::open(&dir.path().join("archive"), &dir.path().join("index"));
        s.build().unwrap();
        (dir, s)
    }

    fn ids(results: &[SearchResult]) -> Vec<&str> {
        results.iter().map(|r| r.id_str.as_str()).collect()
    }

    #[test]
    fn term_postings_on_toy_partition() {
        let (_d, s) = fixture(&[
            (1, "2009-02-09T10:00:00Z", "I want a sandwich"),
            (2, "2009-02-10T10:00:00Z", "no lunch today"),
            (3, "2009-02-11T10:00:00Z", "sandwich sandwich"),
        ]);
        let r = s.execute(&Query::Term("sandwich".into()), Scope::all(), None).unwrap();
        assert_eq!(ids(&r), ["3", "1"]);
        assert_eq!(r[0].partition, PartitionKey::Week2009(7));
        assert_eq!(r[0].text, "sandwich sandwich");
    }

    #[test]
    fn phrase_needs_adjacent_positions() {
        let (_d, s) = fixture(&[
            (1, "2008-05-01T00:00:00Z", "I am eating a sandwich now"),
            (2, "2008-05-02T00:00:00Z", "eating my sandwich"),
            (3, "2008-05-03T00:00:00Z", "a sandwich, eating a"),
            (4, "2008-05-04T00:00:00Z", "Eating A Sandwich!"),
        ]);
        let q = Query::parse("\"eating a sandwich\"").unwrap();
        assert_eq!(ids(&s.execute(&q, Scope::all(), None).unwrap()), ["4", "1"]);
        let q = Query::Phrase(vec!["a".into(), "a".into()]);
        assert!(s.execute(&q, Scope::all(), None).unwrap().is_empty());
    }

    #[test]
    fn and_or_time_and_order() {
        let (_d, s) = fixture(&[
            (10, "2008-10-30T00:00:00Z", "obama rally"),
            (11, "2008-11-02T00:00:00Z", "obama wins"),
            (12, "2008-11-04T12:00:00Z", "Obama and biden"),
            (13, "2008-11-04T12:00:00Z", "mccain palin obama"),
            (14, "2008-11-10T00:00:00Z", "obama transition"),
            (15, "2009-01-20T00:00:00Z", "inauguration obama"),
        ]);
        let q = Query::And(vec![Query::Term("obama".into()), Query::TimeRange(at("2008-11-01"), at("2008-11-05"))]);
        assert_eq!(ids(&s.execute(&q, Scope::all(), None).unwrap()), ["13", "12", "11"]);
        let q = Query::parse("biden OR palin").unwrap();
        assert_eq!(ids(&s.execute(&q, Scope::all(), None).unwrap()), ["13", "12"]);
        let all = s.execute(&Query::all(), Scope::all(), None).unwrap();
        assert_eq!(ids(&all), ["15", "14", "13", "12", "11", "10"]);
        assert_eq!(ids(&s.execute(&Query::all(), Scope::all(), Some(2)).unwrap()), ["15", "14"]);
        let scoped = s.execute(&Query::Term("obama".into()), Scope::new(at("2008-11-04"), at("2008-11-30")).unwrap(), None).unwrap();
        assert_eq!(ids(&scoped), ["14", "13", "12"]);
    }

    #[test]
    fn count_agrees_with_execute() {
        let docs: Vec<(u64, String, String)> = (0..40u64)
            .map(|i| {
                let day = at("2009-03-02") + (i as i64 % 20) * MS_PER_DAY + i as i64;
                let text = if i % 3 == 0 { "obama speech" } else { "weather" };
                (i + 1, crate::calendar::format_iso(day), text.to_string())
            })
            .collect();
        let refs: Vec<(u64, &str, &str)> = docs.iter().map(|(i, a, b)| (*i, a.as_str(), b.as_str())).collect();
        let (_d, s) = fixture(&refs);
        let q = Query::Term("obama".into());
        let counts = s.count(&q, Granularity::Week, Scope::all()).unwrap();
        assert_eq!(counts.values().sum::<u64>(), s.execute(&q, Scope::all(), None).unwrap().len() as u64);
        assert_eq!(counts.values().sum::<u64>(), 14);
        assert_eq!(s.count_total(&q, Scope::all()).unwrap(), 14);
        let none = s.count(&q, Granularity::Week, Scope::new(at("2007-01-01"), at("2007-02-01")).unwrap()).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn unindexed_partition_is_an_error() {
        let (d, s) = fixture(&[(1, "2008-05-01T00:00:00Z", "hello")]);
        let mut w = ArchiveWriter::create(&d.path().join("archive")).unwrap();
        w.append(&record(2, at("2008-06-01"), "later")).unwrap();
        w.append(&record(3, at("2008-05-02"), "stale")).unwrap();
        w.flush().unwrap();
        match s.execute(&Query::all(), Scope::all(), None) {
            Err(Error::NotIndexed(keys)) => assert_eq!(keys, ["2008-05", "2008-06"]),
            other => panic!("{other:?}"),
        }
        // A scope avoiding both stale partitions still works.
        let ok = s.execute(&Query::all(), Scope::new(at("2008-07-01"), at("2008-08-01")).unwrap(), None).unwrap();
        assert!(ok.is_empty());
        s.build().unwrap();
        assert_eq!(s.execute(&Query::all(), Scope::all(), None).unwrap().len(), 3);
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let (d, s) = fixture(&[(1, "2008-05-01T00:00:00Z", "one two"), (2, "2009-05-01T00:00:00Z", "two three")]);
        let snapshot = |root: &Path| {
            let mut files: Vec<(PathBuf, Vec<u8>)> = walk(root).into_iter().map(|p| { let b = std::fs::read(&p).unwrap(); (p, b) }).collect();
            files.sort();
            files
        };
        let before = snapshot(&d.path().join("index"));
        s.build().unwrap();
        assert_eq!(snapshot(&d.path().join("index")), before);
        assert!(!before.is_empty());
    }

    fn walk(root: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(root).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() { out.extend(walk(&p)) } else { out.push(p) }
        }
        out
    }

    #[test]
    fn pruned_partitions_are_never_opened() {
        let docs: Vec<(u64, String)> = (0..30u64).map(|w| (w + 1, crate::calendar::format_iso(at("2009-01-01") + w as i64 * 7 * MS_PER_DAY))).collect();
        let refs: Vec<(u64, &str, &str)> = docs.iter().map(|(i, t)| (*i, t.as_str(), "tick")).collect();
        let (_d, s) = fixture(&refs);
        s.reset_partition_opens();
        let q = Query::Term("tick".into());
        let r = s.execute(&q, Scope::new(at("2009-03-02"), at("2009-03-22T23:59:59Z")).unwrap(), None).unwrap();
        assert_eq!(r.len(), 3);
        assert!(s.partition_opens() <= 4, "{}", s.partition_opens());
    }

    #[test]
    fn scan_reference_matches_index() {
        let (_d, s) = fixture(&[
            (1, "2007-05-01T00:00:00Z", "#barcamp rocks @chris"),
            (2, "2007-05-01T00:00:00Z", "barcamp ok"),
            (3, "2009-05-01T00:00:00Z", "rocks"),
        ]);
        for q in ["#barcamp", "barcamp", "rocks", "@chris OR ok", "*"] {
            let q = Query::parse(q).unwrap();
            assert_eq!(s.execute(&q, Scope::all(), None).unwrap(), scan_search(s.archive(), &q, Scope::all()).unwrap());
        }
    }
}
