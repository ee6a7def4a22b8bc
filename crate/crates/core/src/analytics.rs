//! Time series and corpus statistics built on search counts: raw volume,
//! per-mille trends, frequent "-ing" actions, and URL/domain shares.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::calendar::{format_iso_date, Granularity};
use crate::error::Result;
use crate::search::{Query, Scope, Searcher};
use crate::store::{Archive, Route};

/// Domain recorded for URL tokens without a parseable host.
pub const INVALID_DOMAIN: &str = "invalid";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendRow {
    pub bucket_start: i64,
    pub total: u64,
    pub matches: u64,
    /// `None` for an empty bucket: no data is not a zero rate.
    pub per_mille: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VolumeRow {
    pub bucket_start: i64,
    pub total: u64,
}

pub fn per_mille(matches: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| 1000.0 * matches as f64 / total as f64)
}

/// Contiguous bucket starts covering `[t0, t1]`.
pub fn bucket_starts(bucket: Granularity, t0: i64, t1: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let mut b = bucket.floor(t0);
    while b <= t1 {
        out.push(b);
        b = bucket.next(b);
    }
    out
}

/// The series span: `scope` clipped to the archive window.
fn span(searcher: &Searcher, scope: Scope) -> Option<(i64, i64)> {
    let bounds = searcher.archive().bounds();
    let (t0, t1) = (scope.from.max(bounds.start), scope.to.min(bounds.end - 1));
    (t0 <= t1).then_some((t0, t1))
}

pub fn volume(searcher: &Searcher, bucket: Granularity, scope: Scope) -> Result<Vec<VolumeRow>> {
    let Some((t0, t1)) = span(searcher, scope) else { return Ok(Vec::new()) };
    let counts = searcher.count(&Query::all(), bucket, scope)?;
    Ok(bucket_starts(bucket, t0, t1)
        .into_iter()
        .map(|b| VolumeRow { bucket_start: b, total: counts.get(&b).copied().unwrap_or(0) })
        .collect())
}

pub fn trend(searcher: &Searcher, query: &Query, bucket: Granularity, scope: Scope) -> Result<Vec<TrendRow>> {
    let matches = searcher.count(query, bucket, scope)?;
    Ok(volume(searcher, bucket, scope)?
        .into_iter()
        .map(|v| {
            let m = matches.get(&v.bucket_start).copied().unwrap_or(0);
            TrendRow { bucket_start: v.bucket_start, total: v.total, matches: m, per_mille: per_mille(m, v.total) }
        })
        .collect())
}

/// Whether a token reads as an action: a word ending in "ing".
pub fn is_action(token: &str) -> bool {
    token.len() > 3 && token.ends_with("ing") && token.chars().all(char::is_alphabetic)
}

/// The `k` most frequent action tokens by document frequency, ties by token.
pub fn top_actions(searcher: &Searcher, scope: Scope, k: usize) -> Result<Vec<(String, u64)>> {
    let mut ranked: Vec<(String, u64)> = searcher.document_frequencies(scope, is_action)?.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UrlStats {
    pub tweets: u64,
    pub with_url: u64,
    /// Domain and number of URL-bearing tweets mentioning it, most frequent first.
    pub domains: Vec<(String, u64)>,
}

impl UrlStats {
    pub fn fraction_with_url(&self) -> f64 {
        if self.tweets == 0 {
            0.0
        } else {
            self.with_url as f64 / self.tweets as f64
        }
    }

    /// Share of URL-bearing tweets that mention `count` worth of a domain.
    pub fn domain_fraction(&self, count: u64) -> f64 {
        if self.with_url == 0 {
            0.0
        } else {
            count as f64 / self.with_url as f64
        }
    }
}

/// Hosts of the `http://` / `https://` tokens of `text`, lowercased, each once.
pub fn url_domains(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .filter(|t| {
            let lower = t.get(..8).unwrap_or(t).to_ascii_lowercase();
            lower.starts_with("http://") || lower.starts_with("https://")
        })
        .map(|t| {
            url::Url::parse(t)
                .ok()
                .and_then(|u| u.host_str().filter(|h| !h.is_empty()).map(str::to_lowercase))
                .unwrap_or_else(|| INVALID_DOMAIN.to_string())
        })
        .collect()
}

/// Accumulates URL statistics over texts.
#[derive(Debug, Default)]
pub struct UrlCounter {
    tweets: u64,
    with_url: u64,
    domains: BTreeMap<String, u64>,
}

impl UrlCounter {
    pub fn add(&mut self, text: &str) {
        self.tweets += 1;
        let domains = url_domains(text);
        if !domains.is_empty() {
            self.with_url += 1;
        }
        for d in domains {
            *self.domains.entry(d).or_insert(0) += 1;
        }
    }

    pub fn finish(self) -> UrlStats {
        let mut domains: Vec<(String, u64)> = self.domains.into_iter().collect();
        domains.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        UrlStats { tweets: self.tweets, with_url: self.with_url, domains }
    }
}

/// URL statistics over stored records (texts, not the index) within `scope`.
pub fn url_stats(archive: &Archive, scope: Scope) -> Result<UrlStats> {
    let bounds = archive.bounds();
    let mut counter = UrlCounter::default();
    for key in bounds.partitions_for_range(scope.from.max(bounds.start), scope.to.min(bounds.end - 1)) {
        for rec in archive.scan(Route::Partition(key))? {
            let rec = rec?;
            if scope.contains(rec.timestamp) {
                counter.add(&rec.text);
            }
        }
    }
    Ok(counter.finish())
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::error::Error::Stage(format!("csv: {other:?}")),
    }
}

/// Formats a rate with up to six decimals and no trailing zeros.
pub fn format_rate(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn write_volume_csv<W: Write>(out: W, rows: &[VolumeRow]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["bucket_start", "total"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([format_iso_date(r.bucket_start), r.total.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trend_csv<W: Write>(out: W, rows: &[TrendRow]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["bucket_start", "total", "matches", "per_mille"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            format_iso_date(r.bucket_start),
            r.total.to_string(),
            r.matches.to_string(),
            r.per_mille.map(format_rate).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_counts_csv<W: Write>(out: W, header: [&str; 2], rows: &[(String, u64)]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for (k, n) in rows {
        w.write_record([k.as_str(), &n.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_url_csv<W: Write>(out: W, stats: &UrlStats) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["domain", "tweets", "fraction_of_url_tweets"]).map_err(csv_err)?;
    w.write_record(["*", &stats.with_url.to_string(), &format_rate(stats.fraction_with_url())]).map_err(csv_err)?;
    for (d, n) in &stats.domains {
        w.write_record([d.as_str(), &n.to_string(), &format_rate(stats.domain_fraction(*n))]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{format_created_at, parse_instant, MS_PER_DAY};
    use crate::store::ArchiveWriter;
    use crate::tweet::DehydratedTweet;

    fn setup(docs: &[(&str, &str)]) -> (tempfile::TempDir, Searcher) {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArchiveWriter::create(&dir.path().join("a")).unwrap();
        for (i, (when, text)) in docs.iter().enumerate() {
            let ts = parse_instant(when).unwrap() + i as i64;
            w.append(&DehydratedTweet {
                created_at: format_created_at(ts),
                id_str: (i + 1).to_string(),
                in_reply_to_status_id_str: None,
                in_reply_to_user_id_str: None,
                lang: "en".into(),
                text: text.to_string(),
                timestamp: ts,
                user_id_str: "1".into(),
            })
            .unwrap();
        }
        w.flush().unwrap();
        let s = Searcher::open(&dir.path().join("a"), &dir.path().join("i"));
        s.build().unwrap();
        (dir, s)
    }

    #[test]
    fn per_mille_arithmetic() {
        assert_eq!(per_mille(425, 50_000), Some(8.5));
        assert_eq!(per_mille(0, 0), None);
        assert_eq!(format_rate(8.5), "8.5");
        assert_eq!(format_rate(1000.0), "1000");
        assert_eq!(format_rate(1.0 / 3.0), "0.333333");
    }

    #[test]
    fn actions_rank_by_document_frequency() {
        let (_d, s) = setup(&[("2008-01-01", "watching tv"), ("2008-01-02", "watching it watching"), ("2008-01-03", "eating")]);
        assert_eq!(top_actions(&s, Scope::all(), 10).unwrap(), [("watching".to_string(), 2), ("eating".to_string(), 1)]);
        assert_eq!(top_actions(&s, Scope::all(), 1).unwrap().len(), 1);
        assert!(!is_action("ing") && !is_action("#going") && is_action("going"));
    }

    #[test]
    fn volume_is_contiguous_and_conserving() {
        let (_d, s) = setup(&[("2009-01-05", "a"), ("2009-01-06", "b"), ("2009-01-27", "c")]);
        let scope = Scope::new(parse_instant("2009-01-01").unwrap(), parse_instant("2009-01-31").unwrap()).unwrap();
        let rows = volume(&s, Granularity::Week, scope).unwrap();
        let totals: Vec<u64> = rows.iter().map(|r| r.total).collect();
        assert_eq!(totals, [0, 2, 0, 0, 1]);
        assert!(rows.windows(2).all(|w| w[1].bucket_start - w[0].bucket_start == 7 * MS_PER_DAY));
        let all = volume(&s, Granularity::Week, Scope::all()).unwrap();
        assert_eq!(all.iter().map(|r| r.total).sum::<u64>(), 3);
    }

    #[test]
    fn trend_match_all_is_one_thousand() {
        let (_d, s) = setup(&[("2008-03-01", "x"), ("2008-03-02", "obama"), ("2008-05-01", "y")]);
        let rows = trend(&s, &Query::all(), Granularity::Month, Scope::all()).unwrap();
        for r in &rows {
            assert_eq!(r.per_mille, if r.total > 0 { Some(1000.0) } else { None });
        }
        let rows = trend(&s, &Query::Term("obama".into()), Granularity::Month, Scope::all()).unwrap();
        let march = rows.iter().find(|r| format_iso_date(r.bucket_start) == "2008-03-01").unwrap();
        assert_eq!((march.total, march.matches, march.per_mille), (2, 1, Some(500.0)));
        let mut csv = Vec::new();
        write_trend_csv(&mut csv, &rows[..3]).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "bucket_start,total,matches,per_mille\n2006-03-01,0,0,\n2006-04-01,0,0,\n2006-05-01,0,0,\n");
    }

    #[test]
    fn url_statistics() {
        let mut c = UrlCounter::default();
        for t in ["see http://tinyurl.com/x", "no link", "plain", "nothing"] {
            c.add(t);
        }
        let s = c.finish();
        assert_eq!(s.fraction_with_url(), 0.25);
        assert_eq!(s.domains, [("tinyurl.com".to_string(), 1)]);
        assert_eq!(s.domain_fraction(1), 1.0);

        let mut c = UrlCounter::default();
        c.add("two http://bit.ly/a and HTTPS://Bit.LY/b plus http://[oops");
        let s = c.finish();
        assert_eq!(s.with_url, 1);
        assert_eq!(s.domains, [("bit.ly".to_string(), 1), (INVALID_DOMAIN.to_string(), 1)]);
    }
}
