//! Projection of full tweet objects onto the eight-field archive record.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Deserialize;

use crate::calendar;
use crate::error::{Error, ParseError, Result};
use crate::idgen::TweetId;
use crate::tweet::{DehydratedTweet, HydratedTweet};

/// Language code used when the source record carries none.
pub const UNDETERMINED_LANG: &str = "und";

pub fn parse_created_at(text: &str) -> Result<i64, ParseError> {
    calendar::parse_created_at(text)
}

// Only the fields dehydration reads, each optional so that absence becomes a
// rejection rather than a deserialization failure.
#[derive(Debug, Deserialize)]
struct SourceRecord {
    created_at: Option<String>,
    id: Option<u64>,
    id_str: Option<String>,
    text: Option<String>,
    user: Option<SourceUser>,
    user_id_str: Option<String>,
    in_reply_to_status_id: Option<u64>,
    in_reply_to_status_id_str: Option<String>,
    in_reply_to_user_id: Option<u64>,
    in_reply_to_user_id_str: Option<String>,
    lang: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SourceUser {
    id: Option<u64>,
    id_str: Option<String>,
}

fn id_text(s: Option<String>, n: Option<u64>) -> Option<String> {
    s.or_else(|| n.map(|n| n.to_string()))
}

fn project(src: SourceRecord) -> Result<DehydratedTweet> {
    let reject = |what: &str| Error::Rejected(format!("missing {what}"));
    let id_str = id_text(src.id_str, src.id).ok_or_else(|| reject("id"))?;
    let id: TweetId = id_str.parse().map_err(|_| Error::Rejected(format!("bad id {id_str:?}")))?;
    let created_at = src.created_at.ok_or_else(|| reject("created_at"))?;
    let timestamp = parse_created_at(&created_at)
        .map_err(|e| Error::Rejected(format!("tweet {id}: {e}")))?;
    let text = src.text.ok_or_else(|| reject("text"))?;
    let user_id_str = match src.user {
        Some(user) => id_text(user.id_str, user.id),
        None => src.user_id_str,
    }
    .ok_or_else(|| reject("user id"))?;
    let reply_status = id_text(src.in_reply_to_status_id_str, src.in_reply_to_status_id);
    let reply_user = id_text(src.in_reply_to_user_id_str, src.in_reply_to_user_id);
    if reply_status.is_some() != reply_user.is_some() {
        return Err(Error::Rejected(format!("tweet {id}: reply fields must be both present or both absent")));
    }
    Ok(DehydratedTweet {
        created_at,
        id_str: id.to_string(),
        in_reply_to_status_id_str: reply_status,
        in_reply_to_user_id_str: reply_user,
        lang: src.lang.filter(|l| !l.is_empty()).unwrap_or_else(|| UNDETERMINED_LANG.to_string()),
        text,
        timestamp,
        user_id_str,
    })
}

/// Keeps the eight archive fields and drops everything else.
pub fn dehydrate(tweet: &HydratedTweet) -> Result<DehydratedTweet> {
    project(SourceRecord {
        created_at: Some(tweet.created_at.clone()),
        id: Some(tweet.id),
        id_str: Some(tweet.id_str.clone()),
        text: Some(tweet.text.clone()),
        user: Some(SourceUser { id: Some(tweet.user.id), id_str: Some(tweet.user.id_str.clone()) }),
        user_id_str: None,
        in_reply_to_status_id: tweet.in_reply_to_status_id,
        in_reply_to_status_id_str: tweet.in_reply_to_status_id_str.clone(),
        in_reply_to_user_id: tweet.in_reply_to_user_id,
        in_reply_to_user_id_str: tweet.in_reply_to_user_id_str.clone(),
        lang: tweet.lang.clone(),
    })
}

/// Dehydrates one JSON line of any tweet-shaped object, hydrated or already dehydrated.
pub fn dehydrate_json(line: &str) -> Result<DehydratedTweet> {
    let src: SourceRecord =
        serde_json::from_str(line).map_err(|e| Error::Rejected(format!("not a tweet object: {e}")))?;
    project(src)
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct DehydrateReport {
    pub files: usize,
    pub records: u64,
    pub rejected: u64,
}

/// All `*.gz` files under `dir`, sorted by path.
pub fn gz_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "gz") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn open_gz_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    Ok(BufReader::new(MultiGzDecoder::new(File::open(path)?)).lines())
}

/// Converts every gzip NDJSON file under `input` into a same-named file under `output`.
pub fn dehydrate_dir(input: &Path, output: &Path) -> Result<DehydrateReport> {
    let mut report = DehydrateReport::default();
    fs::create_dir_all(output)?;
    for path in gz_files(input)? {
        let rel = path.strip_prefix(input).unwrap_or(&path);
        let dest = output.join(rel);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut out = GzEncoder::new(BufWriter::new(File::create(&dest)?), Compression::default());
        for line in open_gz_lines(&path)? {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match dehydrate_json(&line) {
                Ok(rec) => {
                    out.write_all(rec.to_line().as_bytes())?;
                    out.write_all(b"\n")?;
                    report.records += 1;
                }
                Err(Error::Rejected(_)) => report.rejected += 1,
                Err(e) => return Err(e),
            }
        }
        out.finish()?.flush()?;
        report.files += 1;
    }
    Ok(report)
}
