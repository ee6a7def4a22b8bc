//! Destinations for collected tweets.
//!
//! A sink must be able to report a durable position after each batch and
//! rewind to such a position on restart, which is what makes a resumed
//! campaign produce exactly the bytes an uninterrupted one would.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tweet::HydratedTweet;

/// Records per output file: the 5-million-tweet bulk unit.
pub const DEFAULT_ROLL_RECORDS: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkPosition {
    pub file_seq: u32,
    pub file_bytes: u64,
    pub file_records: u64,
    pub total_records: u64,
}

pub trait Sink {
    fn append(&mut self, tweets: &[HydratedTweet]) -> Result<()>;
    /// Makes everything appended so far durable and returns the position.
    fn commit(&mut self) -> Result<SinkPosition>;
    /// Discards anything written after `pos`.
    fn restore(&mut self, pos: &SinkPosition) -> Result<()>;
}

impl<S: Sink + ?Sized> Sink for &mut S {
    fn append(&mut self, tweets: &[HydratedTweet]) -> Result<()> {
        (**self).append(tweets)
    }
    fn commit(&mut self) -> Result<SinkPosition> {
        (**self).commit()
    }
    fn restore(&mut self, pos: &SinkPosition) -> Result<()> {
        (**self).restore(pos)
    }
}

#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub tweets: Vec<HydratedTweet>,
}

impl Sink for MemorySink {
    fn append(&mut self, tweets: &[HydratedTweet]) -> Result<()> {
        self.tweets.extend_from_slice(tweets);
        Ok(())
    }

    fn commit(&mut self) -> Result<SinkPosition> {
        let n = self.tweets.len() as u64;
        Ok(SinkPosition { file_records: n, total_records: n, ..SinkPosition::default() })
    }

    fn restore(&mut self, pos: &SinkPosition) -> Result<()> {
        self.tweets.truncate(pos.total_records as usize);
        Ok(())
    }
}

/// Append-only gzip NDJSON files, `<prefix>-<seq>.ndjson.gz`, rolled every
/// `roll_records` records. Each append is its own gzip member, so files can
/// be truncated back to any committed batch boundary.
#[derive(Debug)]
pub struct GzRollingSink {
    dir: PathBuf,
    prefix: String,
    roll_records: u64,
    pos: SinkPosition,
    file: Option<File>,
}

impl GzRollingSink {
    pub fn new(dir: &Path, prefix: &str, roll_records: u64) -> Result<GzRollingSink> {
        fs::create_dir_all(dir)?;
        Ok(GzRollingSink {
            dir: dir.to_path_buf(),
            prefix: prefix.to_string(),
            roll_records: roll_records.max(1),
            pos: SinkPosition::default(),
            file: None,
        })
    }

    pub fn file_path(&self, seq: u32) -> PathBuf {
        self.dir.join(format!("{}-{seq:06}.ndjson.gz", self.prefix))
    }

    fn current(&mut self) -> Result<&mut File> {
        if self.file.is_none() {
            let f = OpenOptions::new().create(true).append(true).open(self.file_path(self.pos.file_seq))?;
            self.file = Some(f);
        }
        Ok(self.file.as_mut().expect("opened above"))
    }

    fn write_member(&mut self, tweets: &[HydratedTweet]) -> Result<()> {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        for t in tweets {
            serde_json::to_writer(&mut enc, t)?;
            enc.write_all(b"\n")?;
        }
        let bytes = enc.finish()?;
        self.current()?.write_all(&bytes)?;
        self.pos.file_bytes += bytes.len() as u64;
        self.pos.file_records += tweets.len() as u64;
        self.pos.total_records += tweets.len() as u64;
        Ok(())
    }

    fn roll(&mut self) -> Result<()> {
        if let Some(f) = self.file.take() {
            f.sync_all()?;
        }
        self.pos.file_seq += 1;
        self.pos.file_bytes = 0;
        self.pos.file_records = 0;
        Ok(())
    }
}

impl Sink for GzRollingSink {
    fn append(&mut self, mut tweets: &[HydratedTweet]) -> Result<()> {
        while !tweets.is_empty() {
            let room = (self.roll_records - self.pos.file_records) as usize;
            let (now, rest) = tweets.split_at(room.min(tweets.len()));
            self.write_member(now)?;
            tweets = rest;
            if self.pos.file_records == self.roll_records {
                self.roll()?;
            }
        }
        Ok(())
    }

    fn commit(&mut self) -> Result<SinkPosition> {
        if let Some(f) = self.file.as_mut() {
            f.flush()?;
            f.sync_data()?;
        }
        Ok(self.pos)
    }

    fn restore(&mut self, pos: &SinkPosition) -> Result<()> {
        self.file = None;
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let seq = name
                .strip_prefix(&format!("{}-", self.prefix))
                .and_then(|r| r.strip_suffix(".ndjson.gz"))
                .and_then(|s| s.parse::<u32>().ok());
            if matches!(seq, Some(s) if s > pos.file_seq) {
                fs::remove_file(&path)?;
            }
        }
        let current = self.file_path(pos.file_seq);
        if current.exists() || pos.file_bytes > 0 {
            let f = OpenOptions::new().create(true).write(true).truncate(false).open(&current)?;
            f.set_len(pos.file_bytes)?;
            f.sync_all()?;
        }
        self.pos = *pos;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dehydrator::open_gz_lines;
    use crate::mockhose::{Corpus, CorpusSpec};

    fn tweets(n: usize) -> Vec<HydratedTweet> {
        let c = Corpus::new(CorpusSpec { existence_rate: 1.0, ..CorpusSpec::default() }).unwrap();
        (20..).filter_map(|id| c.gen_tweet(id)).take(n).collect()
    }

    fn read_ids(path: &Path) -> Vec<u64> {
        open_gz_lines(path)
            .unwrap()
            .map(|l| serde_json::from_str::<HydratedTweet>(&l.unwrap()).unwrap().id)
            .collect()
    }

    #[test]
    fn rolls_at_exact_record_counts() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = GzRollingSink::new(dir.path(), "w", 5).unwrap();
        let all = tweets(12);
        sink.append(&all[..3]).unwrap();
        sink.append(&all[3..12]).unwrap();
        let pos = sink.commit().unwrap();
        assert_eq!((pos.file_seq, pos.file_records, pos.total_records), (2, 2, 12));
        let ids: Vec<u64> = (0..3).flat_map(|s| read_ids(&sink.file_path(s))).collect();
        assert_eq!(ids, all.iter().map(|t| t.id).collect::<Vec<_>>());
        assert_eq!(read_ids(&sink.file_path(0)).len(), 5);
    }

    #[test]
    fn restore_truncates_to_committed_batch() {
        let dir = tempfile::tempdir().unwrap();
        let all = tweets(9);
        let mut sink = GzRollingSink::new(dir.path(), "w", 4).unwrap();
        sink.append(&all[..3]).unwrap();
        let pos = sink.commit().unwrap();
        sink.append(&all[3..9]).unwrap();
        sink.commit().unwrap();

        let mut resumed = GzRollingSink::new(dir.path(), "w", 4).unwrap();
        resumed.restore(&pos).unwrap();
        assert!(!resumed.file_path(1).exists());
        resumed.append(&all[3..9]).unwrap();
        resumed.commit().unwrap();
        let ids: Vec<u64> = (0..3).flat_map(|s| read_ids(&resumed.file_path(s))).collect();
        assert_eq!(ids, all.iter().map(|t| t.id).collect::<Vec<_>>());
    }

    #[test]
    fn memory_sink_restore() {
        let mut sink = MemorySink::default();
        let all = tweets(4);
        sink.append(&all[..2]).unwrap();
        let pos = sink.commit().unwrap();
        sink.append(&all[2..]).unwrap();
        sink.restore(&pos).unwrap();
        assert_eq!(sink.tweets.len(), 2);
    }
}
