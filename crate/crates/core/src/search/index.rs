//! On-disk positional index of one partition.
//!
//! ```text
//! index/<partition>/
//!   meta.json     format, counts, and the archive segments it was built from
//!   docs.bin      28 bytes per ordinal: timestamp i64, id u64, text offset u64, text length u32 (LE)
//!   text.bin      concatenated UTF-8 texts
//!   terms.bin     sorted dictionary: term, document frequency, postings offset and length
//!   postings.bin  per term, per document: Δordinal, position count, Δpositions (LEB128)
//! ```
//!
//! Ordinals run in result order, newest first, so every posting list is
//! already sorted the way results are returned.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::store::{Archive, PartitionKey, Route, Segment};

pub const FORMAT_VERSION: u32 = 1;
pub const DOC_ENTRY_BYTES: u64 = 28;
const CHUNK: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format: u32,
    pub partition: String,
    pub docs: u64,
    pub terms: u64,
    /// `[seq, records, min_ts, max_ts]` of every source segment.
    pub segments: Vec<[i64; 4]>,
}

pub(crate) fn segment_fingerprint(segments: &[Segment]) -> Vec<[i64; 4]> {
    segments.iter().map(|s| [s.seq as i64, s.record_count as i64, s.min_ts, s.max_ts]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexStats {
    pub partition: PartitionKey,
    pub docs: u64,
    pub terms: u64,
    pub postings_bytes: u64,
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(buf: &[u8], pos: &mut usize) -> Option<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *buf.get(*pos)?;
        *pos += 1;
        v |= u64::from(b & 0x7f) << shift;
        if b < 0x80 {
            return Some(v);
        }
    }
    None
}

#[derive(Default)]
struct PostingBuilder {
    bytes: Vec<u8>,
    df: u64,
    last: u64,
}

/// Builds the index of `key` from the archive, replacing any previous one.
pub fn build_partition(archive: &Archive, key: PartitionKey, index_root: &Path) -> Result<IndexStats> {
    let route = Route::Partition(key);
    let segments = archive.segments(route)?;
    let mut records = archive.scan(route)?.collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| (b.timestamp, b.id()).cmp(&(a.timestamp, a.id())));
    records.dedup_by_key(|r| (r.timestamp, r.id()));

    fs::create_dir_all(index_root)?;
    let name = key.to_string();
    let tmp = index_root.join(format!(".tmp-{name}"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;

    let mut postings: HashMap<String, PostingBuilder> = HashMap::new();
    {
        let mut docs = BufWriter::new(File::create(tmp.join("docs.bin"))?);
        let mut text = BufWriter::new(File::create(tmp.join("text.bin"))?);
        let mut text_off = 0u64;
        let mut occurrences: Vec<(String, u32)> = Vec::new();
        for (ord, rec) in records.iter().enumerate() {
            let ord = ord as u64;
            docs.write_all(&rec.timestamp.to_le_bytes())?;
            docs.write_all(&rec.id().to_le_bytes())?;
            docs.write_all(&text_off.to_le_bytes())?;
            docs.write_all(&(rec.text.len() as u32).to_le_bytes())?;
            text.write_all(rec.text.as_bytes())?;
            text_off += rec.text.len() as u64;

            occurrences.clear();
            occurrences.extend(tokenize(&rec.text).into_iter().zip(0u32..));
            occurrences.sort();
            for group in occurrences.chunk_by(|a, b| a.0 == b.0) {
                let p = postings.entry(group[0].0.clone()).or_default();
                put_varint(&mut p.bytes, if p.df == 0 { ord } else { ord - p.last });
                put_varint(&mut p.bytes, group.len() as u64);
                let mut prev = 0u32;
                for (i, (_, pos)) in group.iter().enumerate() {
                    put_varint(&mut p.bytes, u64::from(if i == 0 { *pos } else { pos - prev }));
                    prev = *pos;
                }
                p.df += 1;
                p.last = ord;
            }
        }
        docs.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        text.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }

    let mut terms: Vec<(String, PostingBuilder)> = postings.into_iter().collect();
    terms.sort_by(|a, b| a.0.cmp(&b.0));
    let mut postings_bytes = 0u64;
    {
        let mut post = BufWriter::new(File::create(tmp.join("postings.bin"))?);
        let mut dict = Vec::new();
        for (term, p) in &terms {
            put_varint(&mut dict, term.len() as u64);
            dict.extend_from_slice(term.as_bytes());
            put_varint(&mut dict, p.df);
            put_varint(&mut dict, postings_bytes);
            put_varint(&mut dict, p.bytes.len() as u64);
            post.write_all(&p.bytes)?;
            postings_bytes += p.bytes.len() as u64;
        }
        post.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        let mut f = File::create(tmp.join("terms.bin"))?;
        f.write_all(&dict)?;
        f.sync_all()?;
    }

    let meta = IndexMeta {
        format: FORMAT_VERSION,
        partition: name.clone(),
        docs: records.len() as u64,
        terms: terms.len() as u64,
        segments: segment_fingerprint(&segments),
    };
    fs::write(tmp.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;

    let dest = index_root.join(&name);
    let old = index_root.join(format!(".old-{name}"));
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    if dest.exists() {
        fs::rename(&dest, &old)?;
    }
    fs::rename(&tmp, &dest)?;
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    Ok(IndexStats { partition: key, docs: meta.docs, terms: meta.terms, postings_bytes })
}

/// Builds every partition of the archive, in parallel.
pub fn build_all(archive: &Archive, index_root: &Path) -> Result<Vec<IndexStats>> {
    use rayon::prelude::*;
    let keys = archive.partitions()?;
    keys.par_iter().map(|&k| build_partition(archive, k, index_root)).collect()
}

pub fn read_meta(dir: &Path) -> Result<Option<IndexMeta>> {
    match fs::read(dir.join("meta.json")) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes).map_err(|e| Error::CorruptIndex {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermInfo {
    pub df: u64,
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DocEntry {
    pub timestamp: i64,
    pub id: u64,
    text_off: u64,
    text_len: u32,
}

/// Read handle on one built partition. Only the term dictionary is held in
/// memory; documents, texts and postings are read on demand.
#[derive(Debug)]
pub struct PartitionIndex {
    key: PartitionKey,
    dir: PathBuf,
    meta: IndexMeta,
    docs: Arc<File>,
    text: Arc<File>,
    postings: Arc<File>,
    /// Raw terms.bin; entries point at term bytes inside it.
    dict: Vec<u8>,
    terms: Vec<(std::ops::Range<usize>, TermInfo)>,
}

impl PartitionIndex {
    pub fn open(dir: &Path, key: PartitionKey) -> Result<PartitionIndex> {
        let corrupt = |reason: String| Error::CorruptIndex { path: dir.to_path_buf(), reason };
        let meta = read_meta(dir)?.ok_or_else(|| corrupt("missing meta.json".into()))?;
        if meta.format != FORMAT_VERSION || meta.partition != key.to_string() {
            return Err(corrupt(format!("format {} for {}", meta.format, meta.partition)));
        }
        let docs = File::open(dir.join("docs.bin"))?;
        if docs.metadata()?.len() != meta.docs * DOC_ENTRY_BYTES {
            return Err(corrupt("docs.bin size disagrees with meta.json".into()));
        }
        let dict = fs::read(dir.join("terms.bin"))?;
        let mut terms = Vec::with_capacity(meta.terms as usize);
        let mut pos = 0;
        while pos < dict.len() {
            let entry = (|| {
                let len = get_varint(&dict, &mut pos)? as usize;
                std::str::from_utf8(dict.get(pos..pos + len)?).ok()?;
                let term = pos..pos + len;
                pos += len;
                let df = get_varint(&dict, &mut pos)?;
                let offset = get_varint(&dict, &mut pos)?;
                let len = get_varint(&dict, &mut pos)?;
                Some((term, TermInfo { df, offset, len }))
            })();
            terms.push(entry.ok_or_else(|| corrupt("truncated terms.bin".into()))?);
        }
        if terms.len() as u64 != meta.terms {
            return Err(corrupt("term count disagrees with meta.json".into()));
        }
        Ok(PartitionIndex {
            key,
            dir: dir.to_path_buf(),
            meta,
            docs: Arc::new(docs),
            text: Arc::new(File::open(dir.join("text.bin"))?),
            postings: Arc::new(File::open(dir.join("postings.bin"))?),
            dict,
            terms,
        })
    }

    pub fn key(&self) -> PartitionKey {
        self.key
    }

    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn doc_count(&self) -> u32 {
        self.meta.docs as u32
    }

    pub(crate) fn corrupt(&self, e: io::Error) -> Error {
        Error::CorruptIndex { path: self.dir.clone(), reason: e.to_string() }
    }

    pub fn term(&self, term: &str) -> Option<TermInfo> {
        self.terms
            .binary_search_by(|(t, _)| self.dict[t.clone()].cmp(term.as_bytes()))
            .ok()
            .map(|i| self.terms[i].1)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, TermInfo)> {
        // Validated as UTF-8 when the dictionary was loaded.
        self.terms.iter().map(|(t, i)| (std::str::from_utf8(&self.dict[t.clone()]).unwrap_or_default(), *i))
    }

    pub fn postings(&self, info: TermInfo) -> PostingStream {
        PostingStream::new(self.postings.clone(), info)
    }

    pub fn doc_reader(&self) -> ChunkReader {
        ChunkReader::new(self.docs.clone())
    }

    pub fn text_reader(&self) -> ChunkReader {
        ChunkReader::new(self.text.clone())
    }

    pub fn doc(&self, ord: u32) -> io::Result<DocEntry> {
        let mut buf = [0u8; DOC_ENTRY_BYTES as usize];
        self.docs.read_exact_at(&mut buf, u64::from(ord) * DOC_ENTRY_BYTES)?;
        Ok(decode_doc(&buf))
    }

    /// Ordinals `[lo, hi)` whose timestamps lie in `[t0, t1]`.
    pub fn ordinal_range(&self, t0: i64, t1: i64) -> io::Result<(u32, u32)> {
        // Timestamps descend with the ordinal, so both ends are partition points.
        let partition_point = |pred: &dyn Fn(i64) -> bool| -> io::Result<u32> {
            let (mut lo, mut hi) = (0u32, self.doc_count());
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if pred(self.doc(mid)?.timestamp) {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            Ok(lo)
        };
        let lo = partition_point(&|ts| ts > t1)?;
        let hi = partition_point(&|ts| ts >= t0)?;
        Ok((lo, hi.max(lo)))
    }
}

fn decode_doc(b: &[u8]) -> DocEntry {
    let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
    DocEntry {
        timestamp: u64_at(0) as i64,
        id: u64_at(8),
        text_off: u64_at(16),
        text_len: u32::from_le_bytes(b[24..28].try_into().expect("4 bytes")),
    }
}

/// Random-access reader that keeps one chunk cached, cheap for ascending access patterns.
pub struct ChunkReader {
    file: Arc<File>,
    buf: Vec<u8>,
    start: u64,
}

impl ChunkReader {
    fn new(file: Arc<File>) -> ChunkReader {
        ChunkReader { file, buf: Vec::new(), start: 0 }
    }

    fn bytes(&mut self, off: u64, len: usize) -> io::Result<&[u8]> {
        let cached = off >= self.start && off + len as u64 <= self.start + self.buf.len() as u64;
        if !cached {
            let size = len.max(CHUNK);
            self.buf.resize(size, 0);
            let mut filled = 0;
            while filled < size {
                let n = self.file.read_at(&mut self.buf[filled..], off + filled as u64)?;
                if n == 0 {
                    break;
                }
                filled += n;
            }
            if filled < len {
                return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "read past end of index file"));
            }
            self.buf.truncate(filled);
            self.start = off;
        }
        let i = (off - self.start) as usize;
        Ok(&self.buf[i..i + len])
    }

    pub fn doc(&mut self, ord: u32) -> io::Result<DocEntry> {
        let b = self.bytes(u64::from(ord) * DOC_ENTRY_BYTES, DOC_ENTRY_BYTES as usize)?;
        Ok(decode_doc(b))
    }

    pub fn text(&mut self, doc: &DocEntry) -> io::Result<String> {
        let b = self.bytes(doc.text_off, doc.text_len as usize)?;
        String::from_utf8(b.to_vec()).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

/// Sequential decoder over one term's posting list.
pub struct PostingStream {
    file: Arc<File>,
    next_read: u64,
    end: u64,
    buf: Vec<u8>,
    pos: usize,
    remaining: u64,
    last: u32,
    started: bool,
}

impl PostingStream {
    fn new(file: Arc<File>, info: TermInfo) -> PostingStream {
        PostingStream {
            file,
            next_read: info.offset,
            end: info.offset + info.len,
            buf: Vec::new(),
            pos: 0,
            remaining: info.df,
            last: 0,
            started: false,
        }
    }

    fn byte(&mut self) -> io::Result<u8> {
        if self.pos == self.buf.len() {
            let want = (self.end - self.next_read).min(CHUNK as u64) as usize;
            if want == 0 {
                return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "posting list overruns its extent"));
            }
            self.buf.resize(want, 0);
            self.file.read_exact_at(&mut self.buf, self.next_read)?;
            self.next_read += want as u64;
            self.pos = 0;
        }
        self.pos += 1;
        Ok(self.buf[self.pos - 1])
    }

    fn varint(&mut self) -> io::Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            v |= u64::from(b & 0x7f) << shift;
            if b < 0x80 {
                return Ok(v);
            }
        }
        Err(io::Error::new(io::ErrorKind::InvalidData, "varint too long"))
    }

    /// Next (ordinal, positions); positions are written into `positions`.
    pub fn next_doc(&mut self, positions: &mut Vec<u32>) -> io::Result<Option<u32>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let delta = self.varint()? as u32;
        let ord = if self.started { self.last + delta } else { delta };
        self.remaining -= 1;
        self.last = ord;
        self.started = true;
        let n = self.varint()?;
        positions.clear();
        let mut p = 0u32;
        for i in 0..n {
            let d = self.varint()? as u32;
            p = if i == 0 { d } else { p + d };
            positions.push(p);
        }
        Ok(Some(ord))
    }
}
