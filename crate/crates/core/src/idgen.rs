//! Candidate tweet-id generation.
//!
//! Early tweet ids were handed out sequentially, sometimes in steps of ten,
//! with unused gaps in between. [`RangeTable::builtin`] carries the known
//! progressions; [`enumerate`] streams them in O(1) memory and [`count`]
//! sizes them without enumerating. [`IdSource`] unifies the table, the
//! exhaustive `1..=N` fallback and explicit id lists so that fetch workers
//! can shard and resume by offset.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, ParseError, Result};

/// Largest id any table may reference: the end of the exhaustive fallback range.
pub const MAX_TWEET_ID: u64 = 3_061_014_649;

/// Last id of the collection window (midnight between 2009-07-31 and 2009-08-01).
pub const ARCHIVE_END_ID: u64 = 3_061_013_977;

/// The lookup endpoint's batch ceiling.
pub const MAX_BATCH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TweetId(u64);

impl TweetId {
    pub fn new(value: u64) -> Result<TweetId> {
        if (1..=MAX_TWEET_ID).contains(&value) {
            Ok(TweetId(value))
        } else {
            Err(Error::invalid(format!("tweet id {value} outside 1..={MAX_TWEET_ID}")))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for TweetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for TweetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<TweetId> {
        let v = s.trim().parse::<u64>().map_err(|_| ParseError::new("tweet id", s))?;
        TweetId::new(v)
    }
}

/// An Octave-style `start:step:end` progression; `end` is an inclusive bound
/// that the progression need not land on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdRange {
    pub start: u64,
    pub step: u64,
    pub end: u64,
}

impl IdRange {
    pub fn new(start: u64, step: u64, end: u64) -> Result<IdRange> {
        if step == 0 {
            return Err(Error::invalid(format!("{start}:{step}:{end}: step must be positive")));
        }
        if start == 0 || start > end || end > MAX_TWEET_ID {
            return Err(Error::invalid(format!("{start}:{step}:{end}: need 1 <= start <= end <= {MAX_TWEET_ID}")));
        }
        Ok(IdRange { start, step, end })
    }

    pub fn len(&self) -> u64 {
        (self.end - self.start) / self.step + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> u64 {
        self.start + self.step * ((self.end - self.start) / self.step)
    }

    pub fn contains(&self, id: u64) -> bool {
        id >= self.start && id <= self.end && (id - self.start).is_multiple_of(self.step)
    }
}

impl fmt::Display for IdRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.step == 1 {
            write!(f, "{}:{}", self.start, self.end)
        } else {
            write!(f, "{}:{}:{}", self.start, self.step, self.end)
        }
    }
}

impl FromStr for IdRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<IdRange> {
        let nums = s
            .trim()
            .split(':')
            .map(|p| p.trim().parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| ParseError::new("id range", s))?;
        match nums[..] {
            [start, end] => IdRange::new(start, 1, end),
            [start, step, end] => IdRange::new(start, step, end),
            _ => Err(ParseError::new("id range", s).into()),
        }
    }
}

const BUILTIN_TABLE: &str = "\
20:81803
81803:10:5317478
5317478:5951471
5951471:10:33659941
33659941:34051542
34051542:10:749778882
749778882:797700951
797700951:10:798082536
798082536:861278101
861278101:10:861796399
861796399:907582571
907582571:10:907936108
907936108:10:908894500
908894500:920578209
920578209:10:920903970
920903970:948996649
948996649:10:950233829
950233829:957352345
957352345:10:957603791
957603791:989085799
989085799:10:989696020
989696020:1062054690
1062054690:10:1062633411
1062633411:1063043430
1063043430:10:1067177961
1067177961:1268484169
1268484169:10:1268752486
1268752486:1276604442
1276604442:10:1278491542
1278491542:1305643870
1305643870:10:1308469567
1308469567:1337207851
1337207851:10:1337561777
1337561777:1341303857
1341303857:10:1341654616
1341654616:1347134019
1347134019:10:1347350683
1347350683:1358197730
1358197730:10:1358777850
1358777850:1365719225
1365719225:10:1365920715
1365920715:1433622936
1433622936:10:1434276794
1434276794:1445739899
1445739899:10:1445939272
1445939272:1467920729
1467920729:10:1469118986
1469118986:1469829667
1469829667:10:1470202281
1470202281:1476157039
1476157039:10:1477122821
1477122821:1489587493
1489587493:10:1490448333
1490448333:1494130684
1494130684:10:1496083713
1496083713:1682400687
1682400687:10:1690038860
1690038860:1711490733
1711490733:10:1711821385
1711821385:1726965818
1726965818:10:1727193439
1727193439:1734319873
1734319873:10:1735002265
1735002265:1986606277
1986606277:10:1986848681
1986848681:2023225505
2023225505:10:2023747452
2023747452:2048511605
2048511605:10:2051073819
2051073819:2111076679
2111076679:10:2113946682
2113946682:2130679870
2130679870:10:2136747540
2136747540:2202236683
2202236683:10:2202553995
2202553995:2313545593
2313545593:10:2322204712
2322204712:2408271108
2408271108:10:2416149025
2416149025:2453681374
2453681374:10:2458487491
2458487491:2486851754
2486851754:10:2490430312
2490430312:2530881466
2530881466:10:2548066056
2548066056:2831755333
2831755333:10:2851555775
2851555775:3061014649
";

/// How adjacent ranges that share a boundary value are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DedupPolicy {
    /// Plain concatenation, as Octave's `[a:b, b:c]` would produce.
    EmitRaw,
    /// Drop a range's first id when the previous range already emitted it.
    #[default]
    DedupBoundaries,
}

impl FromStr for DedupPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<DedupPolicy> {
        match s {
            "raw" | "emit-raw" => Ok(DedupPolicy::EmitRaw),
            "dedup" | "dedup-boundaries" => Ok(DedupPolicy::DedupBoundaries),
            other => Err(Error::invalid(format!("unknown dedup policy {other:?}"))),
        }
    }
}

/// Ordered, chained list of id progressions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeTable {
    ranges: Vec<IdRange>,
}

impl RangeTable {
    pub fn new(ranges: Vec<IdRange>) -> Result<RangeTable> {
        if ranges.is_empty() {
            return Err(Error::invalid("range table is empty"));
        }
        for (i, pair) in ranges.windows(2).enumerate() {
            if pair[1].start != pair[0].end {
                return Err(Error::invalid(format!(
                    "range {} ({}) does not start where range {} ({}) ends",
                    i + 1,
                    pair[1],
                    i,
                    pair[0]
                )));
            }
        }
        Ok(RangeTable { ranges })
    }

    /// The built-in table of known id progressions for 2006 to mid-2009.
    pub fn builtin() -> RangeTable {
        RangeTable::parse(BUILTIN_TABLE).expect("built-in table is valid")
    }

    /// Parses one `start:end` or `start:step:end` per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<RangeTable> {
        let ranges = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<IdRange>>>()?;
        RangeTable::new(ranges)
    }

    pub fn render(&self) -> String {
        self.ranges.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn ranges(&self) -> &[IdRange] {
        &self.ranges
    }

    /// Whether `id` lies on any of the table's progressions.
    pub fn contains(&self, id: u64) -> bool {
        // Ranges are chained, so at most two can hold `id` (a shared boundary).
        let idx = self.ranges.partition_point(|r| r.end < id);
        self.ranges[idx.min(self.ranges.len() - 1)..]
            .iter()
            .take(2)
            .any(|r| r.contains(id))
    }

    pub fn sequence(&self, policy: DedupPolicy) -> IdSequence {
        let mut segments = Vec::with_capacity(self.ranges.len());
        let mut offset = 0u64;
        let mut prev_last: Option<u64> = None;
        for r in &self.ranges {
            let skip = policy == DedupPolicy::DedupBoundaries && prev_last == Some(r.start);
            let first = if skip { r.start + r.step } else { r.start };
            let len = r.len() - skip as u64;
            if len > 0 {
                segments.push(Segment { offset, first, step: r.step, len });
                offset += len;
            }
            prev_last = Some(r.last());
        }
        IdSequence { segments: segments.into(), len: offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Segment {
    offset: u64,
    first: u64,
    step: u64,
    len: u64,
}

/// A range table resolved under a dedup policy: random access by position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdSequence {
    segments: Arc<[Segment]>,
    len: u64,
}

impl IdSequence {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The id at `position`, in O(log ranges).
    pub fn get(&self, position: u64) -> Option<u64> {
        let (seg, within) = self.locate(position)?;
        let s = &self.segments[seg];
        Some(s.first + s.step * within)
    }

    fn locate(&self, position: u64) -> Option<(usize, u64)> {
        if position >= self.len {
            return None;
        }
        let seg = self.segments.partition_point(|s| s.offset <= position) - 1;
        Some((seg, position - self.segments[seg].offset))
    }
}

/// Any ordered stream of candidate ids that supports positional access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdSource {
    Table(IdSequence),
    /// Every integer in `start..=end`.
    Full { start: u64, end: u64 },
    List(Arc<[u64]>),
}

impl IdSource {
    pub fn table(table: &RangeTable, policy: DedupPolicy) -> IdSource {
        IdSource::Table(table.sequence(policy))
    }

    pub fn full(start: u64, end: u64) -> Result<IdSource> {
        if start == 0 || start > end {
            return Err(Error::invalid(format!("bad id interval {start}..={end}")));
        }
        Ok(IdSource::Full { start, end })
    }

    pub fn list(ids: Vec<u64>) -> IdSource {
        IdSource::List(ids.into())
    }

    pub fn len(&self) -> u64 {
        match self {
            IdSource::Table(seq) => seq.len(),
            IdSource::Full { start, end } => end - start + 1,
            IdSource::List(ids) => ids.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, position: u64) -> Option<u64> {
        match self {
            IdSource::Table(seq) => seq.get(position),
            IdSource::Full { start, end } => {
                (position <= end - start).then(|| start + position)
            }
            IdSource::List(ids) => ids.get(position as usize).copied(),
        }
    }

    pub fn iter(&self) -> IdIter {
        self.iter_range(0, self.len())
    }

    /// Streams `len` ids starting at `offset` (clamped to the source).
    pub fn iter_range(&self, offset: u64, len: u64) -> IdIter {
        let end = offset.saturating_add(len).min(self.len());
        let mut it = IdIter { source: self.clone(), pos: offset.min(end), end, cursor: None };
        it.seek();
        it
    }
}

/// Streaming iterator over an [`IdSource`]; `nth` is O(log ranges), so
/// `skip` is cheap even across billions of ids.
#[derive(Debug, Clone)]
pub struct IdIter {
    source: IdSource,
    pos: u64,
    end: u64,
    // (segment index, next value, ids left in segment) for table sources
    cursor: Option<(usize, u64, u64)>,
}

impl IdIter {
    fn seek(&mut self) {
        self.cursor = match &self.source {
            IdSource::Table(seq) => seq.locate(self.pos).map(|(seg, within)| {
                let s = &seq.segments[seg];
                (seg, s.first + s.step * within, s.len - within)
            }),
            _ => None,
        };
    }

    /// Absolute position of the next id in the underlying source.
    pub fn position(&self) -> u64 {
        self.pos
    }
}

impl Iterator for IdIter {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.pos >= self.end {
            return None;
        }
        let value = match &self.source {
            IdSource::Table(seq) => {
                let (seg, value, left) = self.cursor.as_mut()?;
                let out = *value;
                *left -= 1;
                if *left == 0 {
                    *seg += 1;
                    if let Some(s) = seq.segments.get(*seg) {
                        *value = s.first;
                        *left = s.len;
                    }
                } else {
                    *value += seq.segments[*seg].step;
                }
                out
            }
            IdSource::Full { start, .. } => start + self.pos,
            IdSource::List(ids) => ids[self.pos as usize],
        };
        self.pos += 1;
        Some(value)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.pos) as usize;
        (left, Some(left))
    }

    fn nth(&mut self, n: usize) -> Option<u64> {
        self.pos = self.pos.saturating_add(n as u64).min(self.end);
        self.seek();
        self.next()
    }
}

impl ExactSizeIterator for IdIter {}

/// Streams the table's ids in order.
pub fn enumerate(table: &RangeTable, policy: DedupPolicy) -> IdIter {
    IdSource::table(table, policy).iter()
}

/// Number of ids [`enumerate`] would yield, in closed form.
pub fn count(table: &RangeTable, policy: DedupPolicy) -> u64 {
    table.sequence(policy).len()
}

/// The exhaustive fallback: every id in `start..=end`.
pub fn enumerate_full(start: TweetId, end: TweetId) -> Result<IdIter> {
    Ok(IdSource::full(start.get(), end.get())?.iter())
}

/// A contiguous block of a source assigned to one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub index: usize,
    pub source: IdSource,
    pub offset: u64,
    pub len: u64,
}

impl Shard {
    pub fn iter(&self) -> IdIter {
        self.source.iter_range(self.offset, self.len)
    }

    /// Ids of this shard starting `skip` ids into it.
    pub fn iter_from(&self, skip: u64) -> IdIter {
        self.source.iter_range(self.offset + skip.min(self.len), self.len - skip.min(self.len))
    }
}

/// Splits `source` into `n_workers` contiguous blocks whose sizes differ by at most one.
pub fn shard(source: &IdSource, n_workers: usize) -> Result<Vec<Shard>> {
    if n_workers == 0 {
        return Err(Error::invalid("n_workers must be at least 1"));
    }
    let total = source.len();
    let n = n_workers as u64;
    let (base, extra) = (total / n, total % n);
    let mut offset = 0;
    Ok((0..n_workers)
        .map(|index| {
            let len = base + u64::from((index as u64) < extra);
            let shard = Shard { index, source: source.clone(), offset, len };
            offset += len;
            shard
        })
        .collect())
}

/// Groups an id stream into lookup-sized batches.
pub struct Batches<I> {
    inner: I,
    size: usize,
}

impl<I: Iterator<Item = u64>> Iterator for Batches<I> {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        let batch: Vec<u64> = self.inner.by_ref().take(self.size).collect();
        (!batch.is_empty()).then_some(batch)
    }
}

pub fn batch<I: IntoIterator<Item = u64>>(ids: I, size: usize) -> Result<Batches<I::IntoIter>> {
    if !(1..=MAX_BATCH).contains(&size) {
        return Err(Error::invalid(format!("batch size {size} outside 1..={MAX_BATCH}")));
    }
    Ok(Batches { inner: ids.into_iter(), size })
}
