//! Partition layout: all of 2006 in one partition, one per calendar month
//! for 2007 and 2008, one per ISO week for 2009.

use std::fmt;
use std::str::FromStr;

use crate::calendar::{days_from_civil, Date, MS_PER_DAY};
use crate::error::{Error, ParseError, Result};

/// 2006-03-01T00:00:00Z.
pub const ARCHIVE_START_MS: i64 = 1_141_171_200_000;
/// 2009-08-01T00:00:00Z, exclusive.
pub const ARCHIVE_END_MS: i64 = 1_249_084_800_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartitionKey {
    Year2006,
    Month { year: i32, month: u32 },
    Week2009(u32),
}

impl fmt::Display for PartitionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionKey::Year2006 => f.write_str("2006"),
            PartitionKey::Month { year, month } => write!(f, "{year}-{month:02}"),
            PartitionKey::Week2009(w) => write!(f, "2009-W{w:02}"),
        }
    }
}

impl FromStr for PartitionKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<PartitionKey> {
        let err = || Error::from(ParseError::new("partition key", s));
        if s == "2006" {
            return Ok(PartitionKey::Year2006);
        }
        if let Some(w) = s.strip_prefix("2009-W") {
            let w: u32 = w.parse().map_err(|_| err())?;
            return if (1..=53).contains(&w) && s.len() == 8 { Ok(PartitionKey::Week2009(w)) } else { Err(err()) };
        }
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        if (year == 2007 || year == 2008) && (1..=12).contains(&month) && m.len() == 2 {
            Ok(PartitionKey::Month { year, month })
        } else {
            Err(err())
        }
    }
}

/// Half-open time window `[start, end)` the archive accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchiveBounds {
    pub start: i64,
    pub end: i64,
}

impl Default for ArchiveBounds {
    fn default() -> Self {
        ArchiveBounds { start: ARCHIVE_START_MS, end: ARCHIVE_END_MS }
    }
}

impl ArchiveBounds {
    /// Bounds must lie inside 2006-01-01 .. 2009-08-01 where the layout is defined.
    pub fn new(start: i64, end: i64) -> Result<ArchiveBounds> {
        let floor = days_from_civil(2006, 1, 1) * MS_PER_DAY;
        if start >= end || start < floor || end > ARCHIVE_END_MS {
            return Err(Error::invalid(format!("archive bounds {start}..{end} outside the partition layout")));
        }
        Ok(ArchiveBounds { start, end })
    }

    pub fn contains(&self, ts: i64) -> bool {
        (self.start..self.end).contains(&ts)
    }

    /// Partition of `ts`, or `None` when it falls outside the bounds.
    pub fn partition_key(&self, ts: i64) -> Option<PartitionKey> {
        if !self.contains(ts) {
            return None;
        }
        let date = Date::from_days(ts.div_euclid(MS_PER_DAY));
        Some(match date.year {
            2006 => PartitionKey::Year2006,
            2007 | 2008 => PartitionKey::Month { year: date.year, month: date.month },
            _ => {
                let (iso_year, week) = date.iso_week();
                debug_assert_eq!(iso_year, 2009, "Jan 1..Jul 31 2009 all fall in ISO year 2009");
                PartitionKey::Week2009(week)
            }
        })
    }

    /// The `[start, end)` span of `key`, clipped to these bounds.
    pub fn span(&self, key: PartitionKey) -> (i64, i64) {
        let (s, e) = match key {
            PartitionKey::Year2006 => (days_from_civil(2006, 1, 1), days_from_civil(2007, 1, 1)),
            PartitionKey::Month { year, month } => {
                let next = if month == 12 { days_from_civil(year + 1, 1, 1) } else { days_from_civil(year, month + 1, 1) };
                (days_from_civil(year, month, 1), next)
            }
            PartitionKey::Week2009(w) => {
                // Monday of ISO week 1 of 2009 is 2008-12-29; calendar 2009 starts on the Thursday.
                let monday = days_from_civil(2008, 12, 29) + 7 * (w as i64 - 1);
                (monday.max(days_from_civil(2009, 1, 1)), monday + 7)
            }
        };
        ((s * MS_PER_DAY).max(self.start), (e * MS_PER_DAY).min(self.end))
    }

    /// Every partition within the bounds, in time order.
    pub fn all_keys(&self) -> Vec<PartitionKey> {
        let mut keys = Vec::new();
        let mut t = self.start;
        while t < self.end {
            let key = self.partition_key(t).expect("t is in bounds");
            keys.push(key);
            t = self.span(key).1;
        }
        keys
    }

    /// Keys whose span intersects the closed interval `[t0, t1]`.
    pub fn partitions_for_range(&self, t0: i64, t1: i64) -> Vec<PartitionKey> {
        if t0 > t1 {
            return Vec::new();
        }
        self.all_keys()
            .into_iter()
            .filter(|&k| {
                let (s, e) = self.span(k);
                s <= t1 && t0 < e
            })
            .collect()
    }
}

pub fn partition_key(ts: i64) -> Option<PartitionKey> {
    ArchiveBounds::default().partition_key(ts)
}

pub fn partitions_for_range(t0: i64, t1: i64) -> Vec<PartitionKey> {
    ArchiveBounds::default().partitions_for_range(t0, t1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{parse_instant, MS_PER_WEEK as WEEK_MS};
    use proptest::prelude::*;

    fn at(s: &str) -> i64 {
        parse_instant(s).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(partition_key(at("2006-07-15T12:00:00Z")), Some(PartitionKey::Year2006));
        assert_eq!(partition_key(at("2008-11-04T00:00:00Z")), Some(PartitionKey::Month { year: 2008, month: 11 }));
        assert_eq!(partition_key(at("2009-02-10T00:00:00Z")), Some(PartitionKey::Week2009(7)));
        assert_eq!(partition_key(at("2009-01-01")), Some(PartitionKey::Week2009(1)));
        assert_eq!(partition_key(at("2009-07-31T23:59:59Z")), Some(PartitionKey::Week2009(31)));
        assert_eq!(partition_key(at("2009-08-01")), None);
        assert_eq!(partition_key(at("2006-02-28")), None);
        assert_eq!(ARCHIVE_START_MS, at("2006-03-01"));
        assert_eq!(ARCHIVE_END_MS, at("2009-08-01"));
    }

    #[test]
    fn layout_size() {
        let keys = ArchiveBounds::default().all_keys();
        assert_eq!(keys.len(), 1 + 24 + 31);
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(keys[0], PartitionKey::Year2006);
        assert_eq!(*keys.last().unwrap(), PartitionKey::Week2009(31));
    }

    #[test]
    fn range_examples() {
        let weeks = partitions_for_range(at("2009-01-05"), at("2009-01-25"));
        assert_eq!(weeks, [PartitionKey::Week2009(2), PartitionKey::Week2009(3), PartitionKey::Week2009(4)]);
        assert_eq!(partitions_for_range(at("2008-06-01"), at("2008-06-30")), [PartitionKey::Month { year: 2008, month: 6 }]);
        assert_eq!(partitions_for_range(ARCHIVE_START_MS, ARCHIVE_END_MS - 1).len(), 56);
        assert!(partitions_for_range(5, 4).is_empty());
    }

    #[test]
    fn key_text_roundtrip() {
        for k in ArchiveBounds::default().all_keys() {
            assert_eq!(k.to_string().parse::<PartitionKey>().unwrap(), k);
        }
        assert_eq!(PartitionKey::Week2009(7).to_string(), "2009-W07");
        assert_eq!(PartitionKey::Month { year: 2007, month: 3 }.to_string(), "2007-03");
        for bad in ["2005", "2009-W7", "2006-01", "2007-13", "x"] {
            assert!(bad.parse::<PartitionKey>().is_err(), "{bad}");
        }
    }

    #[test]
    fn spans_tile_the_archive() {
        let b = ArchiveBounds::default();
        let keys = b.all_keys();
        assert_eq!(b.span(keys[0]).0, b.start);
        for w in keys.windows(2) {
            assert_eq!(b.span(w[0]).1, b.span(w[1]).0);
        }
        assert_eq!(b.span(*keys.last().unwrap()).1, b.end);
    }

    proptest! {
        #[test]
        fn every_instant_has_one_key(ts in ARCHIVE_START_MS..ARCHIVE_END_MS, dt in 0i64..50 * WEEK_MS) {
            let b = ArchiveBounds::default();
            let k = b.partition_key(ts).unwrap();
            let (s, e) = b.span(k);
            prop_assert!(s <= ts && ts < e);
            let later = (ts + dt).min(ARCHIVE_END_MS - 1);
            prop_assert!(b.partition_key(later).unwrap() >= k);
        }
    }
}
