//! Proleptic Gregorian calendar arithmetic on UTC epoch milliseconds.
//!
//! Everything in the archive is keyed by epoch milliseconds; this module
//! converts between that and civil dates, ISO weeks and the two text
//! renderings the toolkit uses (the classic tweet `created_at` format and
//! ISO-8601).

use crate::error::ParseError;

pub const MS_PER_SECOND: i64 = 1_000;
pub const MS_PER_DAY: i64 = 86_400_000;
pub const MS_PER_WEEK: i64 = 7 * MS_PER_DAY;

pub const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
pub const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

/// A calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    pub year: i32,
    pub month: u32,
    pub day: u32,
}

impl Date {
    pub fn new(year: i32, month: u32, day: u32) -> Option<Date> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(Date { year, month, day })
    }

    /// Days since 1970-01-01.
    pub fn to_days(self) -> i64 {
        days_from_civil(self.year, self.month, self.day)
    }

    pub fn from_days(days: i64) -> Date {
        let (year, month, day) = civil_from_days(days);
        Date { year, month, day }
    }

    /// Epoch milliseconds of this date's midnight UTC.
    pub fn midnight_ms(self) -> i64 {
        self.to_days() * MS_PER_DAY
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn weekday(self) -> u32 {
        weekday_from_days(self.to_days())
    }

    /// ISO-8601 (year, week) pair.
    pub fn iso_week(self) -> (i32, u32) {
        let days = self.to_days();
        // The Thursday of this date's week decides the ISO year.
        let thursday = days - self.weekday() as i64 + 3;
        let iso_year = Date::from_days(thursday).year;
        let jan1 = days_from_civil(iso_year, 1, 1);
        let week = ((thursday - jan1) / 7 + 1) as u32;
        (iso_year, week)
    }
}

pub fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

// Hinnant's days_from_civil / civil_from_days, shifted so the era starts in March.
pub fn days_from_civil(year: i32, month: u32, day: u32) -> i64 {
    let y = if month <= 2 { year as i64 - 1 } else { year as i64 };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = month as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

pub fn civil_from_days(days: i64) -> (i32, u32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let year = (yoe + era * 400 + if month <= 2 { 1 } else { 0 }) as i32;
    (year, month, day)
}

pub fn weekday_from_days(days: i64) -> u32 {
    // 1970-01-01 was a Thursday.
    (days + 3).rem_euclid(7) as u32
}

/// Broken-down UTC time of an epoch-ms instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateTime {
    pub date: Date,
    pub hour: u32,
    pub minute: u32,
    pub second: u32,
    pub milli: u32,
}

impl DateTime {
    pub fn from_ms(ms: i64) -> DateTime {
        let days = ms.div_euclid(MS_PER_DAY);
        let rem = ms.rem_euclid(MS_PER_DAY);
        DateTime {
            date: Date::from_days(days),
            hour: (rem / 3_600_000) as u32,
            minute: (rem / 60_000 % 60) as u32,
            second: (rem / 1_000 % 60) as u32,
            milli: (rem % 1_000) as u32,
        }
    }

    pub fn to_ms(self) -> i64 {
        self.date.midnight_ms()
            + self.hour as i64 * 3_600_000
            + self.minute as i64 * 60_000
            + self.second as i64 * 1_000
            + self.milli as i64
    }
}

/// Day start (UTC midnight) containing `ms`.
pub fn floor_day(ms: i64) -> i64 {
    ms.div_euclid(MS_PER_DAY) * MS_PER_DAY
}

/// Monday midnight of the ISO week containing `ms`.
pub fn floor_week(ms: i64) -> i64 {
    let days = ms.div_euclid(MS_PER_DAY);
    (days - weekday_from_days(days) as i64) * MS_PER_DAY
}

/// First-of-month midnight containing `ms`.
pub fn floor_month(ms: i64) -> i64 {
    let d = Date::from_days(ms.div_euclid(MS_PER_DAY));
    days_from_civil(d.year, d.month, 1) * MS_PER_DAY
}

/// First-of-month midnight following the month containing `ms`.
pub fn next_month(ms: i64) -> i64 {
    let d = Date::from_days(ms.div_euclid(MS_PER_DAY));
    let (y, m) = if d.month == 12 { (d.year + 1, 1) } else { (d.year, d.month + 1) };
    days_from_civil(y, m, 1) * MS_PER_DAY
}

/// Time bucket width for series and counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Granularity {
    Day,
    #[default]
    Week,
    Month,
}

impl Granularity {
    /// Start of the bucket containing `ms`.
    pub fn floor(self, ms: i64) -> i64 {
        match self {
            Granularity::Day => floor_day(ms),
            Granularity::Week => floor_week(ms),
            Granularity::Month => floor_month(ms),
        }
    }

    /// Start of the bucket after the one starting at `start`.
    pub fn next(self, start: i64) -> i64 {
        match self {
            Granularity::Day => start + MS_PER_DAY,
            Granularity::Week => start + MS_PER_WEEK,
            Granularity::Month => next_month(start),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Day => "day",
            Granularity::Week => "week",
            Granularity::Month => "month",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Granularity, ParseError> {
        match s.to_ascii_lowercase().as_str() {
            "day" | "daily" => Ok(Granularity::Day),
            "week" | "weekly" => Ok(Granularity::Week),
            "month" | "monthly" => Ok(Granularity::Month),
            _ => Err(ParseError::new("granularity (day, week or month)", s)),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Renders `ms` in the classic tweet format, `Wed Aug 27 13:08:45 +0000 2008`.
pub fn format_created_at(ms: i64) -> String {
    let t = DateTime::from_ms(ms);
    format!(
        "{} {} {:02} {:02}:{:02}:{:02} +0000 {}",
        WEEKDAYS[t.date.weekday() as usize],
        MONTHS[t.date.month as usize - 1],
        t.date.day,
        t.hour,
        t.minute,
        t.second,
        t.date.year
    )
}

/// Parses `EEE MMM dd HH:mm:ss ±ZZZZ yyyy` into UTC epoch milliseconds.
///
/// The weekday name must be a valid abbreviation but is not cross-checked
/// against the date; the offset is applied so the result is UTC.
pub fn parse_created_at(text: &str) -> Result<i64, ParseError> {
    let err = || ParseError::new("created_at", text);
    let mut parts = text.split(' ');
    let mut next = || parts.next().ok_or_else(err);
    let (wd, mon, day, hms, zone, year) = (next()?, next()?, next()?, next()?, next()?, next()?);
    if parts.next().is_some() || !WEEKDAYS.contains(&wd) {
        return Err(err());
    }
    let month = MONTHS.iter().position(|m| *m == mon).ok_or_else(err)? as u32 + 1;
    let day = parse_digits(day, 2).ok_or_else(err)?;
    let year = parse_digits(year, 4).ok_or_else(err)? as i32;
    let date = Date::new(year, month, day).ok_or_else(err)?;

    let hms = hms.as_bytes();
    if hms.len() != 8 || hms[2] != b':' || hms[5] != b':' {
        return Err(err());
    }
    let field = |s: &[u8]| std::str::from_utf8(s).ok().and_then(|s| parse_digits(s, 2));
    let hour = field(&hms[0..2]).filter(|h| *h < 24).ok_or_else(err)?;
    let minute = field(&hms[3..5]).filter(|m| *m < 60).ok_or_else(err)?;
    let second = field(&hms[6..8]).filter(|s| *s < 60).ok_or_else(err)?;

    let zb = zone.as_bytes();
    if zb.len() != 5 || !zone.is_ascii() || !(zb[0] == b'+' || zb[0] == b'-') {
        return Err(err());
    }
    let zh = parse_digits(&zone[1..3], 2).filter(|h| *h <= 23).ok_or_else(err)?;
    let zm = parse_digits(&zone[3..5], 2).filter(|m| *m < 60).ok_or_else(err)?;
    let offset_ms = (zh as i64 * 60 + zm as i64) * 60_000 * if zb[0] == b'-' { -1 } else { 1 };

    let local = DateTime { date, hour, minute, second, milli: 0 }.to_ms();
    Ok(local - offset_ms)
}

fn parse_digits(s: &str, width: usize) -> Option<u32> {
    if s.len() != width || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Parses `YYYY-MM-DD` to its UTC midnight.
pub fn parse_iso_date(text: &str) -> Result<i64, ParseError> {
    let err = || ParseError::new("ISO date", text);
    let mut it = text.split('-');
    let (y, m, d) = (it.next(), it.next(), it.next());
    if it.next().is_some() {
        return Err(err());
    }
    let year = y.and_then(|s| parse_digits(s, 4)).ok_or_else(err)? as i32;
    let month = m.and_then(|s| parse_digits(s, 2)).ok_or_else(err)?;
    let day = d.and_then(|s| parse_digits(s, 2)).ok_or_else(err)?;
    Ok(Date::new(year, month, day).ok_or_else(err)?.midnight_ms())
}

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM:SSZ` or a bare epoch-ms integer.
pub fn parse_instant(text: &str) -> Result<i64, ParseError> {
    let text = text.trim();
    if !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit()) {
        return text.parse().map_err(|_| ParseError::new("instant", text));
    }
    match text.split_once('T') {
        None => parse_iso_date(text),
        Some((date, time)) => {
            let err = || ParseError::new("ISO datetime", text);
            let base = parse_iso_date(date).map_err(|_| err())?;
            let time = time.strip_suffix('Z').ok_or_else(err)?;
            let (hms, milli) = match time.split_once('.') {
                Some((hms, f)) => (hms, parse_digits(f, 3).ok_or_else(err)?),
                None => (time, 0),
            };
            let parts: Vec<&str> = hms.split(':').collect();
            let [h, m, s] = parts[..] else { return Err(err()) };
            let comp = |s: &str, max: u32| parse_digits(s, 2).filter(|v| *v < max).ok_or_else(err);
            let (h, m, s) = (comp(h, 24)?, comp(m, 60)?, comp(s, 60)?);
            Ok(base + (h as i64 * 3600 + m as i64 * 60 + s as i64) * 1000 + milli as i64)
        }
    }
}

/// `2009-02-10T00:00:00Z` (millisecond part omitted when zero).
pub fn format_iso(ms: i64) -> String {
    let t = DateTime::from_ms(ms);
    let base = format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}",
        t.date.year, t.date.month, t.date.day, t.hour, t.minute, t.second
    );
    if t.milli == 0 {
        base + "Z"
    } else {
        format!("{base}.{:03}Z", t.milli)
    }
}

pub fn format_iso_date(ms: i64) -> String {
    let d = Date::from_days(ms.div_euclid(MS_PER_DAY));
    format!("{:04}-{:02}-{:02}", d.year, d.month, d.day)
}
