//! Naive local timestamps at second precision.
//!
//! All trip and weather times are wall-clock NYC local time. No timezone
//! arithmetic is performed anywhere; a [`Timestamp`] is simply the number of
//! seconds since `1970-01-01 00:00:00` on that naive clock.

use std::fmt;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};

pub const SECS_PER_HOUR: i64 = 3600;
pub const SECS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed timestamp {0:?}")]
pub struct TimestampError(pub String);

impl Timestamp {
    pub fn from_naive(dt: NaiveDateTime) -> Self {
        Timestamp(dt.and_utc().timestamp())
    }

    pub fn to_naive(self) -> NaiveDateTime {
        chrono::DateTime::from_timestamp(self.0, 0).expect("timestamp within chrono range").naive_utc()
    }

    pub fn from_ymd_hms(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(y, mo, d).and_then(|date| date.and_hms_opt(h, mi, s)).map(Self::from_naive)
    }

    /// Parses `YYYY-MM-DD HH:MM:SS` or `YYYY-MM-DD HH:MM` (seconds default to 0).
    ///
    /// This sits on the ingest hot path, so digits are decoded by hand and only
    /// calendar validation is delegated to chrono.
    pub fn parse(raw: &[u8]) -> Result<Self, TimestampError> {
        let err = || TimestampError(String::from_utf8_lossy(raw).into_owned());
        let b = trim_ascii(raw);
        if b.len() != 19 && b.len() != 16 {
            return Err(err());
        }
        if b[4] != b'-' || b[7] != b'-' || !(b[10] == b' ' || b[10] == b'T') || b[13] != b':' {
            return Err(err());
        }
        let num = |r: std::ops::Range<usize>| -> Option<u32> {
            b[r].iter().try_fold(0u32, |acc, &c| c.is_ascii_digit().then(|| acc * 10 + u32::from(c - b'0')))
        };
        let sec = if b.len() == 19 {
            if b[16] != b':' {
                return Err(err());
            }
            num(17..19).ok_or_else(err)?
        } else {
            0
        };
        let (y, mo, d, h, mi) = (
            num(0..4).ok_or_else(err)?,
            num(5..7).ok_or_else(err)?,
            num(8..10).ok_or_else(err)?,
            num(11..13).ok_or_else(err)?,
            num(14..16).ok_or_else(err)?,
        );
        Self::from_ymd_hms(y as i32, mo, d, h, mi, sec).ok_or_else(err)
    }

    pub fn floor_hour(self) -> Self {
        Timestamp(self.0.div_euclid(SECS_PER_HOUR) * SECS_PER_HOUR)
    }

    pub fn hour_of_day(self) -> u32 {
        (self.0.rem_euclid(SECS_PER_DAY) / SECS_PER_HOUR) as u32
    }

    pub fn seconds_of_day(self) -> i64 {
        self.0.rem_euclid(SECS_PER_DAY)
    }

    pub fn weekday(self) -> Weekday {
        self.to_naive().weekday()
    }

    pub fn is_weekend(self) -> bool {
        matches!(self.weekday(), Weekday::Sat | Weekday::Sun)
    }

    pub fn plus(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }

    /// `YYYY-MM-DD HH:MM` for hour-resolution outputs.
    pub fn format_minutes(self) -> String {
        let dt = self.to_naive();
        format!("{:04}-{:02}-{:02} {:02}:{:02}", dt.year(), dt.month(), dt.day(), dt.hour(), dt.minute())
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dt = self.to_naive();
        write!(
            f,
            "{:04}-{:02}-{:02} {:02}:{:02}:{:02}",
            dt.year(),
            dt.month(),
            dt.day(),
            dt.hour(),
            dt.minute(),
            dt.second()
        )
    }
}

fn trim_ascii(b: &[u8]) -> &[u8] {
    let start = b.iter().position(|c| !c.is_ascii_whitespace()).unwrap_or(b.len());
    let end = b.iter().rposition(|c| !c.is_ascii_whitespace()).map_or(start, |e| e + 1);
    &b[start..end]
}
