//! Temporal strata: peak windows, weekday/weekend, and pseudo-days for
//! permutation analysis.

use std::fmt;
use std::io::{self, Write};

use rand::seq::index::sample;

use crate::rng;
use crate::time::Timestamp;

/// Hours sampled into one pseudo-day.
pub const PSEUDO_DAY_HOURS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WindowLabel {
    MorningPeak,
    EveningPeak,
    OffPeak,
}

impl WindowLabel {
    pub const ALL: [WindowLabel; 3] = [WindowLabel::MorningPeak, WindowLabel::EveningPeak, WindowLabel::OffPeak];

    pub fn as_str(self) -> &'static str {
        match self {
            WindowLabel::MorningPeak => "morning_peak",
            WindowLabel::EveningPeak => "evening_peak",
            WindowLabel::OffPeak => "offpeak",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for WindowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DayClass {
    Weekday,
    Weekend,
    Any,
}

impl DayClass {
    pub fn of(t: Timestamp) -> Self {
        if t.is_weekend() {
            DayClass::Weekend
        } else {
            DayClass::Weekday
        }
    }

    pub fn admits(self, t: Timestamp) -> bool {
        self == DayClass::Any || self == DayClass::of(t)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayClass::Weekday => "weekday",
            DayClass::Weekend => "weekend",
            DayClass::Any => "any",
        }
    }
}

impl fmt::Display for DayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A set of hours of the day (bit `h` set means hour `h`), optionally
/// restricted to a day class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub label: WindowLabel,
    pub hours: u32,
    pub day_class: DayClass,
}

impl TimeWindow {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.hours & (1 << t.hour_of_day()) != 0 && self.day_class.admits(t)
    }

    pub fn hour_list(&self) -> Vec<u32> {
        (0..24).filter(|h| self.hours & (1 << h) != 0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WindowError {
    #[error("line {0}: expected `label = h1,h2,...`")]
    Syntax(usize),
    #[error("line {0}: unknown window label")]
    UnknownLabel(usize),
    #[error("line {0}: hours must be integers in 0..=23")]
    BadHour(usize),
    #[error("peak windows overlap")]
    Overlap,
    #[error("offpeak must be the complement of the peak windows")]
    OffPeakMismatch,
    #[error("pool of {0} hours is smaller than a pseudo-day")]
    PoolTooSmall(usize),
}

const fn mask(hours: &[u32]) -> u32 {
    let mut m = 0;
    let mut i = 0;
    while i < hours.len() {
        m |= 1 << hours[i];
        i += 1;
    }
    m
}

/// Morning and evening peak hour sets; every other hour is off-peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSet {
    pub morning: u32,
    pub evening: u32,
}

impl Default for WindowSet {
    /// Morning 6-10 a.m. and evening 4-8 p.m., both read as four half-open hours.
    fn default() -> Self {
        WindowSet { morning: mask(&[6, 7, 8, 9]), evening: mask(&[16, 17, 18, 19]) }
    }
}

impl WindowSet {
    /// Parses `label = hours` lines, e.g. `morning_peak = 6,7,8,9`.
    /// Unlisted peaks keep their defaults.
    pub fn parse(text: &str) -> Result<Self, WindowError> {
        let mut set = WindowSet::default();
        let mut offpeak = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(WindowError::Syntax(line))?;
            let label = WindowLabel::parse(k.trim()).ok_or(WindowError::UnknownLabel(line))?;
            let mut m = 0u32;
            for h in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let h: u32 = h.parse().map_err(|_| WindowError::BadHour(line))?;
                if h > 23 {
                    return Err(WindowError::BadHour(line));
                }
                m |= 1 << h;
            }
            match label {
                WindowLabel::MorningPeak => set.morning = m,
                WindowLabel::EveningPeak => set.evening = m,
                WindowLabel::OffPeak => offpeak = Some(m),
            }
        }
        if set.morning & set.evening != 0 {
            return Err(WindowError::Overlap);
        }
        if offpeak.is_some_and(|m| m != set.offpeak_mask()) {
            return Err(WindowError::OffPeakMismatch);
        }
        Ok(set)
    }

    fn offpeak_mask(&self) -> u32 {
        !(self.morning | self.evening) & ((1 << 24) - 1)
    }

    pub fn label_of_hour(&self, hour_of_day: u32) -> WindowLabel {
        let bit = 1 << hour_of_day;
        if self.morning & bit != 0 {
            WindowLabel::MorningPeak
        } else if self.evening & bit != 0 {
            WindowLabel::EveningPeak
        } else {
            WindowLabel::OffPeak
        }
    }

    pub fn classify(&self, t: Timestamp) -> (WindowLabel, DayClass) {
        (self.label_of_hour(t.hour_of_day()), DayClass::of(t))
    }

    pub fn window(&self, label: WindowLabel, day_class: DayClass) -> TimeWindow {
        let hours = match label {
            WindowLabel::MorningPeak => self.morning,
            WindowLabel::EveningPeak => self.evening,
            WindowLabel::OffPeak => self.offpeak_mask(),
        };
        TimeWindow { label, hours, day_class }
    }
}

/// Classification under the default windows.
pub fn classify_hour(t: Timestamp) -> (WindowLabel, DayClass) {
    WindowSet::default().classify(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct HourSample {
    pub hour: Timestamp,
    pub rainy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoDay {
    pub id: usize,
    pub hours: [HourSample; PSEUDO_DAY_HOURS],
}

/// Builds `n` pseudo-days, each of four distinct hours drawn from `pool`
/// without replacement. The pool is put in canonical (time) order first, so
/// the result depends only on the pool's contents and the seed.
pub fn permutation_days(pool: &[HourSample], seed: u64, n: usize) -> Result<Vec<PseudoDay>, WindowError> {
    if pool.len() < PSEUDO_DAY_HOURS {
        return Err(WindowError::PoolTooSmall(pool.len()));
    }
    let mut pool = pool.to_vec();
    pool.sort_unstable();
    let mut rng = rng::stream(seed, 0x5053_4455);
    Ok((0..n)
        .map(|id| {
            let idx = sample(&mut rng, pool.len(), PSEUDO_DAY_HOURS);
            let mut hours = [pool[0]; PSEUDO_DAY_HOURS];
            for (slot, i) in hours.iter_mut().zip(idx.iter()) {
                *slot = pool[i];
            }
            PseudoDay { id, hours }
        })
        .collect())
}

pub fn write_pseudo_days<W: Write>(w: W, days: &[PseudoDay]) -> io::Result<()> {
    let mut out = io::BufWriter::new(w);
    writeln!(out, "pseudo_day_id,hour,rainy")?;
    for d in days {
        for h in &d.hours {
            writeln!(out, "{},{},{}", d.id, h.hour.format_minutes(), h.rainy)?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s.as_bytes()).unwrap()
    }

    #[test]
    fn classify_examples() {
        // 2013-03-05 was a Tuesday, 2013-03-09 a Saturday, 2013-03-11 a Monday.
        assert_eq!(classify_hour(ts("2013-03-05 07:00")), (WindowLabel::MorningPeak, DayClass::Weekday));
        assert_eq!(classify_hour(ts("2013-03-09 17:00")), (WindowLabel::EveningPeak, DayClass::Weekend));
        assert_eq!(classify_hour(ts("2013-03-11 13:00")), (WindowLabel::OffPeak, DayClass::Weekday));
        assert_eq!(classify_hour(ts("2013-03-05 10:00")).0, WindowLabel::OffPeak);
        assert_eq!(classify_hour(ts("2013-03-05 20:00")).0, WindowLabel::OffPeak);
    }

    #[test]
    fn every_hour_has_one_label() {
        let set = WindowSet::default();
        let mut counts = [0; 3];
        for h in 0..24 {
            let l = set.label_of_hour(h);
            counts[WindowLabel::ALL.iter().position(|&x| x == l).unwrap()] += 1;
        }
        assert_eq!(counts, [4, 4, 16]);
    }

    #[test]
    fn parse_overrides() {
        let s = WindowSet::parse("morning_peak = 7,8,9\n# comment\n").unwrap();
        assert_eq!(s.window(WindowLabel::MorningPeak, DayClass::Any).hour_list(), vec![7, 8, 9]);
        assert_eq!(s.evening, WindowSet::default().evening);
        assert_eq!(WindowSet::parse("morning_peak=6,7\nevening_peak=7,8"), Err(WindowError::Overlap));
        assert_eq!(WindowSet::parse("noon=12"), Err(WindowError::UnknownLabel(1)));
        assert_eq!(WindowSet::parse("morning_peak=24"), Err(WindowError::BadHour(1)));
        assert_eq!(WindowSet::parse("offpeak=1,2"), Err(WindowError::OffPeakMismatch));
    }

    fn pool(n: i64) -> Vec<HourSample> {
        (0..n).map(|i| HourSample { hour: Timestamp(i * 3600), rainy: i % 3 == 0 }).collect()
    }

    #[test]
    fn forced_pseudo_day() {
        let p = pool(4);
        let days = permutation_days(&p, 1, 1).unwrap();
        let mut got = days[0].hours.to_vec();
        got.sort();
        assert_eq!(got, p);
        assert_eq!(permutation_days(&p[..3], 1, 1), Err(WindowError::PoolTooSmall(3)));
    }

    #[test]
    fn pseudo_days_are_seeded() {
        let p = pool(100);
        assert_eq!(permutation_days(&p, 9, 50).unwrap(), permutation_days(&p, 9, 50).unwrap());
        assert_ne!(permutation_days(&p, 9, 50).unwrap(), permutation_days(&p, 10, 50).unwrap());
        let mut rev = p.clone();
        rev.reverse();
        assert_eq!(permutation_days(&rev, 9, 50).unwrap(), permutation_days(&p, 9, 50).unwrap());
    }

    #[test]
    fn pseudo_days_draw_distinct_pool_members() {
        let p = pool(100);
        for d in permutation_days(&p, 3, 1000).unwrap() {
            for (i, h) in d.hours.iter().enumerate() {
                assert!(p.contains(h));
                assert!(!d.hours[..i].contains(h));
            }
        }
    }
}
