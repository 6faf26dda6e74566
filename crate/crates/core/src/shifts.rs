//! Driver shift reconstruction.
//!
//! A shift is a maximal run of a driver's consecutive trips in which every
//! idle gap (dropoff to next pickup) is at most the gap threshold, 8 hours by
//! default. A gap exactly equal to the threshold stays inside the shift.
//!
//! Shift start is the first pickup and shift end the last dropoff. Any
//! cruising before the first fare is invisible in trip records, so supply
//! derived from these shifts is a lower bound on true supply.

use std::io::{self, Write};
use std::ops::Range;

use crate::geo::{haversine_km, LatLon};
use crate::ids::Symbol;
use crate::ingest::{IdTables, TripRecord};
use crate::time::Timestamp;

pub const DEFAULT_GAP_S: i64 = 8 * 3600;

/// Which identifier names the person whose shifts are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriverIdentity {
    #[default]
    HackLicense,
    Medallion,
}

impl DriverIdentity {
    pub fn of(self, t: &TripRecord) -> Symbol {
        match self {
            DriverIdentity::HackLicense => t.hack_license,
            DriverIdentity::Medallion => t.medallion,
        }
    }

    pub fn resolve(self, ids: &IdTables, s: Symbol) -> &str {
        match self {
            DriverIdentity::HackLicense => ids.hack_licenses.resolve(s),
            DriverIdentity::Medallion => ids.medallions.resolve(s),
        }
    }
}

/// What to do when a trip starts before the driver's previous trip ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapPolicy {
    /// Discard the later-starting trip.
    #[default]
    DropLater,
    /// Cut the earlier trip's dropoff back to the later trip's pickup.
    ClipEarlier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftOptions {
    pub gap_threshold_s: i64,
    pub identity: DriverIdentity,
    pub overlap: OverlapPolicy,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions {
            gap_threshold_s: DEFAULT_GAP_S,
            identity: DriverIdentity::default(),
            overlap: OverlapPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShiftError {
    #[error("trip {index} starts before the previous trip ends")]
    Overlap { index: usize },
    #[error("trips are not ordered by pickup time at index {index}")]
    Unordered { index: usize },
    #[error("no shifts")]
    NoShifts,
    #[error("bin width {0} min does not divide the day")]
    BadBinWidth(u32),
}

/// A reconstructed work session of one driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift<'a> {
    pub driver: Symbol,
    pub trips: &'a [TripRecord],
    pub start: Timestamp,
    pub end: Timestamp,
    pub n_pickups: usize,
    pub income: f64,
    pub occupied_s: i64,
    pub empty_s: i64,
}

impl<'a> Shift<'a> {
    fn from_trips(driver: Symbol, trips: &'a [TripRecord]) -> Self {
        let first = trips.first().expect("shift has at least one trip");
        let last = trips.last().expect("shift has at least one trip");
        let occupied_s = trips.iter().map(TripRecord::duration_s).sum();
        let empty_s = trips.windows(2).map(|w| w[1].pickup_time.0 - w[0].dropoff_time.0).sum();
        Shift {
            driver,
            trips,
            start: first.pickup_time,
            end: last.dropoff_time,
            n_pickups: trips.len(),
            income: trips.iter().map(|t| t.fare_total).sum(),
            occupied_s,
            empty_s,
        }
    }

    pub fn duration_s(&self) -> i64 {
        self.end.0 - self.start.0
    }
}

fn check_order(trips: &[TripRecord]) -> Result<(), ShiftError> {
    for (i, w) in trips.windows(2).enumerate() {
        if w[1].pickup_time <= w[0].pickup_time {
            return Err(ShiftError::Unordered { index: i + 1 });
        }
        if w[1].pickup_time < w[0].dropoff_time {
            return Err(ShiftError::Overlap { index: i + 1 });
        }
    }
    Ok(())
}

fn partition(trips: &[TripRecord], gap_threshold_s: i64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut begin = 0;
    for i in 1..trips.len() {
        if trips[i].pickup_time.0 - trips[i - 1].dropoff_time.0 > gap_threshold_s {
            out.push(begin..i);
            begin = i;
        }
    }
    if !trips.is_empty() {
        out.push(begin..trips.len());
    }
    out
}

/// Splits one driver's time-ordered, non-overlapping trips into shifts.
pub fn synthesize_shifts(
    driver: Symbol,
    trips: &[TripRecord],
    gap_threshold_s: i64,
) -> Result<Vec<Shift<'_>>, ShiftError> {
    check_order(trips)?;
    Ok(partition(trips, gap_threshold_s).into_iter().map(|r| Shift::from_trips(driver, &trips[r])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmptyInterval {
    pub driver: Symbol,
    pub from_time: Timestamp,
    pub from: LatLon,
    pub to_time: Timestamp,
    pub to: LatLon,
    pub gap_s: i64,
    pub relocation_km: f64,
}

/// Idle periods between consecutive trips of a shift. Back-to-back trips
/// (zero gap) produce no interval.
pub fn empty_intervals(s: &Shift<'_>) -> Vec<EmptyInterval> {
    s.trips
        .windows(2)
        .filter_map(|w| {
            let gap_s = w[1].pickup_time.0 - w[0].dropoff_time.0;
            (gap_s > 0).then(|| EmptyInterval {
                driver: s.driver,
                from_time: w[0].dropoff_time,
                from: w[0].dropoff,
                to_time: w[1].pickup_time,
                to: w[1].pickup,
                gap_s,
                relocation_km: haversine_km(w[0].dropoff, w[1].pickup),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SynthesisReport {
    pub drivers: usize,
    pub shifts: usize,
    pub trips_kept: usize,
    pub overlaps_dropped: usize,
    pub overlaps_clipped: usize,
}

#[derive(Debug, Clone)]
struct Span {
    driver: Symbol,
    trips: Range<usize>,
}

/// Every driver's shifts over a whole trip set.
///
/// Owns the trips, sorted by (driver, pickup, dropoff) with overlaps resolved;
/// shifts are views into that array.
#[derive(Debug, Clone)]
pub struct ShiftTable {
    trips: Vec<TripRecord>,
    spans: Vec<Span>,
    drivers: Vec<(Symbol, Range<usize>)>,
    pub options: ShiftOptions,
    pub report: SynthesisReport,
}

impl ShiftTable {
    pub fn build(mut trips: Vec<TripRecord>, options: ShiftOptions) -> Self {
        let id = options.identity;
        // Full tie-break so the surviving trip of an overlap never depends on input order.
        trips.sort_unstable_by(|a, b| {
            (id.of(a), a.pickup_time, a.dropoff_time)
                .cmp(&(id.of(b), b.pickup_time, b.dropoff_time))
                .then(a.fare_total.total_cmp(&b.fare_total))
                .then(a.trip_distance_km.total_cmp(&b.trip_distance_km))
                .then(a.pickup.lat.total_cmp(&b.pickup.lat))
                .then(a.pickup.lon.total_cmp(&b.pickup.lon))
                .then(a.dropoff.lat.total_cmp(&b.dropoff.lat))
                .then(a.dropoff.lon.total_cmp(&b.dropoff.lon))
        });
        let mut report = SynthesisReport::default();
        resolve_overlaps(&mut trips, id, options.overlap, &mut report);

        let mut spans = Vec::new();
        let mut drivers = Vec::new();
        let mut begin = 0;
        while begin < trips.len() {
            let driver = id.of(&trips[begin]);
            let end = begin + trips[begin..].iter().take_while(|t| id.of(t) == driver).count();
            let first_span = spans.len();
            for r in partition(&trips[begin..end], options.gap_threshold_s) {
                spans.push(Span { driver, trips: begin + r.start..begin + r.end });
            }
            drivers.push((driver, first_span..spans.len()));
            begin = end;
        }
        report.drivers = drivers.len();
        report.shifts = spans.len();
        report.trips_kept = trips.len();
        ShiftTable { trips, spans, drivers, options, report }
    }

    pub fn trips(&self) -> &[TripRecord] {
        &self.trips
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    fn view(&self, s: &Span) -> Shift<'_> {
        Shift::from_trips(s.driver, &self.trips[s.trips.clone()])
    }

    pub fn shifts(&self) -> impl Iterator<Item = Shift<'_>> + '_ {
        self.spans.iter().map(|s| self.view(s))
    }

    /// Per driver: all of the driver's trips and the driver's shifts.
    pub fn by_driver(&self) -> impl Iterator<Item = DriverShifts<'_>> + '_ {
        self.drivers.iter().map(|(driver, range)| {
            let spans = &self.spans[range.clone()];
            let trips_start = spans.first().map_or(0, |s| s.trips.start);
            let trips_end = spans.last().map_or(0, |s| s.trips.end);
            DriverShifts {
                driver: *driver,
                trips: &self.trips[trips_start..trips_end],
                shifts: spans.iter().map(|s| self.view(s)).collect(),
            }
        })
    }

    pub fn write_csv<W: Write>(&self, w: W, ids: &IdTables) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "driver,start,end,n_pickups,income,occupied_s,empty_s")?;
        for s in self.shifts() {
            writeln!(
                out,
                "{},{},{},{},{:.2},{},{}",
                self.options.identity.resolve(ids, s.driver),
                s.start,
                s.end,
                s.n_pickups,
                s.income,
                s.occupied_s,
                s.empty_s
            )?;
        }
        out.flush()
    }
}

#[derive(Debug, Clone)]
pub struct DriverShifts<'a> {
    pub driver: Symbol,
    pub trips: &'a [TripRecord],
    pub shifts: Vec<Shift<'a>>,
}

/// In-place overlap resolution over trips sorted by (driver, pickup, dropoff).
fn resolve_overlaps(
    trips: &mut Vec<TripRecord>,
    id: DriverIdentity,
    policy: OverlapPolicy,
    report: &mut SynthesisReport,
) {
    let mut kept = 0usize;
    for i in 0..trips.len() {
        let t = trips[i];
        if kept > 0 {
            let prev = &mut trips[kept - 1];
            if id.of(prev) == id.of(&t) && t.pickup_time < prev.dropoff_time {
                if policy == OverlapPolicy::ClipEarlier && t.pickup_time > prev.pickup_time {
                    prev.dropoff_time = t.pickup_time;
                    report.overlaps_clipped += 1;
                } else {
                    report.overlaps_dropped += 1;
                    continue;
                }
            }
        }
        trips[kept] = t;
        kept += 1;
    }
    trips.truncate(kept);
}

/// Time-of-day histograms of shift starts and ends, each normalised to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDensities {
    pub bin_width_min: u32,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

pub fn shift_time_densities<'a, I>(shifts: I, bin_width_min: u32) -> Result<ShiftDensities, ShiftError>
where
    I: IntoIterator<Item = Shift<'a>>,
{
    if bin_width_min == 0 || 1440 % bin_width_min != 0 {
        return Err(ShiftError::BadBinWidth(bin_width_min));
    }
    let n_bins = (1440 / bin_width_min) as usize;
    let width_s = i64::from(bin_width_min) * 60;
    let mut start = vec![0u64; n_bins];
    let mut end = vec![0u64; n_bins];
    let mut n = 0u64;
    for s in shifts {
        start[(s.start.seconds_of_day() / width_s) as usize] += 1;
        end[(s.end.seconds_of_day() / width_s) as usize] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(ShiftError::NoShifts);
    }
    let norm = |v: Vec<u64>| v.into_iter().map(|c| c as f64 / n as f64).collect();
    Ok(ShiftDensities { bin_width_min, start: norm(start), end: norm(end) })
}

impl ShiftDensities {
    pub fn write_csv<W: Write>(&self, w: W, density: &[f64]) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "bin_start_minutes,density")?;
        for (i, d) in density.iter().enumerate() {
            writeln!(out, "{},{:.6}", i as u32 * self.bin_width_min, d)?;
        }
        out.flush()
    }

    /// Index of the most populated start bin within `[from_min, to_min)`.
    pub fn start_mode_in(&self, from_min: u32, to_min: u32) -> usize {
        let lo = (from_min / self.bin_width_min) as usize;
        let hi = ((to_min / self.bin_width_min) as usize).min(self.start.len());
        (lo..hi).max_by(|&a, &b| self.start[a].total_cmp(&self.start[b]).then(b.cmp(&a))).unwrap_or(lo)
    }
}
