//! Hourly (and optionally per-grid-cell) aggregation of trips and shifts, and
//! the fleet indices derived from the aggregates.
//!
//! Every stored quantity is an integer (cents, meters, seconds, counts), so
//! partial bins merge exactly in any order. Trip-level fields may be
//! accumulated over any partition of the trip rows; driver-level fields
//! (supply, empty time, active time, empty intervals) over any partition of
//! the drivers, because distinct-driver counting needs a driver's shifts
//! together. Rates are computed only on merged bins.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::geo::{haversine_km, Grid, GridCell};
use crate::ingest::TripRecord;
use crate::shifts::{DriverShifts, ShiftTable};
use crate::stats::LabeledPoint;
use crate::time::{Timestamp, SECS_PER_HOUR};
use crate::weather::WeatherTable;

pub const DEFAULT_MAX_TRIPS_PER_DRIVER_HOUR: u32 = 12;
pub const DEFAULT_MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinKey {
    pub hour: Timestamp,
    pub cell: Option<GridCell>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HourlyBin {
    /// Distinct drivers whose shift touches the hour (or, for a cell bin,
    /// who picked up or dropped off in the cell during the hour).
    pub supply: u32,
    pub pickups: u64,
    pub income_cents: i64,
    pub occupied_s: i64,
    pub empty_s: i64,
    /// Distance and duration of trips with nonzero distance, by pickup hour.
    pub dist_m: i64,
    pub travel_s: i64,
    /// Shift time falling inside the hour, summed over drivers.
    pub active_s: i64,
    /// Empty intervals, attributed to the hour of the pickup that ends them.
    pub relocation_m: i64,
    pub gap_s: i64,
    pub n_gaps: u64,
}

impl HourlyBin {
    pub fn merge(&mut self, o: &HourlyBin) {
        self.supply += o.supply;
        self.pickups += o.pickups;
        self.income_cents += o.income_cents;
        self.occupied_s += o.occupied_s;
        self.empty_s += o.empty_s;
        self.dist_m += o.dist_m;
        self.travel_s += o.travel_s;
        self.active_s += o.active_s;
        self.relocation_m += o.relocation_m;
        self.gap_s += o.gap_s;
        self.n_gaps += o.n_gaps;
    }

    pub fn income(&self) -> f64 {
        self.income_cents as f64 / 100.0
    }

    pub fn dist_km(&self) -> f64 {
        self.dist_m as f64 / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupplyMode {
    /// A driver counts once in every hour the shift touches.
    #[default]
    Overlap,
    /// A driver counts by the fraction of the hour spent on shift.
    Fractional,
}

/// Which cells get their own bins in addition to the city-wide bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSelection {
    pub grid: Grid,
    /// `None` keeps every cell.
    pub cells: Option<Vec<GridCell>>,
}

impl CellSelection {
    fn pick(&self, p: crate::geo::LatLon) -> Option<GridCell> {
        let c = self.grid.cell_of(p)?;
        match &self.cells {
            None => Some(c),
            Some(keep) => keep.contains(&c).then_some(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinOptions {
    pub cells: Option<CellSelection>,
}

fn cents(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

fn meters(km: f64) -> i64 {
    (km * 1000.0).round() as i64
}

/// Calls `f(hour, seconds)` for each hour overlapping `[from, to)`.
fn split_by_hour(from: Timestamp, to: Timestamp, mut f: impl FnMut(Timestamp, i64)) {
    let mut t = from.0;
    while t < to.0 {
        let hour = t.div_euclid(SECS_PER_HOUR) * SECS_PER_HOUR;
        let next = (hour + SECS_PER_HOUR).min(to.0);
        f(Timestamp(hour), next - t);
        t = next;
    }
}

/// Partial hourly bins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinAccumulator {
    bins: HashMap<BinKey, HourlyBin>,
    opts: BinOptions,
}

impl BinAccumulator {
    pub fn new(opts: BinOptions) -> Self {
        BinAccumulator { bins: HashMap::new(), opts }
    }

    fn bin(&mut self, hour: Timestamp, cell: Option<GridCell>) -> &mut HourlyBin {
        self.bins.entry(BinKey { hour, cell }).or_default()
    }

    /// Trip-level fields: pickups, income, distance and travel time by pickup
    /// hour; occupied time split over the hours the trip spans.
    pub fn add_trip(&mut self, t: &TripRecord) {
        let cell = self.opts.cells.as_ref().and_then(|c| c.pick(t.pickup));
        let hour = t.pickup_time.floor_hour();
        for c in [None, cell] {
            let b = self.bin(hour, c);
            b.pickups += 1;
            b.income_cents += cents(t.fare_total);
            if t.trip_distance_km > 0.0 {
                b.dist_m += meters(t.trip_distance_km);
                b.travel_s += t.duration_s();
            }
            if cell.is_none() {
                break;
            }
        }
        split_by_hour(t.pickup_time, t.dropoff_time, |h, s| {
            self.bin(h, None).occupied_s += s;
            if let Some(c) = cell {
                self.bin(h, Some(c)).occupied_s += s;
            }
        });
    }

    /// Driver-level fields from all of one driver's shifts.
    pub fn add_driver(&mut self, d: &DriverShifts<'_>) {
        let mut last_counted: Option<Timestamp> = None;
        let mut cell_hours: Vec<(Timestamp, GridCell)> = Vec::new();
        for s in &d.shifts {
            let mut h = s.start.floor_hour();
            if let Some(last) = last_counted {
                h = h.max(last.plus(SECS_PER_HOUR));
            }
            while h <= s.end {
                self.bin(h, None).supply += 1;
                last_counted = Some(h);
                h = h.plus(SECS_PER_HOUR);
            }
            split_by_hour(s.start, s.end, |h, secs| self.bin(h, None).active_s += secs);

            for w in s.trips.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let gap = b.pickup_time.0 - a.dropoff_time.0;
                if gap <= 0 {
                    continue;
                }
                let cell = self.opts.cells.as_ref().and_then(|c| c.pick(b.pickup));
                split_by_hour(a.dropoff_time, b.pickup_time, |h, secs| {
                    self.bin(h, None).empty_s += secs;
                    if let Some(c) = cell {
                        self.bin(h, Some(c)).empty_s += secs;
                    }
                });
                let reloc = meters(haversine_km(a.dropoff, b.pickup));
                let hour = b.pickup_time.floor_hour();
                for c in [None, cell] {
                    let bin = self.bin(hour, c);
                    bin.relocation_m += reloc;
                    bin.gap_s += gap;
                    bin.n_gaps += 1;
                    if cell.is_none() {
                        break;
                    }
                }
            }
            if let Some(sel) = &self.opts.cells {
                for t in s.trips {
                    for (time, pos) in [(t.pickup_time, t.pickup), (t.dropoff_time, t.dropoff)] {
                        if let Some(c) = sel.pick(pos) {
                            cell_hours.push((time.floor_hour(), c));
                        }
                    }
                }
            }
        }
        cell_hours.sort_unstable();
        cell_hours.dedup();
        for (h, c) in cell_hours {
            self.bin(h, Some(c)).supply += 1;
        }
    }

    pub fn merge(&mut self, other: BinAccumulator) {
        for (k, b) in other.bins {
            self.bins.entry(k).or_default().merge(&b);
        }
    }

    pub fn finish(self) -> BinTable {
        let mut rows: Vec<BinRow> = self.bins.into_iter().map(|(key, bin)| BinRow { key, bin, rainy: None }).collect();
        rows.sort_unstable_by_key(|r| r.key);
        BinTable { rows }
    }
}

/// Single pass over a shift table.
pub fn aggregate(table: &ShiftTable, opts: &BinOptions) -> BinTable {
    let mut acc = BinAccumulator::new(opts.clone());
    for t in table.trips() {
        acc.add_trip(t);
    }
    for d in table.by_driver() {
        acc.add_driver(&d);
    }
    acc.finish()
}

/// Same result as [`aggregate`], with trips and drivers split into `parts`
/// chunks accumulated on the rayon pool and merged.
pub fn aggregate_parallel(table: &ShiftTable, opts: &BinOptions, parts: usize) -> BinTable {
    let parts = parts.max(1);
    let trips = table.trips();
    let drivers: Vec<DriverShifts<'_>> = table.by_driver().collect();
    let trip_step = trips.len().div_ceil(parts).max(1);
    let driver_step = drivers.len().div_ceil(parts).max(1);
    (0..parts)
        .into_par_iter()
        .map(|k| {
            let mut acc = BinAccumulator::new(opts.clone());
            for t in trips.iter().skip(k * trip_step).take(trip_step) {
                acc.add_trip(t);
            }
            for d in drivers.iter().skip(k * driver_step).take(driver_step) {
                acc.add_driver(d);
            }
            acc
        })
        .reduce(
            || BinAccumulator::new(opts.clone()),
            |mut a, b| {
                a.merge(b);
                a
            },
        )
        .finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinRow {
    pub key: BinKey,
    pub bin: HourlyBin,
    pub rainy: Option<bool>,
}

/// Merged bins sorted by (hour, cell), city-wide bin first within an hour.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinTable {
    pub rows: Vec<BinRow>,
}

impl BinTable {
    pub fn join_weather(&mut self, weather: &WeatherTable) {
        for r in &mut self.rows {
            r.rainy = weather.rainy(r.key.hour);
        }
    }

    /// Rows for one view: city-wide (`None`) or one cell.
    pub fn view(&self, cell: Option<GridCell>) -> impl Iterator<Item = &BinRow> + '_ {
        self.rows.iter().filter(move |r| r.key.cell == cell)
    }

    pub fn get(&self, hour: Timestamp, cell: Option<GridCell>) -> Option<&HourlyBin> {
        self.rows.binary_search_by_key(&BinKey { hour, cell }, |r| r.key).ok().map(|i| &self.rows[i].bin)
    }

    pub fn total_pickups(&self) -> u64 {
        self.view(None).map(|r| r.bin.pickups).sum()
    }

    /// Bins whose pickups exceed `supply × max_per_driver_hour`.
    pub fn flagged(&self, max_per_driver_hour: u32) -> Vec<BinKey> {
        self.rows
            .iter()
            .filter(|r| r.bin.pickups > u64::from(r.bin.supply) * u64::from(max_per_driver_hour))
            .map(|r| r.key)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "hour,cell,supply,pickups,income,occupied_s,empty_s,dist_km,travel_s,rainy")?;
        for r in &self.rows {
            let b = &r.bin;
            writeln!(
                out,
                "{},{},{},{},{:.2},{},{},{:.3},{},{}",
                r.key.hour.format_minutes(),
                r.key.cell.map(|c| c.to_string()).unwrap_or_default(),
                b.supply,
                b.pickups,
                b.income(),
                b.occupied_s,
                b.empty_s,
                b.dist_km(),
                b.travel_s,
                r.rainy.map(|v| v.to_string()).unwrap_or_default()
            )?;
        }
        out.flush()
    }

    /// The fields that do not fit the main bin layout.
    pub fn write_details_csv<W: Write>(&self, w: W, max_per_driver_hour: u32) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "hour,cell,active_s,relocation_km,gap_s,n_gaps,flagged")?;
        for r in &self.rows {
            let b = &r.bin;
            writeln!(
                out,
                "{},{},{},{:.3},{},{},{}",
                r.key.hour.format_minutes(),
                r.key.cell.map(|c| c.to_string()).unwrap_or_default(),
                b.active_s,
                b.relocation_m as f64 / 1000.0,
                b.gap_s,
                b.n_gaps,
                b.pickups > u64::from(b.supply) * u64::from(max_per_driver_hour)
            )?;
        }
        out.flush()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BinReadError {
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reads a bin file written by [`BinTable::write_csv`], and optionally the
/// matching details file, back into a table.
pub fn read_bins<R: io::Read, D: io::Read>(bins: R, details: Option<D>) -> Result<BinTable, BinReadError> {
    fn field<T: std::str::FromStr>(
        rec: &csv::StringRecord,
        i: usize,
        line: u64,
        name: &str,
    ) -> Result<T, BinReadError> {
        rec.get(i)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| BinReadError::Malformed { line, msg: format!("bad {name}") })
    }
    fn key(rec: &csv::StringRecord, line: u64) -> Result<BinKey, BinReadError> {
        let bad = |msg: &str| BinReadError::Malformed { line, msg: msg.to_string() };
        let hour = Timestamp::parse(rec.get(0).unwrap_or("").as_bytes()).map_err(|_| bad("bad hour"))?;
        let cell = match rec.get(1).unwrap_or("") {
            "" => None,
            c => Some(c.parse().map_err(|_| bad("bad cell"))?),
        };
        Ok(BinKey { hour, cell })
    }
    let scaled = |v: f64, k: f64| (v * k).round() as i64;

    let mut rows = Vec::new();
    let mut rdr = csv::Reader::from_reader(bins);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let bin = HourlyBin {
            supply: field(&rec, 2, line, "supply")?,
            pickups: field(&rec, 3, line, "pickups")?,
            income_cents: scaled(field(&rec, 4, line, "income")?, 100.0),
            occupied_s: field(&rec, 5, line, "occupied_s")?,
            empty_s: field(&rec, 6, line, "empty_s")?,
            dist_m: scaled(field(&rec, 7, line, "dist_km")?, 1000.0),
            travel_s: field(&rec, 8, line, "travel_s")?,
            ..Default::default()
        };
        let rainy = match rec.get(9).unwrap_or("") {
            "" => None,
            _ => Some(field(&rec, 9, line, "rainy")?),
        };
        rows.push(BinRow { key: key(&rec, line)?, bin, rainy });
    }
    if let Some(d) = details {
        let mut rdr = csv::Reader::from_reader(d);
        let mut n = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let row = rows
                .get_mut(i)
                .filter(|r| key(&rec, line).is_ok_and(|k| k == r.key))
                .ok_or_else(|| BinReadError::Malformed { line, msg: "details row does not match bin row".into() })?;
            row.bin.active_s = field(&rec, 2, line, "active_s")?;
            row.bin.relocation_m = scaled(field(&rec, 3, line, "relocation_km")?, 1000.0);
            row.bin.gap_s = field(&rec, 4, line, "gap_s")?;
            row.bin.n_gaps = field(&rec, 5, line, "n_gaps")?;
            n += 1;
        }
        if n != rows.len() {
            return Err(BinReadError::Malformed {
                line: n as u64 + 2,
                msg: "details file has fewer rows than bins".into(),
            });
        }
    }
    Ok(BinTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Index {
    Supply,
    PickupsPerDriver,
    IncomePerDriver,
    SpaceMeanSpeed,
    EmptyTravelSpeed,
    MeanEmptyGap,
}

impl Index {
    pub const ALL: [Index; 6] = [
        Index::Supply,
        Index::PickupsPerDriver,
        Index::IncomePerDriver,
        Index::SpaceMeanSpeed,
        Index::EmptyTravelSpeed,
        Index::MeanEmptyGap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Index::Supply => "supply",
            Index::PickupsPerDriver => "pickups_per_driver",
            Index::IncomePerDriver => "income_per_driver",
            Index::SpaceMeanSpeed => "space_mean_speed",
            Index::EmptyTravelSpeed => "empty_travel_speed",
            Index::MeanEmptyGap => "mean_empty_gap_s",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.as_str() == s)
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Exclusion {
    NoSupply,
    NoTravel,
    NoEmptyIntervals,
}

impl Exclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Exclusion::NoSupply => "supply = 0",
            Exclusion::NoTravel => "travel_s = 0",
            Exclusion::NoEmptyIntervals => "no empty intervals",
        }
    }
}

fn supply_of(b: &HourlyBin, mode: SupplyMode) -> f64 {
    match mode {
        SupplyMode::Overlap => f64::from(b.supply),
        SupplyMode::Fractional => b.active_s as f64 / SECS_PER_HOUR as f64,
    }
}

/// Active drivers in the hour.
pub fn active_supply(b: &HourlyBin, mode: SupplyMode) -> f64 {
    supply_of(b, mode)
}

pub fn pickups_per_driver(b: &HourlyBin, mode: SupplyMode) -> Result<f64, Exclusion> {
    let s = supply_of(b, mode);
    if s > 0.0 {
        Ok(b.pickups as f64 / s)
    } else {
        Err(Exclusion::NoSupply)
    }
}

pub fn income_per_driver(b: &HourlyBin, mode: SupplyMode) -> Result<f64, Exclusion> {
    let s = supply_of(b, mode);
    if s > 0.0 {
        Ok(b.income() / s)
    } else {
        Err(Exclusion::NoSupply)
    }
}

/// Total distance over total travel time, km/h.
pub fn space_mean_speed(b: &HourlyBin) -> Result<f64, Exclusion> {
    if b.travel_s > 0 {
        Ok(b.dist_km() / (b.travel_s as f64 / SECS_PER_HOUR as f64))
    } else {
        Err(Exclusion::NoTravel)
    }
}

/// Straight-line relocation speed while empty (km/h) and mean empty gap (s).
pub fn empty_travel_speed(b: &HourlyBin) -> Result<(f64, f64), Exclusion> {
    if b.n_gaps == 0 {
        return Err(Exclusion::NoEmptyIntervals);
    }
    let speed = (b.relocation_m as f64 / 1000.0) / (b.gap_s as f64 / SECS_PER_HOUR as f64);
    Ok((speed, b.gap_s as f64 / b.n_gaps as f64))
}

pub fn index_value(b: &HourlyBin, index: Index, mode: SupplyMode) -> Result<f64, Exclusion> {
    match index {
        Index::Supply => Ok(supply_of(b, mode)),
        Index::PickupsPerDriver => pickups_per_driver(b, mode),
        Index::IncomePerDriver => income_per_driver(b, mode),
        Index::SpaceMeanSpeed => space_mean_speed(b),
        Index::EmptyTravelSpeed => empty_travel_speed(b).map(|v| v.0),
        Index::MeanEmptyGap => empty_travel_speed(b).map(|v| v.1),
    }
}

/// Count of excluded bins per (index, reason) over one view.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionReport {
    pub bins: usize,
    pub excluded: BTreeMap<(Index, Exclusion), usize>,
    pub unclassified_weather: usize,
    pub flagged: usize,
}

impl ExclusionReport {
    pub fn build(table: &BinTable, cell: Option<GridCell>, mode: SupplyMode, max_per_driver_hour: u32) -> Self {
        let mut rep = ExclusionReport::default();
        for r in table.view(cell) {
            rep.bins += 1;
            for index in Index::ALL {
                if let Err(e) = index_value(&r.bin, index, mode) {
                    *rep.excluded.entry((index, e)).or_default() += 1;
                }
            }
            if r.rainy.is_none() {
                rep.unclassified_weather += 1;
            }
            if r.bin.pickups > u64::from(r.bin.supply) * u64::from(max_per_driver_hour) {
                rep.flagged += 1;
            }
        }
        rep
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "index,reason,bins")?;
        writeln!(out, "all,total bins,{}", self.bins)?;
        writeln!(out, "all,weather unclassified,{}", self.unclassified_weather)?;
        writeln!(out, "all,pickups above per-driver cap,{}", self.flagged)?;
        for ((index, reason), n) in &self.excluded {
            writeln!(out, "{},{},{}", index, reason.as_str(), n)?;
        }
        out.flush()
    }
}

/// Hour-of-day crossed with weekday/weekend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Slot {
    pub weekend: bool,
    pub hour_of_day: u32,
}

impl Slot {
    pub fn of(t: Timestamp) -> Self {
        Slot { weekend: t.is_weekend(), hour_of_day: t.hour_of_day() }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{:02}", if self.weekend { "weekend" } else { "weekday" }, self.hour_of_day)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotComparison {
    pub slot: Slot,
    pub index: Index,
    pub clear_mean: Option<f64>,
    pub rainy_mean: Option<f64>,
    pub n_clear: usize,
    pub n_rainy: usize,
    /// Either side has fewer than the minimum sample count.
    pub masked: bool,
}

/// Rainy and clear means of `index` per slot over one view of the bins.
/// Bins without a weather class or excluded for the index are skipped.
pub fn compare_regimes(
    table: &BinTable,
    cell: Option<GridCell>,
    indices: &[Index],
    mode: SupplyMode,
    min_samples: usize,
) -> Vec<SlotComparison> {
    let mut acc: BTreeMap<(Slot, Index), [(f64, usize); 2]> = BTreeMap::new();
    for r in table.view(cell) {
        let Some(rainy) = r.rainy else { continue };
        for &index in indices {
            if let Ok(v) = index_value(&r.bin, index, mode) {
                let e = &mut acc.entry((Slot::of(r.key.hour), index)).or_default()[usize::from(rainy)];
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|((slot, index), [clear, rainy])| {
            let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
            SlotComparison {
                slot,
                index,
                clear_mean: mean(clear),
                rainy_mean: mean(rainy),
                n_clear: clear.1,
                n_rainy: rainy.1,
                masked: clear.1.min(rainy.1) < min_samples,
            }
        })
        .collect()
}

pub fn write_comparison<W: Write>(w: W, rows: &[SlotComparison]) -> io::Result<()> {
    let mut out = io::BufWriter::new(w);
    writeln!(out, "slot,index,clear_mean,rainy_mean,n_clear,n_rainy,masked")?;
    let f = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.slot,
            r.index,
            f(r.clear_mean),
            f(r.rainy_mean),
            r.n_clear,
            r.n_rainy,
            r.masked
        )?;
    }
    out.flush()
}

/// Hourly index values of one view with their weather class, for the
/// rank tests.
pub fn labeled_series(table: &BinTable, cell: Option<GridCell>, index: Index, mode: SupplyMode) -> Vec<LabeledPoint> {
    table
        .view(cell)
        .filter_map(|r| {
            let rainy = r.rainy?;
            let value = index_value(&r.bin, index, mode).ok()?;
            Some(LabeledPoint { hour: r.key.hour, value, rainy })
        })
        .collect()
}

/// Pickup counts per grid cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Grid,
    pub counts: Vec<u64>,
    pub outside: u64,
}

impl GridDensity {
    pub fn get(&self, c: GridCell) -> u64 {
        self.counts[c.row as usize * self.grid.cols as usize + c.col as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Nonzero cells as `row,col,pickups`.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "row,col,pickups")?;
        for (i, &n) in self.counts.iter().enumerate().filter(|(_, &n)| n > 0) {
            writeln!(out, "{},{},{}", i / self.grid.cols as usize, i % self.grid.cols as usize, n)?;
        }
        out.flush()
    }
}

pub fn grid_density<'a>(trips: impl IntoIterator<Item = &'a TripRecord>, grid: &Grid) -> GridDensity {
    let mut counts = vec![0u64; grid.n_cells()];
    let mut outside = 0;
    for t in trips {
        match grid.cell_of(t.pickup) {
            Some(c) => counts[c.row as usize * grid.cols as usize + c.col as usize] += 1,
            None => outside += 1,
        }
    }
    GridDensity { grid: *grid, counts, outside }
}
