//! Synthetic fleet generator with known ground truth.
//!
//! Each driver works on some days; a worked day has a planned shift drawn
//! from a start-time mixture and a length distribution. Pickups inside the
//! planned window come from the configured arrival model, trip durations
//! from a gamma distribution, and trip distance from an hour-of-day speed.
//! Hourly rain scales the demand rate. Output files use the TLC-style trip
//! layout and the `station,hour,precip_mm` weather layout.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geo::{BBox, LatLon};
use crate::ingest::IdTables;
use crate::metrics::{pickups_per_driver, BinTable, SupplyMode};
use crate::rng::stream;
use crate::shifts::ShiftTable;
use crate::time::{Timestamp, SECS_PER_DAY, SECS_PER_HOUR};
use crate::weather::{StationSet, WeatherData, WeatherObservation};

const KM_PER_MILE: f64 = 1.609_344;
/// Idle gaps inside a true shift stay strictly below this.
const MAX_IDLE_S: i64 = 8 * SECS_PER_HOUR;
/// Detour factor between driven distance and straight-line displacement.
const DETOUR: f64 = 1.3;

const TAG_DRIVER: u64 = 0x4452_5652;
const TAG_RAIN: u64 = 0x5241_494e;
const TAG_WEATHER: u64 = 0x5754_4852;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartComponent {
    pub mean_hour: f64,
    pub sd_min: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftLength {
    pub mean_h: f64,
    pub sd_h: f64,
    pub min_h: f64,
    pub max_h: f64,
}

impl Default for ShiftLength {
    fn default() -> Self {
        ShiftLength { mean_h: 9.0, sd_h: 1.0, min_h: 4.0, max_h: 12.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalModel {
    /// Poisson pickup count in every driver-hour, at the hour's rate.
    #[default]
    Poisson,
    /// Pickups evenly spaced at the hour's rate.
    Regular,
    /// Exponential idle time after each dropoff, mean `idle_mean_min`
    /// divided by the hour's rain multiplier.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Demand {
    pub model: ArrivalModel,
    /// Pickups per driver-hour in clear weather.
    pub base_rate: f64,
    pub rain_multiplier: f64,
    /// Replaces `rain_multiplier` on Saturdays and Sundays when set.
    pub weekend_rain_multiplier: Option<f64>,
    pub idle_mean_min: f64,
}

impl Default for Demand {
    fn default() -> Self {
        Demand {
            model: ArrivalModel::Poisson,
            base_rate: 2.0,
            rain_multiplier: 1.0,
            weekend_rain_multiplier: None,
            idle_mean_min: 18.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rain {
    /// Chance that any given hour is rainy; ignored when `schedule` is set.
    pub probability: f64,
    /// Explicit rainy hours (`YYYY-MM-DD HH:MM`).
    pub schedule: Option<Vec<String>>,
    pub min_mm: f64,
    pub max_mm: f64,
    /// Fraction of hours whose reference-station value is withheld.
    pub missing_fraction: f64,
}

impl Default for Rain {
    fn default() -> Self {
        Rain { probability: 0.15, schedule: None, min_mm: 0.5, max_mm: 8.0, missing_fraction: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripModel {
    pub duration_mean_min: f64,
    pub duration_shape: f64,
    pub min_duration_s: i64,
    pub max_duration_min: f64,
    pub speed_kmh: f64,
    pub peak_speed_kmh: f64,
}

impl Default for TripModel {
    fn default() -> Self {
        TripModel {
            duration_mean_min: 12.0,
            duration_shape: 4.0,
            min_duration_s: 60,
            max_duration_min: 180.0,
            speed_kmh: 18.0,
            peak_speed_kmh: 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fare {
    pub base: f64,
    pub per_km: f64,
}

impl Default for Fare {
    fn default() -> Self {
        Fare { base: 3.0, per_km: 1.55 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hotspot {
    pub lat: f64,
    pub lon: f64,
    pub sd_km: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Space {
    /// min_lat, min_lon, max_lat, max_lon
    pub bbox: [f64; 4],
    pub hotspots: Vec<Hotspot>,
    pub uniform_weight: f64,
}

impl Default for Space {
    fn default() -> Self {
        let b = BBox::NYC;
        Space {
            bbox: [b.min_lat, b.min_lon, b.max_lat, b.max_lon],
            hotspots: vec![
                Hotspot { lat: 40.754, lon: -73.984, sd_km: 1.5, weight: 0.4 },
                Hotspot { lat: 40.715, lon: -74.005, sd_km: 1.2, weight: 0.2 },
                Hotspot { lat: 40.774, lon: -73.872, sd_km: 0.6, weight: 0.1 },
                Hotspot { lat: 40.645, lon: -73.785, sd_km: 0.8, weight: 0.1 },
            ],
            uniform_weight: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RowOrder {
    /// Sorted by pickup time, then driver.
    #[default]
    Time,
    /// Grouped by driver; lets large files stream without sorting.
    Driver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_drivers: usize,
    pub days: u32,
    /// First simulated day, `YYYY-MM-DD`.
    pub start_date: String,
    /// Chance that a driver works on a given day.
    pub work_prob: f64,
    pub shift_start: Vec<StartComponent>,
    pub shift_length: ShiftLength,
    pub min_rest_h: f64,
    /// Unobserved cruising before the first pickup of each shift.
    pub precruise_min: f64,
    pub demand: Demand,
    pub rain: Rain,
    pub trip: TripModel,
    pub fare: Fare,
    pub space: Space,
    pub row_order: RowOrder,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            n_drivers: 100,
            days: 30,
            start_date: "2013-01-07".into(),
            work_prob: 0.75,
            shift_start: vec![
                StartComponent { mean_hour: 6.0, sd_min: 60.0, weight: 0.5 },
                StartComponent { mean_hour: 16.5, sd_min: 60.0, weight: 0.5 },
            ],
            shift_length: ShiftLength::default(),
            min_rest_h: 8.5,
            precruise_min: 0.0,
            demand: Demand::default(),
            rain: Rain::default(),
            trip: TripModel::default(),
            fare: Fare::default(),
            space: Space::default(),
            row_order: RowOrder::Time,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn start_day(&self) -> Result<Timestamp, SimError> {
        let d = NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|_| SimError::Invalid(format!("start_date {:?} is not YYYY-MM-DD", self.start_date)))?;
        Ok(Timestamp::from_naive(d.and_hms_opt(0, 0, 0).expect("midnight exists")))
    }

    pub fn bbox(&self) -> Result<BBox, SimError> {
        let [a, b, c, d] = self.space.bbox;
        BBox::new(a, b, c, d).map_err(|e| SimError::Invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: &str| Err(SimError::Invalid(m.to_string()));
        self.start_day()?;
        self.bbox()?;
        if self.n_drivers == 0 || self.days == 0 {
            return invalid("n_drivers and days must be positive");
        }
        if !(0.0..=1.0).contains(&self.work_prob) {
            return invalid("work_prob must lie in [0, 1]");
        }
        if self.shift_start.is_empty() {
            return invalid("shift_start needs at least one component");
        }
        let w: f64 = self.shift_start.iter().map(|c| c.weight).sum();
        if (w - 1.0).abs() > 1e-9 || self.shift_start.iter().any(|c| c.weight < 0.0 || c.sd_min < 0.0) {
            return invalid("shift_start weights must be nonnegative and sum to 1");
        }
        let sl = &self.shift_length;
        if !(sl.min_h > 0.0 && sl.min_h <= sl.max_h && sl.sd_h >= 0.0 && sl.max_h < 24.0) {
            return invalid("shift_length needs 0 < min_h <= max_h < 24 and sd_h >= 0");
        }
        if self.min_rest_h * 3600.0 <= MAX_IDLE_S as f64 {
            return invalid("min_rest_h must exceed 8 hours so consecutive shifts stay separable");
        }
        if self.precruise_min < 0.0 {
            return invalid("precruise_min must be nonnegative");
        }
        let d = &self.demand;
        let mults = [Some(d.rain_multiplier), d.weekend_rain_multiplier];
        if d.base_rate.is_nan() || d.base_rate <= 0.0 || mults.iter().flatten().any(|&m| !m.is_finite() || m < 0.0) {
            return invalid("base_rate must be positive and rain multipliers nonnegative");
        }
        let r = &self.rain;
        if !(0.0..=1.0).contains(&r.probability) || !(0.0..=1.0).contains(&r.missing_fraction) {
            return invalid("rain probabilities must lie in [0, 1]");
        }
        if !(r.min_mm > 0.0 && r.min_mm <= r.max_mm) {
            return invalid("rain needs 0 < min_mm <= max_mm");
        }
        let t = &self.trip;
        if !(t.duration_mean_min > 0.0
            && t.duration_shape > 0.0
            && t.min_duration_s >= 1
            && t.speed_kmh > 0.0
            && t.peak_speed_kmh > 0.0)
            || t.max_duration_min * 60.0 < t.min_duration_s as f64
        {
            return invalid("trip durations and speeds must be positive");
        }
        if self.fare.base < 0.0 || self.fare.per_km < 0.0 {
            return invalid("fares must be nonnegative");
        }
        let sw: f64 = self.space.hotspots.iter().map(|h| h.weight).sum::<f64>() + self.space.uniform_weight;
        if (sw - 1.0).abs() > 1e-9 || self.space.hotspots.iter().any(|h| h.weight < 0.0 || h.sd_km < 0.0) {
            return invalid("hotspot weights plus uniform_weight must sum to 1");
        }

        if sl.min_h * 60.0 < t.duration_mean_min {
            return Err(SimError::Infeasible("shortest shift is shorter than one mean trip".into()));
        }
        let max_rate = d.base_rate * mults.iter().flatten().fold(1.0f64, |a, &m| a.max(m));
        match d.model {
            ArrivalModel::Poisson | ArrivalModel::Regular => {
                if max_rate * t.min_duration_s as f64 >= SECS_PER_HOUR as f64 / 2.0 {
                    return Err(SimError::Infeasible(format!(
                        "{max_rate} pickups/hour leave less than two minimum trip durations between pickups"
                    )));
                }
            }
            ArrivalModel::Idle => {
                if d.idle_mean_min.is_nan() || d.idle_mean_min <= 0.0 {
                    return invalid("idle_mean_min must be positive");
                }
            }
        }
        if let Some(s) = &r.schedule {
            for h in s {
                Timestamp::parse(h.as_bytes()).map_err(|_| SimError::Invalid(format!("bad rain hour {h:?}")))?;
            }
        }
        Ok(())
    }
}

/// One generated trip; `driver` indexes both the hack license and medallion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTrip {
    pub driver: u32,
    pub pickup_time: Timestamp,
    pub dropoff_time: Timestamp,
    pub pickup: LatLon,
    pub dropoff: LatLon,
    pub distance_km: f64,
    pub fare: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrueShift {
    pub driver: u32,
    /// Includes pre-cruise time when configured.
    pub start: Timestamp,
    pub first_pickup: Timestamp,
    pub end: Timestamp,
    pub n_trips: usize,
}

pub fn hack_license(driver: u32) -> String {
    format!("H{driver:05}")
}

pub fn medallion(driver: u32) -> String {
    format!("M{driver:05}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub shifts: Vec<TrueShift>,
    pub period_start: Timestamp,
    /// Per hour from `period_start`: rain flag and pickups per driver-hour.
    pub rainy: Vec<bool>,
    pub demand_rate: Vec<f64>,
    /// Distinct drivers whose true shift touches each hour.
    pub supply: Vec<u32>,
}

impl GroundTruth {
    pub fn hour_index(&self, hour: Timestamp) -> Option<usize> {
        let i = (hour.0 - self.period_start.0).div_euclid(SECS_PER_HOUR);
        (i >= 0 && (i as usize) < self.rainy.len()).then_some(i as usize)
    }

    pub fn hours(&self) -> impl Iterator<Item = Timestamp> + '_ {
        (0..self.rainy.len()).map(|i| self.period_start.plus(i as i64 * SECS_PER_HOUR))
    }

    pub fn write_shifts_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "driver,start,first_pickup,end,n_trips")?;
        for s in &self.shifts {
            writeln!(out, "{},{},{},{},{}", hack_license(s.driver), s.start, s.first_pickup, s.end, s.n_trips)?;
        }
        out.flush()
    }

    pub fn write_hours_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "hour,rainy,demand_rate,supply")?;
        for (i, h) in self.hours().enumerate() {
            writeln!(out, "{},{},{:.4},{}", h.format_minutes(), self.rainy[i], self.demand_rate[i], self.supply[i])?;
        }
        out.flush()
    }
}

/// Everything shared by the per-driver generators.
struct World<'a> {
    cfg: &'a SimConfig,
    bbox: BBox,
    day0: Timestamp,
    rainy: Vec<bool>,
    rate: Vec<f64>,
    multiplier: Vec<f64>,
}

impl World<'_> {
    fn new(cfg: &SimConfig) -> Result<World<'_>, SimError> {
        cfg.validate()?;
        let day0 = cfg.start_day()?;
        let n_hours = (cfg.days as usize + 1) * 24;
        let rainy: Vec<bool> = match &cfg.rain.schedule {
            Some(hours) => {
                let mut v = vec![false; n_hours];
                for h in hours {
                    let t = Timestamp::parse(h.as_bytes()).expect("validated");
                    let i = (t.0 - day0.0).div_euclid(SECS_PER_HOUR);
                    if (0..n_hours as i64).contains(&i) {
                        v[i as usize] = true;
                    }
                }
                v
            }
            None => {
                let mut rng = stream(cfg.seed, TAG_RAIN);
                (0..n_hours).map(|_| rng.random_bool(cfg.rain.probability)).collect()
            }
        };
        let multiplier: Vec<f64> = rainy
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                if !r {
                    return 1.0;
                }
                let weekend = day0.plus(i as i64 * SECS_PER_HOUR).is_weekend();
                match cfg.demand.weekend_rain_multiplier {
                    Some(m) if weekend => m,
                    _ => cfg.demand.rain_multiplier,
                }
            })
            .collect();
        let rate = multiplier.iter().map(|m| cfg.demand.base_rate * m).collect();
        Ok(World { cfg, bbox: cfg.bbox()?, day0, rainy, rate, multiplier })
    }

    fn hour_idx(&self, t: i64) -> Option<usize> {
        let i = (t - self.day0.0).div_euclid(SECS_PER_HOUR);
        (i >= 0 && (i as usize) < self.rate.len()).then_some(i as usize)
    }

    fn rate_at(&self, t: i64) -> f64 {
        self.hour_idx(t).map_or(self.cfg.demand.base_rate, |i| self.rate[i])
    }

    fn multiplier_at(&self, t: i64) -> f64 {
        self.hour_idx(t).map_or(1.0, |i| self.multiplier[i])
    }

    fn period_end(&self) -> i64 {
        self.day0.0 + i64::from(self.cfg.days) * SECS_PER_DAY
    }

    fn location(&self, rng: &mut ChaCha8Rng) -> LatLon {
        let sp = &self.cfg.space;
        let mut u = rng.random::<f64>();
        for h in &sp.hotspots {
            if u < h.weight {
                let n = Normal::new(0.0, h.sd_km.max(1e-9)).expect("finite sd");
                let (dy, dx) = (n.sample(rng), n.sample(rng));
                return self.bbox.clamp(offset(LatLon::new(h.lat, h.lon), dy, dx));
            }
            u -= h.weight;
        }
        let b = &self.bbox;
        LatLon::new(rng.random_range(b.min_lat..b.max_lat), rng.random_range(b.min_lon..b.max_lon))
    }

    fn speed_kmh(&self, t: Timestamp) -> f64 {
        match t.hour_of_day() {
            7..=9 | 16..=18 => self.cfg.trip.peak_speed_kmh,
            _ => self.cfg.trip.speed_kmh,
        }
    }

    fn duration_s(&self, rng: &mut ChaCha8Rng) -> i64 {
        let t = &self.cfg.trip;
        let g = Gamma::new(t.duration_shape, t.duration_mean_min * 60.0 / t.duration_shape).expect("validated");
        let max = (t.max_duration_min * 60.0) as i64;
        (g.sample(rng).round() as i64).clamp(t.min_duration_s, max)
    }

    /// Pickup times in `[from, to)`.
    fn pickups(&self, rng: &mut ChaCha8Rng, from: i64, to: i64) -> Vec<i64> {
        let gap = self.cfg.trip.min_duration_s;
        let mut out = Vec::new();
        match self.cfg.demand.model {
            ArrivalModel::Poisson => {
                let mut a = from;
                while a < to {
                    let b = ((a.div_euclid(SECS_PER_HOUR) + 1) * SECS_PER_HOUR).min(to);
                    let len = b - a;
                    let mean = self.rate_at(a) * len as f64 / SECS_PER_HOUR as f64;
                    let mut k =
                        if mean > 0.0 { Poisson::new(mean).expect("positive mean").sample(rng) as i64 } else { 0 };
                    // Room for k pickups spaced at least `gap` apart, the
                    // last one at least `gap` before the segment end.
                    k = k.min((len - 1) / gap);
                    if k > 0 {
                        let free = len - k * gap;
                        let mut u: Vec<i64> = (0..k).map(|_| rng.random_range(0..free)).collect();
                        u.sort_unstable();
                        out.extend(u.iter().enumerate().map(|(i, &x)| a + x + i as i64 * gap));
                    }
                    a = b;
                }
            }
            ArrivalModel::Regular => {
                let mut t = from;
                while t < to {
                    let r = self.rate_at(t);
                    if r > 0.0 {
                        out.push(t);
                        t += ((SECS_PER_HOUR as f64 / r).round() as i64).max(1);
                    } else {
                        t = (t.div_euclid(SECS_PER_HOUR) + 1) * SECS_PER_HOUR;
                    }
                }
            }
            ArrivalModel::Idle => unreachable!("idle arrivals are generated with their trips"),
        }
        out
    }

    fn trip(&self, rng: &mut ChaCha8Rng, driver: u32, pickup: i64, duration: i64) -> SimTrip {
        let pickup_time = Timestamp(pickup);
        let from = self.location(rng);
        let km = self.speed_kmh(pickup_time) * duration as f64 / SECS_PER_HOUR as f64;
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let straight = km / DETOUR;
        let to = self.bbox.clamp(offset(from, straight * angle.sin(), straight * angle.cos()));
        SimTrip {
            driver,
            pickup_time,
            dropoff_time: Timestamp(pickup + duration),
            pickup: from,
            dropoff: to,
            distance_km: km,
            fare: self.cfg.fare.base + self.cfg.fare.per_km * km,
        }
    }

    /// Trips of one planned shift window, truncated at the first idle gap
    /// of eight hours or more.
    fn shift_trips(&self, rng: &mut ChaCha8Rng, driver: u32, from: i64, to: i64) -> Vec<SimTrip> {
        let mut trips = Vec::new();
        if self.cfg.demand.model == ArrivalModel::Idle {
            let mut t = from;
            while t < to {
                let d = self.duration_s(rng);
                trips.push(self.trip(rng, driver, t, d));
                let end = t + d;
                let m = self.multiplier_at(end);
                if m <= 0.0 {
                    break;
                }
                let rate = m / (self.cfg.demand.idle_mean_min * 60.0);
                let idle = Exp::new(rate).expect("positive rate").sample(rng).round() as i64;
                if idle >= MAX_IDLE_S {
                    break;
                }
                t = end + idle;
            }
            return trips;
        }
        let pickups = self.pickups(rng, from, to);
        for (i, &p) in pickups.iter().enumerate() {
            if let Some(prev) = trips.last().map(|t: &SimTrip| t.dropoff_time.0) {
                if p - prev >= MAX_IDLE_S {
                    break;
                }
            }
            let mut d = self.duration_s(rng);
            if let Some(&next) = pickups.get(i + 1) {
                d = d.min(next - p);
            }
            trips.push(self.trip(rng, driver, p, d));
        }
        trips
    }

    fn driver(&self, driver: u32) -> (Vec<SimTrip>, Vec<TrueShift>) {
        let cfg = self.cfg;
        let mut rng = stream(cfg.seed, TAG_DRIVER ^ (u64::from(driver) << 32));
        let pick = WeightedIndex::new(cfg.shift_start.iter().map(|c| c.weight)).expect("validated weights");
        let precruise = (cfg.precruise_min * 60.0).round() as i64;
        let rest = (cfg.min_rest_h * SECS_PER_HOUR as f64).round() as i64;
        let sl = &cfg.shift_length;
        let len_dist = Normal::new(sl.mean_h, sl.sd_h).expect("validated");
        let mut trips = Vec::new();
        let mut shifts = Vec::new();
        let mut prev_end: Option<i64> = None;
        for day in 0..i64::from(cfg.days) {
            if !rng.random_bool(cfg.work_prob) {
                continue;
            }
            let comp = cfg.shift_start[pick.sample(&mut rng)];
            let start_min =
                comp.mean_hour * 60.0 + Normal::new(0.0, comp.sd_min.max(0.0)).expect("sd").sample(&mut rng);
            let len_h = len_dist.sample(&mut rng).clamp(sl.min_h, sl.max_h);
            let day_start = self.day0.0 + day * SECS_PER_DAY;
            let mut start = (day_start + (start_min * 60.0).round() as i64).max(self.day0.0 + precruise);
            if let Some(e) = prev_end {
                start = start.max(e + rest + precruise);
            }
            if start >= self.period_end() {
                break;
            }
            let end = start + (len_h * SECS_PER_HOUR as f64).round() as i64;
            let st = self.shift_trips(&mut rng, driver, start, end);
            let (Some(first), Some(last)) = (st.first(), st.last()) else { continue };
            shifts.push(TrueShift {
                driver,
                start: first.pickup_time.plus(-precruise),
                first_pickup: first.pickup_time,
                end: last.dropoff_time,
                n_trips: st.len(),
            });
            prev_end = Some(last.dropoff_time.0);
            trips.extend(st);
        }
        (trips, shifts)
    }

    fn truth(&self, mut shifts: Vec<TrueShift>) -> GroundTruth {
        shifts.sort_by_key(|s| (s.driver, s.start));
        let n = self.rainy.len();
        let mut supply = vec![0u32; n];
        let mut last: HashMap<u32, usize> = HashMap::new();
        for s in &shifts {
            let (Some(a), b) = (self.hour_idx(s.start.0), self.hour_idx(s.end.0)) else { continue };
            let b = b.unwrap_or(n - 1);
            let a = match last.get(&s.driver) {
                Some(&l) => a.max(l + 1),
                None => a,
            };
            for v in supply.iter_mut().take(b + 1).skip(a) {
                *v += 1;
            }
            if a <= b {
                last.insert(s.driver, b);
            }
        }
        GroundTruth {
            shifts,
            period_start: self.day0,
            rainy: self.rainy.clone(),
            demand_rate: self.rate.clone(),
            supply,
        }
    }

    fn weather(&self) -> WeatherData {
        let stations = StationSet::nyc();
        let reference = stations.require("central_park").expect("built-in station");
        let mut rng = stream(self.cfg.seed, TAG_WEATHER);
        let r = &self.cfg.rain;
        let mut data = WeatherData::default();
        for (i, &rainy) in self.rainy.iter().enumerate() {
            let hour = self.day0.plus(i as i64 * SECS_PER_HOUR);
            let missing = rng.random_bool(r.missing_fraction);
            for s in 0..stations.len() {
                // One decimal place, as in the weather file.
                let v = if rainy { (rng.random_range(r.min_mm..=r.max_mm) * 10.0).round() / 10.0 } else { 0.0 };
                let precip_mm = (s != reference || !missing).then_some(v);
                data.insert(WeatherObservation { station: s, hour, precip_mm });
            }
        }
        data
    }
}

fn offset(p: LatLon, north_km: f64, east_km: f64) -> LatLon {
    let dlat = north_km / 111.195;
    let dlon = east_km / (111.195 * p.lat.to_radians().cos());
    LatLon::new(p.lat + dlat, p.lon + dlon)
}

pub const TRIP_HEADER: &str = "medallion,hack_license,pickup_datetime,dropoff_datetime,pickup_latitude,pickup_longitude,dropoff_latitude,dropoff_longitude,trip_distance,total_amount";

fn write_trip<W: Write>(out: &mut W, t: &SimTrip) -> io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3},{:.2}",
        medallion(t.driver),
        hack_license(t.driver),
        t.pickup_time,
        t.dropoff_time,
        t.pickup.lat,
        t.pickup.lon,
        t.dropoff.lat,
        t.dropoff.lon,
        t.distance_km / KM_PER_MILE,
        t.fare
    )
}

pub fn write_trips<W: Write>(w: W, trips: &[SimTrip]) -> io::Result<()> {
    let mut out = io::BufWriter::with_capacity(1 << 20, w);
    writeln!(out, "{TRIP_HEADER}")?;
    for t in trips {
        write_trip(&mut out, t)?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trips: Vec<SimTrip>,
    pub weather: WeatherData,
    pub truth: GroundTruth,
}

fn sort_rows(trips: &mut [SimTrip], order: RowOrder) {
    if order == RowOrder::Time {
        trips.sort_by_key(|t| (t.pickup_time, t.driver));
    }
}

/// Runs the whole simulation in memory.
pub fn simulate(cfg: &SimConfig) -> Result<Simulation, SimError> {
    let world = World::new(cfg)?;
    let per_driver: Vec<(Vec<SimTrip>, Vec<TrueShift>)> =
        (0..cfg.n_drivers as u32).into_par_iter().map(|d| world.driver(d)).collect();
    let mut trips = Vec::with_capacity(per_driver.iter().map(|d| d.0.len()).sum());
    let mut shifts = Vec::new();
    for (t, s) in per_driver {
        trips.extend(t);
        shifts.extend(s);
    }
    sort_rows(&mut trips, cfg.row_order);
    Ok(Simulation { trips, weather: world.weather(), truth: world.truth(shifts) })
}

/// Writes the trip file as it is generated. With `RowOrder::Driver` only a
/// block of drivers is held in memory at a time.
pub fn simulate_to<W: Write>(cfg: &SimConfig, trips_out: W) -> Result<(WeatherData, GroundTruth, u64), SimError> {
    if cfg.row_order == RowOrder::Time {
        let sim = simulate(cfg)?;
        write_trips(trips_out, &sim.trips)?;
        return Ok((sim.weather, sim.truth, sim.trips.len() as u64));
    }
    let world = World::new(cfg)?;
    let mut out = io::BufWriter::with_capacity(1 << 20, trips_out);
    writeln!(out, "{TRIP_HEADER}")?;
    let mut shifts = Vec::new();
    let mut rows = 0u64;
    let block = 256u32;
    for first in (0..cfg.n_drivers as u32).step_by(block as usize) {
        let last = (first + block).min(cfg.n_drivers as u32);
        let part: Vec<_> = (first..last).into_par_iter().map(|d| world.driver(d)).collect();
        for (t, s) in part {
            for trip in &t {
                write_trip(&mut out, trip)?;
            }
            rows += t.len() as u64;
            shifts.extend(s);
        }
    }
    out.flush()?;
    Ok((world.weather(), world.truth(shifts), rows))
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("driver sets differ: {missing} true drivers not inferred, {extra} inferred drivers not in truth")]
pub struct DriverMismatch {
    pub missing: usize,
    pub extra: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecoveryReport {
    pub true_shifts: usize,
    pub inferred_shifts: usize,
    /// True shifts with an inferred shift of identical first pickup, last
    /// dropoff and trip count.
    pub exact_matches: usize,
    /// Unmatched true shifts plus unmatched inferred shifts.
    pub partition_errors: usize,
    pub drivers_with_exact_count: usize,
    pub drivers: usize,
    pub mean_abs_start_delta_s: f64,
    pub mean_abs_end_delta_s: f64,
    pub max_abs_start_delta_s: i64,
    pub max_abs_end_delta_s: i64,
    pub supply_mae: f64,
    /// Hours where inferred supply exceeds the true supply.
    pub supply_over_hours: usize,
    pub true_rain_ratio: f64,
    pub inferred_rain_ratio: f64,
    pub rain_ratio_rel_error: f64,
}

impl fmt::Display for RecoveryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.rows() {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

impl RecoveryReport {
    fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("true_shifts", self.true_shifts.to_string()),
            ("inferred_shifts", self.inferred_shifts.to_string()),
            ("exact_matches", self.exact_matches.to_string()),
            ("partition_errors", self.partition_errors.to_string()),
            ("drivers", self.drivers.to_string()),
            ("drivers_with_exact_count", self.drivers_with_exact_count.to_string()),
            ("mean_abs_start_delta_s", format!("{:.3}", self.mean_abs_start_delta_s)),
            ("mean_abs_end_delta_s", format!("{:.3}", self.mean_abs_end_delta_s)),
            ("max_abs_start_delta_s", self.max_abs_start_delta_s.to_string()),
            ("max_abs_end_delta_s", self.max_abs_end_delta_s.to_string()),
            ("supply_mae", format!("{:.6}", self.supply_mae)),
            ("supply_over_hours", self.supply_over_hours.to_string()),
            ("true_rain_ratio", format!("{:.6}", self.true_rain_ratio)),
            ("inferred_rain_ratio", format!("{:.6}", self.inferred_rain_ratio)),
            ("rain_ratio_rel_error", format!("{:.6}", self.rain_ratio_rel_error)),
        ]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "metric,value")?;
        for (k, v) in self.rows() {
            writeln!(out, "{k},{v}")?;
        }
        out.flush()
    }
}

fn driver_index(name: &str) -> Option<u32> {
    name.strip_prefix(['H', 'M'])?.parse().ok()
}

/// Compares pipeline output on simulated data with the simulation's truth.
///
/// Bins must be city-wide bins of the same trips; the rain ratio uses the
/// truth's rain flags and overlap supply.
pub fn score_recovery(
    truth: &GroundTruth,
    table: &ShiftTable,
    ids: &IdTables,
    bins: &BinTable,
) -> Result<RecoveryReport, DriverMismatch> {
    let identity = table.options.identity;
    let mut inferred: BTreeMap<u32, Vec<(Timestamp, Timestamp, usize)>> = BTreeMap::new();
    let mut unparsable = 0;
    for s in table.shifts() {
        match driver_index(identity.resolve(ids, s.driver)) {
            Some(d) => inferred.entry(d).or_default().push((s.start, s.end, s.n_pickups)),
            None => unparsable += 1,
        }
    }
    let mut expected: BTreeMap<u32, Vec<&TrueShift>> = BTreeMap::new();
    for s in &truth.shifts {
        expected.entry(s.driver).or_default().push(s);
    }
    let missing = expected.keys().filter(|d| !inferred.contains_key(d)).count();
    let extra = inferred.keys().filter(|d| !expected.contains_key(d)).count() + unparsable;
    if missing + extra > 0 {
        return Err(DriverMismatch { missing, extra });
    }

    let mut rep = RecoveryReport {
        true_shifts: truth.shifts.len(),
        inferred_shifts: table.len(),
        drivers: expected.len(),
        ..Default::default()
    };
    let (mut sum_start, mut sum_end, mut n_pairs) = (0i64, 0i64, 0usize);
    for (d, want) in &expected {
        let got = &inferred[d];
        if got.len() == want.len() {
            rep.drivers_with_exact_count += 1;
            for (g, w) in got.iter().zip(want) {
                let ds = (g.0 .0 - w.start.0).abs();
                let de = (g.1 .0 - w.end.0).abs();
                sum_start += ds;
                sum_end += de;
                rep.max_abs_start_delta_s = rep.max_abs_start_delta_s.max(ds);
                rep.max_abs_end_delta_s = rep.max_abs_end_delta_s.max(de);
                n_pairs += 1;
            }
        }
        let matched = want
            .iter()
            .filter(|w| got.iter().any(|g| g.0 == w.first_pickup && g.1 == w.end && g.2 == w.n_trips))
            .count();
        rep.exact_matches += matched;
        rep.partition_errors += (want.len() - matched) + (got.len() - matched);
    }
    if n_pairs > 0 {
        rep.mean_abs_start_delta_s = sum_start as f64 / n_pairs as f64;
        rep.mean_abs_end_delta_s = sum_end as f64 / n_pairs as f64;
    }

    let mut abs_err = 0.0;
    let (mut rain_sum, mut rain_n, mut clear_sum, mut clear_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut true_rain, mut true_clear) = (0.0, 0.0);
    for (i, hour) in truth.hours().enumerate() {
        let bin = bins.get(hour, None);
        let inferred_supply = bin.map_or(0, |b| b.supply);
        abs_err += (f64::from(inferred_supply) - f64::from(truth.supply[i])).abs();
        if inferred_supply > truth.supply[i] {
            rep.supply_over_hours += 1;
        }
        if let Some(v) = bin.and_then(|b| pickups_per_driver(b, SupplyMode::Overlap).ok()) {
            if truth.rainy[i] {
                rain_sum += v;
                rain_n += 1;
                true_rain += truth.demand_rate[i];
            } else {
                clear_sum += v;
                clear_n += 1;
                true_clear += truth.demand_rate[i];
            }
        }
    }
    rep.supply_mae = abs_err / truth.supply.len().max(1) as f64;
    if rain_n > 0 && clear_n > 0 {
        rep.true_rain_ratio = (true_rain / rain_n as f64) / (true_clear / clear_n as f64);
        rep.inferred_rain_ratio = (rain_sum / rain_n as f64) / (clear_sum / clear_n as f64);
        rep.rain_ratio_rel_error = (rep.inferred_rain_ratio / rep.true_rain_ratio - 1.0).abs();
    } else {
        rep.true_rain_ratio = f64::NAN;
        rep.inferred_rain_ratio = f64::NAN;
        rep.rain_ratio_rel_error = f64::NAN;
    }
    Ok(rep)
}
