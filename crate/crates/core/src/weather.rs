//! Hourly station precipitation, neighbour imputation and rain classification.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use crate::geo::{haversine_km, LatLon};
use crate::time::Timestamp;

pub const DEFAULT_RAIN_THRESHOLD_MM: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: String,
    pub pos: LatLon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationSet {
    stations: Vec<Station>,
}

#[derive(Debug, thiserror::Error)]
pub enum WeatherError {
    #[error("line {line}: negative precipitation")]
    NegativePrecipitation { line: u64 },
    #[error("line {line}: unknown station id {id:?}")]
    UnknownStation { line: u64, id: String },
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("duplicate station id {0:?}")]
    DuplicateStation(String),
    #[error("no station named {0:?}")]
    NoSuchStation(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl StationSet {
    /// Central Park plus the LaGuardia and JFK airport stations.
    pub fn nyc() -> Self {
        StationSet {
            stations: vec![
                Station { id: "central_park".into(), pos: LatLon::new(40.7789, -73.9692) },
                Station { id: "lga".into(), pos: LatLon::new(40.7794, -73.8803) },
                Station { id: "jfk".into(), pos: LatLon::new(40.6398, -73.7789) },
            ],
        }
    }

    pub fn new(stations: Vec<Station>) -> Result<Self, WeatherError> {
        for (i, s) in stations.iter().enumerate() {
            if stations[..i].iter().any(|o| o.id == s.id) {
                return Err(WeatherError::DuplicateStation(s.id.clone()));
            }
        }
        Ok(StationSet { stations })
    }

    /// Reads `station_id,lat,lon` rows (with header).
    pub fn from_csv<R: Read>(r: R) -> Result<Self, WeatherError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut out = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let bad = |msg: &str| WeatherError::Malformed { line, msg: msg.to_string() };
            if rec.len() < 3 {
                return Err(bad("expected station_id,lat,lon"));
            }
            let lat = rec[1].parse().map_err(|_| bad("bad latitude"))?;
            let lon = rec[2].parse().map_err(|_| bad("bad longitude"))?;
            out.push(Station { id: rec[0].to_string(), pos: LatLon::new(lat, lon) });
        }
        Self::new(out)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "station_id,lat,lon")?;
        for s in &self.stations {
            writeln!(out, "{},{},{}", s.id, s.pos.lat, s.pos.lon)?;
        }
        out.flush()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn require(&self, id: &str) -> Result<usize, WeatherError> {
        self.index_of(id).ok_or_else(|| WeatherError::NoSuchStation(id.to_string()))
    }

    pub fn get(&self, i: usize) -> &Station {
        &self.stations[i]
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherObservation {
    pub station: usize,
    pub hour: Timestamp,
    /// `None` when the station reported no value for the hour.
    pub precip_mm: Option<f64>,
}

/// Parsed observations keyed by (hour, station); at most one per key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeatherData {
    pub observations: BTreeMap<(Timestamp, usize), Option<f64>>,
    pub rows: u64,
    pub duplicates: u64,
}

impl WeatherData {
    pub fn iter(&self) -> impl Iterator<Item = WeatherObservation> + '_ {
        self.observations.iter().map(|(&(hour, station), &precip_mm)| WeatherObservation { station, hour, precip_mm })
    }

    pub fn insert(&mut self, obs: WeatherObservation) {
        self.rows += 1;
        if self.observations.insert((obs.hour.floor_hour(), obs.station), obs.precip_mm).is_some() {
            self.duplicates += 1;
        }
    }
}

/// Parses `station,hour,precip_mm` rows. Hours are truncated to the hour;
/// an empty, `NA` or `M` precipitation is a missing value. When a
/// (station, hour) repeats, the last row wins and the duplicate is counted.
pub fn parse_weather<R: Read>(r: R, stations: &StationSet) -> Result<WeatherData, WeatherError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(r);
    let mut data = WeatherData::default();
    let mut rec = csv::StringRecord::new();
    let mut line = 1u64;
    while rdr.read_record(&mut rec)? {
        line += 1;
        let bad = |msg: &str| WeatherError::Malformed { line, msg: msg.to_string() };
        if rec.len() < 3 {
            return Err(bad("expected station,hour,precip_mm"));
        }
        let station =
            stations.index_of(&rec[0]).ok_or_else(|| WeatherError::UnknownStation { line, id: rec[0].to_string() })?;
        let hour = Timestamp::parse(rec[1].as_bytes()).map_err(|_| bad("malformed hour"))?;
        let precip_mm = match &rec[2] {
            "" | "NA" | "M" => None,
            v => {
                let p: f64 = v.parse().map_err(|_| bad("non-numeric precipitation"))?;
                if !p.is_finite() {
                    return Err(bad("non-numeric precipitation"));
                }
                if p < 0.0 {
                    return Err(WeatherError::NegativePrecipitation { line });
                }
                Some(p)
            }
        };
        data.insert(WeatherObservation { station, hour, precip_mm });
    }
    Ok(data)
}

pub fn write_weather<W: Write>(w: W, data: &WeatherData, stations: &StationSet) -> io::Result<()> {
    let mut out = io::BufWriter::new(w);
    writeln!(out, "station,hour,precip_mm")?;
    for o in data.iter() {
        let p = o.precip_mm.map(|p| format!("{p:.1}")).unwrap_or_default();
        writeln!(out, "{},{},{}", stations.get(o.station).id, o.hour.format_minutes(), p)?;
    }
    out.flush()
}

/// Inverse-distance-weighted (power 2) estimate at `target` from neighbour
/// values. A neighbour at zero distance is returned as-is.
pub fn idw(target: LatLon, neighbours: &[(LatLon, f64)]) -> Option<f64> {
    if neighbours.is_empty() {
        return None;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(pos, v) in neighbours {
        let d = haversine_km(target, pos);
        if d == 0.0 {
            return Some(v);
        }
        let w = 1.0 / (d * d);
        num += w * v;
        den += w;
    }
    Some(num / den)
}

/// Estimates the reference station's precipitation for one hour from the
/// other stations' simultaneous values (`values[i]` belongs to station `i`).
/// Returns `None` when no other station has a value.
pub fn impute_missing(stations: &StationSet, reference: usize, values: &[Option<f64>]) -> Option<f64> {
    let neighbours: Vec<(LatLon, f64)> = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != reference)
        .filter_map(|(i, v)| v.map(|v| (stations.get(i).pos, v)))
        .collect();
    idw(stations.get(reference).pos, &neighbours)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourWeather {
    pub hour: Timestamp,
    pub precip_mm: f64,
    pub rainy: bool,
    pub imputed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HourClass {
    Known(HourWeather),
    /// Every station was missing for the hour.
    Unclassifiable,
}

impl HourClass {
    pub fn rainy(&self) -> Option<bool> {
        match self {
            HourClass::Known(h) => Some(h.rainy),
            HourClass::Unclassifiable => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeatherTable {
    pub hours: BTreeMap<Timestamp, HourClass>,
    pub threshold_mm: f64,
}

impl WeatherTable {
    pub fn rainy(&self, hour: Timestamp) -> Option<bool> {
        self.hours.get(&hour.floor_hour()).and_then(HourClass::rainy)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for h in self.hours.values() {
            match h.rainy() {
                Some(true) => c.0 += 1,
                Some(false) => c.1 += 1,
                None => c.2 += 1,
            }
        }
        c
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(w);
        writeln!(out, "hour,precip_mm,rainy,imputed")?;
        for (hour, c) in &self.hours {
            match c {
                HourClass::Known(h) => {
                    writeln!(out, "{},{:.3},{},{}", hour.format_minutes(), h.precip_mm, h.rainy, h.imputed)?
                }
                HourClass::Unclassifiable => writeln!(out, "{},,,false", hour.format_minutes())?,
            }
        }
        out.flush()
    }
}

/// Classifies every hour seen at any station. The reference station's value
/// is used when present, otherwise it is imputed from the other stations.
pub fn classify_hours(data: &WeatherData, stations: &StationSet, reference: usize, threshold_mm: f64) -> WeatherTable {
    let mut hours = BTreeMap::new();
    let mut values = vec![None; stations.len()];
    let mut iter = data.observations.iter().peekable();
    while let Some(&(&(hour, _), _)) = iter.peek() {
        values.iter_mut().for_each(|v| *v = None);
        while let Some((&(_, s), &p)) = iter.next_if(|((h, _), _)| *h == hour) {
            values[s] = p;
        }
        let class = match values[reference] {
            Some(p) => HourClass::Known(HourWeather { hour, precip_mm: p, rainy: p >= threshold_mm, imputed: false }),
            None => match impute_missing(stations, reference, &values) {
                Some(p) => {
                    HourClass::Known(HourWeather { hour, precip_mm: p, rainy: p >= threshold_mm, imputed: true })
                }
                None => HourClass::Unclassifiable,
            },
        };
        hours.insert(hour, class);
    }
    WeatherTable { hours, threshold_mm }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stations() -> StationSet {
        StationSet::nyc()
    }

    #[test]
    fn parse_rows() {
        let text = "station,hour,precip_mm\ncentral_park,2013-06-07 14:00,2.5\n";
        let d = parse_weather(text.as_bytes(), &stations()).unwrap();
        let o: Vec<_> = d.iter().collect();
        assert_eq!(o.len(), 1);
        assert_eq!(o[0].precip_mm, Some(2.5));
        assert_eq!(o[0].hour.format_minutes(), "2013-06-07 14:00");
    }

    #[test]
    fn parse_errors_and_duplicates() {
        let neg = "station,hour,precip_mm\ncentral_park,2013-06-07 14:00,-1\n";
        assert!(matches!(
            parse_weather(neg.as_bytes(), &stations()),
            Err(WeatherError::NegativePrecipitation { line: 2 })
        ));
        let unknown = "station,hour,precip_mm\nnewark,2013-06-07 14:00,1\n";
        assert!(matches!(parse_weather(unknown.as_bytes(), &stations()), Err(WeatherError::UnknownStation { .. })));
        let dup = "station,hour,precip_mm\njfk,2013-06-07 14:00,1\njfk,2013-06-07 14:30,3\n";
        let d = parse_weather(dup.as_bytes(), &stations()).unwrap();
        assert_eq!(d.observations.len(), 1);
        assert_eq!(d.duplicates, 1);
        assert_eq!(d.iter().next().unwrap().precip_mm, Some(3.0));
    }

    #[test]
    fn idw_cases() {
        let target = LatLon::new(0.0, 0.0);
        assert_eq!(idw(target, &[(LatLon::new(0.0, 1.0), 0.0), (LatLon::new(1.0, 0.0), 0.0)]), Some(0.0));
        let v = idw(target, &[(LatLon::new(0.0, 1.0), 2.0), (LatLon::new(0.0, -1.0), 4.0)]).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        assert_eq!(idw(target, &[]), None);
        assert_eq!(idw(target, &[(target, 7.0), (LatLon::new(0.0, 1.0), 1.0)]), Some(7.0));
    }

    #[test]
    fn classify_threshold_and_imputation() {
        let text = "station,hour,precip_mm\n\
            central_park,2013-06-07 13:00,0.0\n\
            central_park,2013-06-07 14:00,5.0\n\
            lga,2013-06-07 15:00,1.0\n\
            jfk,2013-06-07 15:00,1.0\n\
            central_park,2013-06-07 16:00,NA\n\
            lga,2013-06-07 16:00,\n";
        let s = stations();
        let d = parse_weather(text.as_bytes(), &s).unwrap();
        let t = classify_hours(&d, &s, s.require("central_park").unwrap(), DEFAULT_RAIN_THRESHOLD_MM);
        let h = |x: &str| Timestamp::parse(x.as_bytes()).unwrap();
        assert_eq!(t.rainy(h("2013-06-07 13:00")), Some(false));
        assert_eq!(t.rainy(h("2013-06-07 14:00")), Some(true));
        match t.hours[&h("2013-06-07 15:00")] {
            HourClass::Known(w) => {
                assert!(w.rainy && w.imputed);
                assert!((w.precip_mm - 1.0).abs() < 1e-12);
            }
            HourClass::Unclassifiable => panic!("expected imputed hour"),
        }
        assert_eq!(t.hours[&h("2013-06-07 16:00")], HourClass::Unclassifiable);
        assert_eq!(t.counts(), (2, 1, 1));
    }
}
