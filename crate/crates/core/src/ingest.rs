//! Streaming ingestion of TLC-style trip CSV files.
//!
//! Source files are read in chunks of raw byte records. Each chunk is parsed
//! independently into [`TripRecord`]s with its own identifier tables, and
//! chunks are then merged in file order. Sequential and parallel ingestion
//! share that chunk parser, so their reports and outputs are identical.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use csv::ByteRecord;
use rayon::prelude::*;

use crate::geo::{BBox, LatLon};
use crate::ids::{Symbol, SymbolTable};
use crate::time::Timestamp;

pub const KM_PER_MILE: f64 = 1.609_344;

/// The ten canonical trip fields the analyses depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Medallion,
    HackLicense,
    PickupTime,
    DropoffTime,
    PickupLat,
    PickupLon,
    DropoffLat,
    DropoffLon,
    TripDistance,
    FareTotal,
}

impl Field {
    pub const ALL: [Field; 10] = [
        Field::Medallion,
        Field::HackLicense,
        Field::PickupTime,
        Field::DropoffTime,
        Field::PickupLat,
        Field::PickupLon,
        Field::DropoffLat,
        Field::DropoffLon,
        Field::TripDistance,
        Field::FareTotal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Medallion => "medallion",
            Field::HackLicense => "hack_license",
            Field::PickupTime => "pickup_time",
            Field::DropoffTime => "dropoff_time",
            Field::PickupLat => "pickup_lat",
            Field::PickupLon => "pickup_lon",
            Field::DropoffLat => "dropoff_lat",
            Field::DropoffLon => "dropoff_lon",
            Field::TripDistance => "trip_distance",
            Field::FareTotal => "fare_total",
        }
    }

    fn from_name(s: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceUnit {
    Km,
    Mi,
}

impl DistanceUnit {
    fn to_km(self, v: f64) -> f64 {
        match self {
            DistanceUnit::Km => v,
            DistanceUnit::Mi => v * KM_PER_MILE,
        }
    }
}

/// Mapping from canonical field to source column name, plus the distance unit
/// of the source files.
///
/// The text form is one `key = value` pair per line; `#` starts a comment.
/// Keys are the canonical field names and `distance_unit` (`km` or `mi`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: BTreeMap<Field, String>,
    pub distance_unit: DistanceUnit,
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("schema line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("schema line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("schema line {line}: distance_unit must be `km` or `mi`")]
    BadUnit { line: usize },
    #[error("schema does not map required field {0}")]
    MissingField(&'static str),
}

impl Schema {
    /// Column names of the 2013 TLC trip files, with the fare joined in as
    /// `total_amount`. Distances are in miles.
    pub fn tlc() -> Self {
        let cols = [
            (Field::Medallion, "medallion"),
            (Field::HackLicense, "hack_license"),
            (Field::PickupTime, "pickup_datetime"),
            (Field::DropoffTime, "dropoff_datetime"),
            (Field::PickupLat, "pickup_latitude"),
            (Field::PickupLon, "pickup_longitude"),
            (Field::DropoffLat, "dropoff_latitude"),
            (Field::DropoffLon, "dropoff_longitude"),
            (Field::TripDistance, "trip_distance"),
            (Field::FareTotal, "total_amount"),
        ];
        Schema { columns: cols.into_iter().map(|(f, c)| (f, c.to_string())).collect(), distance_unit: DistanceUnit::Mi }
    }

    /// Layout of the canonical trip store written by [`write_canonical`].
    pub fn canonical() -> Self {
        let mut columns: BTreeMap<Field, String> = Field::ALL.into_iter().map(|f| (f, f.name().to_string())).collect();
        columns.insert(Field::TripDistance, "trip_distance_km".into());
        Schema { columns, distance_unit: DistanceUnit::Km }
    }

    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut columns = BTreeMap::new();
        let mut unit = DistanceUnit::Km;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(SchemaError::Syntax { line })?;
            let (k, v) = (k.trim(), v.trim());
            if v.is_empty() {
                return Err(SchemaError::Syntax { line });
            }
            if k == "distance_unit" {
                unit = match v {
                    "km" => DistanceUnit::Km,
                    "mi" => DistanceUnit::Mi,
                    _ => return Err(SchemaError::BadUnit { line }),
                };
                continue;
            }
            let field = Field::from_name(k).ok_or_else(|| SchemaError::UnknownKey { line, key: k.to_string() })?;
            columns.insert(field, v.to_string());
        }
        if let Some(missing) = Field::ALL.into_iter().find(|f| !columns.contains_key(f)) {
            return Err(SchemaError::MissingField(missing.name()));
        }
        Ok(Schema { columns, distance_unit: unit })
    }

    pub fn column(&self, f: Field) -> &str {
        &self.columns[&f]
    }

    /// Resolves source column names against a header row.
    pub fn resolve(&self, header: &ByteRecord) -> Result<ColumnMap, String> {
        let mut idx = [0usize; 10];
        for (slot, f) in idx.iter_mut().zip(Field::ALL) {
            let want = self.column(f).as_bytes();
            *slot = header.iter().position(|h| trim(h) == want).ok_or_else(|| self.column(f).to_string())?;
        }
        Ok(ColumnMap { idx, unit: self.distance_unit })
    }
}

/// Column indices of the canonical fields within one file's rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnMap {
    idx: [usize; 10],
    unit: DistanceUnit,
}

impl ColumnMap {
    fn get<'r>(&self, row: &'r ByteRecord, f: Field) -> Result<&'r [u8], RejectReason> {
        row.get(self.idx[f as usize]).map(trim).ok_or(RejectReason::MissingColumn)
    }
}

/// One completed ride. Identifiers are interned; see [`IdTables`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub medallion: Symbol,
    pub hack_license: Symbol,
    pub pickup_time: Timestamp,
    pub dropoff_time: Timestamp,
    pub pickup: LatLon,
    pub dropoff: LatLon,
    pub trip_distance_km: f64,
    pub fare_total: f64,
}

impl TripRecord {
    pub fn duration_s(&self) -> i64 {
        self.dropoff_time.0 - self.pickup_time.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct IdTables {
    pub medallions: SymbolTable,
    pub hack_licenses: SymbolTable,
}

/// Why a row did not become an accepted trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    MissingColumn,
    MissingIdentifier,
    MalformedTimestamp,
    NonNumericCoordinate,
    NonNumericDistance,
    NonNumericFare,
    NegativeDuration,
    NegativeFare,
    OutOfBoundingBox,
    DurationOutOfRange,
    DistanceOutOfRange,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MissingColumn => "missing column",
            RejectReason::MissingIdentifier => "missing identifier",
            RejectReason::MalformedTimestamp => "malformed timestamp",
            RejectReason::NonNumericCoordinate => "non-numeric coordinate",
            RejectReason::NonNumericDistance => "non-numeric distance",
            RejectReason::NonNumericFare => "non-numeric fare",
            RejectReason::NegativeDuration => "negative duration",
            RejectReason::NegativeFare => "negative fare",
            RejectReason::OutOfBoundingBox => "out of bounding box",
            RejectReason::DurationOutOfRange => "duration out of range",
            RejectReason::DistanceOutOfRange => "distance out of range",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn trim(b: &[u8]) -> &[u8] {
    b.trim_ascii()
}

fn parse_f64(raw: &[u8], on_err: RejectReason) -> Result<f64, RejectReason> {
    std::str::from_utf8(raw).ok().and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()).ok_or(on_err)
}

/// Parses one data row into a typed trip. Distances are converted to km.
pub fn parse_trip_row(row: &ByteRecord, cols: &ColumnMap, ids: &mut IdTables) -> Result<TripRecord, RejectReason> {
    let med = cols.get(row, Field::Medallion)?;
    let hack = cols.get(row, Field::HackLicense)?;
    if med.is_empty() || hack.is_empty() {
        return Err(RejectReason::MissingIdentifier);
    }
    let ts = |f| -> Result<Timestamp, RejectReason> {
        Timestamp::parse(cols.get(row, f)?).map_err(|_| RejectReason::MalformedTimestamp)
    };
    let pickup_time = ts(Field::PickupTime)?;
    let dropoff_time = ts(Field::DropoffTime)?;
    let coord = |f| parse_f64(cols.get(row, f)?, RejectReason::NonNumericCoordinate);
    let pickup = LatLon::new(coord(Field::PickupLat)?, coord(Field::PickupLon)?);
    let dropoff = LatLon::new(coord(Field::DropoffLat)?, coord(Field::DropoffLon)?);
    let distance = parse_f64(cols.get(row, Field::TripDistance)?, RejectReason::NonNumericDistance)?;
    let fare = parse_f64(cols.get(row, Field::FareTotal)?, RejectReason::NonNumericFare)?;
    if dropoff_time < pickup_time {
        return Err(RejectReason::NegativeDuration);
    }
    if fare < 0.0 {
        return Err(RejectReason::NegativeFare);
    }
    Ok(TripRecord {
        medallion: ids.medallions.intern_bytes(med),
        hack_license: ids.hack_licenses.intern_bytes(hack),
        pickup_time,
        dropoff_time,
        pickup,
        dropoff,
        trip_distance_km: cols.unit.to_km(distance),
        fare_total: fare,
    })
}

/// Sanity limits applied after parsing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub min_duration_s: i64,
    pub max_duration_s: i64,
    pub max_distance_km: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { min_duration_s: 1, max_duration_s: 6 * 3600, max_distance_km: 160.0 }
    }
}

pub fn validate_trip(t: &TripRecord, bbox: &BBox, limits: &Limits) -> Result<(), RejectReason> {
    if !bbox.contains(t.pickup) || !bbox.contains(t.dropoff) {
        return Err(RejectReason::OutOfBoundingBox);
    }
    let d = t.duration_s();
    if d < limits.min_duration_s || d > limits.max_duration_s {
        return Err(RejectReason::DurationOutOfRange);
    }
    if !(0.0..=limits.max_distance_km).contains(&t.trip_distance_km) {
        return Err(RejectReason::DistanceOutOfRange);
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub rows_rejected_by_reason: BTreeMap<RejectReason, u64>,
}

impl IngestReport {
    pub fn rows_rejected(&self) -> u64 {
        self.rows_rejected_by_reason.values().sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.rows_read == self.rows_accepted + self.rows_rejected()
    }

    pub fn merge(&mut self, other: &IngestReport) {
        self.rows_read += other.rows_read;
        self.rows_accepted += other.rows_accepted;
        for (&r, &n) in &other.rows_rejected_by_reason {
            *self.rows_rejected_by_reason.entry(r).or_default() += n;
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "count"])?;
        out.write_record(["rows_read", &self.rows_read.to_string()])?;
        out.write_record(["rows_accepted", &self.rows_accepted.to_string()])?;
        for (r, n) in &self.rows_rejected_by_reason {
            out.write_record([format!("rejected:{r}"), n.to_string()])?;
        }
        out.flush()
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rows read {}, accepted {}", self.rows_read, self.rows_accepted)?;
        for (r, n) in &self.rows_rejected_by_reason {
            write!(f, ", {r}: {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: PathBuf, source: csv::Error },
    #[error("{path}: header has no column {column:?}")]
    HeaderMismatch { path: PathBuf, column: String },
    #[error("writing rejection log: {0}")]
    RejectionLog(#[source] io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub bbox: BBox,
    pub limits: Limits,
    /// Rows parsed per chunk; bounds the raw-record buffer.
    pub chunk_rows: usize,
    pub parallel: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { bbox: BBox::NYC, limits: Limits::default(), chunk_rows: 1 << 16, parallel: false }
    }
}

struct ParsedChunk {
    trips: Vec<TripRecord>,
    ids: IdTables,
    rejects: Vec<(u64, RejectReason)>,
    report: IngestReport,
}

fn parse_chunk(rows: &[ByteRecord], first_row: u64, cols: &ColumnMap, opts: &IngestOptions) -> ParsedChunk {
    let mut ids = IdTables::default();
    let mut trips = Vec::with_capacity(rows.len());
    let mut rejects = Vec::new();
    let mut report = IngestReport { rows_read: rows.len() as u64, ..Default::default() };
    for (i, row) in rows.iter().enumerate() {
        let outcome =
            parse_trip_row(row, cols, &mut ids).and_then(|t| validate_trip(&t, &opts.bbox, &opts.limits).map(|()| t));
        match outcome {
            Ok(t) => trips.push(t),
            Err(reason) => {
                *report.rows_rejected_by_reason.entry(reason).or_default() += 1;
                rejects.push((first_row + i as u64, reason));
            }
        }
    }
    report.rows_accepted = trips.len() as u64;
    ParsedChunk { trips, ids, rejects, report }
}

/// Iterator over accepted trips from an ordered list of files.
///
/// Rows are numbered from 1 across the whole stream (headers excluded); those
/// numbers appear in the rejection log as `row_number,reason`.
pub struct TripStream {
    sources: Vec<(PathBuf, Option<Box<dyn Read + Send>>)>,
    next_path: usize,
    schema: Schema,
    opts: IngestOptions,
    reader: Option<(csv::Reader<Box<dyn Read + Send>>, ColumnMap)>,
    raw: Vec<ByteRecord>,
    buffered: std::vec::IntoIter<TripRecord>,
    rows_seen: u64,
    ids: IdTables,
    report: IngestReport,
    reject_log: Option<csv::Writer<Box<dyn Write + Send>>>,
    failed: bool,
}

impl TripStream {
    pub fn open<P: AsRef<Path>>(paths: &[P], schema: Schema, opts: IngestOptions) -> Self {
        Self::with_sources(paths.iter().map(|p| (p.as_ref().to_path_buf(), None)).collect(), schema, opts)
    }

    /// Stream over an in-memory or otherwise already-open source; `label`
    /// stands in for the path in error messages.
    pub fn from_reader<R: Read + Send + 'static>(label: &str, reader: R, schema: Schema, opts: IngestOptions) -> Self {
        Self::with_sources(vec![(PathBuf::from(label), Some(Box::new(reader)))], schema, opts)
    }

    fn with_sources(
        sources: Vec<(PathBuf, Option<Box<dyn Read + Send>>)>,
        schema: Schema,
        opts: IngestOptions,
    ) -> Self {
        TripStream {
            sources,
            next_path: 0,
            schema,
            opts,
            reader: None,
            raw: Vec::new(),
            buffered: Vec::new().into_iter(),
            rows_seen: 0,
            ids: IdTables::default(),
            report: IngestReport::default(),
            reject_log: None,
            failed: false,
        }
    }

    pub fn with_rejection_log<W: Write + Send + 'static>(mut self, w: W) -> Result<Self, IngestError> {
        let mut log = csv::Writer::from_writer(Box::new(w) as Box<dyn Write + Send>);
        log.write_record(["row_number", "reason"]).map_err(|e| IngestError::RejectionLog(e.into()))?;
        self.reject_log = Some(log);
        Ok(self)
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    pub fn ids(&self) -> &IdTables {
        &self.ids
    }

    pub fn into_parts(self) -> (IdTables, IngestReport) {
        (self.ids, self.report)
    }

    fn open_next(&mut self) -> Result<bool, IngestError> {
        let Some((path, src)) = self.sources.get_mut(self.next_path) else {
            return Ok(false);
        };
        let path = path.clone();
        let src = src.take();
        self.next_path += 1;
        let unreadable = |source| IngestError::Unreadable { path: path.clone(), source };
        let src: Box<dyn Read + Send> = match src {
            Some(r) => r,
            None => Box::new(File::open(&path).map_err(|e| unreadable(e.into()))?),
        };
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(true).flexible(true).buffer_capacity(1 << 20).from_reader(src);
        let header = rdr.byte_headers().map_err(unreadable)?.clone();
        let cols = self
            .schema
            .resolve(&header)
            .map_err(|column| IngestError::HeaderMismatch { path: path.clone(), column })?;
        self.reader = Some((rdr, cols));
        Ok(true)
    }

    /// Reads and parses the next batch of rows. Returns false at end of stream.
    fn fill(&mut self) -> Result<bool, IngestError> {
        loop {
            if self.reader.is_none() && !self.open_next()? {
                return Ok(false);
            }
            let path = self.sources[self.next_path - 1].0.clone();
            let (rdr, cols) = self.reader.as_mut().expect("reader opened");
            let cols = *cols;
            let chunks = if self.opts.parallel { rayon::current_num_threads().max(1) } else { 1 };
            let want = self.opts.chunk_rows.max(1) * chunks;
            if self.raw.len() < want {
                self.raw.resize_with(want, ByteRecord::new);
            }
            let mut n = 0;
            while n < want {
                match rdr.read_byte_record(&mut self.raw[n]) {
                    Ok(true) => n += 1,
                    Ok(false) => break,
                    Err(source) => return Err(IngestError::Unreadable { path, source }),
                }
            }
            if n < want {
                self.reader = None;
            }
            if n == 0 {
                continue;
            }
            let first_row = self.rows_seen + 1;
            self.rows_seen += n as u64;
            let rows = &self.raw[..n];
            let step = self.opts.chunk_rows.max(1);
            let opts = self.opts;
            let parsed: Vec<ParsedChunk> = if self.opts.parallel {
                rows.par_chunks(step)
                    .enumerate()
                    .map(|(k, c)| parse_chunk(c, first_row + (k * step) as u64, &cols, &opts))
                    .collect()
            } else {
                rows.chunks(step)
                    .enumerate()
                    .map(|(k, c)| parse_chunk(c, first_row + (k * step) as u64, &cols, &opts))
                    .collect()
            };
            let mut out = Vec::with_capacity(n);
            for chunk in parsed {
                self.absorb(chunk, &mut out)?;
            }
            self.buffered = out.into_iter();
            return Ok(true);
        }
    }

    fn absorb(&mut self, chunk: ParsedChunk, out: &mut Vec<TripRecord>) -> Result<(), IngestError> {
        let med = self.ids.medallions.absorb(&chunk.ids.medallions);
        let hack = self.ids.hack_licenses.absorb(&chunk.ids.hack_licenses);
        out.extend(chunk.trips.into_iter().map(|mut t| {
            t.medallion = med[t.medallion.0 as usize];
            t.hack_license = hack[t.hack_license.0 as usize];
            t
        }));
        self.report.merge(&chunk.report);
        if let Some(log) = self.reject_log.as_mut() {
            for (row, reason) in chunk.rejects {
                log.write_record([row.to_string().as_str(), reason.as_str()])
                    .map_err(|e| IngestError::RejectionLog(e.into()))?;
            }
            log.flush().map_err(IngestError::RejectionLog)?;
        }
        Ok(())
    }
}

impl Iterator for TripStream {
    type Item = Result<TripRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(t) = self.buffered.next() {
                return Some(Ok(t));
            }
            if self.failed {
                return None;
            }
            match self.fill() {
                Ok(true) => continue,
                Ok(false) => return None,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

/// All accepted trips of a stream held in memory, with their identifier tables.
#[derive(Debug, Clone, Default)]
pub struct TripBatch {
    pub trips: Vec<TripRecord>,
    pub ids: IdTables,
    pub report: IngestReport,
}

pub fn read_trips<P: AsRef<Path>>(paths: &[P], schema: Schema, opts: IngestOptions) -> Result<TripBatch, IngestError> {
    let mut stream = TripStream::open(paths, schema, opts);
    let trips = stream.by_ref().collect::<Result<Vec<_>, _>>()?;
    let (ids, report) = stream.into_parts();
    Ok(TripBatch { trips, ids, report })
}

/// Writes trips in the canonical store layout (see [`Schema::canonical`]):
/// `medallion,hack_license,pickup_time,dropoff_time,pickup_lat,pickup_lon,
/// dropoff_lat,dropoff_lon,trip_distance_km,fare_total`.
pub fn write_canonical<W: Write>(w: W, trips: &[TripRecord], ids: &IdTables) -> io::Result<()> {
    let mut out = io::BufWriter::new(w);
    let canon = Schema::canonical();
    let header: Vec<&str> = Field::ALL.iter().map(|&f| canon.column(f)).collect();
    writeln!(out, "{}", header.join(","))?;
    for t in trips {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.2}",
            ids.medallions.resolve(t.medallion),
            ids.hack_licenses.resolve(t.hack_license),
            t.pickup_time,
            t.dropoff_time,
            t.pickup.lat,
            t.pickup.lon,
            t.dropoff.lat,
            t.dropoff.lon,
            t.trip_distance_km,
            t.fare_total
        )?;
    }
    out.flush()
}
