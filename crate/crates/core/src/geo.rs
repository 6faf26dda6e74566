//! Coordinates, great-circle distances and the pickup density grid.

use std::fmt;
use std::str::FromStr;

const EARTH_RADIUS_KM: f64 = 6371.0088;
const METERS_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BBoxError {
    #[error("bounding box must be `min_lat,min_lon,max_lat,max_lon`, got {0:?}")]
    Syntax(String),
    #[error("degenerate bounding box (min must be strictly below max)")]
    Degenerate,
}

impl BBox {
    /// Greater New York City, including both airports.
    pub const NYC: BBox = BBox { min_lat: 40.45, min_lon: -74.30, max_lat: 41.00, max_lon: -73.65 };

    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self, BBoxError> {
        let b = BBox { min_lat, min_lon, max_lat, max_lon };
        if !(min_lat < max_lat && min_lon < max_lon) {
            return Err(BBoxError::Degenerate);
        }
        Ok(b)
    }

    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn clamp(&self, p: LatLon) -> LatLon {
        LatLon::new(p.lat.clamp(self.min_lat, self.max_lat), p.lon.clamp(self.min_lon, self.max_lon))
    }

    pub fn center(&self) -> LatLon {
        LatLon::new((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
    }
}

impl FromStr for BBox {
    type Err = BBoxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| BBoxError::Syntax(s.to_string()))?;
        match parts[..] {
            [a, b, c, d] => BBox::new(a, b, c, d),
            _ => Err(BBoxError::Syntax(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridCell {
    pub row: u32,
    pub col: u32,
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.row, self.col)
    }
}

impl FromStr for GridCell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, c) = s.split_once([':', ',']).ok_or_else(|| format!("grid cell must be `row:col`, got {s:?}"))?;
        Ok(GridCell {
            row: r.trim().parse().map_err(|_| format!("bad grid row in {s:?}"))?,
            col: c.trim().parse().map_err(|_| format!("bad grid column in {s:?}"))?,
        })
    }
}

/// Fixed square-ish grid over a bounding box using a local equirectangular
/// projection at the box's central latitude. Row 0 is the southern edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub bbox: BBox,
    pub cell_size_m: f64,
    pub rows: u32,
    pub cols: u32,
    lat_step: f64,
    lon_step: f64,
}

impl Grid {
    pub const DEFAULT_CELL_M: f64 = 250.0;

    pub fn new(bbox: BBox, cell_size_m: f64) -> Self {
        assert!(cell_size_m > 0.0, "cell size must be positive");
        let lat_step = cell_size_m / METERS_PER_DEG_LAT;
        let lon_step = cell_size_m / (METERS_PER_DEG_LAT * bbox.center().lat.to_radians().cos());
        let rows = ((bbox.max_lat - bbox.min_lat) / lat_step).ceil().max(1.0) as u32;
        let cols = ((bbox.max_lon - bbox.min_lon) / lon_step).ceil().max(1.0) as u32;
        Grid { bbox, cell_size_m, rows, cols, lat_step, lon_step }
    }

    pub fn cell_of(&self, p: LatLon) -> Option<GridCell> {
        if !self.bbox.contains(p) {
            return None;
        }
        let row = (((p.lat - self.bbox.min_lat) / self.lat_step) as u32).min(self.rows - 1);
        let col = (((p.lon - self.bbox.min_lon) / self.lon_step) as u32).min(self.cols - 1);
        Some(GridCell { row, col })
    }

    pub fn cell_center(&self, c: GridCell) -> LatLon {
        LatLon::new(
            self.bbox.min_lat + (f64::from(c.row) + 0.5) * self.lat_step,
            self.bbox.min_lon + (f64::from(c.col) + 0.5) * self.lon_step,
        )
    }

    pub fn n_cells(&self) -> usize {
        self.rows as usize * self.cols as usize
    }
}
