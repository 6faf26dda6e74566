//! Supply/demand mismatch analysis for taxi fleets: trip ingest, shift
//! reconstruction, weather joins, hourly fleet indices and rank-based
//! rain-versus-clear comparisons, plus a synthetic fleet generator.

pub mod geo;
pub mod ids;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod shifts;
pub mod simulate;
pub mod stats;
pub mod time;
pub mod weather;
pub mod windows;

pub use geo::{BBox, GridCell, LatLon};
pub use ids::{Symbol, SymbolTable};
pub use ingest::{IngestOptions, IngestReport, Schema, TripRecord, TripStream};
pub use shifts::{Shift, ShiftOptions, ShiftTable};
pub use time::Timestamp;
pub use weather::{StationSet, WeatherTable};
pub use windows::{DayClass, WindowLabel, WindowSet};
