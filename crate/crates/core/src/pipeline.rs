//! End-to-end runs shared by the command-line tool and the test suites.

use std::io::{self, Read};

use crate::ingest::{IdTables, IngestError, IngestOptions, IngestReport, Schema, TripBatch, TripStream};
use crate::metrics::{aggregate, aggregate_parallel, BinOptions, BinTable};
use crate::shifts::{ShiftOptions, ShiftTable};
use crate::simulate::{simulate, write_trips, SimConfig, SimError, Simulation};
use crate::weather::{classify_hours, StationSet, WeatherTable, DEFAULT_RAIN_THRESHOLD_MM};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn read_trips_from<R: Read + Send + 'static>(
    label: &str,
    r: R,
    schema: Schema,
    opts: IngestOptions,
) -> Result<TripBatch, IngestError> {
    let mut stream = TripStream::from_reader(label, r, schema, opts);
    let trips = stream.by_ref().collect::<Result<Vec<_>, _>>()?;
    let (ids, report) = stream.into_parts();
    Ok(TripBatch { trips, ids, report })
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub table: ShiftTable,
    pub ids: IdTables,
    pub report: IngestReport,
    pub bins: BinTable,
}

/// Shift synthesis and binning over an ingested batch. `parts > 1` bins on
/// the rayon pool; the result is identical either way.
pub fn analyze_batch(batch: TripBatch, shift: ShiftOptions, bins: &BinOptions, parts: usize) -> Analysis {
    let table = ShiftTable::build(batch.trips, shift);
    let bins = if parts > 1 { aggregate_parallel(&table, bins, parts) } else { aggregate(&table, bins) };
    Analysis { table, ids: batch.ids, report: batch.report, bins }
}

#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub sim: Simulation,
    pub analysis: Analysis,
    pub weather: WeatherTable,
}

/// Simulates, writes the trip file to memory, reads it back through ingest,
/// rebuilds shifts and bins, and joins the simulated weather.
pub fn run_simulated(cfg: &SimConfig, shift: ShiftOptions, bins: &BinOptions) -> Result<SimulatedRun, PipelineError> {
    let sim = simulate(cfg)?;
    let mut bytes = Vec::new();
    write_trips(&mut bytes, &sim.trips)?;
    let batch = read_trips_from("simulated", io::Cursor::new(bytes), Schema::tlc(), IngestOptions::default())?;
    let mut analysis = analyze_batch(batch, shift, bins, 1);
    let stations = StationSet::nyc();
    let reference = stations.require("central_park").expect("built-in station");
    let weather = classify_hours(&sim.weather, &stations, reference, DEFAULT_RAIN_THRESHOLD_MM);
    analysis.bins.join_weather(&weather);
    Ok(SimulatedRun { sim, analysis, weather })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::score_recovery;

    #[test]
    fn simulated_run_recovers_truth() {
        let cfg = SimConfig { n_drivers: 10, days: 5, ..Default::default() };
        let run = run_simulated(&cfg, ShiftOptions::default(), &BinOptions::default()).unwrap();
        assert_eq!(run.analysis.report.rows_accepted as usize, run.sim.trips.len());
        assert_eq!(run.analysis.report.rows_read, run.analysis.report.rows_accepted);
        let a = &run.analysis;
        let rep = score_recovery(&run.sim.truth, &a.table, &a.ids, &a.bins).unwrap();
        assert_eq!(rep.partition_errors, 0);
        assert_eq!(rep.max_abs_start_delta_s, 0);
        assert_eq!(rep.max_abs_end_delta_s, 0);
        assert_eq!(rep.supply_mae, 0.0);
    }
}
