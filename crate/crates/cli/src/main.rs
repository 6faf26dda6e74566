mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rainfleet::geo::{BBox, GridCell};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rainfleet", version, about = "Taxi supply and demand under rain, from trip records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate trip files and write the canonical trip store.
    Ingest(IngestArgs),
    /// Reconstruct driver shifts from the trip store.
    Shifts(ShiftArgs),
    /// Hourly bins, weather join and rainy-versus-clear slot comparisons.
    Analyze(AnalyzeArgs),
    /// Rank tests of rainy against clear hours per window and day class.
    Test(TestArgs),
    /// Generate a synthetic fleet with known ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Trip CSV files, read in order.
    #[arg(required = true)]
    trips: Vec<PathBuf>,
    /// Column layout: `tlc`, `canonical`, or a key=value schema file.
    #[arg(long, default_value = "tlc")]
    schema: String,
    /// min_lat,min_lon,max_lat,max_lon
    #[arg(long, allow_hyphen_values = true)]
    bbox: Option<BBox>,
    #[arg(long)]
    out: PathBuf,
    /// Also write rejections.csv (row_number,reason).
    #[arg(long)]
    rejections: bool,
    /// Parse chunks on all cores.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Identity {
    Hack,
    Medallion,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Overlap {
    Drop,
    Clip,
}

#[derive(Debug, Args)]
struct ShiftSource {
    /// Canonical trip store written by `ingest`.
    #[arg(long)]
    store: PathBuf,
    /// Largest idle gap, in hours, that stays inside one shift.
    #[arg(long, default_value_t = 8.0)]
    gap_hours: f64,
    #[arg(long, value_enum, default_value = "hack")]
    identity: Identity,
    /// What to do with a trip that starts before the previous one ends.
    #[arg(long, value_enum, default_value = "drop")]
    overlap: Overlap,
}

#[derive(Debug, Args)]
struct ShiftArgs {
    #[command(flatten)]
    source: ShiftSource,
    /// Bin width for the start/end time-of-day densities.
    #[arg(long, default_value_t = 30)]
    bin_minutes: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Supply {
    Overlap,
    Fractional,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: ShiftSource,
    /// Hourly `station,hour,precip_mm` observations.
    #[arg(long)]
    weather: PathBuf,
    /// `station_id,lat,lon`; defaults to central_park, lga and jfk.
    #[arg(long)]
    station_coords: Option<PathBuf>,
    #[arg(long, default_value = "central_park")]
    ref_station: String,
    /// Precipitation (mm/h) at or above which an hour is rainy.
    #[arg(long, default_value_t = rainfleet::weather::DEFAULT_RAIN_THRESHOLD_MM)]
    rain_threshold: f64,
    /// Peak window definitions (`morning_peak=6,7,8,9` lines).
    #[arg(long)]
    windows: Option<String>,
    /// Grid extent, min_lat,min_lon,max_lat,max_lon; should match ingest.
    #[arg(long, allow_hyphen_values = true)]
    bbox: Option<BBox>,
    /// Grid cell (row:col) to bin separately; repeatable.
    #[arg(long)]
    cell: Vec<GridCell>,
    #[arg(long, default_value_t = rainfleet::geo::Grid::DEFAULT_CELL_M)]
    cell_size_m: f64,
    #[arg(long, value_enum, default_value = "overlap")]
    supply: Supply,
    /// Slots with fewer rainy or clear hours than this are marked masked.
    #[arg(long, default_value_t = rainfleet::metrics::DEFAULT_MIN_SAMPLES)]
    min_samples: usize,
    /// Bins with more pickups than supply times this are flagged.
    #[arg(long, default_value_t = rainfleet::metrics::DEFAULT_MAX_TRIPS_PER_DRIVER_HOUR)]
    max_trips_per_hour: u32,
    /// Also draw SVG charts of the slot comparisons.
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum RegimeArg {
    Observed,
    Permutation,
    Both,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// bins.csv written by `analyze`; bin_details.csv next to it is read too.
    #[arg(long)]
    bins: PathBuf,
    #[arg(long, default_value = "pickups_per_driver")]
    index: String,
    /// Grid cell whose bins are tested instead of the city-wide bins.
    #[arg(long)]
    cell: Option<GridCell>,
    #[arg(long, value_enum, default_value = "observed")]
    regime: RegimeArg,
    #[arg(long, default_value_t = 1000)]
    pseudo_days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    windows: Option<String>,
    #[arg(long, value_enum, default_value = "overlap")]
    supply: Supply,
    /// Total sample size up to which p-values are exact.
    #[arg(long, default_value_t = rainfleet::stats::DEFAULT_EXACT_CUTOFF)]
    exact_cutoff: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML simulation config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run ingest, shifts and binning on the output and score them against
    /// the ground truth.
    #[arg(long)]
    score: bool,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a, args),
        Command::Shifts(a) => commands::shifts(a, args),
        Command::Analyze(a) => commands::analyze(a, args),
        Command::Test(a) => commands::test(a, args),
        Command::Simulate(a) => commands::simulate(a, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
