use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rainfleet::geo::{BBox, Grid};
use rainfleet::ingest::{write_canonical, IngestError, IngestOptions, Schema, TripBatch, TripStream};
use rainfleet::metrics::{
    compare_regimes, grid_density, labeled_series, read_bins, write_comparison, BinOptions, BinTable, CellSelection,
    ExclusionReport, Index, SupplyMode,
};
use rainfleet::pipeline::analyze_batch;
use rainfleet::plot::comparison_svg;
use rainfleet::shifts::{shift_time_densities, DriverIdentity, OverlapPolicy, ShiftOptions, ShiftTable};
use rainfleet::simulate::{score_recovery, simulate_to, SimConfig};
use rainfleet::stats::{
    run_comparison, write_appendix_table, write_results_long, ComparisonConfig, Regime, TestOptions,
};
use rainfleet::weather::{classify_hours, parse_weather, write_weather, StationSet};
use rainfleet::windows::{write_pseudo_days, DayClass, WindowLabel, WindowSet};

use crate::manifest::Recorder;
use crate::{
    AnalyzeArgs, CliError, Identity, IngestArgs, Overlap, RegimeArg, ShiftArgs, ShiftSource, SimulateArgs, Supply,
    TestArgs,
};

pub const CONFIG_DIR_ENV: &str = "RAINFLEET_CONFIG_DIR";

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn out_err(path: &Path, e: io::Error) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

/// Finds a config-like file as given, or else under `$RAINFLEET_CONFIG_DIR`.
fn locate(name: &str, what: &str, hint: &str) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    if direct.is_relative() {
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let p = Path::new(&dir).join(&direct);
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(CliError::Usage(format!("{what} file {name:?} not found (also looked in ${CONFIG_DIR_ENV}); {hint}")))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input_err(path, e))
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| out_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| out_err(dir, e))
}

/// Writes one output file and registers it with the manifest.
fn emit(
    rec: &mut Recorder,
    dir: &Path,
    name: &str,
    write: impl FnOnce(File) -> io::Result<()>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    write(create(&path)?).map_err(|e| out_err(&path, e))?;
    rec.output(name, path);
    Ok(())
}

fn finish(rec: Recorder, dir: &Path) -> Result<(), CliError> {
    let m = rec.finish(dir).map_err(|e| out_err(dir, e))?;
    println!("manifest {} written to {}", m.id, dir.join("manifest.json").display());
    Ok(())
}

fn record_input(rec: &mut Recorder, role: &str, path: &Path) -> Result<(), CliError> {
    rec.input(role, path).map_err(|e| input_err(path, e))
}

fn ingest_error(e: IngestError) -> CliError {
    CliError::Input(e.to_string())
}

pub fn ingest(a: IngestArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut rec = Recorder::new("ingest", args);
    let schema = match a.schema.as_str() {
        "tlc" => Schema::tlc(),
        "canonical" => Schema::canonical(),
        name => {
            let path =
                locate(name, "schema", "use --schema tlc for the standard TLC layout or pass a key=value schema file")?;
            record_input(&mut rec, "schema", &path)?;
            Schema::parse(&read_text(&path)?).map_err(|e| input_err(&path, e))?
        }
    };
    for p in &a.trips {
        record_input(&mut rec, "trips", p)?;
    }
    ensure_dir(&a.out)?;
    let opts = IngestOptions { bbox: a.bbox.unwrap_or(BBox::NYC), parallel: a.parallel, ..Default::default() };
    let mut stream = TripStream::open(&a.trips, schema, opts);
    if a.rejections {
        let path = a.out.join("rejections.csv");
        stream = stream.with_rejection_log(io::BufWriter::new(create(&path)?)).map_err(ingest_error)?;
        rec.output("rejections.csv", path);
    }
    let trips = stream.by_ref().collect::<Result<Vec<_>, _>>().map_err(ingest_error)?;
    let (ids, report) = stream.into_parts();
    println!("{report}");
    rec.count("rows_read", report.rows_read);
    rec.count("rows_accepted", report.rows_accepted);
    rec.count("rows_rejected", report.rows_rejected());
    emit(&mut rec, &a.out, "ingest_report.csv", |f| report.write_csv(f))?;
    if trips.is_empty() {
        finish(rec, &a.out)?;
        return Err(CliError::Data("no usable data: every row was rejected".into()));
    }
    emit(&mut rec, &a.out, "trips.csv", |f| write_canonical(f, &trips, &ids))?;
    finish(rec, &a.out)
}

fn shift_options(s: &ShiftSource) -> Result<ShiftOptions, CliError> {
    if !(s.gap_hours.is_finite() && s.gap_hours > 0.0) {
        return Err(CliError::Usage("--gap-hours must be positive".into()));
    }
    Ok(ShiftOptions {
        gap_threshold_s: (s.gap_hours * 3600.0).round() as i64,
        identity: match s.identity {
            Identity::Hack => DriverIdentity::HackLicense,
            Identity::Medallion => DriverIdentity::Medallion,
        },
        overlap: match s.overlap {
            Overlap::Drop => OverlapPolicy::DropLater,
            Overlap::Clip => OverlapPolicy::ClipEarlier,
        },
    })
}

fn load_store(s: &ShiftSource, rec: &mut Recorder) -> Result<TripBatch, CliError> {
    record_input(rec, "store", &s.store)?;
    let batch = rainfleet::ingest::read_trips(&[&s.store], Schema::canonical(), IngestOptions::default())
        .map_err(ingest_error)?;
    rec.count("store_rows", batch.report.rows_read);
    if batch.trips.is_empty() {
        return Err(CliError::Data(format!("no usable data in {}", s.store.display())));
    }
    Ok(batch)
}

pub fn shifts(a: ShiftArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut rec = Recorder::new("shifts", args);
    let opts = shift_options(&a.source)?;
    let batch = load_store(&a.source, &mut rec)?;
    ensure_dir(&a.out)?;
    let table = ShiftTable::build(batch.trips, opts);
    let r = table.report;
    rec.count("drivers", r.drivers as u64);
    rec.count("shifts", r.shifts as u64);
    rec.count("overlaps_dropped", r.overlaps_dropped as u64);
    rec.count("overlaps_clipped", r.overlaps_clipped as u64);
    let dens = shift_time_densities(table.shifts(), a.bin_minutes).map_err(|e| CliError::Usage(e.to_string()))?;
    emit(&mut rec, &a.out, "shifts.csv", |f| table.write_csv(f, &batch.ids))?;
    emit(&mut rec, &a.out, "shift_start_density.csv", |f| dens.write_csv(f, &dens.start))?;
    emit(&mut rec, &a.out, "shift_end_density.csv", |f| dens.write_csv(f, &dens.end))?;
    println!(
        "{} drivers, {} shifts from {} trips ({} overlapping dropped, {} clipped)",
        r.drivers, r.shifts, r.trips_kept, r.overlaps_dropped, r.overlaps_clipped
    );
    finish(rec, &a.out)
}

fn windows(spec: &Option<String>, rec: &mut Recorder) -> Result<WindowSet, CliError> {
    match spec {
        None => Ok(WindowSet::default()),
        Some(name) => {
            let path = locate(name, "windows", "omit --windows for 6-10 and 16-20")?;
            record_input(rec, "windows", &path)?;
            WindowSet::parse(&read_text(&path)?).map_err(|e| input_err(&path, e))
        }
    }
}

fn supply_mode(s: Supply) -> SupplyMode {
    match s {
        Supply::Overlap => SupplyMode::Overlap,
        Supply::Fractional => SupplyMode::Fractional,
    }
}

pub fn analyze(a: AnalyzeArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut rec = Recorder::new("analyze", args);
    let opts = shift_options(&a.source)?;
    if !(a.cell_size_m.is_finite() && a.cell_size_m > 0.0) {
        return Err(CliError::Usage("--cell-size-m must be positive".into()));
    }
    let windows = windows(&a.windows, &mut rec)?;
    let stations = match &a.station_coords {
        None => StationSet::nyc(),
        Some(p) => {
            record_input(&mut rec, "stations", p)?;
            StationSet::from_csv(File::open(p).map_err(|e| input_err(p, e))?).map_err(|e| input_err(p, e))?
        }
    };
    let reference = stations.require(&a.ref_station).map_err(|e| CliError::Usage(e.to_string()))?;
    record_input(&mut rec, "weather", &a.weather)?;
    let wfile = File::open(&a.weather).map_err(|e| input_err(&a.weather, e))?;
    let wdata = parse_weather(io::BufReader::new(wfile), &stations).map_err(|e| input_err(&a.weather, e))?;
    let weather = classify_hours(&wdata, &stations, reference, a.rain_threshold);
    let (n_rainy, n_clear, n_unknown) = weather.counts();
    if n_rainy + n_clear == 0 {
        return Err(CliError::Data(format!("no usable data: no classifiable hours in {}", a.weather.display())));
    }

    let batch = load_store(&a.source, &mut rec)?;
    ensure_dir(&a.out)?;
    let grid = Grid::new(a.bbox.unwrap_or(BBox::NYC), a.cell_size_m);
    let cells = (!a.cell.is_empty()).then(|| CellSelection { grid, cells: Some(a.cell.clone()) });
    if let Some(bad) = a.cell.iter().find(|c| c.row >= grid.rows || c.col >= grid.cols) {
        return Err(CliError::Usage(format!("cell {bad} is outside the {}x{} grid", grid.rows, grid.cols)));
    }
    let density = grid_density(&batch.trips, &grid);
    let parts = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut analysis = analyze_batch(batch, opts, &BinOptions { cells }, parts);
    analysis.bins.join_weather(&weather);
    let bins = &analysis.bins;
    let mode = supply_mode(a.supply);

    rec.count("weather_hours_rainy", n_rainy as u64);
    rec.count("weather_hours_clear", n_clear as u64);
    rec.count("weather_hours_unclassifiable", n_unknown as u64);
    rec.count("shifts", analysis.table.len() as u64);
    emit(&mut rec, &a.out, "weather_hours.csv", |f| weather.write_csv(f))?;
    emit(&mut rec, &a.out, "bins.csv", |f| bins.write_csv(f))?;
    emit(&mut rec, &a.out, "bin_details.csv", |f| bins.write_details_csv(f, a.max_trips_per_hour))?;
    emit(&mut rec, &a.out, "grid_density.csv", |f| density.write_csv(f))?;

    let mut views = vec![(None, String::new())];
    views.extend(a.cell.iter().map(|c| (Some(*c), format!("_cell_{}_{}", c.row, c.col))));
    for (cell, suffix) in &views {
        let excl = ExclusionReport::build(bins, *cell, mode, a.max_trips_per_hour);
        let excluded: usize = excl.excluded.values().sum();
        rec.count(&format!("bins{suffix}"), excl.bins as u64);
        rec.count(&format!("bin_index_exclusions{suffix}"), excluded as u64);
        rec.count(&format!("bins_flagged{suffix}"), excl.flagged as u64);
        emit(&mut rec, &a.out, &format!("exclusions{suffix}.csv"), |f| excl.write_csv(f))?;
        let cmp = compare_regimes(bins, *cell, &Index::ALL, mode, a.min_samples);
        emit(&mut rec, &a.out, &format!("comparison{suffix}.csv"), |f| write_comparison(f, &cmp))?;
        if a.svg {
            for index in Index::ALL {
                for weekend in [false, true] {
                    let name = format!("{index}_{}{suffix}.svg", if weekend { "weekend" } else { "weekday" });
                    emit(&mut rec, &a.out, &name, |f| comparison_svg(f, &cmp, index, weekend))?;
                }
            }
        }
    }
    emit(&mut rec, &a.out, "window_means.csv", |f| write_window_means(f, bins, &windows, mode))?;
    println!("{} bins; weather hours: {n_rainy} rainy, {n_clear} clear, {n_unknown} unclassifiable", bins.rows.len());
    finish(rec, &a.out)
}

/// City-wide rainy and clear means of every index per window and day class.
fn write_window_means(f: File, bins: &BinTable, windows: &WindowSet, mode: SupplyMode) -> io::Result<()> {
    let mut w = io::BufWriter::new(f);
    writeln!(w, "window,day_class,index,clear_mean,rainy_mean,n_clear,n_rainy")?;
    for label in WindowLabel::ALL {
        for dc in [DayClass::Weekday, DayClass::Weekend, DayClass::Any] {
            let tw = windows.window(label, dc);
            for index in Index::ALL {
                let mut acc = [(0.0, 0usize); 2];
                for p in labeled_series(bins, None, index, mode).iter().filter(|p| tw.contains(p.hour)) {
                    acc[usize::from(p.rainy)].0 += p.value;
                    acc[usize::from(p.rainy)].1 += 1;
                }
                let mean = |(s, n): (f64, usize)| if n > 0 { format!("{:.6}", s / n as f64) } else { String::new() };
                writeln!(w, "{label},{dc},{index},{},{},{},{}", mean(acc[0]), mean(acc[1]), acc[0].1, acc[1].1)?;
            }
        }
    }
    w.flush()
}

pub fn test(a: TestArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut rec = Recorder::new("test", args);
    rec.seed(a.seed);
    let index = Index::parse(&a.index).ok_or_else(|| {
        let names: Vec<&str> = Index::ALL.iter().map(|i| i.as_str()).collect();
        CliError::Usage(format!("unknown index {:?}; expected one of {}", a.index, names.join(", ")))
    })?;
    let windows = windows(&a.windows, &mut rec)?;
    record_input(&mut rec, "bins", &a.bins)?;
    let details_path = a.bins.with_file_name("bin_details.csv");
    let details = if details_path.is_file() {
        record_input(&mut rec, "bin_details", &details_path)?;
        Some(File::open(&details_path).map_err(|e| input_err(&details_path, e))?)
    } else {
        None
    };
    let needs_details =
        matches!(index, Index::EmptyTravelSpeed | Index::MeanEmptyGap) || matches!(a.supply, Supply::Fractional);
    if needs_details && details.is_none() {
        return Err(CliError::Usage(format!("{index} needs bin_details.csv next to {}", a.bins.display())));
    }
    let bfile = File::open(&a.bins).map_err(|e| input_err(&a.bins, e))?;
    let table =
        read_bins(io::BufReader::new(bfile), details.map(io::BufReader::new)).map_err(|e| input_err(&a.bins, e))?;
    let series = labeled_series(&table, a.cell, index, supply_mode(a.supply));
    rec.count("hours_tested", series.len() as u64);
    if series.is_empty() {
        return Err(CliError::Data("no usable data: no hours with both a weather class and an index value".into()));
    }
    ensure_dir(&a.out)?;
    let regimes = match a.regime {
        RegimeArg::Observed => vec![Regime::Observed],
        RegimeArg::Permutation => vec![Regime::Permutation],
        RegimeArg::Both => vec![Regime::Observed, Regime::Permutation],
    };
    let cfg = ComparisonConfig {
        windows,
        regimes,
        pseudo_days: a.pseudo_days,
        seed: a.seed,
        tests: TestOptions { exact_cutoff: a.exact_cutoff, ..Default::default() },
        ..Default::default()
    };
    let out = run_comparison(&series, &cfg);
    for label in [WindowLabel::MorningPeak, WindowLabel::EveningPeak] {
        emit(&mut rec, &a.out, &format!("test_{label}.csv"), |f| write_appendix_table(f, &out, label))?;
    }
    emit(&mut rec, &a.out, "test_results.csv", |f| write_results_long(f, &out))?;
    if !out.pseudo_days.is_empty() {
        emit(&mut rec, &a.out, "pseudo_days.csv", |f| {
            let mut w = io::BufWriter::new(f);
            writeln!(w, "window,day_class,rainy,pseudo_day_id,hour,hour_rainy")?;
            for set in &out.pseudo_days {
                let mut buf = Vec::new();
                write_pseudo_days(&mut buf, &set.days)?;
                for line in String::from_utf8_lossy(&buf).lines().skip(1) {
                    writeln!(w, "{},{},{},{line}", set.window, set.day_class, set.rainy)?;
                }
            }
            w.flush()
        })?;
    }
    print!(
        "{}",
        String::from_utf8_lossy(&{
            let mut buf = Vec::new();
            write_appendix_table(&mut buf, &out, WindowLabel::MorningPeak).map_err(|e| out_err(&a.out, e))?;
            buf
        })
    );
    finish(rec, &a.out)
}

pub fn simulate(a: SimulateArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut rec = Recorder::new("simulate", args);
    let config_path = match &a.config {
        Some(name) => Some(locate(name, "config", "omit --config to use the built-in defaults")?),
        None => std::env::var_os(CONFIG_DIR_ENV).map(|d| Path::new(&d).join("sim.toml")).filter(|p| p.is_file()),
    };
    let mut cfg = match &config_path {
        Some(p) => {
            record_input(&mut rec, "config", p)?;
            SimConfig::from_toml(&read_text(p)?).map_err(|e| input_err(p, e))?
        }
        None => SimConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    rec.seed(cfg.seed);
    ensure_dir(&a.out_dir)?;
    let trips_path = a.out_dir.join("trips.csv");
    let (weather, truth, rows) = simulate_to(&cfg, create(&trips_path)?).map_err(|e| CliError::Input(e.to_string()))?;
    rec.output("trips.csv", trips_path.clone());
    rec.count("trips", rows);
    rec.count("true_shifts", truth.shifts.len() as u64);
    let stations = StationSet::nyc();
    emit(&mut rec, &a.out_dir, "weather.csv", |f| write_weather(f, &weather, &stations))?;
    emit(&mut rec, &a.out_dir, "stations.csv", |f| stations.write_csv(f))?;
    emit(&mut rec, &a.out_dir, "truth_shifts.csv", |f| truth.write_shifts_csv(f))?;
    emit(&mut rec, &a.out_dir, "truth_hours.csv", |f| truth.write_hours_csv(f))?;
    emit(&mut rec, &a.out_dir, "config.toml", |mut f| f.write_all(cfg.to_toml().as_bytes()))?;
    println!("{rows} trips, {} true shifts", truth.shifts.len());

    if a.score {
        let batch = rainfleet::ingest::read_trips(&[&trips_path], Schema::tlc(), IngestOptions::default())
            .map_err(ingest_error)?;
        rec.count("rows_rejected", batch.report.rows_rejected());
        let analysis = analyze_batch(batch, ShiftOptions::default(), &BinOptions::default(), 1);
        let report = score_recovery(&truth, &analysis.table, &analysis.ids, &analysis.bins)
            .map_err(|e| CliError::Data(e.to_string()))?;
        rec.count("partition_errors", report.partition_errors as u64);
        emit(&mut rec, &a.out_dir, "recovery.csv", |f| report.write_csv(f))?;
        print!("{report}");
    }
    finish(rec, &a.out_dir)
}
