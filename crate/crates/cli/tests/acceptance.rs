//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the simulation batches can
//! report their measured rates and timings alongside the verdict.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rainfleet::geo::{BBox, Grid};
use rainfleet::ids::Symbol;
use rainfleet::ingest::{read_trips, IngestOptions, Schema, TripRecord};
use rainfleet::metrics::{
    aggregate, aggregate_parallel, labeled_series, BinAccumulator, BinOptions, CellSelection, Index, SupplyMode,
};
use rainfleet::pipeline::run_simulated;
use rainfleet::shifts::{OverlapPolicy, ShiftOptions, ShiftTable};
use rainfleet::simulate::{score_recovery, simulate_to, Demand, RowOrder, SimConfig};
use rainfleet::stats::{kruskal_wallis, run_comparison, ComparisonConfig, Method, Regime};
use rainfleet::weather::idw;
use rainfleet::windows::{DayClass, WindowLabel};
use rainfleet::{LatLon, Timestamp};

// AC1
const RECOVERY_RUNS: u64 = 50;
const RECOVERY_DRIVERS: usize = 100;
const RECOVERY_DAYS: u32 = 7;
const RECOVERY_LIMIT: Duration = Duration::from_secs(60);
// AC2
const BUDGET_SIM_RUNS: u64 = 10;
const BUDGET_FUZZ_CASES: usize = 2000;
// AC3
const ORACLE_CASES: usize = 2000;
const KW_EXPECTED: f64 = 3.857;
const KW_TOL: f64 = 1e-3;
// AC4
const NULL_RUNS: u64 = 200;
const ALPHA: f64 = 0.05;
const NULL_RATE_TOL: f64 = 0.03;
// AC5
const POWER_RUNS: u64 = 100;
const POWER_MULTIPLIER: f64 = 1.5;
const POWER_P: f64 = 0.01;
const POWER_MIN_REJECTIONS: usize = 95;
const POWER_LIMIT: Duration = Duration::from_secs(300);
// AC6
const WEEKEND_RUNS: u64 = 100;
const WEEKEND_MULTIPLIER: f64 = 1.1;
// AC7
const MERGE_MIN_ROWS: u64 = 1_000_000;
const MERGE_PARTS: usize = 8;
// AC8
const IDW_TOL: f64 = 1e-9;
// AC9
const THROUGHPUT_MIN_ROWS: u64 = 10_000_000;
const THROUGHPUT_MIN_RATE: f64 = 200_000.0;

type Check<'a> = (&'static str, &'static str, Box<dyn Fn() -> Verdict + 'a>);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// The study-scale fleet: 100 drivers over 30 days, defaults elsewhere.
fn desk_config(seed: u64, demand: Demand) -> SimConfig {
    SimConfig { seed, n_drivers: 100, days: 30, demand, ..Default::default() }
}

/// Observed-regime Mann-Whitney p-values of pickups per driver in the
/// morning peak, weekday and weekend.
fn morning_p(cfg: &SimConfig) -> (f64, f64) {
    let run = run_simulated(cfg, ShiftOptions::default(), &BinOptions::default()).expect("simulation runs");
    let series = labeled_series(&run.analysis.bins, None, Index::PickupsPerDriver, SupplyMode::Overlap);
    let cc = ComparisonConfig {
        labels: vec![WindowLabel::MorningPeak],
        day_classes: vec![DayClass::Weekday, DayClass::Weekend],
        ..Default::default()
    };
    let out = run_comparison(&series, &cc);
    let p = |dc| {
        out.find(WindowLabel::MorningPeak, dc, Method::MannWhitney, Regime::Observed)
            .and_then(|r| r.outcome.result())
            .map_or(f64::NAN, |r| r.p_value)
    };
    (p(DayClass::Weekday), p(DayClass::Weekend))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn budget_violations(table: &ShiftTable) -> (usize, usize) {
    let mut bad = 0;
    let mut n = 0;
    for s in table.shifts() {
        n += 1;
        if s.occupied_s + s.empty_s != s.end.0 - s.start.0 {
            bad += 1;
        }
    }
    (n, bad)
}

fn ac1_shift_recovery() -> Verdict {
    let t0 = Instant::now();
    let (mut errors, mut shifts) = (0, 0);
    for seed in 0..RECOVERY_RUNS {
        let cfg = SimConfig { seed, n_drivers: RECOVERY_DRIVERS, days: RECOVERY_DAYS, ..Default::default() };
        let run = run_simulated(&cfg, ShiftOptions::default(), &BinOptions::default()).expect("simulation runs");
        let a = &run.analysis;
        match score_recovery(&run.sim.truth, &a.table, &a.ids, &a.bins) {
            Ok(rep) => {
                errors += rep.partition_errors;
                shifts += rep.true_shifts;
            }
            Err(e) => return verdict(false, format!("seed {seed}: driver sets differ ({e:?})")),
        }
    }
    let took = t0.elapsed();
    verdict(
        errors == 0 && took < RECOVERY_LIMIT,
        format!(
            "{RECOVERY_RUNS} runs, {shifts} true shifts, {errors} partition errors, {:.1}s (limit {}s)",
            took.as_secs_f64(),
            RECOVERY_LIMIT.as_secs()
        ),
    )
}

fn fuzz_trips(rng: &mut ChaCha8Rng) -> Vec<TripRecord> {
    let t0 = 1_357_500_000i64;
    let n = rng.random_range(1..200);
    (0..n)
        .map(|_| {
            let d = rng.random_range(0..5u32);
            let at = t0 + rng.random_range(0..3 * 86_400);
            // Zero-length, short and long rides; overlaps are common.
            let dur = match rng.random_range(0..3) {
                0 => 0,
                1 => rng.random_range(1..1800),
                _ => rng.random_range(1800..14_400),
            };
            let p = LatLon::new(rng.random_range(40.6..40.9), rng.random_range(-74.1..-73.8));
            TripRecord {
                medallion: Symbol(d),
                hack_license: Symbol(d),
                pickup_time: Timestamp(at),
                dropoff_time: Timestamp(at + dur),
                pickup: p,
                dropoff: p,
                trip_distance_km: rng.random_range(0.0..20.0),
                fare_total: rng.random_range(0.0..80.0),
            }
        })
        .collect()
}

fn ac2_time_budget() -> Verdict {
    let (mut n_sim, mut bad_sim) = (0, 0);
    for seed in 0..BUDGET_SIM_RUNS {
        let cfg = SimConfig { seed, n_drivers: 100, days: 7, ..Default::default() };
        let run = run_simulated(&cfg, ShiftOptions::default(), &BinOptions::default()).expect("simulation runs");
        let (n, b) = budget_violations(&run.analysis.table);
        n_sim += n;
        bad_sim += b;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut n_fuzz, mut bad_fuzz) = (0, 0);
    for case in 0..BUDGET_FUZZ_CASES {
        let overlap = if case % 2 == 0 { OverlapPolicy::DropLater } else { OverlapPolicy::ClipEarlier };
        let gap = rng.random_range(600..12 * 3600);
        let opts = ShiftOptions { gap_threshold_s: gap, overlap, ..Default::default() };
        let (n, b) = budget_violations(&ShiftTable::build(fuzz_trips(&mut rng), opts));
        n_fuzz += n;
        bad_fuzz += b;
    }
    verdict(
        bad_sim == 0 && bad_fuzz == 0,
        format!("simulated: {bad_sim} of {n_sim} shifts violate; fuzzed: {bad_fuzz} of {n_fuzz} shifts violate"),
    )
}

fn ac3_oracle() -> Verdict {
    let s = oracle::run_corpus(20_130_107, ORACLE_CASES);
    let h = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).expect("valid groups").statistic;
    let first = s.mismatches.first().cloned().unwrap_or_default();
    verdict(
        s.mismatches.is_empty() && (h - KW_EXPECTED).abs() <= KW_TOL,
        format!(
            "{} cases ({} with ties), {} mismatches at rel tol {:e}; H({{1,2,3}},{{4,5,6}}) = {h:.4} {first}",
            s.cases,
            s.with_ties,
            s.mismatches.len(),
            oracle::REL_TOL
        ),
    )
}

fn ac4_null_calibration() -> Verdict {
    let mut rejections = 0;
    for seed in 0..NULL_RUNS {
        let (p, _) = morning_p(&desk_config(seed, Demand::default()));
        rejections += usize::from(p < ALPHA);
    }
    let rate = rejections as f64 / NULL_RUNS as f64;
    verdict(
        (rate - ALPHA).abs() <= NULL_RATE_TOL,
        format!("{rejections}/{NULL_RUNS} rejections at alpha {ALPHA} (rate {rate:.3}, allowed {ALPHA} +/- {NULL_RATE_TOL})"),
    )
}

fn ac5_effect_detection() -> Verdict {
    let t0 = Instant::now();
    let demand = Demand { rain_multiplier: POWER_MULTIPLIER, base_rate: 2.0, ..Default::default() };
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..POWER_RUNS {
        let (p, _) = morning_p(&desk_config(seed, demand));
        hits += usize::from(p < POWER_P);
        worst = worst.max(p);
    }
    let took = t0.elapsed();
    verdict(
        hits >= POWER_MIN_REJECTIONS && took < POWER_LIMIT,
        format!(
            "{hits}/{POWER_RUNS} weekday morning runs with p < {POWER_P} (need {POWER_MIN_REJECTIONS}), largest p {worst:.2e}, {:.1}s (limit {}s)",
            took.as_secs_f64(),
            POWER_LIMIT.as_secs()
        ),
    )
}

fn ac6_weekend_contrast() -> Verdict {
    let demand = Demand {
        rain_multiplier: POWER_MULTIPLIER,
        weekend_rain_multiplier: Some(WEEKEND_MULTIPLIER),
        ..Default::default()
    };
    let (mut wd, mut we) = (Vec::new(), Vec::new());
    for seed in 0..WEEKEND_RUNS {
        let (a, b) = morning_p(&desk_config(seed, demand));
        wd.push(a);
        we.push(b);
    }
    let (mwd, mwe) = (median(wd), median(we));
    verdict(mwe > mwd, format!("median p over {WEEKEND_RUNS} runs: weekend {mwe:.3e}, weekday {mwd:.3e}"))
}

fn simulate_file(dir: &Path, cfg: &SimConfig) -> (PathBuf, u64, Duration) {
    let path = dir.join(format!("trips_{}.csv", cfg.n_drivers));
    let t0 = Instant::now();
    let f = fs::File::create(&path).expect("create trip file");
    let (_, _, rows) = simulate_to(cfg, std::io::BufWriter::with_capacity(1 << 20, f)).expect("simulation runs");
    (path, rows, t0.elapsed())
}

fn ac7_mergeability(dir: &Path) -> Verdict {
    let cfg = SimConfig { seed: 77, n_drivers: 2600, days: 30, row_order: RowOrder::Driver, ..Default::default() };
    let (path, rows, _) = simulate_file(dir, &cfg);
    let batch = read_trips(&[&path], Schema::tlc(), IngestOptions::default()).expect("readable");
    let table = ShiftTable::build(batch.trips, ShiftOptions::default());
    let opts = BinOptions { cells: Some(CellSelection { grid: Grid::new(BBox::NYC, 500.0), cells: None }) };
    let single = aggregate(&table, &opts);

    // Arbitrary scatter: every trip row and every driver goes to a random part.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut parts: Vec<BinAccumulator> = (0..MERGE_PARTS).map(|_| BinAccumulator::new(opts.clone())).collect();
    for t in table.trips() {
        parts[rng.random_range(0..MERGE_PARTS)].add_trip(t);
    }
    for d in table.by_driver() {
        parts[rng.random_range(0..MERGE_PARTS)].add_driver(&d);
    }
    let mut merged = BinAccumulator::new(opts.clone());
    for p in parts {
        merged.merge(p);
    }
    let merged = merged.finish();
    let chunked = aggregate_parallel(&table, &opts, MERGE_PARTS);
    let differing = single.rows.iter().zip(&merged.rows).filter(|(a, b)| a != b).count();
    let _ = fs::remove_file(&path);
    verdict(
        rows >= MERGE_MIN_ROWS && merged == single && chunked == single,
        format!(
            "{rows} rows, {} bins; scattered merge identical: {}, chunked merge identical: {}, differing rows {differing}",
            single.rows.len(),
            merged == single,
            chunked == single
        ),
    )
}

fn ac8_imputation() -> Verdict {
    let target = LatLon::new(40.75, -74.0);
    let eq = idw(target, &[(LatLon::new(40.75, -73.75), 2.0), (LatLon::new(40.75, -74.25), 4.0)]);
    let asym = idw(target, &[(LatLon::new(40.76, -74.0), 3.0), (LatLon::new(40.77, -74.0), 0.0)]);
    let ok = eq == Some(3.0) && asym.is_some_and(|v| (v - 2.4).abs() <= IDW_TOL);
    verdict(ok, format!("equidistant {eq:?} (want 3.0 exactly), d/2d {asym:?} (want 2.4 +/- {IDW_TOL:e})"))
}

fn ac9_throughput(dir: &Path) -> Verdict {
    let cfg = SimConfig { seed: 99, n_drivers: 26_000, days: 30, row_order: RowOrder::Driver, ..Default::default() };
    let (path, rows, gen) = simulate_file(dir, &cfg);
    let t0 = Instant::now();
    let batch = read_trips(&[&path], Schema::tlc(), IngestOptions::default()).expect("readable");
    let read = batch.report.rows_read;
    let t_ingest = t0.elapsed();
    let table = ShiftTable::build(batch.trips, ShiftOptions::default());
    let t_shifts = t0.elapsed();
    let bins = aggregate(&table, &BinOptions::default());
    let took = t0.elapsed();
    let rate = read as f64 / took.as_secs_f64();
    let _ = fs::remove_file(&path);
    verdict(
        rows >= THROUGHPUT_MIN_ROWS && read == rows && rate >= THROUGHPUT_MIN_RATE,
        format!(
            "{read} rows ({} shifts, {} bins) in {:.1}s = {:.0} rows/s (need {THROUGHPUT_MIN_RATE:.0}); ingest {:.1}s, shifts {:.1}s, bins {:.1}s; file generation {:.1}s not counted; {} CPU(s)",
            table.len(),
            bins.rows.len(),
            took.as_secs_f64(),
            rate,
            t_ingest.as_secs_f64(),
            (t_shifts - t_ingest).as_secs_f64(),
            (took - t_shifts).as_secs_f64(),
            gen.as_secs_f64(),
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_rainfleet"))
        .args(args)
        .current_dir(dir)
        .env_remove("RAINFLEET_CONFIG_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).expect("output dir exists") {
        let p = e.expect("dir entry").path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if name != "manifest.json" {
            out.insert(name, fs::read(&p).expect("readable output"));
        }
    }
    out
}

fn manifest_id(dir: &Path) -> String {
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("manifest.json")).expect("manifest")).expect("json");
    m["id"].as_str().unwrap_or_default().to_string()
}

fn ac10_determinism(dir: &Path) -> Verdict {
    // Two identical chains in sibling directories; each command reads the
    // first chain's inputs so only the command itself can differ.
    let steps: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--seed", "5", "--out-dir"]),
        ("ingest", vec!["ingest", "run1/simulate/trips.csv", "--rejections", "--out"]),
        ("shifts", vec!["shifts", "--store", "run1/ingest/trips.csv", "--out"]),
        (
            "analyze",
            vec![
                "analyze",
                "--store",
                "run1/ingest/trips.csv",
                "--weather",
                "run1/simulate/weather.csv",
                "--station-coords",
                "run1/simulate/stations.csv",
                "--cell",
                "40:40",
                "--svg",
                "--out",
            ],
        ),
        ("test", vec!["test", "--bins", "run1/analyze/bins.csv", "--regime", "both", "--seed", "3", "--out"]),
    ];
    let mut lines = Vec::new();
    let mut all_same = true;
    for (name, args) in &steps {
        let mut outputs = Vec::new();
        for run in ["run1", "run2"] {
            let out = format!("{run}/{name}");
            let mut a = args.clone();
            a.push(&out);
            if let Err(e) = run_cli(dir, &a) {
                return verdict(false, e);
            }
            outputs.push((files(&dir.join(&out)), manifest_id(&dir.join(&out))));
        }
        let csvs = outputs[0].0.keys().filter(|k| k.ends_with(".csv")).count();
        let differing: Vec<&String> =
            outputs[0].0.iter().filter(|(k, v)| outputs[1].0.get(*k) != Some(v)).map(|(k, _)| k).collect();
        let same = differing.is_empty() && outputs[0].0.len() == outputs[1].0.len() && csvs > 0;
        all_same &= same;
        lines.push(format!("{name}: {csvs} csv, {} differ", differing.len()));
    }
    verdict(all_same, lines.join("; "))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Check> = vec![
        ("AC1", "shift recovery exactness", Box::new(ac1_shift_recovery)),
        ("AC2", "time-budget identity", Box::new(ac2_time_budget)),
        ("AC3", "stats oracle equivalence", Box::new(ac3_oracle)),
        ("AC4", "null calibration", Box::new(ac4_null_calibration)),
        ("AC5", "effect detection", Box::new(ac5_effect_detection)),
        ("AC6", "weekend contrast", Box::new(ac6_weekend_contrast)),
        ("AC7", "mergeability", Box::new(|| ac7_mergeability(dir.path()))),
        ("AC8", "imputation correctness", Box::new(ac8_imputation)),
        ("AC9", "throughput", Box::new(|| ac9_throughput(dir.path()))),
        ("AC10", "determinism", Box::new(|| ac10_determinism(dir.path()))),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC")).collect();
    let mut failed = 0;
    for (id, name, f) in &criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let t0 = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!v.pass);
        println!(
            "{} {id} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
