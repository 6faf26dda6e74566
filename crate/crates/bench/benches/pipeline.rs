use std::hint::black_box;
use std::io::Cursor;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use rainfleet::geo::{BBox, Grid};
use rainfleet::ingest::{IngestOptions, Schema};
use rainfleet::metrics::{aggregate, aggregate_parallel, BinOptions, CellSelection};
use rainfleet::pipeline::read_trips_from;
use rainfleet::shifts::{ShiftOptions, ShiftTable};
use rainfleet::simulate::{simulate, write_trips, SimConfig};

fn trip_bytes() -> Vec<u8> {
    let sim = simulate(&SimConfig { n_drivers: 200, days: 30, ..Default::default() }).expect("default config is valid");
    let mut out = Vec::new();
    write_trips(&mut out, &sim.trips).expect("in-memory write");
    out
}

fn stages(c: &mut Criterion) {
    let bytes = trip_bytes();
    let batch = read_trips_from("bench", Cursor::new(bytes.clone()), Schema::tlc(), IngestOptions::default()).unwrap();
    let rows = batch.trips.len() as u64;

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.throughput(Throughput::Elements(rows));
    for parallel in [false, true] {
        let name = if parallel { "ingest_parallel" } else { "ingest" };
        g.bench_function(name, |b| {
            b.iter_batched(
                || Cursor::new(bytes.clone()),
                |r| {
                    read_trips_from("bench", r, Schema::tlc(), IngestOptions { parallel, ..Default::default() })
                        .unwrap()
                },
                BatchSize::LargeInput,
            )
        });
    }
    g.bench_function("shifts", |b| {
        b.iter_batched(|| batch.trips.clone(), |t| ShiftTable::build(t, ShiftOptions::default()), BatchSize::LargeInput)
    });

    let table = ShiftTable::build(batch.trips.clone(), ShiftOptions::default());
    let city = BinOptions::default();
    let cells = BinOptions { cells: Some(CellSelection { grid: Grid::new(BBox::NYC, 250.0), cells: None }) };
    g.bench_function("bins_city", |b| b.iter(|| aggregate(black_box(&table), &city)));
    g.bench_function("bins_cells", |b| b.iter(|| aggregate(black_box(&table), &cells)));
    g.bench_function("bins_city_8_parts", |b| b.iter(|| aggregate_parallel(black_box(&table), &city, 8)));
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
