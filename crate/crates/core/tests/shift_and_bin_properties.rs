use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use rainfleet::geo::{BBox, Grid};
use rainfleet::ids::Symbol;
use rainfleet::ingest::TripRecord;
use rainfleet::metrics::{aggregate, aggregate_parallel, BinAccumulator, BinOptions, BinTable, CellSelection};
use rainfleet::shifts::{OverlapPolicy, ShiftOptions, ShiftTable};
use rainfleet::{LatLon, Timestamp};

const T0: i64 = 1_357_000_000 / 3600 * 3600;

// (driver, pickup offset s, duration s, distance km, fare, pickup cell seed, dropoff cell seed)
type RawTrip = (u32, i64, i64, f64, f64, u8, u8);

fn pos(seed: u8) -> LatLon {
    let BBox { min_lat, min_lon, .. } = BBox::NYC;
    LatLon::new(min_lat + 0.2 + f64::from(seed % 8) * 0.004, min_lon + 0.3 + f64::from(seed / 8) * 0.004)
}

fn to_trip(r: &RawTrip) -> TripRecord {
    let &(d, at, dur, km, fare, a, b) = r;
    TripRecord {
        medallion: Symbol(d + 100),
        hack_license: Symbol(d),
        pickup_time: Timestamp(T0 + at),
        dropoff_time: Timestamp(T0 + at + dur),
        pickup: pos(a),
        dropoff: pos(b),
        trip_distance_km: km,
        fare_total: fare,
    }
}

fn raw_trip() -> impl Strategy<Value = RawTrip> {
    (
        0u32..6,
        // Three days, with clusters so that both short and multi-hour gaps occur.
        prop_oneof![0i64..40_000, 100_000i64..140_000, 200_000i64..259_200],
        prop_oneof![Just(0i64), 60i64..3600, 3600i64..9000],
        prop_oneof![Just(0.0), 0.1f64..30.0],
        0.0f64..120.0,
        0u8..64,
        0u8..64,
    )
}

fn trips() -> impl Strategy<Value = Vec<TripRecord>> {
    prop::collection::vec(raw_trip(), 1..120).prop_map(|v| v.iter().map(to_trip).collect())
}

fn options(gap_h: i64, overlap: OverlapPolicy) -> ShiftOptions {
    ShiftOptions { gap_threshold_s: gap_h * 3600, overlap, ..Default::default() }
}

fn cells() -> BinOptions {
    BinOptions { cells: Some(CellSelection { grid: Grid::new(BBox::NYC, 500.0), cells: None }) }
}

fn overlap_policy() -> impl Strategy<Value = OverlapPolicy> {
    prop_oneof![Just(OverlapPolicy::DropLater), Just(OverlapPolicy::ClipEarlier)]
}

fn boundaries(table: &ShiftTable) -> BTreeSet<(Symbol, Timestamp)> {
    table.shifts().map(|s| (s.driver, s.start)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn time_budget_identity(ts in trips(), gap_h in 1i64..12, overlap in overlap_policy()) {
        let table = ShiftTable::build(ts, options(gap_h, overlap));
        for s in table.shifts() {
            prop_assert_eq!(s.occupied_s + s.empty_s, s.end.0 - s.start.0);
            prop_assert!(s.empty_s >= 0);
        }
    }

    #[test]
    fn shifts_partition_each_driver(ts in trips(), gap_h in 1i64..12, overlap in overlap_policy()) {
        let n_in = ts.len();
        let table = ShiftTable::build(ts, options(gap_h, overlap));
        let r = table.report;
        prop_assert_eq!(r.trips_kept + r.overlaps_dropped, n_in);
        let gap = gap_h * 3600;
        let mut covered = 0;
        for d in table.by_driver() {
            let joined: Vec<TripRecord> = d.shifts.iter().flat_map(|s| s.trips.iter().copied()).collect();
            prop_assert_eq!(&joined[..], d.trips);
            for s in &d.shifts {
                for w in s.trips.windows(2) {
                    prop_assert!(w[1].pickup_time.0 - w[0].dropoff_time.0 <= gap);
                    prop_assert!(w[1].pickup_time >= w[0].dropoff_time);
                }
            }
            for w in d.shifts.windows(2) {
                prop_assert!(w[1].start.0 - w[0].end.0 > gap);
            }
            covered += d.trips.len();
        }
        prop_assert_eq!(covered, r.trips_kept);
    }

    #[test]
    fn raising_the_gap_threshold_only_merges(ts in trips(), lo in 1i64..8, extra in 0i64..8) {
        let fine = ShiftTable::build(ts.clone(), options(lo, OverlapPolicy::DropLater));
        let coarse = ShiftTable::build(ts, options(lo + extra, OverlapPolicy::DropLater));
        prop_assert!(coarse.len() <= fine.len());
        prop_assert!(boundaries(&coarse).is_subset(&boundaries(&fine)));
    }

    #[test]
    fn bins_balance_active_time(ts in trips()) {
        let table = ShiftTable::build(ts, ShiftOptions::default());
        let bins = aggregate(&table, &cells());
        for row in bins.view(None) {
            prop_assert_eq!(row.bin.occupied_s + row.bin.empty_s, row.bin.active_s, "{:?}", row.key);
        }
    }

    #[test]
    fn merged_partitions_equal_single_pass(ts in trips(), seed in any::<u64>(), k in 1usize..9) {
        let table = ShiftTable::build(ts, ShiftOptions::default());
        let opts = cells();
        let whole = aggregate(&table, &opts);
        prop_assert_eq!(&aggregate_parallel(&table, &opts, k), &whole);

        // Trip fields over an arbitrary scatter of rows, driver fields over a
        // scatter of drivers.
        let pick = |i: usize| (seed.rotate_left(i as u32 % 64) ^ i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) as usize % k;
        let mut parts: Vec<BinAccumulator> = (0..k).map(|_| BinAccumulator::new(opts.clone())).collect();
        for (i, t) in table.trips().iter().enumerate() {
            parts[pick(i)].add_trip(t);
        }
        for (i, d) in table.by_driver().enumerate() {
            parts[pick(i + 7)].add_driver(&d);
        }
        let mut acc = BinAccumulator::new(opts.clone());
        for p in parts.into_iter().rev() {
            acc.merge(p);
        }
        prop_assert_eq!(&acc.finish(), &whole);
    }

    #[test]
    fn supply_and_pickups_match_brute_force(ts in trips()) {
        let table = ShiftTable::build(ts, ShiftOptions::default());
        let bins: BinTable = aggregate(&table, &BinOptions::default());
        let mut pickups: BTreeMap<i64, u64> = BTreeMap::new();
        for t in table.trips() {
            *pickups.entry(t.pickup_time.0.div_euclid(3600)).or_default() += 1;
        }
        let spans: Vec<(Symbol, i64, i64)> = table.shifts().map(|s| (s.driver, s.start.0, s.end.0)).collect();
        let first = spans.iter().map(|s| s.1.div_euclid(3600)).min().unwrap();
        let last = spans.iter().map(|s| s.2.div_euclid(3600)).max().unwrap();
        for h in first..=last {
            // A driver counts in hour h when some shift touches [h, h + 1h].
            let drivers: BTreeSet<Symbol> = spans
                .iter()
                .filter(|&&(_, a, b)| a < (h + 1) * 3600 && b >= h * 3600)
                .map(|s| s.0)
                .collect();
            let bin = bins.get(Timestamp(h * 3600), None);
            prop_assert_eq!(bin.map_or(0, |b| b.supply) as usize, drivers.len(), "hour {}", h);
            prop_assert_eq!(bin.map_or(0, |b| b.pickups), pickups.get(&h).copied().unwrap_or(0));
        }
    }
}
