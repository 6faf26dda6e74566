//! Rainy-versus-clear comparisons of an hourly index, stratified by time
//! window and day class, under the observed and permutation regimes.
//!
//! Observed regime: hourly values in the stratum, rainy against clear.
//! Mann-Whitney and Kruskal-Wallis compare the two samples directly. The
//! signed-rank test needs pairs, so rainy and clear means are paired by slot
//! (hour of day within the stratum).
//!
//! Permutation regime: rainy hours and clear hours of the stratum are each
//! resampled into pseudo-days of four hours; a pseudo-day's value is the mean
//! index over its hours. Rainy and clear pseudo-day means are compared with
//! all three tests, the signed-rank test pairing them by pseudo-day number.

use std::collections::BTreeMap;
use std::io::{self, Write};

use super::{
    kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank, Method, Regime, StatsError, TestOptions, TestResult,
};
use crate::rng::derive_seed;
use crate::time::Timestamp;
use crate::windows::{permutation_days, DayClass, HourSample, PseudoDay, WindowLabel, WindowSet};

/// One hour's index value with its weather class. Unclassifiable hours are
/// left out before comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub hour: Timestamp,
    pub value: f64,
    pub rainy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub windows: WindowSet,
    pub labels: Vec<WindowLabel>,
    pub day_classes: Vec<DayClass>,
    pub regimes: Vec<Regime>,
    pub pseudo_days: usize,
    pub seed: u64,
    pub tests: TestOptions,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            windows: WindowSet::default(),
            labels: vec![WindowLabel::MorningPeak, WindowLabel::EveningPeak],
            day_classes: vec![DayClass::Weekday, DayClass::Weekend, DayClass::Any],
            regimes: vec![Regime::Observed],
            pseudo_days: 1000,
            seed: 0,
            tests: TestOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Done(TestResult),
    /// A side had fewer than two samples (or pools too small for pseudo-days).
    Insufficient {
        n_rainy: usize,
        n_clear: usize,
    },
    Failed(StatsError),
}

impl Outcome {
    pub fn result(&self) -> Option<&TestResult> {
        match self {
            Outcome::Done(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub window: WindowLabel,
    pub day_class: DayClass,
    pub method: Method,
    pub regime: Regime,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDaySet {
    pub window: WindowLabel,
    pub day_class: DayClass,
    pub rainy: bool,
    pub days: Vec<PseudoDay>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonOutput {
    pub rows: Vec<ComparisonRow>,
    pub pseudo_days: Vec<PseudoDaySet>,
}

impl ComparisonOutput {
    pub fn find(
        &self,
        window: WindowLabel,
        day_class: DayClass,
        method: Method,
        regime: Regime,
    ) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.window == window && r.day_class == day_class && r.method == method && r.regime == regime)
    }
}

const MIN_SIDE: usize = 2;

fn run_tests(rainy: &[f64], clear: &[f64], pairs: &[(f64, f64)], opts: &TestOptions) -> [(Method, Outcome); 3] {
    let insufficient = Outcome::Insufficient { n_rainy: rainy.len(), n_clear: clear.len() };
    let wrap = |r: Result<TestResult, StatsError>| match r {
        Ok(r) => Outcome::Done(r),
        Err(e) => Outcome::Failed(e),
    };
    let enough = rainy.len() >= MIN_SIDE && clear.len() >= MIN_SIDE;
    let wilcoxon = if pairs.len() >= MIN_SIDE {
        wrap(wilcoxon_signed_rank(pairs, opts))
    } else {
        Outcome::Insufficient { n_rainy: pairs.len(), n_clear: pairs.len() }
    };
    let (mw, kw) = if enough {
        (wrap(mann_whitney_u(rainy, clear, opts)), wrap(kruskal_wallis(&[rainy, clear])))
    } else {
        (insufficient.clone(), insufficient)
    };
    [(Method::WilcoxonSignedRank, wilcoxon), (Method::MannWhitney, mw), (Method::KruskalWallis, kw)]
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn observed(points: &[&LabeledPoint], opts: &TestOptions) -> [(Method, Outcome); 3] {
    let rainy: Vec<f64> = points.iter().filter(|p| p.rainy).map(|p| p.value).collect();
    let clear: Vec<f64> = points.iter().filter(|p| !p.rainy).map(|p| p.value).collect();
    let mut slots: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in points {
        let e = slots.entry(p.hour.hour_of_day()).or_default();
        if p.rainy {
            e.0.push(p.value)
        } else {
            e.1.push(p.value)
        }
    }
    let pairs: Vec<(f64, f64)> = slots
        .values()
        .filter(|(r, c)| !r.is_empty() && !c.is_empty())
        .map(|(r, c)| (mean(r.iter().copied()), mean(c.iter().copied())))
        .collect();
    run_tests(&rainy, &clear, &pairs, opts)
}

fn stratum_tag(window: WindowLabel, day_class: DayClass, rainy: bool) -> u64 {
    (window as u64) << 16 | (day_class as u64) << 8 | u64::from(rainy)
}

fn permutation(
    points: &[&LabeledPoint],
    window: WindowLabel,
    day_class: DayClass,
    cfg: &ComparisonConfig,
    sets: &mut Vec<PseudoDaySet>,
) -> [(Method, Outcome); 3] {
    let values: BTreeMap<Timestamp, f64> = points.iter().map(|p| (p.hour, p.value)).collect();
    let mut aggregates = [Vec::new(), Vec::new()];
    for (side, rainy) in [(0, true), (1, false)] {
        let pool: Vec<HourSample> =
            points.iter().filter(|p| p.rainy == rainy).map(|p| HourSample { hour: p.hour, rainy }).collect();
        let seed = derive_seed(cfg.seed, stratum_tag(window, day_class, rainy));
        if let Ok(days) = permutation_days(&pool, seed, cfg.pseudo_days) {
            aggregates[side] = days.iter().map(|d| mean(d.hours.iter().map(|h| values[&h.hour]))).collect();
            sets.push(PseudoDaySet { window, day_class, rainy, days });
        }
    }
    let [rainy, clear] = aggregates;
    let pairs: Vec<(f64, f64)> = rainy.iter().copied().zip(clear.iter().copied()).collect();
    run_tests(&rainy, &clear, &pairs, &cfg.tests)
}

/// Runs every configured (window, day class, regime) comparison. Rows come
/// out sorted by window, day class, method and regime.
pub fn run_comparison(series: &[LabeledPoint], cfg: &ComparisonConfig) -> ComparisonOutput {
    let mut out = ComparisonOutput::default();
    for &window in &cfg.labels {
        for &day_class in &cfg.day_classes {
            let tw = cfg.windows.window(window, day_class);
            let mut points: Vec<&LabeledPoint> = series.iter().filter(|p| tw.contains(p.hour)).collect();
            points.sort_by_key(|p| p.hour);
            for &regime in &cfg.regimes {
                let results = match regime {
                    Regime::Observed => observed(&points, &cfg.tests),
                    Regime::Permutation => permutation(&points, window, day_class, cfg, &mut out.pseudo_days),
                };
                for (method, mut outcome) in results {
                    if let Outcome::Done(r) = &mut outcome {
                        r.regime = regime;
                    }
                    out.rows.push(ComparisonRow { window, day_class, method, regime, outcome });
                }
            }
        }
    }
    out.rows.sort_by_key(|r| (r.window, r.day_class, r.method, r.regime));
    out
}

pub(crate) fn fmt_p(p: f64) -> String {
    if p == 0.0 {
        "0".into()
    } else if p < 1e-4 {
        format!("{p:.3e}")
    } else {
        format!("{p:.5}")
    }
}

fn cells(row: Option<&ComparisonRow>) -> (String, String) {
    match row.map(|r| &r.outcome) {
        Some(Outcome::Done(r)) => (format!("{:.5}", r.statistic), fmt_p(r.p_value)),
        Some(Outcome::Insufficient { .. }) => ("insufficient".into(), "insufficient".into()),
        Some(Outcome::Failed(_)) => ("failed".into(), "failed".into()),
        None => ("-".into(), "-".into()),
    }
}

/// One window's results laid out as
/// `day_class,test,perm_statistic,perm_pvalue,obs_statistic,obs_pvalue`.
/// Regimes that were not run are written as `-`.
pub fn write_appendix_table<W: Write>(w: W, out: &ComparisonOutput, window: WindowLabel) -> io::Result<()> {
    let mut o = io::BufWriter::new(w);
    writeln!(o, "day_class,test,perm_statistic,perm_pvalue,obs_statistic,obs_pvalue")?;
    let mut keys: Vec<(DayClass, Method)> =
        out.rows.iter().filter(|r| r.window == window).map(|r| (r.day_class, r.method)).collect();
    keys.dedup();
    for (dc, m) in keys {
        let (ps, pp) = cells(out.find(window, dc, m, Regime::Permutation));
        let (os, op) = cells(out.find(window, dc, m, Regime::Observed));
        writeln!(o, "{},{},{},{},{},{}", dc, m.table_name(), ps, pp, os, op)?;
    }
    o.flush()
}

/// Every row with full detail.
pub fn write_results_long<W: Write>(w: W, out: &ComparisonOutput) -> io::Result<()> {
    let mut o = io::BufWriter::new(w);
    writeln!(o, "window,day_class,test,regime,status,statistic,p_value,n1,n2,ties_present,p_method")?;
    for r in &out.rows {
        let head = format!("{},{},{},{}", r.window, r.day_class, r.method.tag(), r.regime.as_str());
        match &r.outcome {
            Outcome::Done(t) => writeln!(
                o,
                "{head},ok,{:.5},{},{},{},{},{:?}",
                t.statistic,
                fmt_p(t.p_value),
                t.n1,
                t.n2,
                t.ties_present,
                t.p_method
            )?,
            Outcome::Insufficient { n_rainy, n_clear } => writeln!(o, "{head},insufficient,,,{n_rainy},{n_clear},,")?,
            Outcome::Failed(e) => writeln!(o, "{head},failed: {e},,,,,,")?,
        }
    }
    o.flush()
}
