//! Brute-force reference versions of the rank tests.
//!
//! Nothing here shares code with the library: ranks come from counting,
//! exact p-values from enumerating every relabelling or sign assignment, and
//! Kruskal-Wallis H from the variance-ratio form instead of rank sums.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rainfleet::stats::{
    kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank, Alternative, StatsError, TestOptions, TestResult,
};

pub const REL_TOL: f64 = 1e-9;
// Values compared near zero (U = 0, p tiny) fall back to this absolute slack.
const ABS_FLOOR: f64 = 1e-12;
const EPS: f64 = 1e-9;

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(ABS_FLOOR / REL_TOL)
}

/// Rank of `v` within `all`, ties getting the average of the positions they span.
pub fn midrank(all: &[f64], v: f64) -> f64 {
    let less = all.iter().filter(|&&a| a < v).count() as f64;
    let equal = all.iter().filter(|&&a| a == v).count() as f64;
    less + (equal + 1.0) / 2.0
}

pub fn u_of(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for &a in x {
        for &b in y {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }
    u
}

fn masks(n: usize, k: usize) -> impl Iterator<Item = u32> {
    (0u32..1 << n).filter(move |m| m.count_ones() as usize == k)
}

fn split(pool: &[f64], mask: u32) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, &v) in pool.iter().enumerate() {
        if mask >> i & 1 == 1 {
            a.push(v);
        } else {
            b.push(v);
        }
    }
    (a, b)
}

/// U of `x` and its exact p-value over all C(n, n1) relabellings of the pooled sample.
pub fn mann_whitney(x: &[f64], y: &[f64], alt: Alternative) -> (f64, f64) {
    let u = u_of(x, y);
    let center = (x.len() * y.len()) as f64 / 2.0;
    let pool: Vec<f64> = x.iter().chain(y).copied().collect();
    let (mut hit, mut total) = (0u64, 0u64);
    for m in masks(pool.len(), x.len()) {
        let (a, b) = split(&pool, m);
        let v = u_of(&a, &b);
        total += 1;
        let extreme = match alt {
            Alternative::TwoSided => (v - center).abs() >= (u - center).abs() - EPS,
            Alternative::Greater => v >= u - EPS,
            Alternative::Less => v <= u + EPS,
        };
        hit += u64::from(extreme);
    }
    (u, hit as f64 / total as f64)
}

/// `min(W+, W-)` over nonzero differences and its exact p-value over all
/// 2^n sign assignments. `None` when every difference is zero.
pub fn wilcoxon(pairs: &[(f64, f64)], alt: Alternative) -> Option<(f64, f64)> {
    let d: Vec<f64> = pairs.iter().map(|&(a, b)| a - b).filter(|&d| d != 0.0).collect();
    if d.is_empty() {
        return None;
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs.iter().map(|&v| midrank(&abs, v)).collect();
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = ranks.iter().zip(&d).filter(|&(_, &v)| v > 0.0).map(|(r, _)| r).sum();
    let (mut hit, mut count) = (0u64, 0u64);
    for m in 0u32..1 << d.len() {
        let w: f64 = ranks.iter().enumerate().filter(|&(i, _)| m >> i & 1 == 1).map(|(_, r)| r).sum();
        count += 1;
        let extreme = match alt {
            Alternative::TwoSided => (w - total / 2.0).abs() >= (w_plus - total / 2.0).abs() - EPS,
            Alternative::Greater => w >= w_plus - EPS,
            Alternative::Less => w <= w_plus + EPS,
        };
        hit += u64::from(extreme);
    }
    Some((w_plus.min(total - w_plus), hit as f64 / count as f64))
}

/// Tie-corrected H as (N - 1) times between-group over total rank variation.
pub fn kruskal_h(groups: &[&[f64]]) -> f64 {
    let all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = all.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let total: f64 = all.iter().map(|&v| (midrank(&all, v) - mean).powi(2)).sum();
    if total == 0.0 {
        return 0.0;
    }
    let between: f64 = groups
        .iter()
        .map(|g| {
            let rbar = g.iter().map(|&v| midrank(&all, v)).sum::<f64>() / g.len() as f64;
            g.len() as f64 * (rbar - mean).powi(2)
        })
        .sum();
    (n - 1.0) * between / total
}

fn sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Half the cases draw from a handful of values so ties are common.
    if rng.random_bool(0.5) {
        let levels = rng.random_range(2..=4);
        (0..n).map(|_| f64::from(rng.random_range(0..levels))).collect()
    } else {
        (0..n).map(|_| rng.random_range(-50.0..50.0)).collect()
    }
}

#[derive(Debug, Default)]
pub struct CorpusSummary {
    pub cases: usize,
    pub with_ties: usize,
    pub mismatches: Vec<String>,
}

fn check(summary: &mut CorpusSummary, case: usize, what: &str, ours: f64, oracle: f64) {
    if !close(ours, oracle) {
        summary.mismatches.push(format!("case {case} {what}: library {ours} oracle {oracle}"));
    }
}

fn alt_for(case: usize) -> Alternative {
    [Alternative::TwoSided, Alternative::Greater, Alternative::Less][case % 3]
}

/// Runs the three tests against the oracles on `n_cases` random inputs with
/// at most ten observations each.
pub fn run_corpus(seed: u64, n_cases: usize) -> CorpusSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = CorpusSummary::default();
    for case in 0..n_cases {
        let n1 = rng.random_range(1..=9);
        let n2 = rng.random_range(1..=10 - n1);
        let x = sample(&mut rng, n1);
        let y = sample(&mut rng, n2);
        let pool: Vec<f64> = x.iter().chain(&y).copied().collect();
        let tied = pool.iter().any(|&v| pool.iter().filter(|&&w| w == v).count() > 1);
        s.with_ties += usize::from(tied);
        let alt = alt_for(case);
        let opts = TestOptions { alternative: alt, ..Default::default() };

        let r: TestResult = mann_whitney_u(&x, &y, &opts).expect("nonempty samples");
        let (u, p) = mann_whitney(&x, &y, alt);
        check(&mut s, case, "mann_whitney U", r.statistic, u);
        check(&mut s, case, "mann_whitney p", r.p_value, p);

        let n_pairs = rng.random_range(1..=10);
        let a = sample(&mut rng, n_pairs);
        let b = sample(&mut rng, n_pairs);
        let pairs: Vec<(f64, f64)> = a.into_iter().zip(b).collect();
        match (wilcoxon_signed_rank(&pairs, &opts), wilcoxon(&pairs, alt)) {
            (Ok(r), Some((w, p))) => {
                check(&mut s, case, "wilcoxon W", r.statistic, w);
                check(&mut s, case, "wilcoxon p", r.p_value, p);
            }
            (Err(StatsError::DegeneratePairing), None) => {}
            (ours, oracle) => s.mismatches.push(format!("case {case} wilcoxon: library {ours:?} oracle {oracle:?}")),
        }

        if n1 + n2 >= 3 {
            // Every third case splits the pool into three groups instead of two.
            let groups: Vec<&[f64]> = if case % 3 == 0 && pool.len() >= 3 {
                let cut = rng.random_range(1..pool.len() - 1);
                let cut2 = rng.random_range(cut + 1..pool.len());
                vec![&pool[..cut], &pool[cut..cut2], &pool[cut2..]]
            } else {
                vec![&x, &y]
            };
            let r = kruskal_wallis(&groups).expect("valid groups");
            check(&mut s, case, "kruskal H", r.statistic, kruskal_h(&groups));
        }
        s.cases += 1;
    }
    s
}
