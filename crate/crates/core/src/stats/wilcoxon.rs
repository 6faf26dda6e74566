use super::ranks::midranks;
use super::{check_finite, exact_p, normal_p, Method, PMethod, Regime, StatsError, TestOptions, TestResult};

/// Treatment of pairs whose difference is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroPolicy {
    /// Discard zero differences before ranking.
    #[default]
    Drop,
    /// Rank zeros together with the other |d|, then discard their ranks.
    Pratt,
}

/// Wilcoxon signed-rank test on paired observations `(a, b)`, differences
/// taken as `a - b`. The statistic is `min(W+, W-)`; `n1` and `n2` both hold
/// the number of nonzero differences. `Greater` means `a` tends to exceed `b`.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)], opts: &TestOptions) -> Result<TestResult, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let diffs: Vec<f64> = pairs.iter().map(|&(a, b)| a - b).collect();
    check_finite(&diffs)?;
    let (abs, signs): (Vec<f64>, Vec<f64>) = match opts.zero_policy {
        ZeroPolicy::Drop => diffs.iter().filter(|&&d| d != 0.0).map(|&d| (d.abs(), d)).unzip(),
        ZeroPolicy::Pratt => diffs.iter().map(|&d| (d.abs(), d)).unzip(),
    };
    let ranks = midranks(&abs);
    let nonzero: Vec<(u64, bool)> =
        ranks.doubled.iter().zip(&signs).filter(|&(_, &d)| d != 0.0).map(|(&r, &d)| (r, d > 0.0)).collect();
    let n = nonzero.len();
    if n == 0 {
        return Err(StatsError::DegeneratePairing);
    }
    let total2: u64 = nonzero.iter().map(|&(r, _)| r).sum();
    let w_plus2: u64 = nonzero.iter().filter(|&&(_, pos)| pos).map(|&(r, _)| r).sum();
    let w_minus2 = total2 - w_plus2;
    let statistic = w_plus2.min(w_minus2) as f64 / 2.0;
    // Ties among the ranked |d| (zeros excluded from the signed statistic).
    let ties_present = ranks.has_ties();

    let (p_value, p_method) = if n <= opts.exact_cutoff {
        let counts = signed_rank_distribution(nonzero.iter().map(|&(r, _)| r));
        (exact_p(&counts, w_plus2 as usize, total2 as i64, opts.alternative), PMethod::Exact)
    } else {
        let mean = total2 as f64 / 4.0;
        let var: f64 = nonzero.iter().map(|&(r, _)| (r as f64 / 2.0).powi(2)).sum::<f64>() / 4.0;
        (normal_p(w_plus2 as f64 / 2.0, mean, var.sqrt(), opts.alternative), PMethod::Normal)
    };
    Ok(TestResult {
        method: Method::WilcoxonSignedRank,
        regime: Regime::Observed,
        statistic,
        p_value,
        n1: n,
        n2: n,
        ties_present,
        p_method,
    })
}

/// Number of sign assignments reaching each (doubled) positive-rank sum.
fn signed_rank_distribution(ranks: impl Iterator<Item = u64>) -> Vec<f64> {
    let mut dp = vec![1.0f64];
    for r in ranks {
        let r = r as usize;
        let mut next = vec![0.0; dp.len() + r];
        for (s, &c) in dp.iter().enumerate() {
            next[s] += c;
            next[s + r] += c;
        }
        dp = next;
    }
    dp
}
