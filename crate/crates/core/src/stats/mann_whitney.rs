use super::ranks::midranks;
use super::{check_finite, exact_p, normal_p, Method, PMethod, Regime, StatsError, TestOptions, TestResult};

/// Mann-Whitney U of `x` against `y`. The reported statistic is U for `x`:
/// the number of (x, y) pairs with x > y, ties counting one half.
pub fn mann_whitney_u(x: &[f64], y: &[f64], opts: &TestOptions) -> Result<TestResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(x)?;
    check_finite(y)?;
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let combined: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&combined);
    let r1_doubled: u64 = ranks.doubled[..n1].iter().sum();
    let u = (r1_doubled as f64 - (n1 * (n1 + 1)) as f64) / 2.0;

    let (p_value, p_method) = if n <= opts.exact_cutoff {
        let counts = rank_sum_distribution(&ranks.doubled, n1);
        let center2 = 2 * (n1 * (n + 1)) as i64;
        (exact_p(&counts, r1_doubled as usize, center2, opts.alternative), PMethod::Exact)
    } else {
        let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
        let var = n1f * n2f / 12.0 * ((nf + 1.0) - ranks.tie_term() / (nf * (nf - 1.0)));
        (normal_p(u, n1f * n2f / 2.0, var.max(0.0).sqrt(), opts.alternative), PMethod::Normal)
    };
    Ok(TestResult {
        method: Method::MannWhitney,
        regime: Regime::Observed,
        statistic: u,
        p_value,
        n1,
        n2,
        ties_present: ranks.has_ties(),
        p_method,
    })
}

/// Number of size-`k` subsets of `items` reaching each total.
fn rank_sum_distribution(items: &[u64], k: usize) -> Vec<f64> {
    let max: usize = items.iter().map(|&r| r as usize).sum();
    let mut dp = vec![vec![0.0f64; max + 1]; k + 1];
    dp[0][0] = 1.0;
    let mut reach = 0usize;
    for (i, &r) in items.iter().enumerate() {
        let r = r as usize;
        reach += r;
        for j in (1..=k.min(i + 1)).rev() {
            let (lo, hi) = dp.split_at_mut(j);
            let (prev, cur) = (&lo[j - 1], &mut hi[0]);
            for s in (r..=reach).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    dp.swap_remove(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Alternative;

    #[test]
    fn complete_separation() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0], &TestOptions::default()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_method, PMethod::Exact);
        // Only 2 of C(4,2)=6 assignments are as extreme on either side.
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_two_sided_p_is_one() {
        let x = [1.0, 2.0, 3.0];
        let r = mann_whitney_u(&x, &x, &TestOptions::default()).unwrap();
        assert_eq!(r.statistic, 4.5);
        assert_eq!(r.p_value, 1.0);
        assert!(r.ties_present);
    }

    #[test]
    fn interleaved_example() {
        // x beats y in 0 + 2 + 3 pairs.
        let x = [1.0, 4.0, 6.0];
        let y = [2.0, 3.0, 5.0];
        let r = mann_whitney_u(&x, &y, &TestOptions::default()).unwrap();
        assert_eq!(r.statistic, 5.0);
        // The null U distribution for n1 = n2 = 3 is 1,1,2,3,3,3,3,2,1,1 over U = 0..9;
        // it is symmetric about 4.5, so every outcome is at least as extreme as U = 5.
        assert_eq!(r.p_value, 1.0);
        let opts = TestOptions { alternative: Alternative::Greater, ..Default::default() };
        let g = mann_whitney_u(&x, &y, &opts).unwrap();
        assert!((g.p_value - 10.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_errors() {
        assert_eq!(mann_whitney_u(&[], &[1.0], &TestOptions::default()), Err(StatsError::EmptySample));
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = (0..30).map(|v| f64::from(v) + 100.0).collect();
        let r = mann_whitney_u(&x, &y, &TestOptions::default()).unwrap();
        assert_eq!(r.p_method, PMethod::Normal);
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value < 1e-9);
    }
}
