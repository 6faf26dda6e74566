use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::ranks::midranks;
use super::{check_finite, Method, PMethod, Regime, StatsError, TestResult};

/// Kruskal-Wallis H over two or more groups, tie-corrected, with a
/// chi-square(k - 1) p-value. When every observation is tied the correction
/// denominator vanishes and H is defined as 0.
///
/// `n1` is the size of the first group and `n2` the total of the others.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups);
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::EmptySample);
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    check_finite(&all)?;
    let n = all.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations);
    }
    let ranks = midranks(&all);
    let nf = n as f64;
    let mut offset = 0;
    let mut sum_sq = 0.0;
    for g in groups {
        let r: f64 = ranks.doubled[offset..offset + g.len()].iter().sum::<u64>() as f64 / 2.0;
        sum_sq += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (nf * (nf + 1.0)) * sum_sq - 3.0 * (nf + 1.0);
    let correction = 1.0 - ranks.tie_term() / (nf * nf * nf - nf);
    let h = if correction <= 0.0 { 0.0 } else { (h_raw / correction).max(0.0) };
    let df = (groups.len() - 1) as f64;
    let p_value = ChiSquared::new(df).expect("positive degrees of freedom").sf(h).clamp(0.0, 1.0);
    Ok(TestResult {
        method: Method::KruskalWallis,
        regime: Regime::Observed,
        statistic: h,
        p_value,
        n1: groups[0].len(),
        n2: n - groups[0].len(),
        ties_present: ranks.has_ties(),
        p_method: PMethod::ChiSquare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_groups() {
        let r = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        // 12/42 * (36/3 + 225/3) - 21 = 27/7
        assert!((r.statistic - 27.0 / 7.0).abs() < 1e-12);
        assert!((r.statistic - 3.857).abs() < 1e-3);
        assert!((r.p_value - 0.049535).abs() < 1e-5);
    }

    #[test]
    fn all_equal_is_zero() {
        let r = kruskal_wallis(&[&[2.0, 2.0], &[2.0, 2.0]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn identical_groups_near_zero() {
        let r = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn errors() {
        assert_eq!(kruskal_wallis(&[&[1.0]]), Err(StatsError::TooFewGroups));
        assert_eq!(kruskal_wallis(&[&[1.0], &[]]), Err(StatsError::EmptySample));
        assert_eq!(kruskal_wallis(&[&[1.0], &[2.0]]), Err(StatsError::TooFewObservations));
    }
}
