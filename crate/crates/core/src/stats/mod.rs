//! Rank-based two-sample, paired and k-sample tests.
//!
//! Small samples (total observations at or below `exact_cutoff`) get exact
//! p-values from the permutation distribution of the rank statistic,
//! conditional on the observed midranks, so ties are handled exactly.
//! Larger samples use the normal (or chi-square) approximation with tie
//! correction; the normal tests also apply a 0.5 continuity correction.

mod comparison;
mod kruskal;
mod mann_whitney;
mod ranks;
mod wilcoxon;

use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

pub use comparison::{
    run_comparison, write_appendix_table, write_results_long, ComparisonConfig, ComparisonOutput, ComparisonRow,
    LabeledPoint, Outcome, PseudoDaySet,
};
pub use kruskal::kruskal_wallis;
pub use mann_whitney::mann_whitney_u;
pub use ranks::{midranks, Ranks};
pub use wilcoxon::{wilcoxon_signed_rank, ZeroPolicy};

pub const DEFAULT_EXACT_CUTOFF: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    WilcoxonSignedRank,
    MannWhitney,
    KruskalWallis,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::WilcoxonSignedRank, Method::MannWhitney, Method::KruskalWallis];

    pub fn tag(self) -> &'static str {
        match self {
            Method::MannWhitney => "mann_whitney",
            Method::WilcoxonSignedRank => "wilcoxon_signed_rank",
            Method::KruskalWallis => "kruskal_wallis",
        }
    }

    /// Short name used in the results tables.
    pub fn table_name(self) -> &'static str {
        match self {
            Method::MannWhitney => "Mann-Whitney",
            Method::WilcoxonSignedRank => "Wilcoxon",
            Method::KruskalWallis => "Kruskal",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Regime {
    #[default]
    Observed,
    Permutation,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Observed => "observed",
            Regime::Permutation => "permutation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample (or first member of each pair) tends to be smaller.
    Less,
    /// First sample (or first member of each pair) tends to be larger.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    Exact,
    Normal,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub method: Method,
    pub regime: Regime,
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub ties_present: bool,
    pub p_method: PMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("degenerate pairing: all differences are zero")]
    DegeneratePairing,
    #[error("need at least two groups")]
    TooFewGroups,
    #[error("need at least three observations in total")]
    TooFewObservations,
    #[error("non-finite observation")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOptions {
    pub alternative: Alternative,
    pub exact_cutoff: usize,
    pub zero_policy: ZeroPolicy,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            alternative: Alternative::TwoSided,
            exact_cutoff: DEFAULT_EXACT_CUTOFF,
            zero_policy: ZeroPolicy::Drop,
        }
    }
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Normal-approximation p-value of a statistic with the given null mean and
/// standard deviation, using a 0.5 continuity correction.
fn normal_p(stat: f64, mean: f64, sd: f64, alt: Alternative) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let n = Normal::standard();
    let p = match alt {
        Alternative::TwoSided => 2.0 * n.sf(((stat - mean).abs() - 0.5) / sd),
        Alternative::Greater => n.sf((stat - mean - 0.5) / sd),
        Alternative::Less => n.cdf((stat - mean + 0.5) / sd),
    };
    p.clamp(0.0, 1.0)
}

/// Tail probability from an exact null distribution over integer statistic
/// values `counts[s]`, where `center2` is twice the null mean.
fn exact_p(counts: &[f64], observed: usize, center2: i64, alt: Alternative) -> f64 {
    let total: f64 = counts.iter().sum();
    let obs_dev = (2 * observed as i64 - center2).abs();
    let mass: f64 = counts
        .iter()
        .enumerate()
        .filter(|&(s, &c)| {
            c > 0.0
                && match alt {
                    Alternative::TwoSided => (2 * s as i64 - center2).abs() >= obs_dev,
                    Alternative::Greater => s >= observed,
                    Alternative::Less => s <= observed,
                }
        })
        .map(|(_, &c)| c)
        .sum();
    (mass / total).clamp(0.0, 1.0)
}
