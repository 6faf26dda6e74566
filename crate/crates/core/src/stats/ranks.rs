//! Midrank assignment.
//!
//! Ranks are stored doubled so that midranks of tied groups (always a whole
//! or half number) stay exact integers. Exact null distributions are then
//! built over integer rank sums.

/// Doubled midranks of `values` plus the sizes of every tie group (size > 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranks {
    pub doubled: Vec<u64>,
    pub tie_groups: Vec<u64>,
}

impl Ranks {
    pub fn has_ties(&self) -> bool {
        !self.tie_groups.is_empty()
    }

    /// Σ (t³ − t) over tie groups.
    pub fn tie_term(&self) -> f64 {
        self.tie_groups.iter().map(|&t| (t * t * t - t) as f64).sum()
    }
}

pub fn midranks(values: &[f64]) -> Ranks {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut doubled = vec![0u64; n];
    let mut tie_groups = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based positions i+1 ..= j+1 share the midrank (i+1 + j+1)/2.
        let r2 = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            doubled[k] = r2;
        }
        if j > i {
            tie_groups.push((j - i + 1) as u64);
        }
        i = j + 1;
    }
    Ranks { doubled, tie_groups }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_with_ties() {
        let r = midranks(&[10.0, 20.0, 20.0, 5.0, 20.0]);
        // sorted: 5(1) 10(2) 20,20,20 (3,4,5 -> 4)
        assert_eq!(r.doubled, vec![4, 8, 8, 2, 8]);
        assert_eq!(r.tie_groups, vec![3]);
        assert_eq!(r.tie_term(), 24.0);
        assert!(!midranks(&[1.0, 2.0]).has_ties());
    }
}
