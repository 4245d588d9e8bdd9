//! Necessary and sufficient BIA-feasibility conditions.
//!
//! A homogeneous `K`-user channel is feasible iff its group profile `s`
//! satisfies `sum(s) <= (K+1) * min(s)`, i.e. every circular gap between
//! block boundaries is at least `N / (K+1)`.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::pattern::{group_profile, ChannelConfig, GroupProfile};

/// `max(s) <= 2 min(s)` for three users. Necessary but not sufficient.
pub fn check_weak(s: &GroupProfile) -> Result<bool> {
    if s.users() != 3 {
        return Err(invalid(format!(
            "weak condition is defined for 3 users, got {}",
            s.users()
        )));
    }
    Ok(s.max() <= 2 * s.min())
}

/// `sum(s) <= (K+1) * min(s)`.
pub fn check_feasible(s: &GroupProfile) -> bool {
    s.total() as u128 <= (s.users() as u128 + 1) * s.min() as u128
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub coherence: usize,
    pub users: usize,
    pub profile: Vec<usize>,
    pub duplicate_offsets: bool,
    /// Smallest circular gap, `min(s)`.
    pub min_gap: usize,
    /// `N / (K+1)` as a real number.
    pub threshold: f64,
    /// `ceil(N / (K+1))`, the smallest admissible integer gap.
    pub required_gap: usize,
    /// Left side of the condition, `sum(s) = N`.
    pub sum: usize,
    /// Right side of the condition, `(K+1) * min(s)`.
    pub bound: usize,
}

pub fn check_config(cfg: &ChannelConfig) -> FeasibilityReport {
    let s = group_profile(cfg);
    let k = cfg.users();
    let n = cfg.coherence();
    FeasibilityReport {
        feasible: check_feasible(&s),
        coherence: n,
        users: k,
        duplicate_offsets: cfg.has_duplicate_offsets(),
        min_gap: s.min(),
        threshold: n as f64 / (k + 1) as f64,
        required_gap: n.div_ceil(k + 1),
        sum: s.total(),
        bound: (k + 1) * s.min(),
        profile: s.sizes().to_vec(),
    }
}

/// Every consecutive circular gap between the sorted offsets is at least
/// `ceil(N / (K+1))`.
pub fn circular_gap_check(offsets: &[usize], n: usize) -> bool {
    if offsets.is_empty() || n == 0 {
        return false;
    }
    let need = n.div_ceil(offsets.len() + 1);
    let mut sorted: Vec<usize> = offsets.iter().map(|o| o % n).collect();
    sorted.sort_unstable();
    sorted_gaps_at_least(&sorted, n, need)
}

fn sorted_gaps_at_least(sorted: &[usize], n: usize, need: usize) -> bool {
    let wrap = n - sorted[sorted.len() - 1] + sorted[0];
    wrap >= need && sorted.windows(2).all(|w| w[1] - w[0] >= need)
}

/// Three-user feasible set of `(n2, n3)` with the benchmark offset at 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleRegion {
    pub coherence: usize,
    pub points: Vec<(usize, usize)>,
}

impl FeasibleRegion {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// `count / N^2`.
    pub fn ratio(&self) -> f64 {
        self.points.len() as f64 / (self.coherence as f64 * self.coherence as f64)
    }

    pub fn contains(&self, n2: usize, n3: usize) -> bool {
        self.points.binary_search(&(n2, n3)).is_ok()
    }
}

/// Region test in offset coordinates: with `a < b` the smaller and larger
/// of `(n2, n3)`, require `a >= N/4`, `b - a >= N/4`, `b <= 3N/4`.
pub fn in_feasible_region(n: usize, n2: usize, n3: usize) -> bool {
    if n2 == n3 {
        return false;
    }
    let (lo, hi) = (n2.min(n3), n2.max(n3));
    4 * lo >= n && 4 * (hi - lo) >= n && 4 * hi <= 3 * n
}

pub fn feasible_region(n: usize) -> FeasibleRegion {
    let points = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| in_feasible_region(n, a, b))
        .collect();
    FeasibleRegion {
        coherence: n,
        points,
    }
}

/// Lexicographically smallest set of `k_target` user indices whose offsets
/// form a feasible `k_target`-user channel.
pub fn find_feasible_subset(
    offsets: &[usize],
    n: usize,
    k_target: usize,
) -> Result<Option<Vec<usize>>> {
    if n == 0 {
        return Err(invalid("coherence time must be at least 1"));
    }
    if k_target < 2 || k_target > offsets.len() {
        return Err(invalid(format!(
            "subset size must lie in [2, {}], got {k_target}",
            offsets.len()
        )));
    }
    let need = n.div_ceil(k_target + 1);
    let mut chosen = Vec::with_capacity(k_target);
    let mut found = None;
    for_each_combination(offsets.len(), k_target, |idx| {
        chosen.clear();
        chosen.extend(idx.iter().map(|&i| offsets[i] % n));
        chosen.sort_unstable();
        if sorted_gaps_at_least(&chosen, n, need) {
            found = Some(idx.to_vec());
            false
        } else {
            true
        }
    });
    Ok(found)
}

/// Existence-only variant of [`find_feasible_subset`] for offsets already
/// reduced modulo `n` and sorted ascending. Used on hot enumeration paths.
pub(crate) fn has_feasible_subset_sorted(sorted: &[usize], n: usize, k_target: usize) -> bool {
    let need = n.div_ceil(k_target + 1);
    let mut chosen = vec![0; k_target];
    let mut found = false;
    for_each_combination(sorted.len(), k_target, |idx| {
        for (c, &i) in chosen.iter_mut().zip(idx) {
            *c = sorted[i];
        }
        found = sorted_gaps_at_least(&chosen, n, need);
        !found
    });
    found
}

/// Visits `k`-subsets of `0..n` in lexicographic order until `visit`
/// returns false.
fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !visit(&idx) {
            return;
        }
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}
