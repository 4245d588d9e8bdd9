//! The cyclic banded Diophantine system behind complete decomposition.
//!
//! With `M = K(K+1)` groups per period, a channel decomposes into `N`
//! super-symbols of `K+1` consecutive groups iff there are non-negative
//! integers `lambda_0..lambda_{M-1}` with
//!
//! ```text
//! s_{i mod K} = lambda_{i-K} + ... + lambda_{i}      for every i in Z_M
//! ```
//!
//! `lambda_i` counts the super-symbols whose first slot lies in group `i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, BiaError, Result};
use crate::feasibility::check_feasible;
use crate::pattern::GroupProfile;

/// Node budget used by callers that do not pick one.
pub const DEFAULT_NODE_LIMIT: u64 = 50_000_000;

/// Tuple start counts, indexed by group over one period.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LambdaSolution {
    values: Vec<u64>,
}

impl LambdaSolution {
    pub fn new(values: Vec<u64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> u64 {
        self.values[i % self.values.len()]
    }

    /// Number of super-symbols, `N` for any valid solution.
    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }
}

impl fmt::Display for LambdaSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

fn window_sum(values: &[u64], k: usize, i: usize) -> u64 {
    let m = values.len();
    (0..=k).map(|d| values[(i + m - k + d) % m]).sum()
}

/// All cyclic window sums of width `K+1` match the extended profile.
pub fn verify_solution(s: &GroupProfile, lam: &LambdaSolution) -> Result<bool> {
    let k = s.users();
    let m = s.groups_per_period();
    if lam.len() != m {
        return Err(invalid(format!(
            "lambda must have {m} entries for {k} users, got {}",
            lam.len()
        )));
    }
    Ok((0..m).all(|i| window_sum(&lam.values, k, i) == s.get(i) as u64))
}

/// Solution for a profile whose rotation `t_j = s_{j+shift}` was solved.
fn unrotate(lam_t: &[i64], shift: usize) -> Vec<i64> {
    let m = lam_t.len();
    (0..m).map(|i| lam_t[(i + m - shift % m) % m]).collect()
}

/// Solution for the reflected profile `t_j = s_{-j}`; an involution.
fn reflect(lam: &[i64], k: usize) -> Vec<i64> {
    let m = lam.len();
    (0..m).map(|j| lam[(2 * m - j - k) % m]).collect()
}

fn into_solution(s: &GroupProfile, raw: Vec<i64>) -> Result<LambdaSolution> {
    if let Some(bad) = raw.iter().position(|&v| v < 0) {
        return Err(BiaError::Internal(format!(
            "closed form produced negative lambda_{bad} = {} for s = {s}",
            raw[bad]
        )));
    }
    let lam = LambdaSolution::new(raw.into_iter().map(|v| v as u64).collect());
    if !verify_solution(s, &lam)? {
        return Err(BiaError::Internal(format!(
            "closed form lambda {lam} does not satisfy s = {s}"
        )));
    }
    Ok(lam)
}

fn require_feasible(s: &GroupProfile) -> Result<()> {
    if check_feasible(s) {
        Ok(())
    } else {
        Err(BiaError::ConditionViolated(format!(
            "sum(s) = {} > (K+1)*min(s) = {} for s = {s}",
            s.total(),
            (s.users() + 1) * s.min()
        )))
    }
}

/// Explicit solution for any `K`, valid exactly when
/// `sum(s) <= (K+1) min(s)`.
///
/// After rotating a minimal entry to index 0:
/// `lambda_{(j-1)K+j} = (K-1)s_0 - sum_{k in 1..K, k != j} s_k` for
/// `j in 1..K`, `lambda_{K^2} = K s_0 - sum_{k in 1..K} s_k`, and
/// `lambda_i = s_i - s_0` elsewhere.
pub fn closed_form_solution(s: &GroupProfile) -> Result<LambdaSolution> {
    require_feasible(s)?;
    let k = s.users();
    let m = s.groups_per_period();
    // smallest index attaining the minimum
    let shift = s.sizes().iter().position(|&x| x == s.min()).unwrap();
    let t: Vec<i64> = (0..k).map(|j| s.get(j + shift) as i64).collect();
    let rest: i64 = t[1..].iter().sum();

    let mut lam: Vec<i64> = (0..m).map(|i| t[i % k] - t[0]).collect();
    for j in 1..k {
        lam[(j - 1) * k + j] = (k as i64 - 1) * t[0] - (rest - t[j]);
    }
    lam[k * k] = k as i64 * t[0] - rest;

    into_solution(s, unrotate(&lam, shift))
}

/// The three-user construction that orders the profile as
/// `s_0 <= s_1 <= s_2` (by rotation and, if needed, reflection) and sets
/// `x = s_1 - s_0`, `y = s_0 - x`.
pub fn three_user_solution(s: &GroupProfile) -> Result<LambdaSolution> {
    if s.users() != 3 {
        return Err(invalid(format!(
            "three-user construction needs 3 users, got {}",
            s.users()
        )));
    }
    require_feasible(s)?;
    for reflected in [false, true] {
        for r in 0..3 {
            let t: Vec<i64> = (0..3)
                .map(|j| {
                    let idx = if reflected { 3 + r - j } else { r + j };
                    s.get(idx) as i64
                })
                .collect();
            if !(t[0] <= t[1] && t[1] <= t[2]) {
                continue;
            }
            let lam_t = sorted_three_user(&t);
            let raw = if reflected {
                // t_j = u_{j - r} with u_j = s_{-j}
                let lam_u = unrotate(&lam_t, 12 - r);
                reflect(&lam_u, 3)
            } else {
                unrotate(&lam_t, r)
            };
            return into_solution(s, raw);
        }
    }
    unreachable!("some rotation or reflection of three values is sorted")
}

fn sorted_three_user(t: &[i64]) -> Vec<i64> {
    let (s0, s1, s2) = (t[0], t[1], t[2]);
    let x = s1 - s0;
    let y = s0 - x;
    vec![
        0,
        x,
        y,
        0,
        s1 - s0,
        s2 - s1 + x,
        3 * s0 - s1 - s2,
        s1 - s0,
        s2 - s1 + x,
        0,
        2 * s0 - s2,
        s2 - s0,
    ]
}

/// Depth-first enumeration of every non-negative solution.
///
/// The first `K` entries are branched on; every later entry is forced by
/// the window that ends at it, and the `K` wrap-around windows are checked
/// at the leaves. Returns solutions in lexicographic order, or only the
/// first one when `enumerate_all` is false. Fails once more than
/// `node_limit` search nodes have been visited.
pub fn brute_force_solve(
    s: &GroupProfile,
    enumerate_all: bool,
    node_limit: u64,
) -> Result<Vec<LambdaSolution>> {
    let k = s.users();
    let m = s.groups_per_period();
    let target: Vec<i64> = (0..m).map(|i| s.get(i) as i64).collect();
    let mut search = Search {
        k,
        target,
        lam: vec![0; m],
        found: Vec::new(),
        enumerate_all,
        nodes: 0,
        node_limit,
    };
    search.descend(0)?;
    let mut found = search.found;
    found.sort();
    Ok(found)
}

struct Search {
    k: usize,
    target: Vec<i64>,
    lam: Vec<i64>,
    found: Vec<LambdaSolution>,
    enumerate_all: bool,
    nodes: u64,
    node_limit: u64,
}

impl Search {
    /// Returns `Ok(false)` once the search should stop.
    fn descend(&mut self, pos: usize) -> Result<bool> {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            return Err(BiaError::ResourceLimit(format!(
                "brute-force search visited more than {} nodes",
                self.node_limit
            )));
        }
        let m = self.lam.len();
        let k = self.k;
        if pos == m {
            let closes = (0..k).all(|i| {
                let sum: i64 = (0..=k).map(|d| self.lam[(i + m - k + d) % m]).sum();
                sum == self.target[i]
            });
            if closes {
                self.found.push(LambdaSolution::new(
                    self.lam.iter().map(|&v| v as u64).collect(),
                ));
                return Ok(self.enumerate_all);
            }
            return Ok(true);
        }
        if pos >= k {
            let forced = self.target[pos] - self.lam[pos - k..pos].iter().sum::<i64>();
            if forced < 0 {
                return Ok(true);
            }
            self.lam[pos] = forced;
            return self.descend(pos + 1);
        }
        // window ending at `pos` also holds wrap-around entries, all >= 0
        let prefix: i64 = self.lam[..pos].iter().sum();
        let upper = self.target[pos] - prefix;
        for v in 0..=upper {
            self.lam[pos] = v;
            if !self.descend(pos + 1)? {
                return Ok(false);
            }
        }
        self.lam[pos] = 0;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(s: &[usize]) -> GroupProfile {
        GroupProfile::new(s.to_vec()).unwrap()
    }

    fn lam(v: &[u64]) -> LambdaSolution {
        LambdaSolution::new(v.to_vec())
    }

    /// Every window equation written out independently of `window_sum`.
    fn satisfies(s: &[usize], l: &[u64]) -> bool {
        let k = s.len();
        let m = k * (k + 1);
        l.len() == m
            && (0..m as i64).all(|i| {
                let mut acc = 0u64;
                for j in (i - k as i64)..=i {
                    acc += l[j.rem_euclid(m as i64) as usize];
                }
                acc == s[(i as usize) % k] as u64
            })
    }

    #[test]
    fn verifies_worked_decomposition() {
        let s = profile(&[1, 1, 2]);
        assert!(verify_solution(&s, &lam(&[0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1])).unwrap());
        assert!(!verify_solution(&s, &lam(&[0; 12])).unwrap());
        assert!(verify_solution(&s, &lam(&[0; 11])).is_err());
    }

    #[test]
    fn closed_form_n11() {
        let s = profile(&[3, 3, 5]);
        let l = closed_form_solution(&s).unwrap();
        assert_eq!(l.values(), &[0, 1, 2, 0, 0, 3, 0, 0, 2, 1, 0, 2]);
        assert!(satisfies(s.sizes(), l.values()));
        assert_eq!(l.total(), 11);
    }

    #[test]
    fn closed_form_four_users_matches_explicit_table() {
        let s = [5usize, 6, 7, 6];
        let l = closed_form_solution(&profile(&s)).unwrap();
        let (s0, s1, s2, s3) = (5u64, 6, 7, 6);
        let expect = [
            0,
            3 * s0 - (s2 + s3),
            s2 - s0,
            s3 - s0,
            0,
            s1 - s0,
            3 * s0 - (s1 + s3),
            s3 - s0,
            0,
            s1 - s0,
            s2 - s0,
            3 * s0 - (s1 + s2),
            0,
            s1 - s0,
            s2 - s0,
            s3 - s0,
            4 * s0 - (s1 + s2 + s3),
            s1 - s0,
            s2 - s0,
            s3 - s0,
        ];
        assert_eq!(l.values(), &expect);
    }

    #[test]
    fn closed_form_boundary_and_rotation() {
        for s in [[1usize, 1, 2], [2, 1, 1], [1, 2, 1], [4, 3, 5], [5, 4, 3]] {
            let p = profile(&s);
            let a = closed_form_solution(&p).unwrap();
            let b = three_user_solution(&p).unwrap();
            assert!(satisfies(&s, a.values()), "{s:?}");
            assert!(satisfies(&s, b.values()), "{s:?}");
        }
    }

    #[test]
    fn closed_form_rejects_infeasible() {
        let err = closed_form_solution(&profile(&[3, 3, 7])).unwrap_err();
        assert!(matches!(err, BiaError::ConditionViolated(_)));
        assert!(three_user_solution(&profile(&[3, 3, 7])).is_err());
        assert!(three_user_solution(&profile(&[2, 2, 2, 2])).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let all = brute_force_solve(&profile(&[1, 1, 2]), true, DEFAULT_NODE_LIMIT).unwrap();
        assert!(all.contains(&lam(&[0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1])));
        assert!(
            brute_force_solve(&profile(&[3, 3, 7]), true, DEFAULT_NODE_LIMIT)
                .unwrap()
                .is_empty()
        );
        let all = brute_force_solve(&profile(&[3, 3, 5]), true, DEFAULT_NODE_LIMIT).unwrap();
        assert!(all.iter().any(|l| l.get(2) == 3));
        assert!(all.iter().any(|l| l.get(2) == 2));
        for l in &all {
            assert!(satisfies(&[3, 3, 5], l.values()));
        }
        let first = brute_force_solve(&profile(&[3, 3, 5]), false, DEFAULT_NODE_LIMIT).unwrap();
        assert_eq!(first.len(), 1);
        assert_eq!(first[0], all[0]);
    }

    #[test]
    fn brute_force_budget() {
        let err = brute_force_solve(&profile(&[30, 30, 30, 30]), true, 1000).unwrap_err();
        assert!(matches!(err, BiaError::ResourceLimit(_)));
    }

    proptest! {
        #[test]
        fn closed_forms_certify_feasible_profiles(
            k in 2usize..7,
            min in 1usize..500,
            extra in proptest::collection::vec(0usize..500, 6),
            rot in 0usize..6,
        ) {
            // spread at most `min` units of excess over the other entries
            let mut s = vec![min; k];
            let mut budget = min;
            for j in 1..k {
                let add = extra[j] % (budget + 1);
                s[j] += add;
                budget -= add;
            }
            s.rotate_left(rot % k);
            let p = profile(&s);
            prop_assert!(check_feasible(&p));
            let l = closed_form_solution(&p).unwrap();
            prop_assert!(satisfies(&s, l.values()));
            prop_assert_eq!(l.total(), p.total() as u64);
            if k == 3 {
                let l3 = three_user_solution(&p).unwrap();
                prop_assert!(satisfies(&s, l3.values()));
            }
        }
    }
}
