//! Slot-level schedules built from a decomposition certificate.

use std::fmt;

use num_rational::Ratio;
use serde::Serialize;

use crate::diophantine::{verify_solution, LambdaSolution};
use crate::error::{BiaError, Result};
use crate::pattern::{is_feasible_pattern, pattern_matrix, ChannelConfig};

/// One super-symbol: `K+1` slots taken from consecutive groups.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SuperSymbol {
    pub start_group: usize,
    pub slots: Vec<usize>,
}

/// Super-symbols covering one period of `(K+1) N` slots.
///
/// Slots of super-symbols that cross the period boundary keep running past
/// it and are interpreted modulo the period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub config: ChannelConfig,
    pub lambda: LambdaSolution,
    pub tuples: Vec<SuperSymbol>,
}

impl Schedule {
    pub fn period(&self) -> usize {
        self.config.period()
    }

    /// Sort into canonical order: start group, then first slot.
    pub fn canonicalize(&mut self) {
        self.tuples.sort_by(|a, b| {
            (a.start_group, a.slots.first()).cmp(&(b.start_group, b.slots.first()))
        });
    }
}

/// Assign concrete slots to the super-symbols counted by `lam`.
///
/// Inside each group, slots go first to super-symbols that started in the
/// earliest group, then to the ones opened in this group.
pub fn build_schedule(cfg: &ChannelConfig, lam: &LambdaSolution) -> Result<Schedule> {
    let layout = cfg.layout();
    let s = layout.profile();
    if !verify_solution(s, lam)? {
        return Err(BiaError::Internal(format!(
            "lambda {lam} does not decompose profile {s}"
        )));
    }
    let k = cfg.users();
    let m = s.groups_per_period();
    let mut tuples = Vec::with_capacity(lam.total() as usize);
    for start in 0..m {
        for ordinal in 0..lam.get(start) as usize {
            let slots = (0..=k)
                .map(|step| {
                    let g = start + step;
                    let gm = g % m;
                    // consumers of group gm that started before `start`
                    let earlier: u64 = (step + 1..=k).map(|d| lam.get(gm + m - d)).sum();
                    layout.group_start(g) + earlier as usize + ordinal
                })
                .collect();
            tuples.push(SuperSymbol {
                start_group: start,
                slots,
            });
        }
    }
    let mut sched = Schedule {
        config: cfg.clone(),
        lambda: lam.clone(),
        tuples,
    };
    sched.canonicalize();
    Ok(sched)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleIssue {
    TupleCount {
        expected: usize,
        found: usize,
    },
    TupleLength {
        tuple: usize,
        expected: usize,
        found: usize,
    },
    NotIncreasing {
        tuple: usize,
    },
    ResidueUncovered {
        residue: usize,
    },
    ResidueRepeated {
        residue: usize,
        times: usize,
    },
    NonConsecutive {
        tuple: usize,
        position: usize,
        expected_group: usize,
        found_group: usize,
    },
    NotPermutation {
        tuple: usize,
    },
}

impl fmt::Display for ScheduleIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TupleCount { expected, found } => {
                write!(f, "expected {expected} super-symbols, found {found}")
            }
            Self::TupleLength { tuple, expected, found } => {
                write!(f, "super-symbol {tuple} has {found} slots, expected {expected}")
            }
            Self::NotIncreasing { tuple } => {
                write!(f, "super-symbol {tuple} slots are not strictly increasing")
            }
            Self::ResidueUncovered { residue } => write!(f, "slot residue {residue} is not covered"),
            Self::ResidueRepeated { residue, times } => {
                write!(f, "slot residue {residue} is covered {times} times")
            }
            Self::NonConsecutive { tuple, position, expected_group, found_group } => write!(
                f,
                "super-symbol {tuple} slot {position} lies in group {found_group}, expected {expected_group}"
            ),
            Self::NotPermutation { tuple } => {
                write!(f, "super-symbol {tuple} pattern matrix is not a permutation")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub coverage: bool,
    pub consecutive: bool,
    pub permutation: bool,
    pub passed: bool,
    pub issues: Vec<ScheduleIssue>,
}

pub fn validate_schedule(sched: &Schedule) -> ValidationReport {
    let cfg = &sched.config;
    let k = cfg.users();
    let n = cfg.coherence();
    let period = cfg.period();
    let m = k * (k + 1);
    let layout = cfg.layout();
    let mut issues = Vec::new();
    let mut coverage = true;
    let mut consecutive = true;
    let mut permutation = true;

    if sched.tuples.len() != n {
        coverage = false;
        issues.push(ScheduleIssue::TupleCount {
            expected: n,
            found: sched.tuples.len(),
        });
    }

    let mut hits = vec![0usize; period];
    for (t, tuple) in sched.tuples.iter().enumerate() {
        for &slot in &tuple.slots {
            hits[slot % period] += 1;
        }
        if tuple.slots.len() != k + 1 {
            consecutive = false;
            permutation = false;
            issues.push(ScheduleIssue::TupleLength {
                tuple: t,
                expected: k + 1,
                found: tuple.slots.len(),
            });
            continue;
        }
        if tuple.slots.windows(2).any(|w| w[0] >= w[1]) {
            consecutive = false;
            permutation = false;
            issues.push(ScheduleIssue::NotIncreasing { tuple: t });
            continue;
        }
        for (pos, &slot) in tuple.slots.iter().enumerate() {
            let expected_group = (tuple.start_group + pos) % m;
            let found_group = layout.group_of(slot);
            if found_group != expected_group {
                consecutive = false;
                issues.push(ScheduleIssue::NonConsecutive {
                    tuple: t,
                    position: pos,
                    expected_group,
                    found_group,
                });
                break;
            }
        }
        let feasible = pattern_matrix(cfg, &tuple.slots)
            .map(|pm| is_feasible_pattern(&pm))
            .unwrap_or(false);
        if !feasible {
            permutation = false;
            issues.push(ScheduleIssue::NotPermutation { tuple: t });
        }
    }
    for (residue, &times) in hits.iter().enumerate() {
        match times {
            1 => {}
            0 => {
                coverage = false;
                issues.push(ScheduleIssue::ResidueUncovered { residue });
            }
            _ => {
                coverage = false;
                issues.push(ScheduleIssue::ResidueRepeated { residue, times });
            }
        }
    }
    ValidationReport {
        coverage,
        consecutive,
        permutation,
        passed: coverage && consecutive && permutation,
        issues,
    }
}

/// Symbols delivered per slot: `2K` per super-symbol over the period.
pub fn dof_of_schedule(sched: &Schedule) -> Ratio<u64> {
    let k = sched.config.users() as u64;
    Ratio::new(2 * k * sched.tuples.len() as u64, sched.period() as u64)
}
