//! Block-fading channel model.
//!
//! Every user sees a channel that is constant over blocks of `N` slots. User
//! `i`'s blocks start at slots `offset_i + m*N`; slots before the first full
//! block form a leading partial block with label 0. Users are numbered from 0
//! and user 0 is the benchmark whose block boundary anchors group 0.

use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Coherence time plus one block offset per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelConfig {
    coherence: usize,
    offsets: Vec<usize>,
}

impl ChannelConfig {
    /// Offsets are reduced modulo `coherence`.
    pub fn new(coherence: usize, offsets: &[usize]) -> Result<Self> {
        if coherence == 0 {
            return Err(invalid("coherence time must be at least 1"));
        }
        if offsets.len() < 2 {
            return Err(invalid(format!(
                "need at least 2 users, got {}",
                offsets.len()
            )));
        }
        Ok(Self {
            coherence,
            offsets: offsets.iter().map(|o| o % coherence).collect(),
        })
    }

    /// Like [`ChannelConfig::new`] but accepts negative offsets, reduced
    /// into `[0, coherence)`.
    pub fn from_signed(coherence: usize, offsets: &[i64]) -> Result<Self> {
        if coherence == 0 {
            return Err(invalid("coherence time must be at least 1"));
        }
        let n = coherence as i64;
        let reduced: Vec<usize> = offsets.iter().map(|o| o.rem_euclid(n) as usize).collect();
        Self::new(coherence, &reduced)
    }

    pub fn coherence(&self) -> usize {
        self.coherence
    }

    pub fn users(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn offset(&self, user: usize) -> Result<usize> {
        self.offsets.get(user).copied().ok_or_else(|| {
            invalid(format!(
                "user {user} out of range for {} users",
                self.users()
            ))
        })
    }

    /// Length of one joint pattern period, `(K+1) * N` slots.
    pub fn period(&self) -> usize {
        (self.users() + 1) * self.coherence
    }

    pub fn has_duplicate_offsets(&self) -> bool {
        let mut sorted = self.offsets.clone();
        sorted.sort_unstable();
        sorted.windows(2).any(|w| w[0] == w[1])
    }

    pub fn layout(&self) -> GroupLayout {
        GroupLayout::new(self)
    }
}

impl fmt::Display for ChannelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={} offsets=", self.coherence)?;
        for (i, o) in self.offsets.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{o}")?;
        }
        Ok(())
    }
}

/// Label of the fading block that `slot` falls in for `user`.
///
/// Two slots share a label iff the user's channel is constant across them.
pub fn block_index(cfg: &ChannelConfig, user: usize, slot: usize) -> Result<usize> {
    let offset = cfg.offset(user)?;
    let n = cfg.coherence();
    // Count block boundaries in (0, slot]; a boundary at slot 0 is not a change.
    Ok(if offset == 0 {
        slot / n
    } else if slot < offset {
        0
    } else {
        1 + (slot - offset) / n
    })
}

/// One base period of group sizes. Index `i` of the extended view is
/// `sizes[i mod K]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupProfile {
    sizes: Vec<usize>,
}

impl GroupProfile {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(invalid("a group profile needs at least 2 entries"));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of users `K`.
    pub fn users(&self) -> usize {
        self.sizes.len()
    }

    /// Coherence time `N`, the sum of one base period.
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn min(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }

    pub fn max(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Extended view over `Z_{K(K+1)}` (or any integer index).
    pub fn get(&self, i: usize) -> usize {
        self.sizes[i % self.sizes.len()]
    }

    /// Number of groups in one joint period, `K(K+1)`.
    pub fn groups_per_period(&self) -> usize {
        self.users() * (self.users() + 1)
    }
}

impl fmt::Display for GroupProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, s) in self.sizes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str(")")
    }
}

/// Where the groups of constant joint channel state sit in absolute slots.
///
/// Group `g` of the period begins at `origin + (g / K) * N + starts[g % K]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    origin: usize,
    coherence: usize,
    starts: Vec<usize>,
    profile: GroupProfile,
}

impl GroupLayout {
    fn new(cfg: &ChannelConfig) -> Self {
        let n = cfg.coherence();
        let origin = cfg.offsets()[0];
        let mut rel: Vec<usize> = cfg
            .offsets()
            .iter()
            .map(|&o| (o + n - origin) % n)
            .collect();
        rel.sort_unstable();
        let k = rel.len();
        let sizes = (0..k)
            .map(|i| {
                if i + 1 < k {
                    rel[i + 1] - rel[i]
                } else {
                    n - rel[i] + rel[0]
                }
            })
            .collect();
        Self {
            origin,
            coherence: n,
            starts: rel,
            profile: GroupProfile { sizes },
        }
    }

    pub fn profile(&self) -> &GroupProfile {
        &self.profile
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    /// First slot of group `g`, where `g` may run past one period.
    pub fn group_start(&self, g: usize) -> usize {
        let k = self.starts.len();
        self.origin + (g / k) * self.coherence + self.starts[g % k]
    }

    /// Group (within one period) containing `slot`. Empty groups are never
    /// returned.
    pub fn group_of(&self, slot: usize) -> usize {
        let k = self.starts.len();
        let period = (k + 1) * self.coherence;
        let rel = (slot % period + period - self.origin % period) % period;
        let block = rel / self.coherence;
        let within = rel % self.coherence;
        let idx = self.starts.partition_point(|&d| d <= within) - 1;
        block * k + idx
    }
}

/// Circular gaps between the users' block boundaries, starting at the
/// benchmark's boundary. Duplicate offsets produce zero-size groups.
pub fn group_profile(cfg: &ChannelConfig) -> GroupProfile {
    cfg.layout().profile
}

/// `K x K` binary matrix; entry `(i, j)` is 1 when user `i`'s channel changes
/// between the `j`-th and `(j+1)`-th selected slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternMatrix {
    size: usize,
    entries: Vec<u8>,
}

impl PatternMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(invalid("pattern matrix must be non-empty"));
        }
        let mut entries = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(invalid("pattern matrix must be square"));
            }
            if row.iter().any(|&x| x > 1) {
                return Err(invalid("pattern matrix entries must be 0 or 1"));
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { size, entries })
    }

    pub fn identity(size: usize) -> Self {
        Self::from_permutation(&(0..size).collect::<Vec<_>>())
    }

    /// Row `i` has its single 1 in column `perm[i]`.
    pub fn from_permutation(perm: &[usize]) -> Self {
        let size = perm.len();
        let mut entries = vec![0; size * size];
        for (row, &col) in perm.iter().enumerate() {
            entries[row * size + col] = 1;
        }
        Self { size, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.entries[row * self.size + col]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.entries.chunks(self.size).map(<[u8]>::to_vec).collect()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.entries
            .chunks(self.size)
            .map(|r| r.iter().map(|&x| x as usize).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        (0..self.size)
            .map(|c| (0..self.size).map(|r| self.get(r, c) as usize).sum())
            .collect()
    }

    /// Column holding the 1 of `row`, when the row has exactly one.
    pub fn transition_column(&self, row: usize) -> Option<usize> {
        let r = &self.entries[row * self.size..(row + 1) * self.size];
        let mut ones = r.iter().enumerate().filter(|(_, &x)| x == 1);
        match (ones.next(), ones.next()) {
            (Some((c, _)), None) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for PatternMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.entries.chunks(self.size).enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{x}")?;
            }
        }
        Ok(())
    }
}

/// Pattern matrix of a super-symbol made of `K+1` strictly increasing slots.
pub fn pattern_matrix(cfg: &ChannelConfig, slots: &[usize]) -> Result<PatternMatrix> {
    let k = cfg.users();
    if slots.len() != k + 1 {
        return Err(invalid(format!(
            "expected {} slots for {k} users, got {}",
            k + 1,
            slots.len()
        )));
    }
    if slots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("slots must be strictly increasing"));
    }
    let mut entries = vec![0u8; k * k];
    for user in 0..k {
        for col in 0..k {
            let a = block_index(cfg, user, slots[col])?;
            let b = block_index(cfg, user, slots[col + 1])?;
            entries[user * k + col] = u8::from(a != b);
        }
    }
    Ok(PatternMatrix { size: k, entries })
}

/// A super-symbol pattern is BIA-feasible iff its pattern matrix is a
/// permutation matrix.
pub fn is_feasible_pattern(m: &PatternMatrix) -> bool {
    m.row_sums().iter().all(|&s| s == 1) && m.col_sums().iter().all(|&s| s == 1)
}

/// `K!`, the number of feasible `(K+1)`-slot patterns.
pub fn count_feasible_patterns(users: usize) -> Result<BigUint> {
    if users < 2 {
        return Err(invalid("need at least 2 users"));
    }
    Ok((2..=users as u64).fold(BigUint::one(), |acc, x| acc * x))
}

/// All `K!` feasible pattern matrices in lexicographic order of their
/// permutations. Only sensible for small `K`.
pub fn feasible_patterns(users: usize) -> Result<Vec<PatternMatrix>> {
    if users < 2 {
        return Err(invalid("need at least 2 users"));
    }
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..users).collect();
    loop {
        out.push(PatternMatrix::from_permutation(&perm));
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(out)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
