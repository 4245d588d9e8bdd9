//! Beamforming for a super-symbol and a numerical witness that it aligns
//! interference.
//!
//! Both transmit antennas use the same 0/1 vector for user `i`: the
//! indicator of the two slots on either side of user `i`'s channel change.
//! Every other receiver sees a constant channel across those two slots, so
//! the copies sent from the two antennas arrive proportional and collapse
//! into one interference dimension.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Ratio;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, BiaError, Result};
use crate::feasibility::check_config;
use crate::pattern::{
    block_index, group_profile, is_feasible_pattern, pattern_matrix, ChannelConfig, PatternMatrix,
};
use crate::scheduler::{build_schedule, dof_of_schedule, validate_schedule, Schedule};
use crate::seeding::{derive_seed, stream_rng};

/// Channel coefficients with smaller magnitude are redrawn.
pub const MIN_MAGNITUDE: f64 = 0.05;
/// Pass threshold for the alignment residual.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-9;
/// Pass threshold for the smallest singular value after column
/// normalization.
pub const DECODABILITY_TOLERANCE: f64 = 1e-9;

/// Coefficients `(h_1, h_2)` from the two transmit antennas, per user and
/// fading block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    seed: u64,
    blocks: BTreeMap<(usize, usize), [Complex64; 2]>,
}

impl ChannelRealization {
    pub fn empty(seed: u64) -> Self {
        Self {
            seed,
            blocks: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn block(&self, user: usize, block: usize) -> Option<[Complex64; 2]> {
        self.blocks.get(&(user, block)).copied()
    }

    pub fn set_block(&mut self, user: usize, block: usize, coeffs: [Complex64; 2]) {
        self.blocks.insert((user, block), coeffs);
    }

    pub fn at_slot(&self, cfg: &ChannelConfig, user: usize, slot: usize) -> Result<[Complex64; 2]> {
        let block = block_index(cfg, user, slot)?;
        self.block(user, block).ok_or_else(|| {
            invalid(format!(
                "no channel drawn for user {user} block {block} (slot {slot})"
            ))
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Coefficients of one block, a pure function of `(seed, user, block)`.
pub fn draw_block(seed: u64, user: usize, block: usize) -> [Complex64; 2] {
    let mut rng = stream_rng(seed, ((user as u64) << 40) ^ block as u64);
    loop {
        let mut draw = || {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        };
        let h = [draw(), draw()];
        if h.iter().all(|c| c.norm() >= MIN_MAGNITUDE) {
            return h;
        }
    }
}

/// Draw every block that touches `slots` for every user.
pub fn draw_channels(cfg: &ChannelConfig, seed: u64, slots: Range<usize>) -> ChannelRealization {
    let mut ch = ChannelRealization::empty(seed);
    if slots.is_empty() {
        return ch;
    }
    for user in 0..cfg.users() {
        let first = block_index(cfg, user, slots.start).expect("user in range");
        let last = block_index(cfg, user, slots.end - 1).expect("user in range");
        for block in first..=last {
            ch.set_block(user, block, draw_block(seed, user, block));
        }
    }
    ch
}

/// Precoding vectors over the `K+1` slots of one super-symbol. The same
/// vector is used on both antennas, so `v_i == u_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BeamformingSet {
    vectors: Vec<Vec<u8>>,
}

impl BeamformingSet {
    pub fn users(&self) -> usize {
        self.vectors.len()
    }

    /// Vector on the first antenna for `user`.
    pub fn v(&self, user: usize) -> &[u8] {
        &self.vectors[user]
    }

    /// Vector on the second antenna for `user`.
    pub fn u(&self, user: usize) -> &[u8] {
        &self.vectors[user]
    }
}

pub fn beamforming_vectors(m: &PatternMatrix) -> Result<BeamformingSet> {
    if !is_feasible_pattern(m) {
        return Err(invalid("beamforming needs a permutation pattern matrix"));
    }
    let k = m.size();
    let vectors = (0..k)
        .map(|row| {
            let c = m.transition_column(row).expect("permutation row");
            let mut v = vec![0u8; k + 1];
            v[c] = 1;
            v[c + 1] = 1;
            v
        })
        .collect();
    Ok(BeamformingSet { vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairResidual {
    pub receiver: usize,
    pub interferer: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub pairs: Vec<PairResidual>,
    pub max_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodabilityReport {
    /// Smallest singular value of each receiver's normalized signal matrix.
    pub per_receiver: Vec<f64>,
    pub min_singular_value: f64,
    pub passed: bool,
}

/// `(K+1) x K` per-slot coefficients seen by `receiver`, one row per slot.
fn slot_channels(
    cfg: &ChannelConfig,
    slots: &[usize],
    ch: &ChannelRealization,
    receiver: usize,
) -> Result<Vec<[Complex64; 2]>> {
    slots
        .iter()
        .map(|&s| ch.at_slot(cfg, receiver, s))
        .collect()
}

fn shaped(h: &[[Complex64; 2]], antenna: usize, v: &[u8]) -> Vec<Complex64> {
    h.iter()
        .zip(v)
        .map(|(c, &x)| c[antenna] * f64::from(x))
        .collect()
}

fn singular_values(rows: usize, cols: &[Vec<Complex64>]) -> Vec<f64> {
    let m = DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r]);
    m.singular_values().iter().copied().collect()
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Ratio of smallest to largest singular value of `[a b]`; 0 when either
/// column vanishes.
fn proportionality_residual(a: &[Complex64], b: &[Complex64]) -> f64 {
    if norm(a) == 0.0 || norm(b) == 0.0 {
        return 0.0;
    }
    let sv = singular_values(a.len(), &[a.to_vec(), b.to_vec()]);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    min / max
}

fn check_dims(cfg: &ChannelConfig, slots: &[usize], bf: &BeamformingSet) -> Result<()> {
    let k = cfg.users();
    if slots.len() != k + 1 || bf.users() != k {
        return Err(invalid(format!(
            "super-symbol needs {} slots and {k} beamformers, got {} and {}",
            k + 1,
            slots.len(),
            bf.users()
        )));
    }
    Ok(())
}

/// At every receiver, each interferer's two antenna contributions must be
/// proportional.
pub fn verify_alignment(
    cfg: &ChannelConfig,
    slots: &[usize],
    bf: &BeamformingSet,
    ch: &ChannelRealization,
) -> Result<AlignmentReport> {
    check_dims(cfg, slots, bf)?;
    let k = cfg.users();
    let mut pairs = Vec::with_capacity(k * (k - 1));
    for rx in 0..k {
        let h = slot_channels(cfg, slots, ch, rx)?;
        for j in (0..k).filter(|&j| j != rx) {
            let a = shaped(&h, 0, bf.v(j));
            let b = shaped(&h, 1, bf.u(j));
            pairs.push(PairResidual {
                receiver: rx,
                interferer: j,
                residual: proportionality_residual(&a, &b),
            });
        }
    }
    let max_residual = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    Ok(AlignmentReport {
        passed: max_residual < ALIGNMENT_TOLERANCE,
        max_residual,
        pairs,
    })
}

/// Receiver `i` must resolve its two desired streams next to the `K-1`
/// aligned interference directions: the `(K+1) x (K+1)` matrix of those
/// columns has full rank.
pub fn verify_decodability(
    cfg: &ChannelConfig,
    slots: &[usize],
    bf: &BeamformingSet,
    ch: &ChannelRealization,
) -> Result<DecodabilityReport> {
    check_dims(cfg, slots, bf)?;
    let k = cfg.users();
    let mut per_receiver = Vec::with_capacity(k);
    for rx in 0..k {
        let h = slot_channels(cfg, slots, ch, rx)?;
        let mut cols = vec![shaped(&h, 0, bf.v(rx)), shaped(&h, 1, bf.u(rx))];
        cols.extend((0..k).filter(|&j| j != rx).map(|j| shaped(&h, 0, bf.v(j))));
        for col in &mut cols {
            let n = norm(col);
            if n > 0.0 {
                col.iter_mut().for_each(|c| *c /= n);
            }
        }
        let sv = singular_values(k + 1, &cols);
        per_receiver.push(sv.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let min_singular_value = per_receiver.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DecodabilityReport {
        passed: min_singular_value > DECODABILITY_TOLERANCE,
        min_singular_value,
        per_receiver,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub trials: u64,
    pub tuples: usize,
    pub alignment_failures: u64,
    pub decodability_failures: u64,
    pub max_residual: f64,
    pub min_singular_value: f64,
    /// `2K / (K+1)` when every check passed.
    pub symbols_per_slot: Option<Ratio<u64>>,
}

impl SummaryReport {
    pub fn passed(&self) -> bool {
        self.alignment_failures == 0 && self.decodability_failures == 0
    }
}

#[derive(Default)]
struct TrialTally {
    alignment_failures: u64,
    decodability_failures: u64,
    max_residual: f64,
    min_singular_value: f64,
}

impl TrialTally {
    fn merge(self, o: Self) -> Self {
        Self {
            alignment_failures: self.alignment_failures + o.alignment_failures,
            decodability_failures: self.decodability_failures + o.decodability_failures,
            max_residual: self.max_residual.max(o.max_residual),
            min_singular_value: self.min_singular_value.min(o.min_singular_value),
        }
    }
}

/// Run both verifiers on every super-symbol of `sched` over `trials`
/// independent channel draws. Trial `t` uses a seed derived from
/// `(seed, t)`, so results do not depend on thread scheduling.
pub fn verify_schedule_end_to_end(
    sched: &Schedule,
    seed: u64,
    trials: u64,
) -> Result<SummaryReport> {
    let validation = validate_schedule(sched);
    if !validation.passed {
        let first = validation
            .issues
            .first()
            .map(ToString::to_string)
            .unwrap_or_default();
        return Err(invalid(format!("schedule failed validation: {first}")));
    }
    let cfg = &sched.config;
    let beams = sched
        .tuples
        .iter()
        .map(|t| beamforming_vectors(&pattern_matrix(cfg, &t.slots)?))
        .collect::<Result<Vec<_>>>()?;
    let lo = sched
        .tuples
        .iter()
        .flat_map(|t| t.slots.first())
        .min()
        .copied()
        .unwrap_or(0);
    let hi = sched
        .tuples
        .iter()
        .flat_map(|t| t.slots.last())
        .max()
        .copied()
        .unwrap_or(0);

    let tally = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialTally> {
            let ch = draw_channels(cfg, derive_seed(seed, trial), lo..hi + 1);
            let mut tally = TrialTally {
                min_singular_value: f64::INFINITY,
                ..TrialTally::default()
            };
            for (tuple, bf) in sched.tuples.iter().zip(&beams) {
                let a = verify_alignment(cfg, &tuple.slots, bf, &ch)?;
                let d = verify_decodability(cfg, &tuple.slots, bf, &ch)?;
                tally.alignment_failures += u64::from(!a.passed);
                tally.decodability_failures += u64::from(!d.passed);
                tally.max_residual = tally.max_residual.max(a.max_residual);
                tally.min_singular_value = tally.min_singular_value.min(d.min_singular_value);
            }
            Ok(tally)
        })
        .try_reduce(
            || TrialTally {
                min_singular_value: f64::INFINITY,
                ..TrialTally::default()
            },
            |a, b| Ok(a.merge(b)),
        )?;

    let mut report = SummaryReport {
        trials,
        tuples: sched.tuples.len(),
        alignment_failures: tally.alignment_failures,
        decodability_failures: tally.decodability_failures,
        max_residual: tally.max_residual,
        min_singular_value: tally.min_singular_value,
        symbols_per_slot: None,
    };
    if report.passed() {
        report.symbols_per_slot = Some(dof_of_schedule(sched));
    }
    Ok(report)
}

/// Feasibility check, closed-form decomposition, scheduling and numerical
/// verification in one call. Infeasible configurations are refused.
pub fn verify_config_end_to_end(
    cfg: &ChannelConfig,
    seed: u64,
    trials: u64,
) -> Result<(Schedule, SummaryReport)> {
    let report = check_config(cfg);
    if !report.feasible {
        return Err(BiaError::ConditionViolated(format!(
            "{cfg}: sum(s) = {} > (K+1)*min(s) = {}",
            report.sum, report.bound
        )));
    }
    let lam = crate::diophantine::closed_form_solution(&group_profile(cfg))?;
    let sched = build_schedule(cfg, &lam)?;
    let summary = verify_schedule_end_to_end(&sched, seed, trials)?;
    Ok((sched, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diophantine::{brute_force_solve, DEFAULT_NODE_LIMIT};

    fn cfg(n: usize, offsets: &[usize]) -> ChannelConfig {
        ChannelConfig::new(n, offsets).unwrap()
    }

    fn pm(rows: &[Vec<u8>]) -> PatternMatrix {
        PatternMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn beamformers_for_worked_pattern() {
        let bf = beamforming_vectors(&pm(&[vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 1]])).unwrap();
        assert_eq!(bf.v(0), &[0, 1, 1, 0]);
        assert_eq!(bf.v(1), &[1, 1, 0, 0]);
        assert_eq!(bf.v(2), &[0, 0, 1, 1]);
        for i in 0..3 {
            assert_eq!(bf.v(i), bf.u(i));
        }
    }

    #[test]
    fn beamformers_two_users() {
        let bf = beamforming_vectors(&PatternMatrix::identity(2)).unwrap();
        assert_eq!((bf.v(0), bf.v(1)), (&[1, 1, 0][..], &[0, 1, 1][..]));
        let bf = beamforming_vectors(&pm(&[vec![0, 1], vec![1, 0]])).unwrap();
        assert_eq!((bf.v(0), bf.v(1)), (&[0, 1, 1][..], &[1, 1, 0][..]));
        assert!(beamforming_vectors(&pm(&[vec![1, 1], vec![0, 0]])).is_err());
    }

    #[test]
    fn draws_are_deterministic_and_block_constant() {
        let c = cfg(4, &[0, 1, 2]);
        let a = draw_channels(&c, 7, 0..40);
        let b = draw_channels(&c, 7, 0..40);
        assert_eq!(a, b);
        assert_eq!(a.at_slot(&c, 1, 1).unwrap(), a.at_slot(&c, 1, 4).unwrap());
        assert_ne!(a.at_slot(&c, 1, 4).unwrap(), a.at_slot(&c, 1, 5).unwrap());
        assert_ne!(a, draw_channels(&c, 8, 0..40));
        // sub-range draws agree with the full draw
        let part = draw_channels(&c, 7, 10..20);
        assert_eq!(
            part.at_slot(&c, 2, 13).unwrap(),
            a.at_slot(&c, 2, 13).unwrap()
        );
        for (&(_, _), h) in &a.blocks {
            assert!(h.iter().all(|x| x.norm() >= MIN_MAGNITUDE));
        }
        assert!(a.at_slot(&c, 0, 100).is_err());
    }

    #[test]
    fn feasible_tuple_aligns_and_decodes() {
        let c = cfg(4, &[0, 1, 2]);
        let slots = [3, 4, 5, 6];
        let bf = beamforming_vectors(&pattern_matrix(&c, &slots).unwrap()).unwrap();
        for seed in 0..100 {
            let ch = draw_channels(&c, seed, 0..8);
            let a = verify_alignment(&c, &slots, &bf, &ch).unwrap();
            assert!(
                a.passed && a.max_residual < 1e-12,
                "seed {seed}: {}",
                a.max_residual
            );
            assert_eq!(a.pairs.len(), 6);
            let d = verify_decodability(&c, &slots, &bf, &ch).unwrap();
            assert!(d.passed, "seed {seed}: {}", d.min_singular_value);
        }
    }

    #[test]
    fn two_user_tuple_decodes() {
        let c = cfg(3, &[0, 1]);
        let slots = [2, 3, 4];
        assert!(is_feasible_pattern(&pattern_matrix(&c, &slots).unwrap()));
        let m = pattern_matrix(&c, &slots).unwrap();
        let bf = beamforming_vectors(&m).unwrap();
        for seed in 0..100 {
            let ch = draw_channels(&c, seed, 0..6);
            assert!(verify_alignment(&c, &slots, &bf, &ch).unwrap().passed);
            assert!(verify_decodability(&c, &slots, &bf, &ch).unwrap().passed);
        }
    }

    #[test]
    fn misaligned_tuple_is_detected() {
        // users 1 and 2 change together between slots 4 and 5
        let c = cfg(4, &[0, 1, 1]);
        let slots = [3, 4, 5, 6];
        let m = pattern_matrix(&c, &slots).unwrap();
        assert!(!is_feasible_pattern(&m));
        let bf = beamforming_vectors(&PatternMatrix::identity(3)).unwrap();
        let ch = draw_channels(&c, 1, 0..8);
        let a = verify_alignment(&c, &slots, &bf, &ch).unwrap();
        assert!(!a.passed);
        assert!(a.max_residual > 1e-3, "{}", a.max_residual);
    }

    #[test]
    fn zero_interferer_has_zero_residual() {
        assert_eq!(
            proportionality_residual(
                &[Complex64::new(0.0, 0.0); 3],
                &[Complex64::new(1.0, 0.0); 3]
            ),
            0.0
        );
    }

    #[test]
    fn identical_blocks_break_decodability() {
        let c = cfg(4, &[0, 1, 2]);
        let slots = [3, 4, 5, 6];
        let bf = beamforming_vectors(&pattern_matrix(&c, &slots).unwrap()).unwrap();
        let mut ch = draw_channels(&c, 3, 0..8);
        // user 0 changes between blocks 0 and 1; make them equal
        let h = ch.block(0, 0).unwrap();
        ch.set_block(0, 1, h);
        let d = verify_decodability(&c, &slots, &bf, &ch).unwrap();
        assert!(!d.passed);
        assert!(d.per_receiver[0] < 1e-9);
        assert!(d.per_receiver[1] > 1e-9 && d.per_receiver[2] > 1e-9);
    }

    #[test]
    fn end_to_end_worked_example() {
        let (sched, summary) = verify_config_end_to_end(&cfg(4, &[0, 1, 2]), 11, 100).unwrap();
        assert_eq!(sched.tuples.len(), 4);
        assert!(summary.passed());
        assert_eq!(summary.symbols_per_slot, Some(Ratio::new(3, 2)));
        let again = verify_schedule_end_to_end(&sched, 11, 100).unwrap();
        assert_eq!(again, summary);
    }

    #[test]
    fn end_to_end_refuses_infeasible() {
        assert!(matches!(
            verify_config_end_to_end(&cfg(8, &[0, 3, 3]), 1, 1),
            Err(BiaError::ConditionViolated(_))
        ));
    }

    #[test]
    fn end_to_end_non_unique_decompositions() {
        let c = cfg(11, &[0, 3, 6]);
        let all = brute_force_solve(&group_profile(&c), true, DEFAULT_NODE_LIMIT).unwrap();
        for lam in all.iter().filter(|l| l.get(2) == 2 || l.get(2) == 3) {
            let sched = build_schedule(&c, lam).unwrap();
            let s = verify_schedule_end_to_end(&sched, 5, 20).unwrap();
            assert!(s.passed());
        }
    }
}
