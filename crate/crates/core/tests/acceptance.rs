//! Acceptance gates. Each test prints one PASS/FAIL line; run with
//! `--nocapture` to see them all.

use std::collections::BTreeSet;

use bia::counting::{
    exact_count, f_low_3, gamma_count, gamma_inclusion_exclusion, monte_carlo_p, p_exact,
    p_upper_3, DEFAULT_ENUMERATION_GUARD,
};
use bia::diophantine::{
    brute_force_solve, closed_form_solution, three_user_solution, verify_solution, LambdaSolution,
    DEFAULT_NODE_LIMIT,
};
use bia::feasibility::{check_feasible, feasible_region};
use bia::pattern::{
    count_feasible_patterns, feasible_patterns, ChannelConfig, GroupProfile, PatternMatrix,
};
use bia::signaling::verify_config_end_to_end;
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, ok: bool, detail: impl std::fmt::Display) {
    println!(
        "criterion {id}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
}

/// Every window of `K+1` consecutive lambdas (cyclically) sums to the
/// matching group size.
fn windows_hold(s: &[usize], lam: &[u64]) -> bool {
    let k = s.len();
    let m = lam.len();
    m == k * (k + 1)
        && (0..m).all(|i| {
            let w: u64 = (0..=k).map(|d| lam[(i + m - d) % m]).sum();
            w == s[i % k] as u64
        })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn criterion_01_pattern_enumeration() {
    let count = count_feasible_patterns(3).unwrap();
    let listed: BTreeSet<Vec<Vec<u8>>> = feasible_patterns(3)
        .unwrap()
        .iter()
        .map(PatternMatrix::rows)
        .collect();
    let expected: BTreeSet<Vec<Vec<u8>>> = permutations(3)
        .iter()
        .map(|p| {
            (0..3)
                .map(|r| (0..3).map(|c| u8::from(p[r] == c)).collect())
                .collect()
        })
        .collect();
    let ok = count == BigUint::from(6u32) && listed.len() == 6 && listed == expected;
    report(
        "1",
        ok,
        format_args!("count {count}, distinct listed {}", listed.len()),
    );
    assert!(ok);
}

#[test]
fn criterion_02_region_regression() {
    let r20 = feasible_region(20);
    let r21 = feasible_region(21);
    let ok = r20.count() == 42
        && r21.count() == 20
        && (r20.ratio() - 0.105).abs() < 1e-12
        && (r21.ratio() - 20.0 / 441.0).abs() < 1e-12
        && (r21.ratio() - 0.0454).abs() < 5e-5;
    report(
        "2",
        ok,
        format_args!(
            "N=20: {} ({}), N=21: {} ({:.4})",
            r20.count(),
            r20.ratio(),
            r21.count(),
            r21.ratio()
        ),
    );
    assert!(ok);
}

fn compositions(
    total: usize,
    parts: usize,
    prefix: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if parts == 1 {
        prefix.push(total);
        visit(prefix);
        prefix.pop();
        return;
    }
    for first in 0..=total {
        prefix.push(first);
        compositions(total - first, parts - 1, prefix, visit);
        prefix.pop();
    }
}

#[test]
fn criterion_03_oracle_equivalence() {
    let mut checked = 0u64;
    let mut mismatches = Vec::new();
    for k in 2..=4 {
        for n in 1..=20 {
            compositions(n, k, &mut Vec::new(), &mut |s| {
                let profile = GroupProfile::new(s.to_vec()).unwrap();
                let found = brute_force_solve(&profile, false, DEFAULT_NODE_LIMIT).unwrap();
                let solvable = !found.is_empty();
                if solvable {
                    assert!(windows_hold(s, found[0].values()));
                }
                if solvable != check_feasible(&profile) {
                    mismatches.push(s.to_vec());
                }
                checked += 1;
            });
        }
    }
    let ok = mismatches.is_empty();
    report(
        "3",
        ok,
        format_args!("{checked} profiles, {} mismatches", mismatches.len()),
    );
    assert!(ok, "{mismatches:?}");
}

fn random_feasible_profile(rng: &mut ChaCha8Rng, k: usize, n_max: usize) -> Vec<usize> {
    let m = rng.gen_range(1..=n_max / (k + 1));
    let mut s = vec![m; k];
    let mut budget = m;
    for v in s.iter_mut().skip(1) {
        let add = rng.gen_range(0..=budget);
        *v += add;
        budget -= add;
    }
    let r = rng.gen_range(0..k);
    s.rotate_left(r);
    if rng.gen_bool(0.5) {
        s.reverse();
    }
    s
}

#[test]
fn criterion_04_closed_form_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    let mut three_user_checked = 0;
    for _ in 0..10_000 {
        let k = rng.gen_range(2..=6);
        let s = random_feasible_profile(&mut rng, k, 10_000);
        assert!(s.iter().sum::<usize>() <= 10_000);
        let profile = GroupProfile::new(s.clone()).unwrap();
        let check = |lam: &LambdaSolution| {
            windows_hold(&s, lam.values()) && verify_solution(&profile, lam).unwrap()
        };
        if !closed_form_solution(&profile)
            .map(|l| check(&l))
            .unwrap_or(false)
        {
            failures += 1;
        }
        if k == 3 {
            three_user_checked += 1;
            if !three_user_solution(&profile)
                .map(|l| check(&l))
                .unwrap_or(false)
            {
                failures += 1;
            }
        }
    }
    let ok = failures == 0;
    report(
        "4",
        ok,
        format_args!(
            "10000 profiles ({three_user_checked} also via the 3-user form), {failures} failures"
        ),
    );
    assert!(ok);
}

/// Offsets whose circular gaps are all at least `ceil(N/(K+1))`.
fn random_feasible_config(rng: &mut ChaCha8Rng) -> ChannelConfig {
    loop {
        let k: usize = rng.gen_range(2..=5);
        let n = rng.gen_range(k + 1..=60);
        let need = n.div_ceil(k + 1);
        if k * need > n {
            continue;
        }
        let mut gaps = vec![need; k];
        for _ in 0..n - k * need {
            let i = rng.gen_range(0..k);
            gaps[i] += 1;
        }
        let origin = rng.gen_range(0..n);
        let mut offsets: Vec<usize> = gaps
            .iter()
            .scan(origin, |acc, g| {
                let o = *acc % n;
                *acc += g;
                Some(o)
            })
            .collect();
        for i in (1..k).rev() {
            let j = rng.gen_range(0..=i);
            offsets.swap(i, j);
        }
        return ChannelConfig::new(n, &offsets).unwrap();
    }
}

#[test]
fn criterion_05_end_to_end_schedules() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut configs = vec![ChannelConfig::new(4, &[0, 1, 2]).unwrap()];
    configs.extend((0..200).map(|_| random_feasible_config(&mut rng)));
    let mut failures = Vec::new();
    let mut worst_residual = 0.0f64;
    let mut worst_sv = f64::INFINITY;
    for (i, cfg) in configs.iter().enumerate() {
        match verify_config_end_to_end(cfg, 500 + i as u64, 100) {
            Ok((sched, summary)) => {
                let validated = bia::scheduler::validate_schedule(&sched).passed;
                worst_residual = worst_residual.max(summary.max_residual);
                worst_sv = worst_sv.min(summary.min_singular_value);
                if !validated
                    || !summary.passed()
                    || summary.max_residual >= 1e-9
                    || summary.min_singular_value <= 1e-9
                {
                    failures.push(cfg.to_string());
                }
            }
            Err(e) => failures.push(format!("{cfg}: {e}")),
        }
    }
    let ok = failures.is_empty();
    report(
        "5",
        ok,
        format_args!(
            "{} configs x 100 seeds, max residual {worst_residual:.2e}, min singular value {worst_sv:.2e}, {} failures",
            configs.len(),
            failures.len()
        ),
    );
    assert!(ok, "{failures:?}");
}

#[test]
fn criterion_06_counting_bound() {
    let mut bad = Vec::new();
    for n in [8, 12, 16] {
        for k in [3, 4, 5] {
            let low = f_low_3(n, k).unwrap().value;
            let exact = exact_count(n, k, 3, DEFAULT_ENUMERATION_GUARD)
                .unwrap()
                .value;
            if low > exact {
                bad.push(format!("f_low({n},{k}) = {low} > {exact}"));
            }
        }
    }
    for n in 1..=24u64 {
        let exact = exact_count(n, 3, 3, DEFAULT_ENUMERATION_GUARD)
            .unwrap()
            .value;
        let expected = BigUint::from(n * n - feasible_region(n as usize).count() as u64);
        if exact != expected {
            bad.push(format!(
                "exact_count({n},3,3) = {exact}, expected {expected}"
            ));
        }
    }
    let ok = bad.is_empty();
    report(
        "6",
        ok,
        format_args!(
            "9 bound checks, 24 region identities, {} violations",
            bad.len()
        ),
    );
    assert!(ok, "{bad:?}");
}

#[test]
fn criterion_07_probability_consistency() {
    let trials = 1_000_000;
    let mut bad = Vec::new();
    let mut notes = Vec::new();
    for k in [3, 4, 5] {
        let exact = p_exact(8, k, 3, DEFAULT_ENUMERATION_GUARD).unwrap().p;
        let mc = monte_carlo_p(8, k, 3, trials, 70 + k).unwrap();
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        let up = p_upper_3(8, k).unwrap().p;
        if (mc.p - exact).abs() > 4.0 * se {
            bad.push(format!("K={k}: mc {} vs exact {exact} (se {se:.2e})", mc.p));
        }
        if exact > up {
            bad.push(format!("K={k}: exact {exact} > bound {up}"));
        }
        notes.push(format!(
            "K={k} exact {exact:.4} mc {:.4} bound {up:.4}",
            mc.p
        ));
    }
    let ok = bad.is_empty();
    report("7", ok, notes.join("; "));
    assert!(ok, "{bad:?}");
}

/// Hard gate at 0.95 unless the 95% interval straddles it, in which case
/// the estimate may sit up to 3 standard errors below.
fn threshold_gate(id: &str, n: u64, k: u64, target: u64) -> bool {
    let est = monte_carlo_p(n, k, target, 100_000, 8).unwrap();
    let hw = est.half_width.unwrap();
    let se = est.std_error().unwrap();
    let straddles = est.p - hw <= 0.95 && 0.95 <= est.p + hw;
    let ok = if straddles {
        est.p >= 0.95 - 3.0 * se
    } else {
        est.p >= 0.95
    };
    report(
        id,
        ok,
        format_args!(
            "P({n},{k},{target}) = {:.4} +/- {hw:.4}, {} gate",
            est.p,
            if straddles { "3-sigma slack" } else { "hard" }
        ),
    );
    ok
}

#[test]
fn criterion_08a_three_user_threshold() {
    assert!(threshold_gate("8a", 60, 11, 3));
}

#[test]
fn criterion_08b_two_user_threshold() {
    assert!(threshold_gate("8b", 60, 5, 2));
}

#[test]
fn criterion_09_non_uniqueness() {
    let cfg = ChannelConfig::new(11, &[0, 3, 6]).unwrap();
    let s = bia::pattern::group_profile(&cfg);
    let all = brute_force_solve(&s, true, DEFAULT_NODE_LIMIT).unwrap();
    let has = |v: u64| all.iter().any(|l| l.get(2) == v);
    let ok = s.sizes() == [3, 3, 5] && all.len() >= 2 && has(3) && has(2);
    report("9", ok, format_args!("s = {s}, {} solutions", all.len()));
    assert!(ok);
}

#[test]
fn criterion_10_gamma_cross_check() {
    let mut compared = 0;
    for n in 0..=20u64 {
        for theta in 0..=8u64 {
            for mu in 0..=n.min(theta) {
                assert_eq!(
                    gamma_count(n, theta, mu).unwrap(),
                    gamma_inclusion_exclusion(n, theta, mu).unwrap()
                );
                compared += 1;
            }
        }
    }
    let zeros = (4..=20).all(|n| {
        gamma_count(n, 2, 3).unwrap() == BigUint::ZERO
            && gamma_count(n, 2, 4).unwrap() == BigUint::ZERO
    });
    report(
        "10",
        zeros,
        format_args!("{compared} argument triples agree, gamma(n,2,3) = gamma(n,2,4) = 0: {zeros}"),
    );
    assert!(zeros);
}
