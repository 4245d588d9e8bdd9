//! Counting offset placements that contain no feasible sub-channel, and the
//! resulting probability of finding one.
//!
//! User 0 sits at offset 0 and the other `K-1` offsets are uniform on
//! `[0, N)`, so there are `N^(K-1)` equally likely placements.

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, BiaError, Result};
use crate::feasibility::has_feasible_subset_sorted;
use crate::seeding::stream_rng;

/// Largest `N^(K-1)` that [`exact_count`] enumerates by default.
pub const DEFAULT_ENUMERATION_GUARD: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    FormulaLowerBound,
    Formula,
    ExactEnumeration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountResult {
    pub value: BigUint,
    pub kind: CountKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityMethod {
    ClosedFormBound,
    Exact,
    MonteCarlo,
}

impl std::fmt::Display for ProbabilityMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ClosedFormBound => "bound",
            Self::Exact => "exact",
            Self::MonteCarlo => "mc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub p: f64,
    pub method: ProbabilityMethod,
    pub trials: Option<u64>,
    /// 95% normal-approximation half-width, Monte Carlo only.
    pub half_width: Option<f64>,
}

impl ProbabilityEstimate {
    /// Standard error implied by the half-width.
    pub fn std_error(&self) -> Option<f64> {
        self.half_width.map(|h| h / 1.96)
    }
}

fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(BigInt::one(), |acc, i| acc * (n - i) / (i + 1))
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * i)
}

fn pow(base: i64, exp: u64) -> BigInt {
    num_traits::pow(BigInt::from(base), exp as usize)
}

fn to_unsigned(v: BigInt, what: &str) -> Result<BigUint> {
    v.to_biguint()
        .ok_or_else(|| BiaError::Internal(format!("{what} came out negative")))
}

pub fn stirling2(k: u64, mu: u64) -> Result<BigUint> {
    if mu > k {
        return Err(invalid(format!(
            "stirling2 needs mu <= k, got k={k}, mu={mu}"
        )));
    }
    let sum = (0..=mu).fold(BigInt::zero(), |acc, j| {
        let term = binomial(mu, j) * pow(j as i64, k);
        if (mu - j).is_multiple_of(2) {
            acc + term
        } else {
            acc - term
        }
    });
    to_unsigned(sum / factorial(mu), "stirling2")
}

/// `sum_j (-1)^j C(mu, j) (n - j)^theta` over `0 <= j <= mu`, evaluated as
/// written even when `n < mu`.
fn gamma_expansion(n: u64, theta: u64, mu: u64) -> BigInt {
    (0..=mu).fold(BigInt::zero(), |acc, j| {
        let term = binomial(mu, j) * pow(n as i64 - j as i64, theta);
        if j % 2 == 0 {
            acc + term
        } else {
            acc - term
        }
    })
}

fn check_gamma_args(n: u64, mu: u64) -> Result<()> {
    if mu > n {
        return Err(invalid(format!("cannot designate {mu} boxes out of {n}")));
    }
    Ok(())
}

/// Placements of `theta` labeled balls into `n` labeled boxes that leave
/// `mu` designated boxes nonempty, by inclusion-exclusion.
pub fn gamma_inclusion_exclusion(n: u64, theta: u64, mu: u64) -> Result<BigUint> {
    check_gamma_args(n, mu)?;
    to_unsigned(gamma_expansion(n, theta, mu), "gamma")
}

/// Same count as [`gamma_inclusion_exclusion`], through Stirling numbers.
/// Both forms are evaluated and must agree. Zero when `mu > theta`.
pub fn gamma_count(n: u64, theta: u64, mu: u64) -> Result<BigUint> {
    check_gamma_args(n, mu)?;
    let mu_fact = factorial(mu).to_biguint().expect("factorial is positive");
    let mut sum = BigUint::zero();
    for k in mu..=theta {
        let c = binomial(theta, k)
            .to_biguint()
            .expect("binomial is nonnegative");
        sum += c
            * &mu_fact
            * stirling2(k, mu)?
            * num_traits::pow(BigUint::from(n - mu), (theta - k) as usize);
    }
    let ie = gamma_inclusion_exclusion(n, theta, mu)?;
    if ie != sum {
        return Err(BiaError::Internal(format!(
            "gamma({n},{theta},{mu}): stirling form {sum} != inclusion-exclusion {ie}"
        )));
    }
    Ok(sum)
}

/// Events where everything falls into at most two adjacent small arcs,
/// shared by the 2- and 3-user counts.
fn crowded_terms(m: u64, upper: u64) -> BigInt {
    (2..=upper).fold(BigInt::one(), |acc, n| {
        let n_i = n as i64;
        acc + 2 * (pow(n_i, m) - pow(n_i - 1, m)) + (n_i - 2) * gamma_expansion(n, m, 2)
    })
}

/// Closed-form lower bound on the number of placements with no feasible
/// 3-user subset. Needs `4 | N` and `K >= 3`.
pub fn f_low_3(n: u64, k: u64) -> Result<CountResult> {
    if n == 0 || !n.is_multiple_of(4) {
        return Err(invalid(format!(
            "the 3-user bound needs N divisible by 4, got {n}; use exact enumeration or Monte Carlo instead"
        )));
    }
    if k < 3 {
        return Err(invalid(format!("the 3-user bound needs K >= 3, got {k}")));
    }
    let m = k - 1;
    let (quarter, half) = (n / 4, n / 2);
    let g = |x: u64, mu: u64| gamma_expansion(x, m, mu);

    let mut total = crowded_terms(m, half);
    total += pow(2, m) - 1;
    for x in 3..=quarter + 1 {
        let xi = BigInt::from(x);
        total += (&xi - 1) * (2 * (&xi - 3) * g(x, 3) + 3 * g(x, 2));
        // (x-3)(x-4) is even, so halving the product is exact
        total += (&xi - 1) * (&xi - 3) * ((&xi - 4) * g(x, 4) + 2 * g(x, 3)) / 2;
    }
    for x in quarter + 2..=half {
        let xi = BigInt::from(x);
        let weight = BigInt::from(half - x + 1) * (&xi - 1);
        // (x-1)(x-4) is even
        total += &weight * (4 * g(x, 3) + (&xi - 4) * g(x, 4)) / 2;
    }
    Ok(CountResult {
        value: to_unsigned(total, "f_low")?,
        kind: CountKind::FormulaLowerBound,
    })
}

/// Number of placements with no feasible 2-user subset. Needs `3 | N`.
pub fn f_2user(n: u64, k: u64) -> Result<CountResult> {
    if n == 0 || !n.is_multiple_of(3) {
        return Err(invalid(format!(
            "the 2-user formula needs N divisible by 3, got {n}; use exact enumeration or Monte Carlo instead"
        )));
    }
    if k < 2 {
        return Err(invalid(format!("the 2-user formula needs K >= 2, got {k}")));
    }
    Ok(CountResult {
        value: to_unsigned(crowded_terms(k - 1, n / 3), "f_2user")?,
        kind: CountKind::Formula,
    })
}

fn placements(n: u64, k: u64) -> Option<u64> {
    n.checked_pow(u32::try_from(k - 1).ok()?)
}

fn check_sizes(n: u64, k: u64, k_target: u64) -> Result<()> {
    if n == 0 {
        return Err(invalid("coherence time N must be positive"));
    }
    if k_target < 2 || k_target > k {
        return Err(invalid(format!(
            "target subset size must lie in 2..={k}, got {k_target}"
        )));
    }
    Ok(())
}

/// True when some `k_target` of the offsets form a feasible channel.
fn has_feasible(offsets: &mut Vec<usize>, n: usize, k_target: usize) -> bool {
    // equal offsets can never sit in the same feasible subset
    offsets.sort_unstable();
    offsets.dedup();
    has_feasible_subset_sorted(offsets, n, k_target)
}

/// Enumerate every placement and count those without a feasible
/// `k_target`-subset. Refuses when `N^(K-1)` exceeds `guard`.
pub fn exact_count(n: u64, k: u64, k_target: u64, guard: u64) -> Result<CountResult> {
    check_sizes(n, k, k_target)?;
    let total = placements(n, k).filter(|&t| t <= guard).ok_or_else(|| {
        BiaError::ResourceLimit(format!(
            "{n}^{} placements exceed the enumeration guard {guard}; use Monte Carlo",
            k - 1
        ))
    })?;
    let (nu, ku, tu) = (n as usize, k as usize, k_target as usize);
    let infeasible: u64 = (0..total)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(ku),
            |offsets, mut code| {
                offsets.clear();
                offsets.push(0);
                for _ in 1..ku {
                    offsets.push((code % n) as usize);
                    code /= n;
                }
                u64::from(!has_feasible(offsets, nu, tu))
            },
        )
        .sum();
    Ok(CountResult {
        value: BigUint::from(infeasible),
        kind: CountKind::ExactEnumeration,
    })
}

fn one_minus_ratio(count: &BigUint, n: u64, k: u64) -> f64 {
    let denom = num_traits::pow(BigInt::from(n), (k - 1) as usize);
    let q = BigRational::new(BigInt::from_biguint(Sign::Plus, count.clone()), denom);
    let p = BigRational::one() - q;
    p.to_f64().unwrap_or(f64::NAN).clamp(0.0, 1.0)
}

/// Upper bound on the probability of a feasible 3-user subset, from
/// [`f_low_3`].
pub fn p_upper_3(n: u64, k: u64) -> Result<ProbabilityEstimate> {
    let f = f_low_3(n, k)?;
    Ok(ProbabilityEstimate {
        p: one_minus_ratio(&f.value, n, k),
        method: ProbabilityMethod::ClosedFormBound,
        trials: None,
        half_width: None,
    })
}

/// Probability of a feasible 2-user subset, from [`f_2user`].
pub fn p_formula_2(n: u64, k: u64) -> Result<ProbabilityEstimate> {
    let f = f_2user(n, k)?;
    Ok(ProbabilityEstimate {
        p: one_minus_ratio(&f.value, n, k),
        method: ProbabilityMethod::ClosedFormBound,
        trials: None,
        half_width: None,
    })
}

pub fn p_exact(n: u64, k: u64, k_target: u64, guard: u64) -> Result<ProbabilityEstimate> {
    let f = exact_count(n, k, k_target, guard)?;
    Ok(ProbabilityEstimate {
        p: one_minus_ratio(&f.value, n, k),
        method: ProbabilityMethod::Exact,
        trials: None,
        half_width: None,
    })
}

/// Fraction of `trials` random placements that contain a feasible
/// `k_target`-subset. Trial `t` draws from its own stream of `seed`.
pub fn monte_carlo_p(
    n: u64,
    k: u64,
    k_target: u64,
    trials: u64,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    check_sizes(n, k, k_target)?;
    if trials == 0 {
        return Err(invalid("Monte Carlo needs at least one trial"));
    }
    let (nu, ku, tu) = (n as usize, k as usize, k_target as usize);
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(ku),
            |offsets, t| {
                use rand::Rng;
                let mut rng = stream_rng(seed, t);
                offsets.clear();
                offsets.push(0);
                offsets.extend((1..ku).map(|_| rng.gen_range(0..nu)));
                u64::from(has_feasible(offsets, nu, tu))
            },
        )
        .sum();
    let p = hits as f64 / trials as f64;
    Ok(ProbabilityEstimate {
        p,
        method: ProbabilityMethod::MonteCarlo,
        trials: Some(trials),
        half_width: Some(1.96 * (p * (1.0 - p) / trials as f64).sqrt()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityReport {
    pub coherence: u64,
    pub users: u64,
    pub formula: BigUint,
    pub exact: BigUint,
}

impl CompatibilityReport {
    pub fn agrees(&self) -> bool {
        self.formula == self.exact
    }
}

/// Compare the 2-user formula against enumeration.
pub fn f_2user_compatibility(n: u64, k: u64, guard: u64) -> Result<CompatibilityReport> {
    Ok(CompatibilityReport {
        coherence: n,
        users: k,
        formula: f_2user(n, k)?.value,
        exact: exact_count(n, k, 2, guard)?.value,
    })
}
