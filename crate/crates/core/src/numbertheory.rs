//! Bounds for mixed-power 3×3 systems, factoring, sums of two squares,
//! and absence certificates for magic squares of squares.
//!
//! Factoring is classical: trial division below 10⁶, a deterministic
//! Miller–Rabin test for `u64`, and Brent's variant of Pollard's rho.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

use crate::markedset::MarkedSet;
use crate::squares::{MagicSquare, Pattern3x3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumberTheoryError {
    #[error("zero has no factorization")]
    Zero,
    #[error("exponent must be at least 2, got {0}")]
    Exponent(u32),
    #[error("search budget of {budget} candidates exhausted after {examined}, {} squares found so far", found.len())]
    Resource {
        budget: u64,
        examined: u64,
        found: Vec<MagicSquare>,
    },
    #[error("order {0} is not supported")]
    UnsupportedOrder(usize),
}

pub type Result<T> = std::result::Result<T, NumberTheoryError>;

const TRIAL_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Factorization {
    pub z: u64,
    /// `(prime, exponent)`, primes ascending.
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn product(&self) -> u128 {
        self.factors
            .iter()
            .map(|&(p, e)| u128::from(p).pow(e))
            .product()
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (u128::from(a) * u128::from(b) % u128::from(m)) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic for all `u64` with the first twelve prime bases.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A non-trivial factor of the odd composite `n` (Brent's cycle finding).
fn brent_rho(n: u64) -> u64 {
    for c in 1u64.. {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut y, mut r, mut q) = (2u64, 1u64, 1u64);
        let (mut x, mut ys);
        let mut g;
        const BATCH: u64 = 128;
        loop {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            loop {
                ys = y;
                for _ in 0..BATCH.min(r - k) {
                    y = f(y);
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                g = gcd(q, n);
                k += BATCH;
                if k >= r || g != 1 {
                    break;
                }
            }
            r *= 2;
            if g != 1 {
                break;
            }
        }
        if g == n {
            // batch overshot: step back one at a time
            loop {
                ys = f(ys);
                g = gcd(x.abs_diff(ys), n);
                if g != 1 {
                    break;
                }
            }
        }
        if g != n {
            return g;
        }
    }
    unreachable!("some increment yields a factor")
}

fn split(n: u64, out: &mut Vec<u64>) {
    if n == 1 {
        return;
    }
    if is_prime(n) {
        out.push(n);
        return;
    }
    let d = brent_rho(n);
    split(d, out);
    split(n / d, out);
}

pub fn factorize(z: u64) -> Result<Factorization> {
    if z == 0 {
        return Err(NumberTheoryError::Zero);
    }
    let mut primes = Vec::new();
    let mut rest = z;
    let mut p = 2;
    while p < TRIAL_LIMIT && p * p <= rest {
        while rest.is_multiple_of(p) {
            primes.push(p);
            rest /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    split(rest, &mut primes);
    primes.sort_unstable();
    let mut factors: Vec<(u64, u32)> = Vec::new();
    for q in primes {
        match factors.last_mut() {
            Some((last, e)) if *last == q => *e += 1,
            _ => factors.push((q, 1)),
        }
    }
    Ok(Factorization { z, factors })
}

/// Whether `z = x² + y²`: no prime `≡ 3 (mod 4)` divides `z` to an odd power.
pub fn sum_of_two_squares(z: u64) -> bool {
    if z == 0 {
        return true;
    }
    factorize(z)
        .expect("z is positive")
        .factors
        .iter()
        .all(|&(p, e)| p % 4 != 3 || e % 2 == 0)
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Ordered pairs `(s, t)`, `s, t ≥ 1`, with `s² + t² = z`.
pub fn two_square_representations(z: u64) -> Vec<(u64, u64)> {
    (1..=isqrt(z))
        .filter_map(|s| {
            let rest = z - s * s;
            let t = isqrt(rest);
            (t >= 1 && t * t == rest).then_some((s, t))
        })
        .collect()
}

/// `(t^z − (t−1)^{z−1}) / t^z`.
pub fn gap(t: u64, z: u32) -> f64 {
    let top = (t as f64).powi(z as i32);
    (top - ((t - 1) as f64).powi(z as i32 - 1)) / top
}

/// `gap(t) ≥ 1/3`, i.e. `2·t^z ≥ 3·(t−1)^{z−1}`, evaluated exactly.
pub fn gap_at_least_third(t: u64, z: u32) -> bool {
    let exact = || -> Option<bool> {
        let lhs = u128::from(t).checked_pow(z)?.checked_mul(2)?;
        let rhs = u128::from(t - 1).checked_pow(z - 1)?.checked_mul(3)?;
        Some(lhs >= rhs)
    };
    exact()
        .unwrap_or_else(|| BigUint::from(t).pow(z) * 2u32 >= BigUint::from(t - 1).pow(z - 1) * 3u32)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bound {
    pub z: u32,
    pub t0: u64,
    /// `(t0 + 1)^z`, serialised as a decimal string.
    #[serde(serialize_with = "decimal")]
    pub u: BigUint,
    /// Largest `t` at which the gap was checked.
    pub horizon: u64,
}

fn decimal<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

pub const DEFAULT_HORIZON: u64 = 1_000_000;

/// Least `t0 ≥ 2` with the gap at least 1/3 for every `t` in `t0..=horizon`.
pub fn compute_bound(z: u32, horizon: u64) -> Result<Bound> {
    if z < 2 {
        return Err(NumberTheoryError::Exponent(z));
    }
    let horizon = horizon.max(2);
    let mut t0 = 2;
    for t in 2..=horizon {
        if !gap_at_least_third(t, z) {
            t0 = t + 1;
        }
    }
    Ok(Bound {
        z,
        t0,
        u: BigUint::from(t0 + 1).pow(z),
        horizon,
    })
}

fn powers_up_to(e: u32, cap: u64) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    for b in 1u64.. {
        match b.checked_pow(e) {
            Some(v) if v <= cap => {
                out.insert(v);
            }
            _ => break,
        }
    }
    out
}

/// Smallest of the eight symmetric images, read row-major.
fn canonical(g: [i64; 9]) -> [i64; 9] {
    let rot = |g: [i64; 9]| [g[6], g[3], g[0], g[7], g[4], g[1], g[8], g[5], g[2]];
    let flip = |g: [i64; 9]| [g[2], g[1], g[0], g[5], g[4], g[3], g[8], g[7], g[6]];
    let mut best = g;
    let mut cur = g;
    for _ in 0..4 {
        cur = rot(cur);
        best = best.min(cur).min(flip(cur));
    }
    best
}

pub const DEFAULT_SEARCH_BUDGET: u64 = 100_000_000;

/// All 3×3 magic squares, up to rotation and reflection, whose largest
/// entry is a `z`-th power and whose other entries are `(z−1)`-th powers,
/// all in `1..=cap`.
///
/// Each square is fixed by its centre `e` and top row `a, b`; those range
/// over the admissible values and the other six cells follow.
pub fn exhaustive_mixed_power_search(z: u32, cap: u64, budget: u64) -> Result<Vec<MagicSquare>> {
    if z < 2 {
        return Err(NumberTheoryError::Exponent(z));
    }
    let top = powers_up_to(z, cap);
    let rest = powers_up_to(z - 1, cap);
    let base: Vec<i64> = rest
        .iter()
        .chain(&top)
        .map(|&v| v as i64)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let is_rest = |v: i64| v > 0 && rest.contains(&(v as u64));
    let is_top = |v: i64| v > 0 && top.contains(&(v as u64));
    let mut seen = BTreeSet::new();
    let mut found = Vec::new();
    let mut examined = 0u64;
    for &e in &base {
        for &a in &base {
            for &b in &base {
                examined += 1;
                if examined > budget {
                    return Err(NumberTheoryError::Resource {
                        budget,
                        examined: examined - 1,
                        found,
                    });
                }
                let c = 3 * e - a - b;
                let g = a + b - e;
                let d = 4 * e - 2 * a - b;
                let f = 2 * a + b - 2 * e;
                let h = 2 * e - b;
                let i = 2 * e - a;
                let grid = [a, b, c, d, e, f, g, h, i];
                let max = *grid.iter().max().expect("nine cells");
                if max > cap as i64
                    || !is_top(max)
                    || grid.iter().any(|&v| v != max && !is_rest(v))
                    || grid.iter().collect::<BTreeSet<_>>().len() != 9
                {
                    continue;
                }
                if seen.insert(canonical(grid)) {
                    let sq = MagicSquare::from_row_major(3, canonical(grid).to_vec())
                        .expect("parametrised grid is magic");
                    found.push(sq);
                }
            }
        }
    }
    Ok(found)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Elimination {
    /// `s² + t²` (the value `l + k`) is unmarked.
    SumUnmarked,
    /// `s²` (the shifting constant `l`) is unmarked.
    LeadUnmarked,
    /// No completion of the pattern is fully marked.
    PatternIncomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum CandidateOutcome {
    Eliminated {
        reason: Elimination,
    },
    /// Fully marked completion: a 3×3 pattern, or the starts of `n`
    /// progressions of step `t²`.
    Survivor {
        witness: Vec<i64>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateRecord {
    pub s: u64,
    pub t: u64,
    #[serde(flatten)]
    pub outcome: CandidateOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Absent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AbsenceCertificate {
    pub order: usize,
    pub class: String,
    pub bound: u64,
    /// Marked values that are not a sum of two squares and so never serve
    /// as `l + k`.
    pub non_sums_marked: u64,
    pub candidates: Vec<CandidateRecord>,
    pub eliminated: usize,
    pub verdict: Verdict,
}

/// Searches for solutions with shifting constant `l = s²` and defining
/// distance `k = t²` inside the marked set, recording why each `(s, t)`
/// fails. For `n = 3` the second distance `K` ranges over all positive
/// integers. For `n ≥ 4` only progression-family solutions are covered.
pub fn certify_absence_squares(set: &MarkedSet, n: usize) -> Result<AbsenceCertificate> {
    if n < 3 || n == 6 {
        return Err(NumberTheoryError::UnsupportedOrder(n));
    }
    let b = set.domain_size();
    let marked = |x: i64| x >= 1 && set.contains(x as u64);
    let mut candidates = Vec::new();
    for s in 1..=isqrt(b) {
        for t in 1.. {
            let (l, k) = ((s * s) as i64, (t * t) as i64);
            if (l + k) as u64 > b {
                break;
            }
            let outcome = if !marked(l + k) {
                CandidateOutcome::Eliminated {
                    reason: Elimination::SumUnmarked,
                }
            } else if !marked(l) {
                CandidateOutcome::Eliminated {
                    reason: Elimination::LeadUnmarked,
                }
            } else {
                let witness = if n == 3 {
                    complete_pattern(l, k, b as i64, &marked)
                } else {
                    complete_family(l, k, n, b as i64, &marked)
                };
                match witness {
                    Some(w) => CandidateOutcome::Survivor { witness: w },
                    None => CandidateOutcome::Eliminated {
                        reason: Elimination::PatternIncomplete,
                    },
                }
            };
            candidates.push(CandidateRecord { s, t, outcome });
        }
    }
    let eliminated = candidates
        .iter()
        .filter(|c| matches!(c.outcome, CandidateOutcome::Eliminated { .. }))
        .count();
    let verdict = if eliminated == candidates.len() {
        Verdict::Absent
    } else {
        Verdict::Inconclusive
    };
    Ok(AbsenceCertificate {
        order: n,
        class: if n == 3 {
            "order-3 squares of marked values with l = s^2 and k = t^2".into()
        } else {
            format!("order-{n} progression families with first start s^2 and step t^2")
        },
        bound: b,
        non_sums_marked: set.iter().filter(|&x| !sum_of_two_squares(x)).count() as u64,
        candidates,
        eliminated,
        verdict,
    })
}

/// `[l, k, K]` for the first `K ≥ 1` whose nine values are all marked.
fn complete_pattern(l: i64, k: i64, b: i64, marked: &dyn Fn(i64) -> bool) -> Option<Vec<i64>> {
    (1..)
        .take_while(|kk| l + 2 * k + 2 * kk <= b)
        .map(|kk| Pattern3x3::new(l, k, kk))
        .find(|p| p.generate().is_ok() && (0..3).all(|j| (0..3).all(|i| marked(p.value(i, j)))))
        .map(|p| vec![p.base, p.inner_step, p.outer_step])
}

/// Starts of `n` disjoint fully marked progressions of step `k`, the first
/// starting at `l`. Within one residue class the progressions are equal
/// length intervals, so taking them leftmost-first maximises the count.
fn complete_family(
    l: i64,
    k: i64,
    n: usize,
    b: i64,
    marked: &dyn Fn(i64) -> bool,
) -> Option<Vec<i64>> {
    let span = (n as i64 - 1) * k;
    let full = |x: i64| (0..n as i64).all(|i| marked(x + i * k));
    if !full(l) {
        return None;
    }
    let mut starts = vec![l];
    let mut last_in_class = vec![i64::MIN; k as usize];
    last_in_class[(l % k) as usize] = l;
    for x in 1..=b - span {
        if x == l {
            continue;
        }
        let class = (x % k) as usize;
        if last_in_class[class] != i64::MIN && x - last_in_class[class] <= span {
            continue;
        }
        // the first progression is fixed; skip anything overlapping it
        if class == (l % k) as usize && (x - l).abs() <= span {
            continue;
        }
        if full(x) {
            last_in_class[class] = x;
            starts.push(x);
            if starts.len() == n {
                starts.sort_unstable();
                return Some(starts);
            }
        }
    }
    None
}
