//! Orthogonal pairs of diagonal Latin squares.
//!
//! Constructions, tried in order:
//!
//! 1. `gcd(n, 6) = 1`: the linear pair `(i + 2j) mod n`, `(2i + j) mod n`.
//! 2. prime powers `q ≥ 4`: `L_a(i, j) = a·i + j` over GF(q) with
//!    `a ∉ {0, 1, −1}`. Indices are base-`p` digit vectors, so the
//!    anti-diagonal `j = q−1−i` is `j = −i + (q−1)` in the additive group.
//! 3. direct products of two supported orders.
//! 4. `n ≢ 2 (mod 4)`: a Cayley table of `GF(2^a) × Z_m` with searched row
//!    and column orders, completed by a searched mate (see [`group_pair`]).
//!
//! Anything else falls back to a seeded search: draw a diagonal Latin
//! square, enumerate its transversals that meet each diagonal once, and
//! exact-cover the grid with `n` of them. Random squares of order 10 rarely
//! have a diagonal mate, so that order usually ends in
//! [`SquareError::SearchExhausted`].
//!
//! Results are memoised per order in a process-wide read-mostly table.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{Result, SquareError};
use crate::rng;

/// Node budget for the fallback search.
pub const SEARCH_NODE_BUDGET: u64 = 50_000_000;

/// `n × n` grid over symbols `1..=n`, Latin in rows and columns, with both
/// main diagonals transversals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiagonalLatinSquare {
    order: usize,
    symbols: Vec<usize>,
}

impl DiagonalLatinSquare {
    /// Checks the Latin and diagonal properties.
    pub fn new(order: usize, symbols: Vec<usize>) -> Result<Self> {
        let sq = DiagonalLatinSquare { order, symbols };
        if sq.symbols.len() != order * order
            || sq.symbols.iter().any(|&s| s == 0 || s > order)
            || !sq.is_latin()
            || !sq.is_diagonal()
        {
            return Err(SquareError::Validation(
                "not a diagonal Latin square".into(),
            ));
        }
        Ok(sq)
    }

    fn from_zero_based(order: usize, cells: Vec<usize>) -> Self {
        let sq = DiagonalLatinSquare {
            order,
            symbols: cells.into_iter().map(|s| s + 1).collect(),
        };
        debug_assert!(sq.is_latin() && sq.is_diagonal());
        sq
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn symbol(&self, row: usize, col: usize) -> usize {
        self.symbols[row * self.order + col]
    }

    fn all_distinct(&self, cells: impl Iterator<Item = (usize, usize)>) -> bool {
        let mut seen = vec![false; self.order + 1];
        for (r, c) in cells {
            let s = self.symbol(r, c);
            if seen[s] {
                return false;
            }
            seen[s] = true;
        }
        true
    }

    pub fn is_latin(&self) -> bool {
        let n = self.order;
        (0..n).all(|r| self.all_distinct((0..n).map(|c| (r, c))))
            && (0..n).all(|c| self.all_distinct((0..n).map(|r| (r, c))))
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.order;
        self.all_distinct((0..n).map(|i| (i, i)))
            && self.all_distinct((0..n).map(|i| (i, n - 1 - i)))
    }

    /// Superposition yields all `n²` distinct symbol pairs.
    pub fn is_orthogonal_to(&self, other: &DiagonalLatinSquare) -> bool {
        if self.order != other.order {
            return false;
        }
        let n = self.order;
        let mut seen = vec![false; n * n];
        for (a, b) in self.symbols.iter().zip(&other.symbols) {
            let idx = (a - 1) * n + (b - 1);
            if seen[idx] {
                return false;
            }
            seen[idx] = true;
        }
        true
    }
}

type Pair = (DiagonalLatinSquare, DiagonalLatinSquare);

fn cache() -> &'static RwLock<HashMap<usize, Arc<Pair>>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Pair>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// An orthogonal pair of diagonal Latin squares of order `n`.
///
/// Orders 1, 2, 3 and 6 have no such pair and are rejected.
pub fn diagonal_latin_pair(n: usize) -> Result<Pair> {
    if n < 4 || n == 6 {
        return Err(SquareError::UnsupportedOrder(n));
    }
    if let Some(hit) = cache().read().expect("latin cache poisoned").get(&n) {
        return Ok((**hit).clone());
    }
    let (a, b) = build_pair(n)?;
    let pair = (
        DiagonalLatinSquare::from_zero_based(n, a),
        DiagonalLatinSquare::from_zero_based(n, b),
    );
    debug_assert!(pair.0.is_orthogonal_to(&pair.1));
    cache()
        .write()
        .expect("latin cache poisoned")
        .insert(n, Arc::new(pair.clone()));
    Ok(pair)
}

type RawPair = (Vec<usize>, Vec<usize>);

fn build_pair(n: usize) -> Result<RawPair> {
    if gcd(n, 6) == 1 {
        return Ok(linear_pair(n));
    }
    if let Some((p, m)) = prime_power(n) {
        return Ok(field_pair(p, m));
    }
    if let Some(pair) = product_pair(n)? {
        return Ok(pair);
    }
    if n % 4 != 2 {
        if let Some(pair) = group_pair(n, SEARCH_NODE_BUDGET, 0x5eed_0000 + n as u64) {
            return Ok(pair);
        }
    }
    search_pair(n, SEARCH_NODE_BUDGET, 0x5eed_0000 + n as u64)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn linear_pair(n: usize) -> RawPair {
    let cell = |a: usize, b: usize| -> Vec<usize> {
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (a * i + b * j) % n))
            .collect()
    };
    (cell(1, 2), cell(2, 1))
}

fn prime_power(n: usize) -> Option<(usize, usize)> {
    let p = (2..=n).find(|&d| n.is_multiple_of(d))?;
    let mut m = 0;
    let mut r = n;
    while r.is_multiple_of(p) {
        r /= p;
        m += 1;
    }
    (r == 1).then_some((p, m))
}

/// GF(p^m) with elements encoded as little-endian base-`p` digit strings.
struct Field {
    q: usize,
    add: Vec<usize>,
    mul: Vec<usize>,
}

impl Field {
    fn new(p: usize, m: usize) -> Self {
        let q = p.pow(m as u32);
        let digits = |x: usize| -> Vec<usize> {
            let mut d = Vec::with_capacity(m);
            let mut x = x;
            for _ in 0..m {
                d.push(x % p);
                x /= p;
            }
            d
        };
        let undigits = |d: &[usize]| d.iter().rev().fold(0, |acc, &x| acc * p + x);
        let modulus = irreducible(p, m);
        let mut add = vec![0; q * q];
        let mut mul = vec![0; q * q];
        for a in 0..q {
            let da = digits(a);
            for b in 0..q {
                let db = digits(b);
                let sum: Vec<usize> = da.iter().zip(&db).map(|(x, y)| (x + y) % p).collect();
                add[a * q + b] = undigits(&sum);
                mul[a * q + b] = undigits(&poly_mulmod(&da, &db, &modulus, p));
            }
        }
        Field { q, add, mul }
    }

    fn add(&self, a: usize, b: usize) -> usize {
        self.add[a * self.q + b]
    }

    fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.q + b]
    }

    fn neg(&self, a: usize) -> usize {
        (0..self.q)
            .find(|&b| self.add(a, b) == 0)
            .expect("additive inverse")
    }
}

/// Remainder of `a` modulo monic `m` over GF(p); coefficients little-endian.
fn poly_rem(a: &[usize], m: &[usize], p: usize) -> Vec<usize> {
    let deg = m.len() - 1;
    let mut r = a.to_vec();
    while r.len() > deg {
        let lead = r.pop().expect("non-empty");
        if lead != 0 {
            let off = r.len() - deg;
            for (i, &c) in m[..deg].iter().enumerate() {
                r[off + i] = (r[off + i] + p * p - lead * c % p) % p;
            }
        }
    }
    r.resize(deg, 0);
    r
}

fn poly_mulmod(a: &[usize], b: &[usize], m: &[usize], p: usize) -> Vec<usize> {
    let mut prod = vec![0; a.len() + b.len()];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + x * y) % p;
        }
    }
    poly_rem(&prod, m, p)
}

/// First monic irreducible polynomial of degree `m` over GF(p), found by
/// trial division by every monic polynomial of degree `1..=m/2`.
fn irreducible(p: usize, m: usize) -> Vec<usize> {
    let monic = |deg: usize, idx: usize| -> Vec<usize> {
        let mut c = Vec::with_capacity(deg + 1);
        let mut x = idx;
        for _ in 0..deg {
            c.push(x % p);
            x /= p;
        }
        c.push(1);
        c
    };
    'cand: for idx in 0..p.pow(m as u32) {
        let f = monic(m, idx);
        for d in 1..=m / 2 {
            for g_idx in 0..p.pow(d as u32) {
                let g = monic(d, g_idx);
                if poly_rem(&f, &g, p).iter().all(|&c| c == 0) {
                    continue 'cand;
                }
            }
        }
        return f;
    }
    unreachable!("irreducible polynomials exist in every degree")
}

fn field_pair(p: usize, m: usize) -> RawPair {
    let f = Field::new(p, m);
    let q = f.q;
    let minus_one = f.neg(1);
    let mut coeffs = (2..q).filter(|&a| a != minus_one);
    let a = coeffs.next().expect("q >= 4");
    let b = coeffs.next().expect("q >= 4");
    let square = |a: usize| -> Vec<usize> {
        (0..q)
            .flat_map(|i| (0..q).map(move |j| (i, j)))
            .map(|(i, j)| f.add(f.mul(a, i), j))
            .collect()
    };
    (square(a), square(b))
}

fn product_pair(n: usize) -> Result<Option<RawPair>> {
    let split = (4..n)
        .filter(|&a| n.is_multiple_of(a))
        .map(|a| (a, n / a))
        .find(|&(a, b)| a >= 4 && b >= 4 && a != 6 && b != 6);
    let Some((a, b)) = split else {
        return Ok(None);
    };
    let (x1, x2) = diagonal_latin_pair(a)?;
    let (y1, y2) = diagonal_latin_pair(b)?;
    let combine = |x: &DiagonalLatinSquare, y: &DiagonalLatinSquare| -> Vec<usize> {
        let mut out = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (i1, i2) = (i / b, i % b);
                let (j1, j2) = (j / b, j % b);
                out[i * n + j] = (x.symbol(i1, j1) - 1) * b + (y.symbol(i2, j2) - 1);
            }
        }
        out
    };
    Ok(Some((combine(&x1, &y1), combine(&x2, &y2))))
}

/// Additive group `GF(2^a) × Z_m` on indices `u·m + v`; the `GF(2^a)`
/// part adds by XOR.
struct Group {
    n: usize,
    m: usize,
}

impl Group {
    /// `n = 2^a·m` with `m` odd and `a ≠ 1`.
    fn new(n: usize) -> Option<Self> {
        let a = n.trailing_zeros() as usize;
        (a != 1).then_some(Group { n, m: n >> a })
    }

    fn add(&self, x: usize, y: usize) -> usize {
        let m = self.m;
        ((x / m) ^ (y / m)) * m + (x % m + y % m) % m
    }

    /// Column order `c` making `i ↦ row(i) + c_i` and
    /// `i ↦ row(i) + c_{n−1−i}` bijective for every row map given.
    fn diagonal_columns(
        &self,
        row_maps: &[Vec<usize>],
        order: &[usize],
        budget: &mut Budget,
    ) -> Option<Vec<usize>> {
        struct St<'a> {
            g: &'a Group,
            maps: &'a [Vec<usize>],
            order: &'a [usize],
            cols: Vec<usize>,
            used: Vec<bool>,
            // per map: main-diagonal and anti-diagonal symbols in use
            seen: Vec<[Vec<bool>; 2]>,
        }
        impl St<'_> {
            fn keys(&self, i: usize, main: usize, anti: usize) -> Vec<[usize; 2]> {
                self.maps
                    .iter()
                    .map(|r| [self.g.add(r[i], main), self.g.add(r[i], anti)])
                    .collect()
            }
            fn free(&self, k: &[[usize; 2]]) -> bool {
                self.seen
                    .iter()
                    .zip(k)
                    .all(|(s, k)| !s[0][k[0]] && !s[1][k[1]])
            }
            fn mark(&mut self, k: &[[usize; 2]], on: bool) {
                for (s, k) in self.seen.iter_mut().zip(k) {
                    s[0][k[0]] = on;
                    s[1][k[1]] = on;
                }
            }
        }
        fn go(st: &mut St<'_>, i: usize, budget: &mut Budget) -> Option<bool> {
            let n = st.g.n;
            let mirror = n - 1 - i;
            if i > mirror {
                return Some(true);
            }
            if !budget.tick() {
                return None;
            }
            for x in 0..n {
                let ci = st.order[(i * 7 + x) % n];
                if st.used[ci] {
                    continue;
                }
                st.used[ci] = true;
                let partners: Vec<usize> = if i == mirror {
                    vec![ci]
                } else {
                    (0..n).map(|y| st.order[(mirror * 5 + y) % n]).collect()
                };
                for cm in partners {
                    if i != mirror && st.used[cm] {
                        continue;
                    }
                    // row i uses (c_i, c_mirror) and row mirror uses (c_mirror, c_i)
                    let ki = st.keys(i, ci, cm);
                    let km = st.keys(mirror, cm, ci);
                    let clash = i != mirror
                        && ki
                            .iter()
                            .zip(&km)
                            .any(|(p, q)| p[0] == q[0] || p[1] == q[1]);
                    if clash || !st.free(&ki) || (i != mirror && !st.free(&km)) {
                        continue;
                    }
                    st.mark(&ki, true);
                    if i != mirror {
                        st.mark(&km, true);
                    }
                    st.used[cm] = true;
                    st.cols[i] = ci;
                    st.cols[mirror] = cm;
                    match go(st, i + 1, budget) {
                        Some(false) => {}
                        other => return other,
                    }
                    if i != mirror {
                        st.used[cm] = false;
                        st.mark(&km, false);
                    }
                    st.mark(&ki, false);
                }
                st.used[ci] = false;
            }
            Some(false)
        }
        let n = self.n;
        let mut st = St {
            g: self,
            maps: row_maps,
            order,
            cols: vec![0; n],
            used: vec![false; n],
            seen: row_maps
                .iter()
                .map(|_| [vec![false; n], vec![false; n]])
                .collect(),
        };
        match go(&mut st, 0, budget) {
            Some(true) => Some(st.cols),
            _ => None,
        }
    }
}

/// Orders `n = 2^a·m` (`m` odd, `a ≠ 1`): the Cayley table
/// `L1(i,j) = r_i + c_j` of [`Group`] with row and column orders searched
/// so that both diagonals are transversals, then a diagonal mate by exact
/// cover. Group tables carry far more transversals than random squares.
///
/// The Cayley mate `θ(r_i) + c_j` is not used: when `3 | m` the quadratic
/// sums over the `Z_3` part force it off the diagonal.
fn group_pair(n: usize, node_budget: u64, seed: u64) -> Option<RawPair> {
    let g = Group::new(n).filter(|_| n >= 4)?;
    let mut rng = rng::seeded(seed);
    let mut budget = Budget {
        left: node_budget,
        limit: node_budget,
    };
    let identity: Vec<usize> = (0..n).collect();
    while budget.left > 0 {
        let mut order = identity.clone();
        order.shuffle(&mut rng);
        let mut rows = identity.clone();
        rows.shuffle(&mut rng);
        let mut attempt = Budget {
            left: budget.left.min(ATTEMPT_BUDGET),
            limit: 0,
        };
        let found = g.diagonal_columns(std::slice::from_ref(&rows), &order, &mut attempt);
        budget.left -= budget.left.min(ATTEMPT_BUDGET) - attempt.left;
        let Some(cols) = found else { continue };
        let first: Vec<usize> = (0..n * n)
            .map(|c| g.add(rows[c / n], cols[c % n]))
            .collect();
        if let Some(second) = mate_by_cover(n, &first, &mut budget) {
            return Some((first, second));
        }
    }
    None
}

const ATTEMPT_BUDGET: u64 = 200_000;

/// A diagonal orthogonal mate of `first`, or `None` within the budget.
fn mate_by_cover(n: usize, first: &[usize], budget: &mut Budget) -> Option<Vec<usize>> {
    let transversals = diagonal_transversals(n, first, budget);
    let chosen = exact_cover(n, &transversals, budget)?;
    let mut second = vec![0; n * n];
    for (sym, &t) in chosen.iter().enumerate() {
        for (r, &c) in transversals[t].iter().enumerate() {
            second[r * n + c] = sym;
        }
    }
    Some(second)
}

struct Budget {
    left: u64,
    limit: u64,
}

impl Budget {
    fn tick(&mut self) -> bool {
        if self.left == 0 {
            return false;
        }
        self.left -= 1;
        true
    }
}

/// Seeded search: random diagonal Latin square, then an exact cover of the
/// grid by transversals that meet each diagonal exactly once.
pub(crate) fn search_pair(n: usize, node_budget: u64, seed: u64) -> Result<RawPair> {
    let mut budget = Budget {
        left: node_budget,
        limit: node_budget,
    };
    let mut rng = rng::seeded(seed);
    while budget.left > 0 {
        let Some(first) = random_diagonal_latin(n, &mut rng, &mut budget) else {
            break;
        };
        if let Some(second) = mate_by_cover(n, &first, &mut budget) {
            return Ok((first, second));
        }
    }
    Err(SquareError::SearchExhausted {
        order: n,
        nodes: budget.limit,
    })
}

fn random_diagonal_latin(
    n: usize,
    rng: &mut rng::SeededRng,
    budget: &mut Budget,
) -> Option<Vec<usize>> {
    struct St<'a> {
        n: usize,
        grid: Vec<usize>,
        row: Vec<u64>,
        col: Vec<u64>,
        diag: u64,
        anti: u64,
        orders: Vec<Vec<usize>>,
        budget: &'a mut Budget,
    }
    fn go(st: &mut St<'_>, cell: usize) -> Option<bool> {
        if cell == st.n * st.n {
            return Some(true);
        }
        if !st.budget.tick() {
            return None;
        }
        let (r, c) = (cell / st.n, cell % st.n);
        for idx in 0..st.n {
            let s = st.orders[cell][idx];
            let bit = 1u64 << s;
            let on_diag = r == c;
            let on_anti = r + c == st.n - 1;
            if st.row[r] & bit != 0
                || st.col[c] & bit != 0
                || (on_diag && st.diag & bit != 0)
                || (on_anti && st.anti & bit != 0)
            {
                continue;
            }
            st.row[r] |= bit;
            st.col[c] |= bit;
            if on_diag {
                st.diag |= bit;
            }
            if on_anti {
                st.anti |= bit;
            }
            st.grid[cell] = s;
            match go(st, cell + 1) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
            st.row[r] &= !bit;
            st.col[c] &= !bit;
            if on_diag {
                st.diag &= !bit;
            }
            if on_anti {
                st.anti &= !bit;
            }
        }
        Some(false)
    }
    let orders = (0..n * n)
        .map(|_| {
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(rng);
            v
        })
        .collect();
    let mut st = St {
        n,
        grid: vec![0; n * n],
        row: vec![0; n],
        col: vec![0; n],
        diag: 0,
        anti: 0,
        orders,
        budget,
    };
    match go(&mut st, 0) {
        Some(true) => Some(st.grid),
        _ => None,
    }
}

/// Transversals (one column per row) with distinct symbols that contain
/// exactly one main-diagonal and one anti-diagonal cell. Entry `r` is the
/// column used in row `r`.
fn diagonal_transversals(n: usize, grid: &[usize], budget: &mut Budget) -> Vec<Vec<usize>> {
    #[allow(clippy::too_many_arguments)]
    fn go(
        n: usize,
        grid: &[usize],
        r: usize,
        cols: u64,
        syms: u64,
        diag: u8,
        anti: u8,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        budget: &mut Budget,
    ) {
        if r == n {
            if diag == 1 && anti == 1 {
                out.push(path.clone());
            }
            return;
        }
        if !budget.tick() {
            return;
        }
        for c in 0..n {
            let s = grid[r * n + c];
            if cols >> c & 1 != 0 || syms >> s & 1 != 0 {
                continue;
            }
            let d = diag + u8::from(r == c);
            let a = anti + u8::from(r + c == n - 1);
            if d > 1 || a > 1 {
                continue;
            }
            path.push(c);
            go(
                n,
                grid,
                r + 1,
                cols | 1 << c,
                syms | 1 << s,
                d,
                a,
                path,
                out,
                budget,
            );
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(n, grid, 0, 0, 0, 0, 0, &mut Vec::new(), &mut out, budget);
    out
}

/// Algorithm X over the `n²` cells, with the live transversal list
/// filtered down at every level.
fn exact_cover(n: usize, transversals: &[Vec<usize>], budget: &mut Budget) -> Option<Vec<usize>> {
    let words = (n * n).div_ceil(64);
    let masks: Vec<Vec<u64>> = transversals
        .iter()
        .map(|tr| {
            let mut m = vec![0u64; words];
            for (r, &c) in tr.iter().enumerate() {
                let cell = r * n + c;
                m[cell / 64] |= 1 << (cell % 64);
            }
            m
        })
        .collect();
    let disjoint = |a: usize, b: usize| masks[a].iter().zip(&masks[b]).all(|(x, y)| x & y == 0);
    fn go(
        n: usize,
        transversals: &[Vec<usize>],
        disjoint: &dyn Fn(usize, usize) -> bool,
        live: &[usize],
        chosen: &mut Vec<usize>,
        budget: &mut Budget,
    ) -> Option<bool> {
        if chosen.len() == n {
            return Some(true);
        }
        if !budget.tick() {
            return None;
        }
        let mut counts = vec![0usize; n * n];
        for &t in live {
            for (r, &c) in transversals[t].iter().enumerate() {
                counts[r * n + c] += 1;
            }
        }
        // every cell of row `chosen.len()` is still uncovered in some row; pick the
        // uncovered cell with the fewest options
        let mut covered = vec![false; n * n];
        for &t in chosen.iter() {
            for (r, &c) in transversals[t].iter().enumerate() {
                covered[r * n + c] = true;
            }
        }
        let (cell, &best) = counts
            .iter()
            .enumerate()
            .filter(|&(cell, _)| !covered[cell])
            .min_by_key(|&(_, &k)| k)?;
        if best == 0 {
            return Some(false);
        }
        let (row, col) = (cell / n, cell % n);
        for &t in live.iter().filter(|&&t| transversals[t][row] == col) {
            let next: Vec<usize> = live.iter().copied().filter(|&u| disjoint(t, u)).collect();
            chosen.push(t);
            match go(n, transversals, disjoint, &next, chosen, budget) {
                Some(false) => {}
                other => return other.map(|_| true),
            }
            chosen.pop();
        }
        Some(false)
    }
    let live: Vec<usize> = (0..transversals.len()).collect();
    let mut chosen = Vec::new();
    match go(n, transversals, &disjoint, &live, &mut chosen, budget) {
        Some(true) => Some(chosen),
        _ => None,
    }
}
