//! Magic-square data model and the periodic constructions.
//!
//! A 3×3 magic square is always nine integers `l + i·k + j·K`
//! (`i, j ∈ {0,1,2}`): three arithmetic progressions of step `k` whose
//! middle terms step by `K`, with the centre cell equal to `M/3`.
//! [`Pattern3x3`] captures that triple and converts both ways.
//!
//! For orders `n ≥ 4`, `n ≠ 6`, any `n` disjoint arithmetic progressions of
//! length `n` with a common step become a magic square by superimposing an
//! orthogonal pair of diagonal Latin squares ([`latin`]): one square picks
//! the progression, the other picks the position inside it.

pub mod latin;
pub mod weighted;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use latin::{diagonal_latin_pair, DiagonalLatinSquare};
pub use weighted::{weighted_pattern_scan, WeightedSolution, WeightedSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SquareError {
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("grid is not square: row {row} has {len} entries, expected {expected}")]
    Shape {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("degenerate pattern, colliding (i,j) cells: {collisions:?}")]
    Degenerate {
        collisions: Vec<((u8, u8), (u8, u8))>,
    },
    #[error("not a valid input square: {0}")]
    Validation(String),
    #[error("order {0} is not supported by this construction")]
    UnsupportedOrder(usize),
    #[error("invalid progression family: {0}")]
    Family(String),
    #[error("entry collision after construction: {0}")]
    Collision(i64),
    #[error("weights must be positive")]
    InvalidWeights,
    #[error(
        "no orthogonal diagonal Latin pair of order {order} found within {nodes} search nodes"
    )]
    SearchExhausted { order: usize, nodes: u64 },
}

pub type Result<T> = std::result::Result<T, SquareError>;

/// `n(n²+1)/2`, the line sum of a normal square of order `n`.
pub fn magic_constant(n: u64) -> Result<i64> {
    if n == 0 {
        return Err(SquareError::ZeroOrder);
    }
    let n = n as i64;
    Ok(n * (n * n + 1) / 2)
}

/// Outcome of [`validate_square`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Validation {
    pub is_magic: bool,
    pub magic_sum: Option<i64>,
}

fn check_shape(grid: &[Vec<i64>]) -> Result<usize> {
    let n = grid.len();
    if n == 0 {
        return Err(SquareError::ZeroOrder);
    }
    for (row, r) in grid.iter().enumerate() {
        if r.len() != n {
            return Err(SquareError::Shape {
                row,
                len: r.len(),
                expected: n,
            });
        }
    }
    Ok(n)
}

fn line_sums_agree(n: usize, at: impl Fn(usize, usize) -> i64) -> Option<i64> {
    let target: i64 = (0..n).map(|c| at(0, c)).sum();
    let rows = (0..n).all(|r| (0..n).map(|c| at(r, c)).sum::<i64>() == target);
    let cols = (0..n).all(|c| (0..n).map(|r| at(r, c)).sum::<i64>() == target);
    let diag: i64 = (0..n).map(|i| at(i, i)).sum();
    let anti: i64 = (0..n).map(|i| at(i, n - 1 - i)).sum();
    (rows && cols && diag == target && anti == target).then_some(target)
}

/// Checks distinctness and all `2n+2` line sums.
pub fn validate_square(grid: &[Vec<i64>]) -> Result<Validation> {
    let n = check_shape(grid)?;
    let distinct = grid.iter().flatten().collect::<BTreeSet<_>>().len() == n * n;
    let sum = if distinct {
        line_sums_agree(n, |r, c| grid[r][c])
    } else {
        None
    };
    Ok(Validation {
        is_magic: sum.is_some(),
        magic_sum: sum,
    })
}

/// A validated magic square. Construction always goes through
/// [`validate_square`], so every value of this type is magic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SquareRecord")]
pub struct MagicSquare {
    order: usize,
    entries: Vec<i64>,
    magic_sum: i64,
}

#[derive(Deserialize)]
struct SquareRecord {
    order: usize,
    entries: Vec<i64>,
    #[serde(default)]
    magic_sum: Option<i64>,
}

impl TryFrom<SquareRecord> for MagicSquare {
    type Error = SquareError;

    fn try_from(rec: SquareRecord) -> Result<Self> {
        if rec.order == 0 || rec.entries.len() != rec.order * rec.order {
            return Err(SquareError::Validation(format!(
                "order {} does not match {} entries",
                rec.order,
                rec.entries.len()
            )));
        }
        let sq = MagicSquare::from_row_major(rec.order, rec.entries)?;
        match rec.magic_sum {
            Some(m) if m != sq.magic_sum => Err(SquareError::Validation(format!(
                "declared magic sum {m} but lines sum to {}",
                sq.magic_sum
            ))),
            _ => Ok(sq),
        }
    }
}

impl MagicSquare {
    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let n = check_shape(&rows)?;
        Self::from_row_major(n, rows.into_iter().flatten().collect())
    }

    pub fn from_row_major(order: usize, entries: Vec<i64>) -> Result<Self> {
        if order == 0 {
            return Err(SquareError::ZeroOrder);
        }
        if entries.len() != order * order {
            return Err(SquareError::Validation(format!(
                "expected {} entries, got {}",
                order * order,
                entries.len()
            )));
        }
        let rows: Vec<Vec<i64>> = entries.chunks(order).map(<[i64]>::to_vec).collect();
        match validate_square(&rows)? {
            Validation {
                magic_sum: Some(magic_sum),
                ..
            } => Ok(MagicSquare {
                order,
                entries,
                magic_sum,
            }),
            _ => Err(SquareError::Validation("grid is not magic".into())),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn magic_sum(&self) -> i64 {
        self.magic_sum
    }

    pub fn entry(&self, row: usize, col: usize) -> i64 {
        self.entries[row * self.order + col]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries
            .chunks(self.order)
            .map(<[i64]>::to_vec)
            .collect()
    }

    pub fn sorted_entries(&self) -> Vec<i64> {
        let mut v = self.entries.clone();
        v.sort_unstable();
        v
    }

    /// Whitespace-aligned plain-text grid, one row per line.
    pub fn to_text(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.to_string().len())
            .max()
            .unwrap_or(1);
        let mut out = String::new();
        for row in self.entries.chunks(self.order) {
            let cells: Vec<String> = row.iter().map(|e| format!("{e:>width$}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for MagicSquare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// The nine-integer pattern `{l + i·k + j·K}` behind every 3×3 magic square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern3x3 {
    /// Smallest of the nine integers.
    pub base: i64,
    /// Common difference inside each length-3 progression (`k`).
    pub inner_step: i64,
    /// Common difference of the progression of middle terms (`K`).
    pub outer_step: i64,
}

impl Pattern3x3 {
    pub fn new(base: i64, inner_step: i64, outer_step: i64) -> Self {
        Pattern3x3 {
            base,
            inner_step,
            outer_step,
        }
    }

    /// The value at offset `(i, j)`: `l + i·k + j·K`.
    pub fn value(&self, i: u8, j: u8) -> i64 {
        self.base + i64::from(i) * self.inner_step + i64::from(j) * self.outer_step
    }

    pub fn center(&self) -> i64 {
        self.base + self.inner_step + self.outer_step
    }

    fn collisions(&self) -> Vec<((u8, u8), (u8, u8))> {
        let cells: Vec<(u8, u8)> = (0..3).flat_map(|j| (0..3).map(move |i| (i, j))).collect();
        let mut hits = Vec::new();
        for (a, &p) in cells.iter().enumerate() {
            for &r in &cells[a + 1..] {
                if self.value(p.0, p.1) == self.value(r.0, r.1) {
                    hits.push((p, r));
                }
            }
        }
        hits
    }

    /// The nine values, ascending. Fails when any two `(i,j)` cells coincide.
    pub fn generate(&self) -> Result<[i64; 9]> {
        let collisions = self.collisions();
        if !collisions.is_empty() {
            return Err(SquareError::Degenerate { collisions });
        }
        let mut out = [0i64; 9];
        for (slot, (i, j)) in out
            .iter_mut()
            .zip((0..3u8).flat_map(|j| (0..3u8).map(move |i| (i, j))))
        {
            *slot = self.value(i, j);
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Lays the pattern out in the centre form
    /// `[[c+K, c−K−k, c+k], [c−K+k, c, c+K−k], [c−k, c+K+k, c−K]]`.
    pub fn to_square(&self) -> Result<MagicSquare> {
        if self.inner_step <= 0 || self.outer_step <= 0 {
            return Err(SquareError::Degenerate {
                collisions: self.collisions(),
            });
        }
        self.generate()?;
        let (c, k, kk) = (self.center(), self.inner_step, self.outer_step);
        MagicSquare::from_rows(vec![
            vec![c + kk, c - kk - k, c + k],
            vec![c - kk + k, c, c + kk - k],
            vec![c - k, c + kk + k, c - kk],
        ])
    }
}

/// Reads `(l, k, K)` off a 3×3 magic square.
///
/// Every 3×3 magic square with centre `c` has the centre form with signed
/// offsets `K = top_left − c` and `k = top_right − c`; the pattern takes
/// their absolute values. This inverts [`Pattern3x3::to_square`] exactly.
pub fn decompose_3x3(square: &MagicSquare) -> Result<Pattern3x3> {
    if square.order() != 3 {
        return Err(SquareError::Validation(format!(
            "expected order 3, got {}",
            square.order()
        )));
    }
    let c = square.entry(1, 1);
    if 3 * c != square.magic_sum() {
        return Err(SquareError::Validation("centre differs from M/3".into()));
    }
    let big = square.entry(0, 0) - c;
    let small = square.entry(0, 2) - c;
    let form = [
        c + big,
        c - big - small,
        c + small,
        c - big + small,
        c,
        c + big - small,
        c - small,
        c + big + small,
        c - big,
    ];
    if form != square.entries() {
        return Err(SquareError::Validation(
            "square does not match the centre form".into(),
        ));
    }
    let (k, kk) = (small.abs(), big.abs());
    let pattern = Pattern3x3::new(c - k - kk, k, kk);
    debug_assert_eq!(pattern.generate().ok(), Some(sorted9(square.entries())));
    Ok(pattern)
}

fn sorted9(entries: &[i64]) -> [i64; 9] {
    let mut out = [0; 9];
    out.copy_from_slice(entries);
    out.sort_unstable();
    out
}

/// `n` arithmetic progressions `A_j = {l_j, l_j+k, …, l_j+(n−1)k}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FamilyRecord")]
pub struct ProgressionFamily {
    n: usize,
    k: i64,
    starts: Vec<i64>,
}

#[derive(Deserialize)]
struct FamilyRecord {
    n: usize,
    k: i64,
    starts: Vec<i64>,
}

impl TryFrom<FamilyRecord> for ProgressionFamily {
    type Error = SquareError;
    fn try_from(r: FamilyRecord) -> Result<Self> {
        ProgressionFamily::new(r.n, r.k, r.starts)
    }
}

impl ProgressionFamily {
    /// Validates strictly increasing starts, a positive step and pairwise
    /// disjoint progressions.
    pub fn new(n: usize, k: i64, starts: Vec<i64>) -> Result<Self> {
        if starts.len() != n {
            return Err(SquareError::Family(format!(
                "{} starts for {n} progressions",
                starts.len()
            )));
        }
        if k < 1 {
            return Err(SquareError::Family(format!(
                "step must be positive, got {k}"
            )));
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SquareError::Family(
                "starts must be strictly increasing".into(),
            ));
        }
        let span = (n as i64 - 1) * k;
        for (a, &x) in starts.iter().enumerate() {
            for &y in &starts[a + 1..] {
                let d = y - x;
                if d % k == 0 && d <= span {
                    return Err(SquareError::Family(format!(
                        "progressions starting at {x} and {y} overlap"
                    )));
                }
            }
        }
        Ok(ProgressionFamily { n, k, starts })
    }

    /// `n` progressions whose starts are `first + j·spacing`.
    pub fn equally_spaced(n: usize, k: i64, first: i64, spacing: i64) -> Result<Self> {
        Self::new(n, k, (0..n as i64).map(|j| first + j * spacing).collect())
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> i64 {
        self.k
    }

    pub fn starts(&self) -> &[i64] {
        &self.starts
    }

    /// The `j`-th progression (0-based).
    pub fn progression(&self, j: usize) -> impl Iterator<Item = i64> + '_ {
        let l = self.starts[j];
        (0..self.n as i64).map(move |i| l + i * self.k)
    }

    /// All `n²` elements, grouped by progression.
    pub fn elements(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.n).flat_map(move |j| self.progression(j))
    }

    pub fn min_element(&self) -> Option<i64> {
        self.starts.first().copied()
    }

    pub fn max_element(&self) -> Option<i64> {
        self.elements().max()
    }

    /// Same family with start `j` moved by `delta`.
    pub fn shifted(&self, j: usize, delta: i64) -> Result<Self> {
        let mut starts = self.starts.clone();
        starts[j] += delta;
        Self::new(self.n, self.k, starts)
    }
}

/// Greedy fiber partition of `[n²]`.
///
/// `Fiber(r)` holds the members of `[n²]` congruent to `r` mod `n`; class
/// `C_i` takes the smallest element not yet used from every fiber.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiberPartition {
    pub classes: Vec<Vec<u64>>,
    pub maxima: Vec<u64>,
}

pub fn fiber_partition(n: u64) -> Result<FiberPartition> {
    if n == 0 {
        return Err(SquareError::ZeroOrder);
    }
    let mut fibers: Vec<std::collections::VecDeque<u64>> = (0..n)
        .map(|r| (1..=n * n).filter(|m| m % n == r).collect())
        .collect();
    let mut classes = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut class: Vec<u64> = fibers.iter_mut().filter_map(|f| f.pop_front()).collect();
        class.sort_unstable();
        classes.push(class);
    }
    let maxima = classes
        .iter()
        .map(|c| *c.last().expect("non-empty"))
        .collect();
    Ok(FiberPartition { classes, maxima })
}

/// Builds an order-`n` magic square from `n` disjoint progressions.
///
/// The first Latin square selects progression `j` and the second the
/// position `s ∈ {1..n}` inside it; cell value is `max(A_j) − (s−1)·k`,
/// so the entries are exactly the union of the progressions.
pub fn construct_order_n(family: &ProgressionFamily) -> Result<MagicSquare> {
    let n = family.order();
    if n < 4 || n == 6 {
        return Err(SquareError::UnsupportedOrder(n));
    }
    let (select, position) = diagonal_latin_pair(n)?;
    let k = family.step();
    let mut entries = Vec::with_capacity(n * n);
    let mut seen = BTreeSet::new();
    for r in 0..n {
        for c in 0..n {
            let j = select.symbol(r, c) - 1;
            let s = position.symbol(r, c) as i64;
            let v = family.starts()[j] + (n as i64 - s) * k;
            if !seen.insert(v) {
                return Err(SquareError::Collision(v));
            }
            entries.push(v);
        }
    }
    MagicSquare::from_row_major(n, entries)
}

/// Every 3×3 pattern `(l, k, K)` with `k < K` whose nine values are all
/// marked. Each unordered pattern is reported once.
pub fn pattern3x3_scan(set: &crate::MarkedSet) -> Vec<Pattern3x3> {
    let marked: Vec<i64> = set.iter().map(|x| x as i64).collect();
    let top = match marked.last() {
        Some(&t) => t,
        None => return Vec::new(),
    };
    let is = |x: i64| x >= 1 && set.contains(x as u64);
    let mut found = Vec::new();
    for &l in &marked {
        for &lk in marked.iter().filter(|&&x| x > l) {
            let k = lk - l;
            if l + 4 * k > top || !is(l + 2 * k) {
                continue;
            }
            for &lkk in marked.iter().filter(|&&x| x > l + 2 * k) {
                let kk = lkk - l;
                if l + 2 * k + 2 * kk > top {
                    break;
                }
                let p = Pattern3x3::new(l, k, kk);
                if p.generate().is_ok() && (0..3).all(|j| (0..3).all(|i| is(p.value(i, j)))) {
                    found.push(p);
                }
            }
        }
    }
    found
}
