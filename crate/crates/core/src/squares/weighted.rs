//! Weighted 3×3 systems `w_x·x + w_y·y + w_z·z = M`.
//!
//! The eight lines are read in the order rows, columns, main diagonal
//! `(a, e, i)`, anti-diagonal `(c, e, g)`, each left to right / top to
//! bottom, and the weights apply positionally along each line. Over the
//! rationals the solutions (cells plus `M`) form a linear space; the scan
//! fixes its free cells to marked values and solves for the rest exactly.

use std::collections::BTreeSet;

use num_rational::Ratio;
use serde::Serialize;

use super::{Result, SquareError};
use crate::MarkedSet;

/// Cell indices (row-major) of the eight lines.
pub const LINES: [[usize; 3]; 8] = [
    [0, 1, 2],
    [3, 4, 5],
    [6, 7, 8],
    [0, 3, 6],
    [1, 4, 7],
    [2, 5, 8],
    [0, 4, 8],
    [2, 4, 6],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WeightedSystem {
    weights: [u64; 3],
    /// Required line value; `None` accepts any `M`.
    target: Option<i64>,
}

impl WeightedSystem {
    pub fn new(weights: [u64; 3], target: Option<i64>) -> Result<Self> {
        if weights.contains(&0) {
            return Err(SquareError::InvalidWeights);
        }
        Ok(WeightedSystem { weights, target })
    }

    pub fn weights(&self) -> [u64; 3] {
        self.weights
    }

    pub fn target(&self) -> Option<i64> {
        self.target
    }

    /// How many stretched copies of the 3×3 pattern a solution exhibits:
    /// the number of distinct weight values.
    pub fn occurrences(&self) -> usize {
        self.weights.iter().collect::<BTreeSet<_>>().len()
    }

    /// Contraction factors `w_max / w_other` of the two remaining copies
    /// relative to the most stretched one.
    pub fn contraction_factors(&self) -> (Ratio<u64>, Ratio<u64>) {
        let mut w = self.weights;
        w.sort_unstable();
        (Ratio::new(w[2], w[0]), Ratio::new(w[2], w[1]))
    }

    /// Line value of `grid` if all eight weighted lines agree.
    pub fn line_value(&self, grid: &[i64; 9]) -> Option<i64> {
        let w = self.weights.map(|x| x as i64);
        let value = |l: &[usize; 3]| w[0] * grid[l[0]] + w[1] * grid[l[1]] + w[2] * grid[l[2]];
        let m = value(&LINES[0]);
        LINES.iter().all(|l| value(l) == m).then_some(m)
    }

    /// Exact affine solution map: every cell as a combination of the free
    /// cells. Columns are `[M, a, …, i]`.
    fn solution_map(&self) -> (Vec<usize>, Vec<Vec<Ratio<i64>>>) {
        const COLS: usize = 10;
        let w = self.weights.map(|x| Ratio::from_integer(x as i64));
        let mut rows: Vec<Vec<Ratio<i64>>> = LINES
            .iter()
            .map(|l| {
                let mut r = vec![Ratio::from_integer(0); COLS];
                r[0] = Ratio::from_integer(-1);
                for (slot, &cell) in l.iter().enumerate() {
                    r[cell + 1] += w[slot];
                }
                r
            })
            .collect();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..COLS {
            let Some(p) = (row..rows.len()).find(|&r| rows[r][col] != Ratio::from_integer(0))
            else {
                continue;
            };
            rows.swap(row, p);
            let lead = rows[row][col];
            for x in rows[row].iter_mut() {
                *x /= lead;
            }
            let pivot = rows[row].clone();
            for (r, other) in rows.iter_mut().enumerate() {
                if r != row && other[col] != Ratio::from_integer(0) {
                    let f = other[col];
                    for (x, &p) in other.iter_mut().zip(&pivot) {
                        *x -= f * p;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        let free: Vec<usize> = (0..COLS).filter(|c| !pivots.contains(c)).collect();
        debug_assert!(!free.contains(&0), "M is always determined by the cells");
        // coefficient of each free variable in every column
        let mut map = vec![vec![Ratio::from_integer(0); free.len()]; COLS];
        for (fi, &f) in free.iter().enumerate() {
            map[f][fi] = Ratio::from_integer(1);
        }
        for (r, &p) in pivots.iter().enumerate() {
            for (fi, &f) in free.iter().enumerate() {
                map[p][fi] = -rows[r][f];
            }
        }
        (free.into_iter().map(|c| c - 1).collect(), map)
    }
}

/// A verified weighted solution: nine distinct marked integers, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct WeightedSolution {
    pub grid: [i64; 9],
    pub magic_sum: i64,
}

/// All grids of nine distinct marked values satisfying the weighted system.
pub fn weighted_pattern_scan(sys: &WeightedSystem, set: &MarkedSet) -> Vec<WeightedSolution> {
    let marked: Vec<i64> = set.iter().map(|x| x as i64).collect();
    let (free, map) = sys.solution_map();
    let mut found = BTreeSet::new();
    let mut choice = vec![0i64; free.len()];
    scan(sys, set, &marked, &map, &mut choice, 0, &mut found);
    found.into_iter().collect()
}

fn scan(
    sys: &WeightedSystem,
    set: &MarkedSet,
    marked: &[i64],
    map: &[Vec<Ratio<i64>>],
    choice: &mut Vec<i64>,
    depth: usize,
    found: &mut BTreeSet<WeightedSolution>,
) {
    if depth == choice.len() {
        if let Some(sol) = evaluate(sys, set, map, choice) {
            found.insert(sol);
        }
        return;
    }
    for &v in marked {
        if choice[..depth].contains(&v) {
            continue;
        }
        choice[depth] = v;
        scan(sys, set, marked, map, choice, depth + 1, found);
    }
}

fn evaluate(
    sys: &WeightedSystem,
    set: &MarkedSet,
    map: &[Vec<Ratio<i64>>],
    choice: &[i64],
) -> Option<WeightedSolution> {
    let value = |col: usize| -> Option<i64> {
        let v: Ratio<i64> = map[col]
            .iter()
            .zip(choice)
            .map(|(c, &x)| c * Ratio::from_integer(x))
            .sum();
        v.is_integer().then(|| v.to_integer())
    };
    let m = value(0)?;
    if sys.target.is_some_and(|t| t != m) {
        return None;
    }
    let mut grid = [0i64; 9];
    for (cell, slot) in grid.iter_mut().enumerate() {
        let v = value(cell + 1)?;
        if v < 1 || !set.contains(v as u64) {
            return None;
        }
        *slot = v;
    }
    if grid.iter().collect::<BTreeSet<_>>().len() != 9 {
        return None;
    }
    (sys.line_value(&grid) == Some(m)).then_some(WeightedSolution { grid, magic_sum: m })
}
