//! Exact maximum-weight assignment on rectangular score matrices.
//!
//! The solver is a shortest-augmenting-path Hungarian method with row and
//! column potentials, run on negated scores. It augments once per row of
//! the smaller side, so an `m x n` problem costs `O(min(m,n)^2 * max(m,n))`
//! and needs no padding. Among optimal assignments the lexicographically
//! smallest row-sorted pair list is returned.

use crate::error::{Error, Result};

/// Dense row-major outputs x references matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::InvalidArgument("ragged score matrix".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Submatrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self::new(rows.len(), self.cols, data)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(p) => Err(Error::NonFiniteEntry {
                row: p / self.cols,
                col: p % self.cols,
            }),
            None => Ok(()),
        }
    }
}

/// An injective row -> column matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the matrix entries over `pairs`.
    pub objective: f64,
}

/// Minimum-cost assignment of every row of `cost` (`rows <= cols`) to a
/// distinct column. Returns the column of each row and the potentials
/// `(u, v)` with `u[i] + v[j] <= cost[i][j]`, tight on the matching.
fn hungarian_min(cost: &[f64], rows: usize, cols: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    debug_assert!(rows <= cols);
    // 1-based potentials; index 0 is the virtual source column
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            col_of[owner[j] - 1] = j - 1;
        }
    }
    (col_of, u[1..].to_vec(), v[1..].to_vec())
}

/// Optimal value of a maximum-weight matching of size `min(|rows|, |cols|)`
/// restricted to the given rows and columns.
fn restricted_optimum(m: &ScoreMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let (small, large, transposed) = if rows.len() <= cols.len() {
        (rows, cols, false)
    } else {
        (cols, rows, true)
    };
    let mut cost = Vec::with_capacity(small.len() * large.len());
    for &a in small {
        for &b in large {
            let x = if transposed { m.get(b, a) } else { m.get(a, b) };
            cost.push(-x);
        }
    }
    let (col_of, _, _) = hungarian_min(&cost, small.len(), large.len());
    col_of
        .iter()
        .enumerate()
        .map(|(a, &b)| {
            if transposed {
                m.get(large[b], small[a])
            } else {
                m.get(small[a], large[b])
            }
        })
        .sum()
}

/// Maximum-weight injective matching of size `min(rows, cols)`.
///
/// Ties between optimal matchings are broken towards the lexicographically
/// smallest row-sorted pair list, with optimality judged to a relative
/// tolerance of 1e-9.
pub fn solve_max(matrix: &ScoreMatrix) -> Result<Assignment> {
    matrix.check_finite()?;
    let (m, n) = (matrix.rows(), matrix.cols());
    let need = m.min(n);
    let all_rows: Vec<usize> = (0..m).collect();
    let all_cols: Vec<usize> = (0..n).collect();
    let optimum = restricted_optimum(matrix, &all_rows, &all_cols);
    let scale = 1.0 + matrix.data.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let eps = 1e-9 * scale * need as f64;

    let tight = tight_edges(matrix, eps);

    let mut pairs = Vec::with_capacity(need);
    let mut fixed_sum = 0.0;
    let mut free_rows = all_rows;
    let mut free_cols = all_cols;
    while pairs.len() < need {
        let remaining = need - pairs.len() - 1;
        let mut chosen = None;
        'search: for (ri, &r) in free_rows.iter().enumerate() {
            let later_rows = &free_rows[ri + 1..];
            if later_rows.len().min(free_cols.len() - 1) < remaining {
                // skipping this row leaves too few rows to finish
                break;
            }
            for (ci, &c) in free_cols.iter().enumerate() {
                if !tight[r * n + c] {
                    continue;
                }
                let rest_cols: Vec<usize> = free_cols
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != ci)
                    .map(|(_, &x)| x)
                    .collect();
                let rest = if remaining == 0 {
                    0.0
                } else {
                    restricted_optimum(matrix, later_rows, &rest_cols)
                };
                if fixed_sum + matrix.get(r, c) + rest >= optimum - eps {
                    chosen = Some((ri, ci));
                    break 'search;
                }
            }
        }
        let (ri, ci) = chosen.expect("an optimal completion always exists");
        let (r, c) = (free_rows[ri], free_cols.remove(ci));
        free_rows.drain(..=ri);
        fixed_sum += matrix.get(r, c);
        pairs.push((r, c));
    }
    let objective = pairs.iter().map(|&(r, c)| matrix.get(r, c)).sum();
    Ok(Assignment { pairs, objective })
}

/// Edges that can appear in some optimal matching: reduced cost zero under
/// optimal dual potentials (complementary slackness), within tolerance.
fn tight_edges(matrix: &ScoreMatrix, eps: f64) -> Vec<bool> {
    let (m, n) = (matrix.rows(), matrix.cols());
    let slack = eps.max(1e-7);
    let mut tight = vec![false; m * n];
    if m <= n {
        let cost: Vec<f64> = matrix.data.iter().map(|x| -x).collect();
        let (_, u, v) = hungarian_min(&cost, m, n);
        for i in 0..m {
            for j in 0..n {
                tight[i * n + j] = -matrix.get(i, j) - u[i] - v[j] <= slack;
            }
        }
    } else {
        let t = matrix.transpose();
        let cost: Vec<f64> = t.data.iter().map(|x| -x).collect();
        let (_, u, v) = hungarian_min(&cost, n, m);
        for i in 0..m {
            for j in 0..n {
                tight[i * n + j] = -matrix.get(i, j) - u[j] - v[i] <= slack;
            }
        }
    }
    tight
}

/// Mean of the matrix entries over the assigned pairs.
pub fn mean_assigned(matrix: &ScoreMatrix, assignment: &Assignment) -> f64 {
    if assignment.pairs.is_empty() {
        return 0.0;
    }
    let sum: f64 = assignment.pairs.iter().map(|&(r, c)| matrix.get(r, c)).sum();
    sum / assignment.pairs.len() as f64
}
