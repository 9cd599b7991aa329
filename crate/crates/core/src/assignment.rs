//! Minimum-cost linear assignment on rectangular matrices with forbidden (`+inf`) and forced
//! (`-inf`) cells.
//!
//! [`solve`] returns, among all partial matchings that contain every forced cell and no
//! forbidden cell, one that first maximises the number of matched pairs and then minimises the
//! total finite cost. Ties are broken towards the lexicographically smallest `(row, col)`
//! sequence. [`brute_force`] enumerates the same objective exhaustively and serves as oracle.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

use crate::{Error, Result, Scalar};

/// Largest `min(rows, cols)` accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> CostMatrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged cost matrix"));
        }
        let n = rows.len();
        Ok(Self {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::filled(self.cols, self.rows, T::zero());
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    fn is_forbidden(&self, r: usize, c: usize) -> bool {
        let v = self.get(r, c);
        v.is_infinite() && v > T::zero()
    }

    fn is_forced(&self, r: usize, c: usize) -> bool {
        let v = self.get(r, c);
        v.is_infinite() && v < T::zero()
    }
}

/// Sum of the finite costs of `pairs`, accumulated in row order.
pub fn matching_cost<T: Scalar>(costs: &CostMatrix<T>, pairs: &[(usize, usize)]) -> T {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    sorted
        .iter()
        .map(|&(r, c)| costs.get(r, c))
        .filter(|v| v.is_finite())
        .fold(T::zero(), |acc, v| acc + v)
}

/// Cost ordered by number of forbidden cells first, then by finite cost.
#[derive(Debug, Clone, Copy)]
struct Lex<T> {
    forbidden: i64,
    cost: T,
}

impl<T: Scalar> Lex<T> {
    const MAX_FORBIDDEN: i64 = i64::MAX / 4;

    fn cell(v: T) -> Self {
        if v.is_infinite() {
            Self {
                forbidden: 1,
                cost: T::zero(),
            }
        } else {
            Self {
                forbidden: 0,
                cost: v,
            }
        }
    }

    fn zero() -> Self {
        Self {
            forbidden: 0,
            cost: T::zero(),
        }
    }

    fn infinity() -> Self {
        Self {
            forbidden: Self::MAX_FORBIDDEN,
            cost: T::zero(),
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.forbidden
            .cmp(&other.forbidden)
            .then(self.cost.partial_cmp(&other.cost).unwrap_or(Ordering::Equal))
    }

    fn lt(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Less
    }
}

impl<T: Scalar> Add for Lex<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            forbidden: self.forbidden + o.forbidden,
            cost: self.cost + o.cost,
        }
    }
}

impl<T: Scalar> Sub for Lex<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            forbidden: self.forbidden - o.forbidden,
            cost: self.cost - o.cost,
        }
    }
}

/// Shortest-augmenting-path Hungarian method on an `n x m` matrix with `n <= m`.
/// Returns the column assigned to each row.
fn hungarian<T: Scalar>(a: &[Vec<Lex<T>>], m: usize) -> Vec<usize> {
    let n = a.len();
    debug_assert!(n <= m);
    let mut u = vec![Lex::<T>::zero(); n + 1];
    let mut v = vec![Lex::<T>::zero(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![Lex::<T>::infinity(); m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = Lex::<T>::infinity();
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur.lt(&minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j].lt(&delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assigned = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assigned[p[j] - 1] = j - 1;
        }
    }
    assigned
}

/// Optimal matching over the given row / column subsets (no forced cells inside).
fn solve_subset<T: Scalar>(costs: &CostMatrix<T>, rows: &[usize], cols: &[usize]) -> Vec<(usize, usize)> {
    if rows.is_empty() || cols.is_empty() {
        return Vec::new();
    }
    let transposed = rows.len() > cols.len();
    let (outer, inner) = if transposed { (cols, rows) } else { (rows, cols) };
    let a: Vec<Vec<Lex<T>>> = outer
        .iter()
        .map(|&o| {
            inner
                .iter()
                .map(|&i| {
                    let (r, c) = if transposed { (i, o) } else { (o, i) };
                    Lex::cell(costs.get(r, c))
                })
                .collect()
        })
        .collect();
    let assigned = hungarian(&a, inner.len());
    let mut pairs: Vec<(usize, usize)> = assigned
        .iter()
        .enumerate()
        .filter_map(|(oi, &ii)| {
            let (r, c) = if transposed {
                (inner[ii], outer[oi])
            } else {
                (outer[oi], inner[ii])
            };
            (!costs.is_forbidden(r, c)).then_some((r, c))
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

fn value<T: Scalar>(costs: &CostMatrix<T>, pairs: &[(usize, usize)]) -> (usize, T) {
    (pairs.len(), matching_cost(costs, pairs))
}

/// Splits off forced cells, validating that no row or column is forced twice.
fn forced_cells<T: Scalar>(costs: &CostMatrix<T>) -> Result<Vec<(usize, usize)>> {
    let mut row_used = vec![false; costs.rows()];
    let mut col_used = vec![false; costs.cols()];
    let mut forced = Vec::new();
    for r in 0..costs.rows() {
        for c in 0..costs.cols() {
            let v = costs.get(r, c);
            if v.is_nan() {
                return Err(Error::invalid(format!("NaN cost at ({r}, {c})")));
            }
            if costs.is_forced(r, c) {
                if row_used[r] || col_used[c] {
                    return Err(Error::invalid(format!(
                        "conflicting forced cells share row {r} or column {c}"
                    )));
                }
                row_used[r] = true;
                col_used[c] = true;
                forced.push((r, c));
            }
        }
    }
    Ok(forced)
}

/// Minimum-cost assignment; see the module docs for the objective and tie-break.
pub fn solve<T: Scalar>(costs: &CostMatrix<T>) -> Result<Vec<(usize, usize)>> {
    let forced = forced_cells(costs)?;
    let mut free_rows: Vec<usize> = (0..costs.rows()).filter(|r| forced.iter().all(|f| f.0 != *r)).collect();
    let mut free_cols: Vec<usize> = (0..costs.cols()).filter(|c| forced.iter().all(|f| f.1 != *c)).collect();

    let optimum = solve_subset(costs, &free_rows, &free_cols);
    let (opt_card, opt_cost) = value(costs, &optimum);
    let scale = (0..costs.rows())
        .flat_map(|r| (0..costs.cols()).map(move |c| (r, c)))
        .map(|(r, c)| costs.get(r, c))
        .filter(|v| v.is_finite())
        .fold(T::one(), |acc, v| acc + v.abs());
    let tol = T::epsilon() * T::lit(64.0) * T::of_usize(costs.rows().max(costs.cols()) + 1) * scale;

    // Lexicographic refinement: fix rows in order to the smallest column that keeps optimality.
    let mut chosen = forced;
    let mut fixed_card = 0usize;
    let mut fixed_cost = T::zero();
    let rows_in_order = free_rows.clone();
    for r in rows_in_order {
        free_rows.retain(|&x| x != r);
        let mut picked = None;
        for &c in &free_cols {
            if costs.is_forbidden(r, c) {
                continue;
            }
            let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            let rest = solve_subset(costs, &free_rows, &rest_cols);
            let (card, cost) = value(costs, &rest);
            let total_card = fixed_card + 1 + card;
            let total_cost = fixed_cost + costs.get(r, c) + cost;
            if total_card == opt_card && (total_cost - opt_cost).abs() <= tol {
                picked = Some(c);
                break;
            }
        }
        if let Some(c) = picked {
            free_cols.retain(|&x| x != c);
            fixed_card += 1;
            fixed_cost = fixed_cost + costs.get(r, c);
            chosen.push((r, c));
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Exhaustive optimum under the same objective as [`solve`]; refuses when
/// `min(rows, cols) > BRUTE_FORCE_MAX`.
pub fn brute_force<T: Scalar>(costs: &CostMatrix<T>) -> Result<Vec<(usize, usize)>> {
    if costs.rows().min(costs.cols()) > BRUTE_FORCE_MAX {
        return Err(Error::invalid(format!(
            "brute force limited to min(rows, cols) <= {BRUTE_FORCE_MAX}"
        )));
    }
    let forced = forced_cells(costs)?;
    let mut forced_col_of_row = vec![None; costs.rows()];
    let mut forced_row_of_col = vec![None; costs.cols()];
    for &(r, c) in &forced {
        forced_col_of_row[r] = Some(c);
        forced_row_of_col[c] = Some(r);
    }

    struct Search<'a, T> {
        costs: &'a CostMatrix<T>,
        forced_col_of_row: Vec<Option<usize>>,
        forced_row_of_col: Vec<Option<usize>>,
        col_used: Vec<bool>,
        current: Vec<(usize, usize)>,
        best: Option<(usize, T, Vec<(usize, usize)>)>,
    }

    impl<T: Scalar> Search<'_, T> {
        fn visit(&mut self, r: usize) {
            if r == self.costs.rows() {
                let card = self.current.len();
                let cost = matching_cost(self.costs, &self.current);
                let better = match &self.best {
                    None => true,
                    Some((bc, bcost, _)) => card > *bc || (card == *bc && cost < *bcost),
                };
                if better {
                    self.best = Some((card, cost, self.current.clone()));
                }
                return;
            }
            if let Some(c) = self.forced_col_of_row[r] {
                self.col_used[c] = true;
                self.current.push((r, c));
                self.visit(r + 1);
                self.current.pop();
                self.col_used[c] = false;
                return;
            }
            for c in 0..self.costs.cols() {
                if self.col_used[c] || self.forced_row_of_col[c].is_some() || self.costs.is_forbidden(r, c) {
                    continue;
                }
                self.col_used[c] = true;
                self.current.push((r, c));
                self.visit(r + 1);
                self.current.pop();
                self.col_used[c] = false;
            }
            self.visit(r + 1);
        }
    }

    let mut search = Search {
        costs,
        forced_col_of_row,
        forced_row_of_col,
        col_used: vec![false; costs.cols()],
        current: Vec::new(),
        best: None,
    };
    search.visit(0);
    Ok(search.best.map(|b| b.2).unwrap_or_default())
}
