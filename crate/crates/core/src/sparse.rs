//! Sparse matrix storage and LU factorization for MNA systems.
//!
//! Circuit matrices here are tiny (tens of unknowns) but structurally
//! awkward: voltage-source and KVL rows put zeros on the diagonal, so the
//! factorization must pivot. The implementation is a column-oriented LU
//! with partial (row) pivoting over a dense work column, which is exact
//! sparse bookkeeping in storage and robust for any nonsingular pattern.

use thiserror::Error;

/// A matrix entry as produced by device stamps: `(row, col, value)`.
pub type Triplet = (usize, usize, f64);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    /// No usable pivot in the given elimination column; the structurally
    /// or numerically singular unknown is reported by slot index.
    #[error("singular matrix: no pivot available for column {col}")]
    Singular { col: usize },
    #[error("triplet index ({row},{col}) out of bounds for dimension {dim}")]
    IndexOutOfBounds { row: usize, col: usize, dim: usize },
}

/// Compressed-sparse-column matrix with summed duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds an `n`x`n` CSC matrix from triplets, summing duplicates.
    /// Entries that sum to exactly zero are kept so the pattern stays
    /// stable across refills.
    pub fn from_triplets(n: usize, triplets: &[Triplet]) -> Result<CscMatrix, SparseError> {
        let pattern = CscPattern::build(n, triplets)?;
        Ok(pattern.fill(triplets))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Value at `(row, col)`, zero if not stored.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let lo = self.col_ptr[col];
        let hi = self.col_ptr[col + 1];
        match self.row_idx[lo..hi].binary_search(&row) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Stored entries of one column as `(row, value)` pairs.
    pub fn col(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.col_ptr[col];
        let hi = self.col_ptr[col + 1];
        self.row_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// All stored entries in column-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |c| self.col(c).map(move |(r, v)| (r, c, v)))
    }

    /// `y = A·x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for (r, v) in self.col(c) {
                y[r] += v * xc;
            }
        }
        y
    }

    /// Factorizes and solves in one call.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        Ok(LuFactors::factorize(self)?.solve(rhs))
    }
}

/// Sparsity pattern of an assembled system, cached so Newton iterations
/// that re-stamp the same positions can refill values without re-sorting.
#[derive(Debug, Clone, PartialEq)]
pub struct CscPattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// For each input triplet, the index of its slot in `values`.
    slot_of_triplet: Vec<usize>,
}

impl CscPattern {
    pub fn build(n: usize, triplets: &[Triplet]) -> Result<CscPattern, SparseError> {
        for &(r, c, _) in triplets {
            if r >= n || c >= n {
                return Err(SparseError::IndexOutOfBounds {
                    row: r,
                    col: c,
                    dim: n,
                });
            }
        }
        // Sort triplet indices by (col, row) to obtain the CSC layout.
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].1, triplets[k].0));

        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::new();
        let mut slot_of_triplet = vec![0usize; triplets.len()];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, _) = triplets[k];
            if last != Some((c, r)) {
                row_idx.push(r);
                col_ptr[c + 1] += 1;
                last = Some((c, r));
            }
            slot_of_triplet[k] = row_idx.len() - 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(CscPattern {
            n,
            col_ptr,
            row_idx,
            slot_of_triplet,
        })
    }

    /// True when `triplets` hit exactly the positions this pattern was
    /// built from, in the same order.
    pub fn matches(&self, triplets: &[Triplet]) -> bool {
        if triplets.len() != self.slot_of_triplet.len() {
            return false;
        }
        triplets.iter().zip(&self.slot_of_triplet).all(|(&(r, c, _), &s)| {
            self.row_idx[s] == r && {
                // Recover the column of slot s from col_ptr.
                // partition_point gives the first column whose range ends past s.
                let col = self.col_ptr.partition_point(|&p| p <= s) - 1;
                col == c
            }
        })
    }

    /// Sums triplet values into a value vector laid out per this pattern.
    ///
    /// The caller guarantees the triplets match the pattern (`matches`,
    /// or same stamping sequence as the `build` call).
    pub fn fill(&self, triplets: &[Triplet]) -> CscMatrix {
        debug_assert_eq!(triplets.len(), self.slot_of_triplet.len());
        let mut values = vec![0.0; self.row_idx.len()];
        for (k, &(_, _, v)) in triplets.iter().enumerate() {
            values[self.slot_of_triplet[k]] += v;
        }
        CscMatrix {
            n: self.n,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values,
        }
    }
}

/// LU factors of a square sparse matrix, with row pivoting.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    /// `pivot_row[p]` is the original row chosen as the p-th pivot.
    pivot_row: Vec<usize>,
    /// Column-major L (unit diagonal implicit), rows in original indices.
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Column-major U, rows in pivot positions, diagonal last.
    u_cols: Vec<Vec<(usize, f64)>>,
}

impl LuFactors {
    /// Column-oriented LU with partial pivoting.
    pub fn factorize(a: &CscMatrix) -> Result<LuFactors, SparseError> {
        let n = a.dim();
        let mut pivot_row: Vec<usize> = Vec::with_capacity(n);
        // pivot_pos[r] = Some(p) once row r was chosen as pivot p.
        let mut pivot_pos: Vec<Option<usize>> = vec![None; n];
        let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut work = vec![0.0f64; n];
        let mut in_col = vec![false; n];
        let mut touched: Vec<usize> = Vec::with_capacity(n);

        for j in 0..n {
            // Scatter A(:, j).
            for (r, v) in a.col(j) {
                if !in_col[r] {
                    in_col[r] = true;
                    touched.push(r);
                }
                work[r] += v;
            }
            // Eliminate with prior pivots in elimination order.
            for p in 0..j {
                if !in_col[pivot_row[p]] {
                    continue;
                }
                let upj = work[pivot_row[p]];
                if upj == 0.0 {
                    continue;
                }
                for &(r, lv) in &l_cols[p] {
                    if !in_col[r] {
                        in_col[r] = true;
                        touched.push(r);
                    }
                    work[r] -= lv * upj;
                }
            }
            // U column: entries at already-pivoted rows.
            let mut ucol: Vec<(usize, f64)> = Vec::new();
            for &r in &touched {
                if let Some(p) = pivot_pos[r] {
                    if work[r] != 0.0 {
                        ucol.push((p, work[r]));
                    }
                }
            }
            ucol.sort_by_key(|&(p, _)| p);
            // Partial pivot: largest magnitude among unpivoted rows.
            let mut best: Option<(usize, f64)> = None;
            for &r in &touched {
                if pivot_pos[r].is_none() {
                    let m = work[r].abs();
                    if best.is_none_or(|(_, bm)| m > bm) {
                        best = Some((r, m));
                    }
                }
            }
            let (piv, piv_mag) = best.ok_or(SparseError::Singular { col: j })?;
            if piv_mag == 0.0 {
                return Err(SparseError::Singular { col: j });
            }
            let piv_val = work[piv];
            pivot_pos[piv] = Some(j);
            pivot_row.push(piv);
            ucol.push((j, piv_val));
            u_cols.push(ucol);
            // L column: remaining unpivoted rows scaled by the pivot.
            let mut lcol: Vec<(usize, f64)> = Vec::new();
            for &r in &touched {
                if pivot_pos[r].is_none() && work[r] != 0.0 {
                    lcol.push((r, work[r] / piv_val));
                }
            }
            l_cols.push(lcol);
            // Reset the work column.
            for &r in &touched {
                work[r] = 0.0;
                in_col[r] = false;
            }
            touched.clear();
        }

        Ok(LuFactors {
            n,
            pivot_row,
            l_cols,
            u_cols,
        })
    }

    /// Solves `A·x = b` using the stored factors.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        // Forward: L·y = P·b, processed in pivot order over original rows.
        let mut x = b.to_vec();
        let mut y = vec![0.0; self.n];
        for p in 0..self.n {
            let yp = x[self.pivot_row[p]];
            y[p] = yp;
            if yp != 0.0 {
                for &(r, lv) in &self.l_cols[p] {
                    x[r] -= lv * yp;
                }
            }
        }
        // Backward: U·z = y, column-oriented.
        let mut z = y;
        for j in (0..self.n).rev() {
            let (diag_pos, diag_val) = *self.u_cols[j].last().expect("diagonal present");
            debug_assert_eq!(diag_pos, j);
            let zj = z[j] / diag_val;
            z[j] = zj;
            if zj != 0.0 {
                for &(p, uv) in &self.u_cols[j][..self.u_cols[j].len() - 1] {
                    z[p] -= uv * zj;
                }
            }
        }
        z
    }
}

/// `‖A·x − b‖_inf`, the solve residual used by post-hoc audits.
pub fn residual_inf(a: &CscMatrix, x: &[f64], b: &[f64]) -> f64 {
    a.mul_vec(x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| (ax - bi).abs())
        .fold(0.0, f64::max)
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_solve_3x3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
        // Cramer's rule as an independent route for the small oracle.
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(a);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let mut m = a;
            for r in 0..3 {
                m[r][k] = b[r];
            }
            out[k] = det(m) / d;
        }
        out
    }

    #[test]
    fn lu_matches_cramer_3x3() {
        let a = [[4.0, -1.0, 0.0], [-1.0, 4.0, -2.0], [0.0, -2.0, 5.0]];
        let b = [1.0, -3.0, 7.5];
        let mut trips = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                if a[r][c] != 0.0 {
                    trips.push((r, c, a[r][c]));
                }
            }
        }
        let m = CscMatrix::from_triplets(3, &trips).unwrap();
        let x = m.solve(&b).unwrap();
        let exact = dense_solve_3x3(a, b);
        for k in 0..3 {
            assert!((x[k] - exact[k]).abs() < 1e-12, "x[{k}]={} vs {}", x[k], exact[k]);
        }
    }

    #[test]
    fn zero_diagonal_requires_pivoting() {
        // [0 1; 1 0] x = [2, 3] -> x = [3, 2]
        let m = CscMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let x = m.solve(&[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_reports_column() {
        // Second column is all zeros.
        let m = CscMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0)]).unwrap();
        match m.solve(&[1.0, 1.0]) {
            Err(SparseError::Singular { col }) => assert_eq!(col, 1),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CscMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn pattern_refill_matches_fresh_build() {
        let t1 = vec![(0, 0, 2.0), (1, 1, 3.0), (0, 1, -1.0), (1, 1, 0.5)];
        let pat = CscPattern::build(2, &t1).unwrap();
        assert!(pat.matches(&t1));
        let t2 = vec![(0, 0, 5.0), (1, 1, -1.0), (0, 1, 4.0), (1, 1, 2.0)];
        assert!(pat.matches(&t2));
        assert_eq!(pat.fill(&t2), CscMatrix::from_triplets(2, &t2).unwrap());
        let t3 = vec![(0, 0, 5.0), (1, 0, -1.0), (0, 1, 4.0), (1, 1, 2.0)];
        assert!(!pat.matches(&t3));
    }

    #[test]
    fn explicit_zeros_keep_pattern() {
        let t = vec![(0, 0, 1.0), (1, 0, 0.0), (1, 1, 1.0)];
        let m = CscMatrix::from_triplets(2, &t).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 0), 0.0);
    }

    proptest! {
        /// Random diagonally-dominant systems solve with tiny residual.
        #[test]
        fn solve_residual_small(seed in 0u64..500) {
            let n = 1 + (seed as usize % 12);
            // xorshift-ish deterministic fill
            let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let mut next = move || {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s as f64 / u64::MAX as f64) * 2.0 - 1.0
            };
            let mut trips = Vec::new();
            for r in 0..n {
                let mut rowsum = 0.0;
                for c in 0..n {
                    if r != c && next().abs() < 0.6 {
                        let v = next();
                        rowsum += v.abs();
                        trips.push((r, c, v));
                    }
                }
                trips.push((r, r, rowsum + 1.0));
            }
            let b: Vec<f64> = (0..n).map(|_| next()).collect();
            let m = CscMatrix::from_triplets(n, &trips).unwrap();
            let x = m.solve(&b).unwrap();
            prop_assert!(residual_inf(&m, &x, &b) < 1e-10 * norm_inf(&b).max(1.0));
        }
    }
}
