//! Sparse matrices and a left-looking sparse LU with partial pivoting.
//!
//! The factorization follows the Gilbert-Peierls scheme: each column of `L` and `U` comes
//! from a sparse triangular solve whose nonzero pattern is found by a depth-first search
//! through the already computed columns of `L`. Columns are processed in their given
//! order; callers that care about fill number their unknowns accordingly.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("structurally or numerically singular at pivot column {column}")]
    Singular { column: usize },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("post-solve residual {residual:e} exceeds bound {bound:e}")]
    ResidualCheck { residual: f64, bound: f64 },
}

/// Coordinate-format builder; duplicates are summed by [`SparseMatrix::compile`].
#[derive(Clone, Debug)]
pub struct SparseMatrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    triplets: Vec<(usize, usize, T)>,
}

impl<T: Real> SparseMatrix<T> {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, triplets: Vec::new() }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self { n_rows, n_cols, triplets: Vec::with_capacity(cap) }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::new(n, n);
        for i in 0..n {
            m.push(i, i, T::one());
        }
        m
    }

    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.triplets.push((row, col, value));
    }

    pub fn n_triplets(&self) -> usize {
        self.triplets.len()
    }

    pub fn compile(&self) -> Result<CscMatrix<T>, SolveError> {
        let mut count = vec![0usize; self.n_cols + 1];
        for &(r, c, v) in &self.triplets {
            if !v.is_finite() {
                return Err(SolveError::NonFinite { row: r, col: c });
            }
            count[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            count[c + 1] += count[c];
        }
        let mut fill = count.clone();
        let mut rows = vec![0usize; self.triplets.len()];
        let mut vals = vec![T::zero(); self.triplets.len()];
        for &(r, c, v) in &self.triplets {
            rows[fill[c]] = r;
            vals[fill[c]] = v;
            fill[c] += 1;
        }
        let mut col_ptr = Vec::with_capacity(self.n_cols + 1);
        let mut row_idx = Vec::with_capacity(self.triplets.len());
        let mut values = Vec::with_capacity(self.triplets.len());
        col_ptr.push(0);
        let mut entries: Vec<(usize, T)> = Vec::new();
        for c in 0..self.n_cols {
            entries.clear();
            entries.extend((count[c]..count[c + 1]).map(|p| (rows[p], vals[p])));
            entries.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < entries.len() {
                let r = entries[i].0;
                let mut s = T::zero();
                while i < entries.len() && entries[i].0 == r {
                    s += entries[i].1;
                    i += 1;
                }
                row_idx.push(r);
                values.push(s);
            }
            col_ptr.push(row_idx.len());
        }
        Ok(CscMatrix { n_rows: self.n_rows, n_cols: self.n_cols, col_ptr, row_idx, values })
    }
}

/// Compressed sparse columns with sorted, unique row indices.
#[derive(Clone, Debug)]
pub struct CscMatrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CscMatrix<T> {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        for c in 0..self.n_cols {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[p]] += self.values[p] * x[c];
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for c in 0..self.n_cols {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                d[self.row_idx[p]][c] = self.values[p];
            }
        }
        d
    }
}

/// `P A = L U`; immutable after construction and safe to share across threads.
#[derive(Clone, Debug)]
pub struct LuFactors<T> {
    n: usize,
    /// Unit lower factor, diagonal stored first in each column, rows in pivot order.
    l: CscMatrix<T>,
    /// Upper factor, diagonal stored last in each column.
    u: CscMatrix<T>,
    /// `pinv[original row] = pivot position`.
    pinv: Vec<usize>,
}

const UNSET: usize = usize::MAX;

impl<T: Real> LuFactors<T> {
    pub fn factor(a: &CscMatrix<T>) -> Result<Self, SolveError> {
        if a.n_rows != a.n_cols {
            return Err(SolveError::NotSquare { rows: a.n_rows, cols: a.n_cols });
        }
        let n = a.n_cols;
        let guess = 4 * a.nnz() + n;
        let (mut lp, mut li, mut lx) = (vec![0usize; n + 1], Vec::with_capacity(guess), Vec::with_capacity(guess));
        let (mut up, mut ui, mut ux) = (vec![0usize; n + 1], Vec::with_capacity(guess), Vec::with_capacity(guess));
        let mut pinv = vec![UNSET; n];
        let mut x = vec![T::zero(); n];
        let mut mark = vec![UNSET; n];
        let mut reach: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::with_capacity(n);

        for k in 0..n {
            lp[k] = li.len();
            up[k] = ui.len();
            // pattern of L^{-1} A(:, k) in reverse topological order
            reach.clear();
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let start = a.row_idx[p];
                if mark[start] == k {
                    continue;
                }
                mark[start] = k;
                stack.push((start, 0));
                while let Some(&mut (j, ref mut next)) = stack.last_mut() {
                    let col = pinv[j];
                    let children = if col == UNSET { 0..0 } else { lp[col] + 1..lp[col + 1] };
                    let mut pushed = false;
                    let len = children.len();
                    while *next < len {
                        let child = li[children.start + *next];
                        *next += 1;
                        if mark[child] != k {
                            mark[child] = k;
                            stack.push((child, 0));
                            pushed = true;
                            break;
                        }
                    }
                    if !pushed {
                        stack.pop();
                        reach.push(j);
                    }
                }
            }
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                x[a.row_idx[p]] = a.values[p];
            }
            for &j in reach.iter().rev() {
                let col = pinv[j];
                if col == UNSET {
                    continue;
                }
                let xj = x[j];
                for p in lp[col] + 1..lp[col + 1] {
                    x[li[p]] -= lx[p] * xj;
                }
            }
            // partial pivoting over rows not yet pivotal
            let mut ipiv = UNSET;
            let mut best = -T::one();
            for &i in reach.iter().rev() {
                if pinv[i] == UNSET {
                    let v = x[i].abs();
                    if v > best {
                        best = v;
                        ipiv = i;
                    }
                } else {
                    ui.push(pinv[i]);
                    ux.push(x[i]);
                }
            }
            if ipiv == UNSET || !(best > T::zero()) || !best.is_finite() {
                return Err(SolveError::Singular { column: k });
            }
            let pivot = x[ipiv];
            ui.push(k);
            ux.push(pivot);
            pinv[ipiv] = k;
            li.push(ipiv);
            lx.push(T::one());
            for &i in reach.iter().rev() {
                if pinv[i] == UNSET {
                    li.push(i);
                    lx.push(x[i] / pivot);
                }
                x[i] = T::zero();
            }
        }
        lp[n] = li.len();
        up[n] = ui.len();
        for r in li.iter_mut() {
            *r = pinv[*r];
        }
        Ok(Self {
            n,
            l: CscMatrix { n_rows: n, n_cols: n, col_ptr: lp, row_idx: li, values: lx },
            u: CscMatrix { n_rows: n, n_cols: n, col_ptr: up, row_idx: ui, values: ux },
            pinv,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fill(&self) -> usize {
        self.l.nnz() + self.u.nnz()
    }

    /// Solves without the residual check.
    pub fn solve_raw(&self, b: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); self.n];
        for (i, &bi) in b.iter().enumerate() {
            x[self.pinv[i]] = bi;
        }
        let l = &self.l;
        for c in 0..self.n {
            let xc = x[c];
            if xc != T::zero() {
                for p in l.col_ptr[c] + 1..l.col_ptr[c + 1] {
                    x[l.row_idx[p]] -= l.values[p] * xc;
                }
            }
        }
        let u = &self.u;
        for c in (0..self.n).rev() {
            let last = u.col_ptr[c + 1] - 1;
            x[c] /= u.values[last];
            let xc = x[c];
            if xc != T::zero() {
                for p in u.col_ptr[c]..last {
                    x[u.row_idx[p]] -= u.values[p] * xc;
                }
            }
        }
        x
    }

    /// Solves with up to three refinement steps and returns the solution together with
    /// its residual `||A x - b||_inf`, without judging it.
    pub fn solve_refined(&self, a: &CscMatrix<T>, b: &[T]) -> (Vec<T>, T) {
        let scale = crate::scalar::max_abs(b);
        let mut x = self.solve_raw(b);
        let mut res = T::infinity();
        for it in 0..4 {
            let ax = a.mul_vec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
            res = crate::scalar::max_abs(&r);
            if it == 3 || res <= T::epsilon() * scale {
                break;
            }
            let dx = self.solve_raw(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += *d;
            }
        }
        (x, res)
    }

    /// Solves `A x = b` and verifies `||A x - b||_inf <= 1e-11 (1 + ||b||_inf)`, applying up
    /// to three steps of iterative refinement if the first solve misses the bound.
    pub fn solve_checked(&self, a: &CscMatrix<T>, b: &[T]) -> Result<Vec<T>, SolveError> {
        if b.len() != self.n {
            return Err(SolveError::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let bound = T::lit(1e-11) * (T::one() + crate::scalar::max_abs(b));
        let mut x = self.solve_raw(b);
        let mut res = T::infinity();
        for _ in 0..4 {
            let ax = a.mul_vec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
            res = crate::scalar::max_abs(&r);
            if res <= bound {
                return Ok(x);
            }
            let dx = self.solve_raw(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += *d;
            }
        }
        Err(SolveError::ResidualCheck { residual: res.as_f64(), bound: bound.as_f64() })
    }
}

/// Factor and solve in one call, with the residual check.
pub fn solve<T: Real>(a: &SparseMatrix<T>, b: &[T]) -> Result<Vec<T>, SolveError> {
    let csc = a.compile()?;
    if b.len() != csc.n_rows {
        return Err(SolveError::DimensionMismatch { expected: csc.n_rows, got: b.len() });
    }
    LuFactors::factor(&csc)?.solve_checked(&csc, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn identity_and_two_by_two() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(solve(&SparseMatrix::identity(3), &b).unwrap(), b);
        let mut a = SparseMatrix::new(2, 2);
        for (i, j, v) in [(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)] {
            a.push(i, j, v);
        }
        let x = solve(&a, &[3.0, 3.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut a = SparseMatrix::new(2, 2);
        a.push(0, 0, 1.0);
        a.push(0, 0, 1.0);
        a.push(1, 1, 4.0);
        let c = a.compile().unwrap();
        assert_eq!(c.nnz(), 2);
        assert_eq!(c.values, vec![2.0, 4.0]);
    }

    #[test]
    fn random_spd_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut a = SparseMatrix::new(n, n);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s: f64 = (0..n).map(|k| m[i][k] * m[j][k]).sum();
                if i == j {
                    s += 1.0;
                }
                // sparsify while keeping symmetry and definiteness via diagonal dominance
                if i == j || (i + j) % 5 == 0 {
                    dense[i][j] = s;
                    a.push(i, j, s);
                }
            }
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| dense[i][j].abs()).sum();
            dense[i][i] += off;
            a.push(i, i, off);
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve(&a, &b).unwrap();
        let xo = dense_solve(dense, b);
        for (u, v) in x.iter().zip(&xo) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // saddle-point shape [[1, 1], [1, 0]]
        let mut a = SparseMatrix::new(3, 3);
        for (i, j, v) in [(0, 0, 1.0), (0, 2, 1.0), (2, 0, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 1, 1.0)] {
            a.push(i, j, v);
        }
        let b = [1.0, 2.0, 3.0];
        let x = solve(&a, &b).unwrap();
        let c = a.compile().unwrap();
        let ax = c.mul_vec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-14);
        }
    }

    #[test]
    fn random_unsymmetric_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 120;
        let mut a = SparseMatrix::new(n, n);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for _ in 0..4 {
                let j = rng.gen_range(0..n);
                let v = rng.gen_range(-2.0..2.0);
                a.push(i, j, v);
                dense[i][j] += v;
            }
            let j = (i + 1) % n;
            a.push(i, j, 1.0);
            dense[i][j] += 1.0;
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        match solve(&a, &b) {
            Ok(x) => {
                let xo = dense_solve(dense, b);
                for (u, v) in x.iter().zip(&xo) {
                    assert!((u - v).abs() <= 1e-8 * (1.0 + v.abs()));
                }
            }
            Err(SolveError::Singular { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut a = SparseMatrix::new(2, 2);
        a.push(0, 0, 1.0);
        a.push(1, 0, 1.0);
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(SolveError::Singular { column: 1 })));
        let a = SparseMatrix::<f64>::new(2, 3);
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(SolveError::NotSquare { .. })));
    }
}
