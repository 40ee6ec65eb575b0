//! Up-looking sparse LDLᵀ factorization for quasi-definite matrices.
//!
//! The input is the upper triangle (diagonal included) of an already permuted
//! symmetric matrix in CSC form. The elimination tree and column counts are
//! computed once; numeric refactorization reuses them as long as the pattern
//! does not change.

use super::csc::CscMatrix;
use thiserror::Error;

const NONE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdlError {
    #[error("matrix is not upper triangular (entry at row {row}, column {col})")]
    NotUpperTriangular { row: usize, col: usize },
    #[error("zero or non-finite pivot at column {0}")]
    BadPivot(usize),
    #[error("sparsity pattern changed since symbolic analysis")]
    PatternMismatch,
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    colptr: Vec<usize>,
    nnz_in: usize,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    /// Number of pivots replaced by the dynamic regularization in the last factorization.
    pub regularized_pivots: usize,
}

impl LdlFactor {
    /// Symbolic analysis of the upper-triangular pattern `a`.
    pub fn analyze(a: &CscMatrix) -> Result<Self, LdlError> {
        let n = a.ncols;
        assert_eq!(a.nrows, n, "LDL needs a square matrix");
        let mut work = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut etree = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in a.colptr[j]..a.colptr[j + 1] {
                let mut i = a.rowval[p];
                if i > j {
                    return Err(LdlError::NotUpperTriangular { row: i, col: j });
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        Ok(Self {
            n,
            colptr: a.colptr.clone(),
            nnz_in: a.nnz(),
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            regularized_pivots: 0,
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization. `signs[k]` is the expected sign of pivot `k`;
    /// pivots with `signs[k] * d_k <= eps` are replaced by `signs[k] * delta`.
    pub fn factor(&mut self, a: &CscMatrix, signs: &[f64], eps: f64, delta: f64) -> Result<(), LdlError> {
        let n = self.n;
        if a.ncols != n || a.nnz() != self.nnz_in || a.colptr != self.colptr {
            return Err(LdlError::PatternMismatch);
        }
        let mut y_vals = vec![0.0f64; n];
        let mut y_marker = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        self.regularized_pivots = 0;

        for k in 0..n {
            let mut nnz_y = 0usize;
            self.d[k] = 0.0;
            for p in a.colptr[k]..a.colptr[k + 1] {
                let b = a.rowval[p];
                if b == k {
                    self.d[k] = a.nzval[p];
                    continue;
                }
                y_vals[b] = a.nzval[p];
                if !y_marker[b] {
                    y_marker[b] = true;
                    elim[0] = b;
                    let mut n_e = 1usize;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_marker[next] {
                            break;
                        }
                        y_marker[next] = true;
                        elim[n_e] = next;
                        n_e += 1;
                        next = self.etree[next];
                    }
                    while n_e > 0 {
                        n_e -= 1;
                        y_idx[nnz_y] = elim[n_e];
                        nnz_y += 1;
                    }
                }
            }

            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..tmp {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                self.lx[tmp] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_marker[c] = false;
            }

            let s = signs[k];
            if !self.d[k].is_finite() {
                return Err(LdlError::BadPivot(k));
            }
            if s * self.d[k] <= eps {
                self.d[k] = s * delta;
                self.regularized_pivots += 1;
            }
            if self.d[k] == 0.0 {
                return Err(LdlError::BadPivot(k));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upper_of(dense: &[Vec<f64>]) -> CscMatrix {
        let n = dense.len();
        let mut t = Vec::new();
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i <= j && (v != 0.0 || i == j) {
                    t.push((i, j, v));
                }
            }
        }
        CscMatrix::from_triplets(n, n, &t)
    }

    fn mat_vec(dense: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        dense.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [ 4 1 | 2 0 ]
        // [ 1 3 | 0 1 ]
        // [ 2 0 |-2 0 ]
        // [ 0 1 | 0 -1]
        let k = vec![
            vec![4.0, 1.0, 2.0, 0.0],
            vec![1.0, 3.0, 0.0, 1.0],
            vec![2.0, 0.0, -2.0, 0.0],
            vec![0.0, 1.0, 0.0, -1.0],
        ];
        let a = upper_of(&k);
        let mut f = LdlFactor::analyze(&a).unwrap();
        f.factor(&a, &[1.0, 1.0, -1.0, -1.0], 1e-14, 1e-7).unwrap();
        assert_eq!(f.regularized_pivots, 0);
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let mut x = b.clone();
        f.solve(&mut x);
        let r = mat_vec(&k, &x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
        let d = f.diagonal();
        assert!(d[0] > 0.0 && d[1] > 0.0 && d[2] < 0.0 && d[3] < 0.0);
    }

    #[test]
    fn rejects_lower_entries() {
        let a = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(LdlFactor::analyze(&a), Err(LdlError::NotUpperTriangular { .. })));
    }

    #[test]
    fn dynamic_regularization_replaces_wrong_sign_pivot() {
        let a = CscMatrix::from_triplets(2, 2, &[(0, 0, 0.0), (1, 1, -1.0)]);
        let mut f = LdlFactor::analyze(&a).unwrap();
        f.factor(&a, &[1.0, -1.0], 1e-13, 1e-7).unwrap();
        assert_eq!(f.regularized_pivots, 1);
        assert_eq!(f.diagonal()[0], 1e-7);
    }
}
