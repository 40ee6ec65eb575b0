use std::fmt;

/// Compressed sparse column matrix with sorted, duplicate-free row indices.
#[derive(Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowval: Vec<usize>,
    pub nzval: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowval: Vec::new(),
            nzval: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed;
    /// explicit zeros are kept so the sparsity pattern is stable.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; ncols];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            counts[c] += 1;
        }
        let mut colptr = vec![0usize; ncols + 1];
        for c in 0..ncols {
            colptr[c + 1] = colptr[c] + counts[c];
        }
        let mut next = colptr.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[next[c]] = (r, v);
            next[c] += 1;
        }

        let mut out_colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(triplets.len());
        let mut nzval = Vec::with_capacity(triplets.len());
        for c in 0..ncols {
            let col = &mut entries[colptr[c]..colptr[c + 1]];
            col.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(r, v) in col.iter() {
                if last == Some(r) {
                    *nzval.last_mut().unwrap() += v;
                } else {
                    rowval.push(r);
                    nzval.push(v);
                    last = Some(r);
                }
            }
            out_colptr[c + 1] = rowval.len();
        }
        Self {
            nrows,
            ncols,
            colptr: out_colptr,
            rowval,
            nzval,
        }
    }

    pub fn nnz(&self) -> usize {
        self.nzval.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.colptr[col]..self.colptr[col + 1];
        match self.rowval[range.clone()].binary_search(&row) {
            Ok(k) => self.nzval[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.colptr[c]..self.colptr[c + 1]).map(move |p| (self.rowval[p], c, self.nzval[p]))
        })
    }

    /// `y = alpha * A x + beta * y`
    pub fn gemv(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        if beta != 1.0 {
            y.iter_mut().for_each(|v| *v *= beta);
        }
        for c in 0..self.ncols {
            let xc = alpha * x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowval[p]] += self.nzval[p] * xc;
            }
        }
    }

    /// `y = alpha * A' x + beta * y`
    pub fn gemv_t(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[c]..self.colptr[c + 1] {
                acc += self.nzval[p] * x[self.rowval[p]];
            }
            y[c] = alpha * acc + beta * y[c];
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.gemv(1.0, x, 0.0, &mut y);
        y
    }

    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.gemv_t(1.0, x, 0.0, &mut y);
        y
    }

    pub fn transpose(&self) -> CscMatrix {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        CscMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Scales rows by `left` and columns by `right` in place.
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                self.nzval[p] *= left[self.rowval[p]] * right[c];
            }
        }
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| {
                self.nzval[self.colptr[c]..self.colptr[c + 1]]
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .collect()
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for (r, _, v) in self.triplets() {
            out[r] = out[r].max(v.abs());
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }
}

impl fmt::Debug for CscMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CscMatrix({}x{}, nnz={})", self.nrows, self.ncols, self.nnz())
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CscMatrix::from_triplets(3, 2, &[(2, 0, 1.0), (0, 0, 2.0), (2, 0, 3.0), (1, 1, -1.0)]);
        assert_eq!(m.colptr, vec![0, 2, 3]);
        assert_eq!(m.rowval, vec![0, 2, 1]);
        assert_eq!(m.nzval, vec![2.0, 4.0, -1.0]);
        assert_eq!(m.get(2, 0), 4.0);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn products_match_dense() {
        let m = CscMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (1, 0, 2.0), (0, 2, 3.0), (1, 1, 4.0)]);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![4.0, 6.0]);
        assert_eq!(m.tmul_vec(&[1.0, 2.0]), vec![5.0, 8.0, 3.0]);
        assert_eq!(m.transpose().mul_vec(&[1.0, 2.0]), vec![5.0, 8.0, 3.0]);
    }
}
