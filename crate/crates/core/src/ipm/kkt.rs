//! Quasi-definite KKT system
//!
//! ```text
//! [ εI   A'       ] [x]   [r_x]
//! [ A   -(H + εI) ] [z] = [r_z]
//! ```
//!
//! factored with a fixed fill-reducing ordering; each iteration only refills
//! the numeric values of the scaling block `H`.

use super::cones::{Cone, ConeSet};
use crate::linalg::ordering::{inverse_permutation, minimum_degree};
use crate::linalg::{CscMatrix, LdlError, LdlFactor};

#[derive(Debug, Clone)]
pub struct KktSolver {
    n: usize,
    m: usize,
    perm: Vec<usize>,
    upper: CscMatrix,
    factor: LdlFactor,
    signs: Vec<f64>,
    xdiag_slots: Vec<usize>,
    /// Per cone: diagonal slots (zero/orthant) or upper-triangle slots row-major (SOC).
    h_slots: Vec<Vec<usize>>,
    cones: Vec<Cone>,
    a: CscMatrix,
    h_blocks: Vec<Vec<f64>>,
    static_reg: f64,
    dyn_eps: f64,
    dyn_delta: f64,
    refine_steps: usize,
}

impl KktSolver {
    pub fn new(
        a: &CscMatrix,
        cones: &[Cone],
        static_reg: f64,
        dyn_eps: f64,
        dyn_delta: f64,
        refine_steps: usize,
    ) -> Result<Self, LdlError> {
        let (m, n) = (a.nrows, a.ncols);
        let dim = n + m;
        // logical upper-triangle entries (row, col, value)
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(n + a.nnz() + m);
        for j in 0..n {
            entries.push((j, j, static_reg));
        }
        for (i, j, v) in a.triplets() {
            entries.push((j, n + i, v));
        }
        let mut h_logical: Vec<Vec<usize>> = Vec::with_capacity(cones.len());
        let mut off = n;
        for c in cones {
            let d = c.dim();
            let mut idx = Vec::new();
            match c {
                Cone::Zero(_) | Cone::NonNeg(_) => {
                    for i in 0..d {
                        idx.push(entries.len());
                        entries.push((off + i, off + i, -static_reg));
                    }
                }
                Cone::Soc(_) => {
                    for i in 0..d {
                        for j in i..d {
                            idx.push(entries.len());
                            let v = if i == j { -1.0 - static_reg } else { 0.0 };
                            entries.push((off + i, off + j, v));
                        }
                    }
                }
            }
            h_logical.push(idx);
            off += d;
        }

        let mut adjacency = vec![Vec::new(); dim];
        for &(r, c, _) in &entries {
            if r != c {
                adjacency[r].push(c);
                adjacency[c].push(r);
            }
        }
        let perm = minimum_degree(&adjacency);
        let iperm = inverse_permutation(&perm);

        let permuted: Vec<(usize, usize, f64)> = entries
            .iter()
            .map(|&(r, c, v)| {
                let (pr, pc) = (iperm[r], iperm[c]);
                (pr.min(pc), pr.max(pc), v)
            })
            .collect();
        let upper = CscMatrix::from_triplets(dim, dim, &permuted);
        let slot = |r: usize, c: usize| -> usize {
            let range = upper.colptr[c]..upper.colptr[c + 1];
            range.start + upper.rowval[range].binary_search(&r).expect("pattern entry")
        };
        let slots: Vec<usize> = permuted.iter().map(|&(r, c, _)| slot(r, c)).collect();
        let xdiag_slots = slots[..n].to_vec();
        let h_slots = h_logical
            .iter()
            .map(|idx| idx.iter().map(|&e| slots[e]).collect())
            .collect();

        let mut signs = vec![0.0; dim];
        for k in 0..dim {
            signs[k] = if perm[k] < n { 1.0 } else { -1.0 };
        }
        let factor = LdlFactor::analyze(&upper)?;
        Ok(Self {
            n,
            m,
            perm,
            upper,
            factor,
            signs,
            xdiag_slots,
            h_slots,
            cones: cones.to_vec(),
            a: a.clone(),
            h_blocks: cones.iter().map(|c| vec![0.0; c.dim()]).collect(),
            static_reg,
            dyn_eps,
            dyn_delta,
            refine_steps,
        })
    }

    fn write_h(&mut self, blocks: Vec<Vec<f64>>) {
        let eps = self.static_reg;
        for (k, c) in self.cones.iter().enumerate() {
            let h = &blocks[k];
            let slots = &self.h_slots[k];
            match c {
                Cone::Zero(_) | Cone::NonNeg(_) => {
                    for (i, &s) in slots.iter().enumerate() {
                        self.upper.nzval[s] = -(h[i] + eps);
                    }
                }
                Cone::Soc(d) => {
                    let d = *d;
                    let mut t = 0;
                    for i in 0..d {
                        for j in i..d {
                            let reg = if i == j { eps } else { 0.0 };
                            self.upper.nzval[slots[t]] = -(h[i * d + j] + reg);
                            t += 1;
                        }
                    }
                }
            }
        }
        for &s in &self.xdiag_slots {
            self.upper.nzval[s] = eps;
        }
        self.h_blocks = blocks;
    }

    fn refactor(&mut self) -> Result<(), LdlError> {
        self.factor
            .factor(&self.upper, &self.signs, self.dyn_eps, self.dyn_delta)
    }

    /// Factors with `H = I` on the cone rows and `H = 0` on the zero cone.
    pub fn factor_identity(&mut self) -> Result<(), LdlError> {
        let blocks = self
            .cones
            .iter()
            .map(|c| match c {
                Cone::Zero(d) => vec![0.0; *d],
                Cone::NonNeg(d) => vec![1.0; *d],
                Cone::Soc(d) => {
                    let mut h = vec![0.0; d * d];
                    for i in 0..*d {
                        h[i * d + i] = 1.0;
                    }
                    h
                }
            })
            .collect();
        self.write_h(blocks);
        self.refactor()
    }

    /// Factors with the current NT scaling of `cones`.
    pub fn factor_scaling(&mut self, cones: &ConeSet) -> Result<(), LdlError> {
        self.write_h(cones.hessian_blocks());
        self.refactor()
    }

    /// Unregularized product `[A'v_z; A v_x − H v_z]`.
    fn mul_k(&self, v: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let (vx, vz) = v.split_at(n);
        let (ox, oz) = out.split_at_mut(n);
        self.a.gemv_t(1.0, vz, 0.0, ox);
        self.a.gemv(1.0, vx, 0.0, oz);
        let mut off = 0;
        for (k, c) in self.cones.iter().enumerate() {
            let h = &self.h_blocks[k];
            match c {
                Cone::Zero(d) | Cone::NonNeg(d) => {
                    for i in 0..*d {
                        oz[off + i] -= h[i] * vz[off + i];
                    }
                }
                Cone::Soc(d) => {
                    for i in 0..*d {
                        let mut acc = 0.0;
                        for j in 0..*d {
                            acc += h[i * d + j] * vz[off + j];
                        }
                        oz[off + i] -= acc;
                    }
                }
            }
            off += c.dim();
        }
        debug_assert_eq!(off, m);
    }

    fn solve_permuted(&self, rhs: &[f64], out: &mut [f64]) {
        let mut w: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        self.factor.solve(&mut w);
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = w[k];
        }
    }

    /// Solves the unregularized system with iterative refinement. `rhs` and
    /// `sol` are stacked `[x; z]`.
    pub fn solve(&self, rhs: &[f64], sol: &mut [f64]) {
        let dim = self.n + self.m;
        self.solve_permuted(rhs, sol);
        let bnorm = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut kx = vec![0.0; dim];
        let mut r = vec![0.0; dim];
        let mut dx = vec![0.0; dim];
        let mut last = f64::INFINITY;
        for _ in 0..self.refine_steps {
            self.mul_k(sol, &mut kx);
            for i in 0..dim {
                r[i] = rhs[i] - kx[i];
            }
            let rn = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if rn <= 1e-14 * (1.0 + bnorm) || rn >= last {
                break;
            }
            last = rn;
            self.solve_permuted(&r, &mut dx);
            for i in 0..dim {
                sol[i] += dx[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system_matches_dense_solution() {
        // A = [1 1; 0 1; 2 0], NonNeg(3)
        let a = CscMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0), (2, 0, 2.0)]);
        let mut k = KktSolver::new(&a, &[Cone::NonNeg(3)], 1e-12, 1e-13, 1e-7, 5).unwrap();
        k.factor_identity().unwrap();
        let rhs = [1.0, 2.0, 0.5, -1.0, 0.25];
        let mut sol = [0.0; 5];
        k.solve(&rhs, &mut sol);
        let mut back = [0.0; 5];
        k.mul_k(&sol, &mut back);
        for i in 0..5 {
            assert!((back[i] - rhs[i]).abs() < 1e-9, "{i}");
        }
    }
}
